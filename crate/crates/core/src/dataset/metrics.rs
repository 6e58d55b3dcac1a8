use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::geometry::BACKGROUND;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRow {
    pub part: i32,
    pub miou: f64,
    pub intersection: u64,
    pub union: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub name: String,
    pub miou: f64,
    pub parts: Vec<PartRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_part_miou: BTreeMap<i32, f64>,
    pub per_object_category_miou: BTreeMap<String, f64>,
    /// Mean of `per_object_category_miou`; 0 when nothing could be scored.
    pub overall: f64,
    pub table: Vec<CategoryRow>,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    intersection: u64,
    union: u64,
}

/// Category mIoU. Intersection and union counts of each part are summed over
/// all objects before dividing; part IoUs are averaged within their object
/// category, and those means are averaged into `overall`.
///
/// Background (`-1`) is ignored unless `include_background` is set, in which
/// case it is scored as one extra part pooled over all objects and counted in
/// every object category that has a scored part.
pub fn category_miou(
    predictions: &[Vec<i32>],
    ground_truth: &[Vec<i32>],
    part_to_object_category: &BTreeMap<i32, String>,
    include_background: bool,
) -> Result<EvalReport, DatasetError> {
    if predictions.len() != ground_truth.len() {
        return Err(DatasetError::ObjectCount {
            pred: predictions.len(),
            gt: ground_truth.len(),
        });
    }
    let mut counts: BTreeMap<i32, Counts> = BTreeMap::new();
    for (object, (pred, gt)) in predictions.iter().zip(ground_truth).enumerate() {
        if pred.len() != gt.len() {
            return Err(DatasetError::ShapeMismatch {
                object,
                pred: pred.len(),
                gt: gt.len(),
            });
        }
        for (&p, &g) in pred.iter().zip(gt) {
            for label in [p, g] {
                if label != BACKGROUND && !part_to_object_category.contains_key(&label) {
                    return Err(DatasetError::UnknownPart(label));
                }
            }
            let scored = |l: i32| l != BACKGROUND || include_background;
            if p == g {
                if scored(p) {
                    let c = counts.entry(p).or_default();
                    c.intersection += 1;
                    c.union += 1;
                }
            } else {
                for label in [p, g] {
                    if scored(label) {
                        counts.entry(label).or_default().union += 1;
                    }
                }
            }
        }
    }

    let mut rows: BTreeMap<&str, Vec<PartRow>> = BTreeMap::new();
    let mut background_row = None;
    for (&part, c) in &counts {
        if c.union == 0 {
            continue;
        }
        let row = PartRow {
            part,
            miou: c.intersection as f64 / c.union as f64,
            intersection: c.intersection,
            union: c.union,
        };
        if part == BACKGROUND {
            background_row = Some(row);
        } else {
            rows.entry(part_to_object_category[&part].as_str()).or_default().push(row);
        }
    }

    let mut per_part_miou = BTreeMap::new();
    let mut per_object_category_miou = BTreeMap::new();
    let mut table = Vec::new();
    if let Some(row) = &background_row {
        per_part_miou.insert(row.part, row.miou);
    }
    for (name, mut parts) in rows {
        if let Some(row) = &background_row {
            parts.insert(0, row.clone());
        }
        for row in &parts {
            per_part_miou.insert(row.part, row.miou);
        }
        let miou = parts.iter().map(|r| r.miou).sum::<f64>() / parts.len() as f64;
        per_object_category_miou.insert(name.to_string(), miou);
        table.push(CategoryRow {
            name: name.to_string(),
            miou,
            parts,
        });
    }
    let overall = if per_object_category_miou.is_empty() {
        0.0
    } else {
        per_object_category_miou.values().sum::<f64>() / per_object_category_miou.len() as f64
    };
    Ok(EvalReport {
        per_part_miou,
        per_object_category_miou,
        overall,
        table,
    })
}
