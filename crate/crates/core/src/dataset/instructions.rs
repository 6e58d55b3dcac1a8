use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, PartFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryType {
    /// Names or describes the part's function.
    Normal,
    /// Refers to the part through color, placement or size.
    ThreeD,
}

impl QueryType {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::ThreeD => "three_d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub query: String,
    pub query_type: QueryType,
    pub object_id: String,
    pub category: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_mask_ref: Option<String>,
}

/// The part an instruction is about.
#[derive(Debug, Clone, PartialEq)]
pub struct PartRef<'a> {
    pub name: &'a str,
    pub category: i32,
    pub object_id: &'a str,
}

/// Templates with `{part}`, `{color}`, `{location}`, `{dims}` and
/// `{size_rank}` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateBank {
    pub normal: Vec<String>,
    pub three_d: Vec<String>,
}

impl Default for TemplateBank {
    fn default() -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            normal: own(&[
                "Which part of this object is the {part}?",
                "Segment the {part} of this object.",
                "Where is the {part} in this image?",
                "Please highlight the {part} and explain what it is for.",
                "Which part of this object would you call the {part}?",
            ]),
            three_d: own(&[
                "Which part of this object is {color} and located at the {location}?",
                "Segment the {color} part at the {location} of the object.",
                "Find the {size_rank} part of this object, measuring about {dims}.",
                "Which {color} component sits at the {location} of this object?",
                "Highlight the part at the {location} whose size is roughly {dims}.",
            ]),
        }
    }
}

impl TemplateBank {
    pub fn is_empty(&self) -> bool {
        self.normal.is_empty() && self.three_d.is_empty()
    }
}

fn fill(template: &str, slot_value: impl Fn(&str) -> Option<String>) -> Result<String, DatasetError> {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| DatasetError::BadTemplate(template.to_string()))?;
        let slot = &after[..close];
        let value = slot_value(slot).ok_or_else(|| DatasetError::UnknownSlot {
            template: template.to_string(),
            slot: slot.to_string(),
        })?;
        out.push_str(&value);
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err(DatasetError::BadTemplate(template.to_string()));
    }
    out.push_str(rest);
    Ok(out)
}

/// Fills every template of both families for one part. The seed fixes the
/// order of records within each family; the set of records does not depend
/// on it.
pub fn generate_instructions(
    features: &PartFeatures,
    part: &PartRef<'_>,
    templates: &TemplateBank,
    seed: u64,
) -> Result<Vec<InstructionRecord>, DatasetError> {
    if templates.is_empty() {
        return Err(DatasetError::NoTemplates);
    }
    let location = features.location_text();
    let dims = features.dims_text();
    let rank = features.size_rank_text();
    let slot_value = |slot: &str| -> Option<String> {
        Some(match slot {
            "part" => part.name.to_string(),
            "color" => features.color_name.clone(),
            "location" => location.clone(),
            "dims" => dims.clone(),
            "size_rank" => rank.clone(),
            _ => return None,
        })
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (query_type, family) in [
        (QueryType::Normal, &templates.normal),
        (QueryType::ThreeD, &templates.three_d),
    ] {
        if family.is_empty() {
            return Err(DatasetError::NoTemplatesFor(query_type.as_str()));
        }
        let mut order: Vec<&String> = family.iter().collect();
        order.shuffle(&mut rng);
        for template in order {
            records.push(InstructionRecord {
                query: fill(template, slot_value)?,
                query_type,
                object_id: part.object_id.to_string(),
                category: part.category,
                gt_mask_ref: None,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RelativePosition;
    use std::collections::BTreeSet;

    fn lid_features() -> PartFeatures {
        PartFeatures {
            dominant_color: [255, 0, 0],
            color_name: "red".into(),
            extent: [1.0, 1.0, 0.25],
            relative_position: BTreeSet::from([RelativePosition::Top]),
            size_rank: 2,
        }
    }

    fn lid() -> PartRef<'static> {
        PartRef {
            name: "lid",
            category: 2,
            object_id: "pot_0",
        }
    }

    #[test]
    fn three_d_query_mentions_color_and_location() {
        let records = generate_instructions(&lid_features(), &lid(), &TemplateBank::default(), 0).unwrap();
        assert!(records
            .iter()
            .any(|r| r.query_type == QueryType::ThreeD && r.query.contains("red") && r.query.contains("top")));
        assert!(records.iter().any(|r| r.query_type == QueryType::Normal));
        assert!(records.iter().all(|r| !r.query.contains('{')));
        assert!(records.iter().all(|r| r.category == 2 && r.object_id == "pot_0"));
    }

    #[test]
    fn deterministic_per_seed() {
        let bank = TemplateBank::default();
        let a = generate_instructions(&lid_features(), &lid(), &bank, 7).unwrap();
        let b = generate_instructions(&lid_features(), &lid(), &bank, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_bank_fails() {
        let empty = TemplateBank {
            normal: vec![],
            three_d: vec![],
        };
        assert!(matches!(
            generate_instructions(&lid_features(), &lid(), &empty, 0),
            Err(DatasetError::NoTemplates)
        ));
        let one_sided = TemplateBank {
            normal: vec!["the {part}".into()],
            three_d: vec![],
        };
        assert!(matches!(
            generate_instructions(&lid_features(), &lid(), &one_sided, 0),
            Err(DatasetError::NoTemplatesFor("three_d"))
        ));
    }

    #[test]
    fn unknown_slot_fails() {
        let bank = TemplateBank {
            normal: vec!["What is the {material} of the {part}?".into()],
            three_d: vec!["{color}".into()],
        };
        match generate_instructions(&lid_features(), &lid(), &bank, 0) {
            Err(DatasetError::UnknownSlot { slot, .. }) => assert_eq!(slot, "material"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(fill("broken {part", |_| Some(String::new())), Err(DatasetError::BadTemplate(_))));
    }
}
