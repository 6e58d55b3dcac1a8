use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::geometry::{bounds_of, PointCloud, Rgb};

/// Coarse placement of a part relative to the object centre. The object is
/// taken as z-up, +x to the right and +y to the back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelativePosition {
    Top,
    Bottom,
    Front,
    Back,
    Left,
    Right,
    Center,
}

impl RelativePosition {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Top => "top",
            Self::Bottom => "bottom",
            Self::Front => "front",
            Self::Back => "back",
            Self::Left => "left",
            Self::Right => "right",
            Self::Center => "center",
        }
    }
}

impl fmt::Display for RelativePosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartFeatures {
    pub dominant_color: Rgb,
    pub color_name: String,
    /// Bounding-box size along x, y, z.
    pub extent: [f64; 3],
    pub relative_position: BTreeSet<RelativePosition>,
    /// 1 = largest bounding-box volume among the object's parts.
    pub size_rank: usize,
}

impl PartFeatures {
    pub fn location_text(&self) -> String {
        self.relative_position
            .iter()
            .map(|p| p.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn dims_text(&self) -> String {
        format!("{:.2} x {:.2} x {:.2}", self.extent[0], self.extent[1], self.extent[2])
    }

    pub fn size_rank_text(&self) -> String {
        match self.size_rank {
            1 => "largest".into(),
            2 => "second largest".into(),
            3 => "third largest".into(),
            n => format!("{n}th largest"),
        }
    }
}

pub const NAMED_COLORS: &[(&str, Rgb)] = &[
    ("red", [255, 0, 0]),
    ("green", [0, 160, 0]),
    ("blue", [0, 0, 255]),
    ("yellow", [255, 255, 0]),
    ("orange", [255, 140, 0]),
    ("purple", [128, 0, 128]),
    ("pink", [255, 150, 200]),
    ("brown", [140, 80, 30]),
    ("cyan", [0, 255, 255]),
    ("white", [255, 255, 255]),
    ("gray", [128, 128, 128]),
    ("black", [0, 0, 0]),
];

/// Nearest entry of [`NAMED_COLORS`] in RGB distance; earlier entries win ties.
pub fn named_color(color: Rgb) -> &'static str {
    let d2 = |c: &Rgb| -> i32 {
        (0..3)
            .map(|i| {
                let d = color[i] as i32 - c[i] as i32;
                d * d
            })
            .sum()
    };
    NAMED_COLORS
        .iter()
        .min_by_key(|(_, c)| d2(c))
        .map(|(name, _)| *name)
        .unwrap()
}

const COLOR_BIN_WIDTH: u8 = 8;
const DEAD_ZONE: f64 = 0.1;

/// Color, size and placement descriptors of one labelled part.
///
/// The dominant color is the mean color of the most populated cell of a
/// 32×32×32 RGB histogram (lowest cell wins ties).
pub fn extract_part_features(cloud: &PointCloud, category: i32) -> Result<PartFeatures, DatasetError> {
    let labels = cloud.labels().ok_or(DatasetError::MissingLabels)?;
    let members: Vec<usize> = (0..cloud.len()).filter(|&p| labels[p] == category).collect();
    if members.is_empty() || category < 0 {
        return Err(DatasetError::CategoryAbsent(category));
    }
    let positions = cloud.positions();
    let colors = cloud.colors();

    let mut bins: BTreeMap<[u8; 3], (usize, [u64; 3])> = BTreeMap::new();
    for &p in &members {
        let c = colors[p];
        let key = c.map(|x| x / COLOR_BIN_WIDTH);
        let entry = bins.entry(key).or_default();
        entry.0 += 1;
        for (sum, channel) in entry.1.iter_mut().zip(c) {
            *sum += channel as u64;
        }
    }
    let (count, sums) = bins
        .values()
        .fold(None::<(usize, [u64; 3])>, |best, &(n, s)| match best {
            Some((bn, _)) if bn >= n => best,
            _ => Some((n, s)),
        })
        .unwrap();
    let dominant_color = sums.map(|s| ((s as f64 / count as f64).round()) as u8);

    let (lo, hi) = bounds_of(members.iter().map(|&p| &positions[p]));
    let extent = hi - lo;

    let object_center = cloud.centroid();
    let (obj_lo, obj_hi) = cloud.bounds();
    let object_extent = obj_hi - obj_lo;
    let part_center = Point3::from(
        members
            .iter()
            .fold(Vector3::zeros(), |acc, &p| acc + positions[p].coords)
            / members.len() as f64,
    );
    let offset = part_center - object_center;
    let mut relative_position = BTreeSet::new();
    let axes = [
        (2, RelativePosition::Top, RelativePosition::Bottom),
        (1, RelativePosition::Back, RelativePosition::Front),
        (0, RelativePosition::Right, RelativePosition::Left),
    ];
    for (axis, positive, negative) in axes {
        let zone = DEAD_ZONE * object_extent[axis];
        if offset[axis] > zone {
            relative_position.insert(positive);
        } else if offset[axis] < -zone {
            relative_position.insert(negative);
        }
    }
    if relative_position.is_empty() {
        relative_position.insert(RelativePosition::Center);
    }

    Ok(PartFeatures {
        dominant_color,
        color_name: named_color(dominant_color).to_string(),
        extent: [extent.x, extent.y, extent.z],
        relative_position,
        size_rank: size_rank(cloud, labels, category),
    })
}

fn size_rank(cloud: &PointCloud, labels: &[i32], category: i32) -> usize {
    let mut groups: BTreeMap<i32, Vec<&Point3<f64>>> = BTreeMap::new();
    for (p, &l) in labels.iter().enumerate() {
        if l >= 0 {
            groups.entry(l).or_default().push(&cloud.positions()[p]);
        }
    }
    let mut volumes: Vec<(i32, f64)> = groups
        .into_iter()
        .map(|(l, pts)| {
            let (lo, hi) = bounds_of(pts.into_iter());
            let e = hi - lo;
            (l, e.x * e.y * e.z)
        })
        .collect();
    volumes.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    volumes.iter().position(|&(l, _)| l == category).unwrap() + 1
}
