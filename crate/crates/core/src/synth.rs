//! Seeded synthetic part-labelled shapes for demos and self-tests.
//!
//! Every shape is z-up with exact surface normals. Each part is tiled with
//! square cells in four shades of its color (plus a little noise), arranged
//! so that touching cells always differ; parts therefore break into many
//! small superpoints the way real textured objects do. Part ids are unique
//! across shapes so that one evaluation can mix objects of different kinds.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{
    extract_part_features, generate_instructions, DatasetError, ManifestInstruction, ObjectManifest, PartRef,
    TemplateBank,
};
use crate::geometry::ply::{write_ply, PlyError, DEFAULT_LABEL_PROPERTY};
use crate::geometry::{PointCloud, Rgb};

pub const MIN_POINTS: usize = 100;
const COLOR_NOISE: i16 = 5;
const TILE: f64 = 0.25;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least {MIN_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("unknown shape `{0}` (expected two_part_cylinder, lidded_pot or four_leg_chair)")]
    UnknownShape(String),
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    TwoPartCylinder,
    LiddedPot,
    FourLegChair,
}

pub struct PartSpec {
    pub id: i32,
    pub name: &'static str,
    /// Tile shades, all with the same color name. Any two shades of one
    /// shape are far enough apart that neighbouring tiles never join one
    /// superpoint.
    pub shades: [Rgb; 4],
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::TwoPartCylinder, Shape::LiddedPot, Shape::FourLegChair];

    pub fn name(self) -> &'static str {
        match self {
            Self::TwoPartCylinder => "two_part_cylinder",
            Self::LiddedPot => "lidded_pot",
            Self::FourLegChair => "four_leg_chair",
        }
    }

    pub fn object_category(self) -> &'static str {
        match self {
            Self::TwoPartCylinder => "cylinder",
            Self::LiddedPot => "pot",
            Self::FourLegChair => "chair",
        }
    }

    pub fn parts(self) -> &'static [PartSpec] {
        const CYLINDER: &[PartSpec] = &[
            PartSpec { id: 0, name: "top", shades: [[230, 200, 40], [190, 230, 40], [230, 230, 0], [230, 230, 80]] },
            PartSpec { id: 1, name: "base", shades: [[40, 160, 60], [0, 130, 60], [0, 190, 60], [10, 160, 20]] },
        ];
        const POT: &[PartSpec] = &[
            PartSpec { id: 2, name: "lid", shades: [[210, 40, 40], [210, 0, 10], [210, 0, 70], [240, 40, 0]] },
            PartSpec { id: 3, name: "body", shades: [[40, 80, 200], [0, 50, 200], [0, 110, 200], [10, 80, 160]] },
        ];
        const CHAIR: &[PartSpec] = &[
            PartSpec { id: 4, name: "seat", shades: [[230, 140, 30], [190, 140, 0], [200, 180, 30], [230, 90, 30]] },
            PartSpec { id: 5, name: "back", shades: [[130, 40, 150], [80, 40, 150], [130, 0, 120], [130, 0, 180]] },
            PartSpec { id: 6, name: "leg", shades: [[120, 70, 30], [70, 70, 30], [120, 20, 30], [120, 70, 80]] },
        ];
        match self {
            Self::TwoPartCylinder => CYLINDER,
            Self::LiddedPot => POT,
            Self::FourLegChair => CHAIR,
        }
    }

    fn surfaces(self) -> Vec<Surface> {
        match self {
            Self::TwoPartCylinder => {
                let (r, h) = (0.5, 1.0);
                vec![
                    Surface::tube(0, r, h / 2.0, h),
                    Surface::disk(0, r, h, true),
                    Surface::tube(1, r, 0.0, h / 2.0),
                    Surface::disk(1, r, 0.0, false),
                ]
            }
            // The lid sits 0.2 below the rim, so a camera level with the pot
            // cannot see it.
            Self::LiddedPot => vec![
                Surface::disk(2, 0.96, 1.0, true),
                Surface::tube(3, 1.0, 0.0, 1.2),
                Surface::disk(3, 1.0, 0.0, false),
            ],
            Self::FourLegChair => {
                // Faces glued to the seat are left out: they would be hidden
                // inside it.
                let mut s = box_faces(4, [-0.5, -0.5, 0.45], [0.5, 0.5, 0.55], None);
                s.extend(box_faces(5, [-0.5, 0.4, 0.55], [0.5, 0.5, 1.2], Some((2, -1.0))));
                for (x, y) in [(-0.46, -0.46), (0.38, -0.46), (-0.46, 0.38), (0.38, 0.38)] {
                    s.extend(box_faces(6, [x, y, 0.0], [x + 0.08, y + 0.08, 0.45], Some((2, 1.0))));
                }
                s
            }
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Shape::ALL
            .into_iter()
            .find(|shape| shape.name() == s)
            .ok_or_else(|| SynthError::UnknownShape(s.to_string()))
    }
}

enum Geometry {
    /// Open cylinder wall around the z axis.
    Tube { radius: f64, z0: f64, z1: f64 },
    Disk { radius: f64, z: f64, up: bool },
    /// Axis-aligned rectangle: fixed coordinate `axis` at `at`, spanning
    /// `lo..hi` in the other two.
    Rect { axis: usize, at: f64, lo: [f64; 2], hi: [f64; 2], outward: f64 },
}

struct Surface {
    part: i32,
    geometry: Geometry,
}

impl Surface {
    fn tube(part: i32, radius: f64, z0: f64, z1: f64) -> Self {
        Self { part, geometry: Geometry::Tube { radius, z0, z1 } }
    }

    fn disk(part: i32, radius: f64, z: f64, up: bool) -> Self {
        Self { part, geometry: Geometry::Disk { radius, z, up } }
    }

    fn area(&self) -> f64 {
        match self.geometry {
            Geometry::Tube { radius, z0, z1 } => 2.0 * std::f64::consts::PI * radius * (z1 - z0),
            Geometry::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Geometry::Rect { lo, hi, .. } => (hi[0] - lo[0]) * (hi[1] - lo[1]),
        }
    }

    /// A uniform point, its normal, and its 2D coordinates on the surface.
    fn sample(&self, rng: &mut impl Rng) -> (Point3<f64>, Vector3<f64>, [f64; 2]) {
        match self.geometry {
            Geometry::Tube { radius, z0, z1 } => {
                let theta = rng.random::<f64>() * std::f64::consts::TAU;
                let z = z0 + rng.random::<f64>() * (z1 - z0);
                let (s, c) = theta.sin_cos();
                (Point3::new(radius * c, radius * s, z), Vector3::new(c, s, 0.0), [radius * theta, z])
            }
            Geometry::Disk { radius, z, up } => {
                let theta = rng.random::<f64>() * std::f64::consts::TAU;
                let r = radius * rng.random::<f64>().sqrt();
                let (s, c) = theta.sin_cos();
                let nz = if up { 1.0 } else { -1.0 };
                (Point3::new(r * c, r * s, z), Vector3::new(0.0, 0.0, nz), [r * c, r * s])
            }
            Geometry::Rect { axis, at, lo, hi, outward } => {
                let a = lo[0] + rng.random::<f64>() * (hi[0] - lo[0]);
                let b = lo[1] + rng.random::<f64>() * (hi[1] - lo[1]);
                let (i, j) = other_axes(axis);
                let mut p = [0.0; 3];
                p[axis] = at;
                p[i] = a;
                p[j] = b;
                let mut n = Vector3::zeros();
                n[axis] = outward;
                (Point3::from(p), n, [a, b])
            }
        }
    }
}

fn other_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// The six faces of a box, minus the one given as `(axis, outward sign)`.
fn box_faces(part: i32, lo: [f64; 3], hi: [f64; 3], skip: Option<(usize, f64)>) -> Vec<Surface> {
    let mut faces = Vec::with_capacity(6);
    for axis in 0..3 {
        let (i, j) = other_axes(axis);
        for (at, outward) in [(lo[axis], -1.0), (hi[axis], 1.0)] {
            if skip == Some((axis, outward)) {
                continue;
            }
            faces.push(Surface {
                part,
                geometry: Geometry::Rect {
                    axis,
                    at,
                    lo: [lo[i], lo[j]],
                    hi: [hi[i], hi[j]],
                    outward,
                },
            });
        }
    }
    faces
}

/// Samples `points` surface points uniformly by area. Output depends only on
/// `(shape, points, seed)`.
pub fn generate(shape: Shape, points: usize, seed: u64) -> Result<PointCloud, SynthError> {
    if points < MIN_POINTS {
        return Err(SynthError::TooFewPoints(points));
    }
    let surfaces = shape.surfaces();
    let shades: BTreeMap<i32, [Rgb; 4]> = shape.parts().iter().map(|p| (p.id, p.shades)).collect();
    let mut cumulative = Vec::with_capacity(surfaces.len());
    let mut total = 0.0;
    for s in &surfaces {
        total += s.area();
        cumulative.push(total);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(points);
    let mut normals = Vec::with_capacity(points);
    let mut point_colors = Vec::with_capacity(points);
    let mut labels = Vec::with_capacity(points);
    for _ in 0..points {
        let pick = rng.random::<f64>() * total;
        let index = cumulative.partition_point(|&c| c <= pick).min(surfaces.len() - 1);
        let surface = &surfaces[index];
        let (p, n, uv) = surface.sample(&mut rng);
        positions.push(p);
        normals.push(n);
        let tile = uv.map(|t| (t / TILE).floor().rem_euclid(2.0) as usize);
        let base = shades[&surface.part][tile[0] + 2 * tile[1]];
        point_colors.push(base.map(|c| {
            let noise = rng.random_range(-COLOR_NOISE..=COLOR_NOISE);
            (c as i16 + noise).clamp(0, 255) as u8
        }));
        labels.push(surface.part);
    }
    let cloud = PointCloud::new(positions, point_colors)
        .and_then(|c| c.with_normals(normals))
        .and_then(|c| c.with_labels(labels))
        .expect("generated buffers are consistent");
    Ok(cloud)
}

/// Builds the manifest entry of a generated cloud, with instructions for
/// every part produced from its extracted features.
pub fn manifest_entry(
    shape: Shape,
    cloud: &PointCloud,
    object_id: &str,
    ply_file: &str,
    seed: u64,
) -> Result<ObjectManifest, SynthError> {
    let templates = TemplateBank::default();
    let mut instructions = Vec::new();
    for part in shape.parts() {
        let features = extract_part_features(cloud, part.id)?;
        let part_ref = PartRef {
            name: part.name,
            category: part.id,
            object_id,
        };
        let records = generate_instructions(&features, &part_ref, &templates, seed ^ part.id as u64)?;
        instructions.extend(records.into_iter().map(|r| ManifestInstruction {
            query: r.query,
            query_type: r.query_type,
            category: r.category,
        }));
    }
    Ok(ObjectManifest {
        object_id: object_id.to_string(),
        object_category: shape.object_category().to_string(),
        ply_path: ply_file.into(),
        instructions,
        label_property: DEFAULT_LABEL_PROPERTY.to_string(),
        part_names: shape.parts().iter().map(|p| (p.id, p.name.to_string())).collect(),
    })
}

/// Generates a shape, writes `<shape>_s<seed>.ply` into `out_dir` and
/// returns its manifest entry (with a path relative to `out_dir`).
pub fn write_synthetic(shape: Shape, points: usize, seed: u64, out_dir: &Path) -> Result<ObjectManifest, SynthError> {
    let cloud = generate(shape, points, seed)?;
    let object_id = format!("{}_s{seed}", shape.name());
    let ply_file = format!("{object_id}.ply");
    write_ply(&cloud, out_dir.join(&ply_file), false)?;
    manifest_entry(shape, &cloud, &object_id, &ply_file, seed)
}
