//! Point clouds and the geometric primitives built on them.
//!
//! A [`PointCloud`] carries positions, 8-bit colors, and optional normals and
//! part labels. Everything downstream (rendering, superpoints, fusion) reads
//! clouds immutably.

mod knn;
mod normals;
pub mod ply;

pub use knn::{knn, NeighborGraph};
pub use normals::{estimate_normals, NormalEstimate};

use nalgebra::{Point3, Vector3};
use thiserror::Error;

/// Label value reserved for unlabeled / background points.
pub const BACKGROUND: i32 = -1;

pub type Rgb = [u8; 3];

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point cloud must contain at least one point")]
    Empty,
    #[error("{field} has {got} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("normal {index} is not unit length (|n| = {norm})")]
    NonUnitNormal { index: usize, norm: f64 },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("neighbor graph was built for {graph} points, cloud has {cloud}")]
    GraphMismatch { graph: usize, cloud: usize },
    #[error("normal estimation needs k >= 3, graph has k = {0}")]
    NeighborhoodTooSmall(usize),
}

const NORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<Point3<f64>>,
    colors: Vec<Rgb>,
    normals: Option<Vec<Vector3<f64>>>,
    labels: Option<Vec<i32>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Point3<f64>>, colors: Vec<Rgb>) -> Result<Self, GeometryError> {
        if positions.is_empty() {
            return Err(GeometryError::Empty);
        }
        if colors.len() != positions.len() {
            return Err(GeometryError::LengthMismatch {
                field: "colors",
                got: colors.len(),
                expected: positions.len(),
            });
        }
        Ok(Self {
            positions,
            colors,
            normals: None,
            labels: None,
        })
    }

    pub fn with_normals(mut self, normals: Vec<Vector3<f64>>) -> Result<Self, GeometryError> {
        self.check_len("normals", normals.len())?;
        for (index, n) in normals.iter().enumerate() {
            let norm = n.norm();
            if (norm - 1.0).abs() > NORMAL_TOLERANCE {
                return Err(GeometryError::NonUnitNormal { index, norm });
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<i32>) -> Result<Self, GeometryError> {
        self.check_len("labels", labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    fn check_len(&self, field: &'static str, got: usize) -> Result<(), GeometryError> {
        if got != self.len() {
            return Err(GeometryError::LengthMismatch {
                field,
                got,
                expected: self.len(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    /// Always false: construction rejects empty clouds.
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self
            .positions
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.len() as f64)
    }

    /// Radius of the centroid-centered sphere enclosing every point.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.positions
            .iter()
            .map(|p| (p - c).norm())
            .fold(0.0, f64::max)
    }

    /// Axis-aligned bounds as (min, max).
    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        bounds_of(self.positions.iter())
    }

    /// Applies `f` to every position, keeping colors, normals and labels.
    pub fn map_positions(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Self {
        Self {
            positions: self.positions.iter().map(f).collect(),
            ..self.clone()
        }
    }
}

pub(crate) fn bounds_of<'a>(
    points: impl Iterator<Item = &'a Point3<f64>>,
) -> (Point3<f64>, Point3<f64>) {
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_lengths() {
        let err = PointCloud::new(vec![Point3::origin(); 2], vec![[0, 0, 0]]).unwrap_err();
        assert!(matches!(err, GeometryError::LengthMismatch { field: "colors", .. }));

        let cloud = PointCloud::new(vec![Point3::origin(); 2], vec![[0, 0, 0]; 2]).unwrap();
        assert!(cloud.clone().with_labels(vec![0]).is_err());
        assert!(cloud.with_labels(vec![0, 1]).is_ok());
    }

    #[test]
    fn rejects_empty_and_non_unit_normals() {
        assert_eq!(PointCloud::new(vec![], vec![]).unwrap_err(), GeometryError::Empty);
        let cloud = PointCloud::new(vec![Point3::origin()], vec![[1, 2, 3]]).unwrap();
        let err = cloud.with_normals(vec![Vector3::new(0.0, 0.0, 2.0)]).unwrap_err();
        assert!(matches!(err, GeometryError::NonUnitNormal { index: 0, .. }));
    }

    #[test]
    fn centroid_and_radius() {
        let cloud = PointCloud::new(
            vec![Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)],
            vec![[0; 3]; 2],
        )
        .unwrap();
        assert_eq!(cloud.centroid(), Point3::origin());
        assert_eq!(cloud.bounding_radius(), 1.0);
    }
}
