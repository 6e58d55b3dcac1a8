use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use super::{GeometryError, NeighborGraph, PointCloud};

/// Result of [`estimate_normals`]: the cloud with normals attached, plus the
/// indices whose neighborhood collapsed to a single location.
#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    pub degenerate: Vec<usize>,
}

const FALLBACK_NORMAL: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// PCA normals: the eigenvector of the smallest covariance eigenvalue over each
/// point and its graph neighbors, flipped to face away from the cloud centroid.
pub fn estimate_normals(
    cloud: &PointCloud,
    graph: &NeighborGraph,
) -> Result<NormalEstimate, GeometryError> {
    if graph.len() != cloud.len() {
        return Err(GeometryError::GraphMismatch {
            graph: graph.len(),
            cloud: cloud.len(),
        });
    }
    if graph.k() < 3 {
        return Err(GeometryError::NeighborhoodTooSmall(graph.k()));
    }
    let points = cloud.positions();
    let centroid = cloud.centroid();

    let results: Vec<Option<Vector3<f64>>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let neighborhood = std::iter::once(i).chain(graph.neighbors(i).iter().copied());
            if graph.neighbors(i).iter().all(|&j| points[j] == points[i]) {
                return None;
            }
            let count = graph.neighbors(i).len() as f64 + 1.0;
            let mean = neighborhood
                .clone()
                .fold(Vector3::zeros(), |acc, j| acc + points[j].coords)
                / count;
            let cov = neighborhood.fold(Matrix3::zeros(), |acc, j| {
                let d = points[j].coords - mean;
                acc + d * d.transpose()
            }) / count;
            let eigen = SymmetricEigen::new(cov);
            let smallest = eigen.eigenvalues.imin();
            let mut normal = eigen.eigenvectors.column(smallest).normalize();
            if normal.dot(&(points[i] - centroid)) < 0.0 {
                normal = -normal;
            }
            Some(normal)
        })
        .collect();

    let degenerate: Vec<usize> = results
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.is_none().then_some(i))
        .collect();
    if !degenerate.is_empty() {
        log::warn!(
            "{} point(s) have degenerate neighborhoods; using fallback normal (0,0,1)",
            degenerate.len()
        );
    }
    let normals = results
        .into_iter()
        .map(|n| n.unwrap_or(FALLBACK_NORMAL))
        .collect();
    Ok(NormalEstimate {
        cloud: cloud.clone().with_normals(normals)?,
        degenerate,
    })
}
