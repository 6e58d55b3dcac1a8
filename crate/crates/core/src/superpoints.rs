//! Oversegmentation of a cloud into superpoints by region growing on the
//! k-NN graph.
//!
//! An edge `(p, q)` of the graph is traversable when the normals of `p` and
//! `q` differ by at most `normal_angle_deg` (as unoriented lines) and their
//! colors are within `color_dist` in RGB space. Connected components of the
//! traversable edges are the initial superpoints. A component smaller than
//! `min_size` is then absorbed by the neighboring component it touches through
//! the most color-compatible edges; with no such neighbor it stays on its own.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{NeighborGraph, PointCloud};

pub const DEFAULT_NORMAL_ANGLE_DEG: f64 = 30.0;
pub const DEFAULT_COLOR_DIST: f64 = 30.0;
pub const DEFAULT_MIN_SIZE: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum SuperpointError {
    #[error("superpoints need per-point normals")]
    MissingNormals,
    #[error("neighbor graph covers {graph} points, cloud has {cloud}")]
    GraphMismatch { graph: usize, cloud: usize },
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("invalid partition: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperpointParams {
    pub normal_angle_deg: f64,
    pub color_dist: f64,
    pub min_size: usize,
}

impl Default for SuperpointParams {
    fn default() -> Self {
        Self {
            normal_angle_deg: DEFAULT_NORMAL_ANGLE_DEG,
            color_dist: DEFAULT_COLOR_DIST,
            min_size: DEFAULT_MIN_SIZE,
        }
    }
}

/// A disjoint, exhaustive cover of `0..N` by nonempty groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpointPartition {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl SuperpointPartition {
    /// Builds a partition from a per-point id vector. Ids must be dense in
    /// `0..S` with every id used.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self, SuperpointError> {
        let count = assignment.iter().max().map_or(0, |&m| m + 1);
        let mut members = vec![Vec::new(); count];
        for (p, &id) in assignment.iter().enumerate() {
            members[id].push(p);
        }
        if let Some(id) = members.iter().position(Vec::is_empty) {
            return Err(SuperpointError::Invalid(format!("superpoint {id} is empty")));
        }
        Ok(Self {
            assignment,
            members,
        })
    }

    /// Every point in its own superpoint.
    pub fn singletons(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
            members: (0..n).map(|p| vec![p]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_points(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn superpoint_of(&self, point: usize) -> usize {
        self.assignment[point]
    }

    pub fn members(&self, id: usize) -> &[usize] {
        &self.members[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.members.iter().map(Vec::as_slice)
    }

    /// Checks disjointness, coverage, non-emptiness and that `assignment`
    /// agrees with the member lists.
    pub fn validate(&self) -> Result<(), SuperpointError> {
        let mut seen = vec![false; self.assignment.len()];
        for (id, members) in self.members.iter().enumerate() {
            if members.is_empty() {
                return Err(SuperpointError::Invalid(format!("superpoint {id} is empty")));
            }
            if members.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SuperpointError::Invalid(format!(
                    "members of superpoint {id} are not strictly sorted"
                )));
            }
            for &p in members {
                if p >= seen.len() || seen[p] {
                    return Err(SuperpointError::Invalid(format!("point {p} listed twice or out of range")));
                }
                seen[p] = true;
                if self.assignment[p] != id {
                    return Err(SuperpointError::Invalid(format!(
                        "point {p} assigned to {} but listed in {id}",
                        self.assignment[p]
                    )));
                }
            }
        }
        match seen.iter().position(|&s| !s) {
            Some(p) => Err(SuperpointError::Invalid(format!("point {p} is uncovered"))),
            None => Ok(()),
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Unions the sets, keeping the smaller root index as representative.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[drop] = keep;
        self.size[keep] += self.size[drop];
        true
    }
}

fn color_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn build_superpoints(
    cloud: &PointCloud,
    graph: &NeighborGraph,
    params: SuperpointParams,
) -> Result<SuperpointPartition, SuperpointError> {
    let normals = cloud.normals().ok_or(SuperpointError::MissingNormals)?;
    let n = cloud.len();
    if graph.len() != n {
        return Err(SuperpointError::GraphMismatch {
            graph: graph.len(),
            cloud: n,
        });
    }
    let colors = cloud.colors();
    let cos_limit = params.normal_angle_deg.to_radians().cos();
    let color_ok = |p: usize, q: usize| color_distance(colors[p], colors[q]) <= params.color_dist;
    let normal_ok = |p: usize, q: usize| normals[p].dot(&normals[q]).abs() >= cos_limit;

    let mut sets = DisjointSet::new(n);
    for p in 0..n {
        for &q in graph.neighbors(p) {
            if normal_ok(p, q) && color_ok(p, q) {
                sets.union(p, q);
            }
        }
    }

    // Absorb undersized components one at a time, lowest root first,
    // restarting after every merge until none can move.
    if params.min_size > 1 {
        loop {
            let mut changed = false;
            let mut roots: Vec<usize> = (0..n).filter(|&p| sets.find(p) == p).collect();
            roots.sort_unstable();
            let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for p in 0..n {
                members.entry(sets.find(p)).or_default().push(p);
            }
            for root in roots {
                if sets.size[root] >= params.min_size {
                    continue;
                }
                // Distinct neighbor points per adjacent component.
                let mut touching: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for &p in &members[&root] {
                    for &q in graph.neighbors(p) {
                        let rq = sets.find(q);
                        if rq != root && color_ok(p, q) {
                            touching.entry(rq).or_default().push(q);
                        }
                    }
                }
                let best = touching
                    .into_iter()
                    .map(|(r, mut qs)| {
                        qs.sort_unstable();
                        qs.dedup();
                        (r, qs.len())
                    })
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
                if let Some((target, _)) = best {
                    sets.union(root, target);
                    changed = true;
                    break;
                }
            }
            if !changed {
                break;
            }
        }
    }

    // Number components in order of their lowest member index.
    let mut ids = vec![usize::MAX; n];
    let mut next = 0;
    let assignment: Vec<usize> = (0..n)
        .map(|p| {
            let r = sets.find(p);
            if ids[r] == usize::MAX {
                ids[r] = next;
                next += 1;
            }
            ids[r]
        })
        .collect();
    let partition = SuperpointPartition::from_assignment(assignment)?;
    debug_assert!(partition.validate().is_ok());
    Ok(partition)
}

/// Fraction of points that carry their superpoint's majority label.
pub fn superpoint_purity(
    partition: &SuperpointPartition,
    labels: &[i32],
) -> Result<f64, SuperpointError> {
    if labels.len() != partition.num_points() {
        return Err(SuperpointError::LabelCount {
            expected: partition.num_points(),
            got: labels.len(),
        });
    }
    if labels.is_empty() {
        return Ok(1.0);
    }
    let mut agreeing = 0usize;
    for members in partition.iter() {
        let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
        for &p in members {
            *counts.entry(labels[p]).or_default() += 1;
        }
        agreeing += counts.values().copied().max().unwrap_or(0);
    }
    Ok(agreeing as f64 / labels.len() as f64)
}
