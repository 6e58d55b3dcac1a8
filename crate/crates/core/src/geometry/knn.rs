use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;
use rayon::prelude::*;

use super::{GeometryError, PointCloud};

/// Exact k-nearest-neighbor lists, one row per point.
///
/// Rows are ordered by increasing distance, ties by increasing point index,
/// and never contain the point itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    k: usize,
    adjacency: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, point: usize) -> &[usize] {
        &self.adjacency[point]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.adjacency
    }
}

#[inline]
pub(crate) fn dist2(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

pub fn knn(cloud: &PointCloud, k: usize) -> Result<NeighborGraph, GeometryError> {
    if k == 0 {
        return Err(GeometryError::ZeroK);
    }
    let n = cloud.len();
    if n < 2 {
        return Err(GeometryError::TooFewPoints { needed: 2, got: n });
    }
    let points = cloud.positions();
    let tree = KdTree::build(points);
    let take = k.min(n - 1);
    let adjacency = (0..n)
        .into_par_iter()
        .map(|i| tree.nearest_excluding(&points[i], i, take))
        .collect();
    Ok(NeighborGraph { k, adjacency })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const LEAF_SIZE: usize = 8;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

struct KdTree<'a> {
    points: &'a [Point3<f64>],
    order: Vec<usize>,
    root: Node,
}

impl<'a> KdTree<'a> {
    fn build(points: &'a [Point3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = Self::build_node(points, &mut order, 0);
        Self {
            points,
            order,
            root,
        }
    }

    fn build_node(points: &[Point3<f64>], order: &mut [usize], offset: usize) -> Node {
        if order.len() <= LEAF_SIZE {
            return Node::Leaf {
                start: offset,
                end: offset + order.len(),
            };
        }
        let (lo, hi) = super::bounds_of(order.iter().map(|&i| &points[i]));
        let extent = hi - lo;
        let axis = extent.imax();
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then(a.cmp(&b))
        });
        let value = points[order[mid]][axis];
        let (left, right) = order.split_at_mut(mid);
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build_node(points, left, offset)),
            right: Box::new(Self::build_node(points, right, offset + mid)),
        }
    }

    fn nearest_excluding(&self, query: &Point3<f64>, exclude: usize, k: usize) -> Vec<usize> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(&self.root, query, exclude, k, &mut heap);
        heap.into_sorted_vec().into_iter().map(|c| c.index).collect()
    }

    fn search(
        &self,
        node: &Node,
        query: &Point3<f64>,
        exclude: usize,
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match node {
            Node::Leaf { start, end } => {
                for &index in &self.order[*start..*end] {
                    if index == exclude {
                        continue;
                    }
                    let c = Candidate {
                        dist2: dist2(query, &self.points[index]),
                        index,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query[*axis] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, exclude, k, heap);
                // Equal distances still matter for index tie-breaks, so only
                // prune when the slab is strictly farther than the worst kept.
                if heap.len() < k || delta * delta <= heap.peek().unwrap().dist2 {
                    self.search(far, query, exclude, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(xs: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(
            xs.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
            vec![[0; 3]; xs.len()],
        )
        .unwrap()
    }

    #[test]
    fn collinear_points() {
        let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        let g = knn(&c, 1).unwrap();
        assert_eq!(g.rows(), &[vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn k_clamps_to_n_minus_one() {
        let c = cloud(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 5.0]]);
        let g = knn(&c, 10).unwrap();
        assert_eq!(g.k(), 10);
        assert!(g.rows().iter().all(|r| r.len() == 3));
    }

    #[test]
    fn ties_prefer_lower_index() {
        // Point 0 has points 1..=4 all at distance 1.
        let c = cloud(&[
            [0.0; 3],
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
        ]);
        let g = knn(&c, 2).unwrap();
        assert_eq!(g.neighbors(0), &[1, 2]);
    }

    #[test]
    fn rejects_tiny_clouds() {
        assert!(matches!(
            knn(&cloud(&[[0.0; 3]]), 3),
            Err(GeometryError::TooFewPoints { .. })
        ));
        assert!(matches!(knn(&cloud(&[[0.0; 3], [1.0; 3]]), 0), Err(GeometryError::ZeroK)));
    }
}
