//! Lifting per-view 2D masks to per-point 3D labels.
//!
//! For superpoint `i` and category column `j` the score is
//!
//! ```text
//!            Σ_k Σ_{p ∈ SP_i} [p visible in k] · [pixel of p in view k ∈ mask_kj]
//! s(i, j) = ─────────────────────────────────────────────────────────────────────
//!            Σ_k Σ_{p ∈ SP_i} [p visible in k]
//! ```
//!
//! Both sums are kept as exact integers and divided only when read, so the
//! result does not depend on the order views are accumulated in.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::BACKGROUND;
use crate::gateway::SegmentResponse;
use crate::mask::{DimensionMismatch, Mask};
use crate::render::ViewRender;
use crate::superpoints::SuperpointPartition;

pub const DEFAULT_TAU: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("{masks} mask sets for {renders} renders")]
    ViewCount { masks: usize, renders: usize },
    #[error("view {view} has {got} category masks, expected {expected}")]
    CategoryCount { view: usize, got: usize, expected: usize },
    #[error("view {view}: {source}")]
    Dimensions {
        view: usize,
        #[source]
        source: DimensionMismatch,
    },
    #[error("partition covers {partition} points, render {view} has {render}")]
    PointCount {
        view: usize,
        partition: usize,
        render: usize,
    },
    #[error("category ids must be strictly increasing and match the {0} score columns")]
    Categories(usize),
    #[error("no views to choose an explanation from")]
    NoViews,
    #[error(transparent)]
    Mismatch(#[from] DimensionMismatch),
}

/// Integer vote tallies: `numerators[i * J + j]` and `denominators[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteCounts {
    num_categories: usize,
    numerators: Vec<u64>,
    denominators: Vec<u64>,
}

impl VoteCounts {
    pub fn zeros(num_superpoints: usize, num_categories: usize) -> Self {
        Self {
            num_categories,
            numerators: vec![0; num_superpoints * num_categories],
            denominators: vec![0; num_superpoints],
        }
    }

    /// Tallies one view.
    pub fn from_view(
        partition: &SuperpointPartition,
        render: &ViewRender,
        masks: &[Mask],
    ) -> Self {
        let mut counts = Self::zeros(partition.len(), masks.len());
        for (p, &sp) in partition.assignment().iter().enumerate() {
            if !render.is_visible(p) {
                continue;
            }
            let Some((u, v)) = render.pixel_of(p) else {
                continue;
            };
            counts.denominators[sp] += 1;
            let row = &mut counts.numerators[sp * masks.len()..(sp + 1) * masks.len()];
            for (slot, mask) in row.iter_mut().zip(masks) {
                if mask.get(u, v) {
                    *slot += 1;
                }
            }
        }
        counts
    }

    /// Elementwise sum; commutative and associative.
    pub fn merge(mut self, other: &Self) -> Self {
        debug_assert_eq!(self.numerators.len(), other.numerators.len());
        for (a, b) in self.numerators.iter_mut().zip(&other.numerators) {
            *a += b;
        }
        for (a, b) in self.denominators.iter_mut().zip(&other.denominators) {
            *a += b;
        }
        self
    }

    pub fn numerator(&self, superpoint: usize, category: usize) -> u64 {
        self.numerators[superpoint * self.num_categories + category]
    }

    pub fn denominator(&self, superpoint: usize) -> u64 {
        self.denominators[superpoint]
    }
}

/// Superpoint × category scores in `[0, 1]`; rows for never-visible
/// superpoints are undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    counts: VoteCounts,
    categories: Vec<i32>,
}

impl ScoreMatrix {
    pub fn from_counts(counts: VoteCounts) -> Self {
        let categories = (0..counts.num_categories as i32).collect();
        Self { counts, categories }
    }

    /// Names the score columns with category ids (strictly increasing).
    pub fn with_categories(mut self, categories: Vec<i32>) -> Result<Self, FusionError> {
        if categories.len() != self.num_categories() || categories.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FusionError::Categories(self.num_categories()));
        }
        self.categories = categories;
        Ok(self)
    }

    pub fn num_superpoints(&self) -> usize {
        self.counts.denominators.len()
    }

    pub fn num_categories(&self) -> usize {
        self.counts.num_categories
    }

    pub fn categories(&self) -> &[i32] {
        &self.categories
    }

    pub fn counts(&self) -> &VoteCounts {
        &self.counts
    }

    pub fn visible_count(&self, superpoint: usize) -> u64 {
        self.counts.denominator(superpoint)
    }

    /// `None` when the superpoint was never visible.
    pub fn score(&self, superpoint: usize, column: usize) -> Option<f64> {
        match self.counts.denominator(superpoint) {
            0 => None,
            d => Some(self.counts.numerator(superpoint, column) as f64 / d as f64),
        }
    }

    pub fn row(&self, superpoint: usize) -> Option<Vec<f64>> {
        (self.visible_count(superpoint) > 0).then(|| {
            (0..self.num_categories())
                .map(|j| self.score(superpoint, j).unwrap())
                .collect()
        })
    }
}

fn check_inputs(
    partition: &SuperpointPartition,
    renders: &[ViewRender],
    masks: &[Vec<Mask>],
) -> Result<usize, FusionError> {
    if masks.len() != renders.len() {
        return Err(FusionError::ViewCount {
            masks: masks.len(),
            renders: renders.len(),
        });
    }
    let categories = masks.first().map_or(0, Vec::len);
    for (view, (render, view_masks)) in renders.iter().zip(masks).enumerate() {
        if render.num_points() != partition.num_points() {
            return Err(FusionError::PointCount {
                view,
                partition: partition.num_points(),
                render: render.num_points(),
            });
        }
        if view_masks.len() != categories {
            return Err(FusionError::CategoryCount {
                view,
                got: view_masks.len(),
                expected: categories,
            });
        }
        let frame = Mask::empty(render.width(), render.height());
        for mask in view_masks {
            frame
                .check_same_dims(mask)
                .map_err(|source| FusionError::Dimensions { view, source })?;
        }
    }
    Ok(categories)
}

/// Accumulates votes over all views. `masks[k][j]` is the category-`j`
/// mask for view `k`.
pub fn compute_scores(
    partition: &SuperpointPartition,
    renders: &[ViewRender],
    masks: &[Vec<Mask>],
) -> Result<ScoreMatrix, FusionError> {
    let categories = check_inputs(partition, renders, masks)?;
    let counts = renders
        .par_iter()
        .zip(masks.par_iter())
        .map(|(render, view_masks)| VoteCounts::from_view(partition, render, view_masks))
        .reduce(
            || VoteCounts::zeros(partition.len(), categories),
            |a, b| a.merge(&b),
        );
    Ok(ScoreMatrix::from_counts(counts))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAssignment {
    pub superpoint_label: Vec<i32>,
    pub point_label: Vec<i32>,
}

/// Labels each superpoint with its best-scoring category when that score is
/// defined and at least `tau`; everything else is background. Ties go to the
/// lowest category.
pub fn assign_labels(scores: &ScoreMatrix, partition: &SuperpointPartition, tau: f64) -> LabelAssignment {
    let superpoint_label: Vec<i32> = (0..scores.num_superpoints())
        .map(|i| {
            let Some(row) = scores.row(i) else {
                return BACKGROUND;
            };
            let mut best: Option<(usize, f64)> = None;
            for (j, &s) in row.iter().enumerate() {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((j, s));
                }
            }
            match best {
                Some((j, s)) if s >= tau => scores.categories()[j],
                _ => BACKGROUND,
            }
        })
        .collect();
    let point_label = partition
        .assignment()
        .iter()
        .map(|&sp| superpoint_label[sp])
        .collect();
    LabelAssignment {
        superpoint_label,
        point_label,
    }
}

/// Intersection over union; two empty masks count as a perfect match.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64, DimensionMismatch> {
    a.check_same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Pixels of `render` owned by points labelled `category`.
pub fn label_projection(render: &ViewRender, point_label: &[i32], category: i32) -> Mask {
    let (w, h) = render.dims();
    let bits = render
        .owners()
        .map(|owner| owner.is_some_and(|p| point_label[p] == category))
        .collect();
    Mask::from_bits(w, h, bits).expect("one bit per pixel")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationCandidate {
    pub view_index: usize,
    pub text: String,
    pub iou: f64,
}

/// Picks the view whose mask best agrees with the fused labels for
/// `category`, returning that view's explanation. Ties go to the lowest view.
pub fn select_explanation(
    renders: &[ViewRender],
    responses: &[SegmentResponse],
    labels: &LabelAssignment,
    category: i32,
) -> Result<ExplanationCandidate, FusionError> {
    if responses.len() != renders.len() {
        return Err(FusionError::ViewCount {
            masks: responses.len(),
            renders: renders.len(),
        });
    }
    let mut best: Option<ExplanationCandidate> = None;
    for (render, response) in renders.iter().zip(responses) {
        let projection = label_projection(render, &labels.point_label, category);
        let iou = mask_iou(&projection, &response.mask).map_err(|source| FusionError::Dimensions {
            view: render.view_index,
            source,
        })?;
        if best.as_ref().is_none_or(|b| iou > b.iou) {
            best = Some(ExplanationCandidate {
                view_index: render.view_index,
                text: response.explanation.clone(),
                iou,
            });
        }
    }
    best.ok_or(FusionError::NoViews)
}
