//! Dataset-side tooling: part feature extraction, instruction generation,
//! manifests, the category-mIoU metric and the training loss formulas.

mod features;
mod instructions;
mod loss;
mod manifest;
mod metrics;

pub use features::{extract_part_features, named_color, PartFeatures, RelativePosition, NAMED_COLORS};
pub use instructions::{generate_instructions, InstructionRecord, PartRef, QueryType, TemplateBank};
pub use loss::{bce, dice, mask_loss, text_loss, total_loss, LossConfig};
pub use manifest::{load_manifest, save_manifest, ManifestInstruction, ObjectManifest};
pub use metrics::{category_miou, CategoryRow, EvalReport, PartRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("category {0} has no points")]
    CategoryAbsent(i32),
    #[error("point cloud has no labels")]
    MissingLabels,
    #[error("template set is empty")]
    NoTemplates,
    #[error("no templates for query type {0}")]
    NoTemplatesFor(&'static str),
    #[error("template `{template}` references slot `{slot}` which has no value")]
    UnknownSlot { template: String, slot: String },
    #[error("template `{0}` has an unbalanced brace")]
    BadTemplate(String),
    #[error("object {object}: prediction has {pred} points, ground truth {gt}")]
    ShapeMismatch { object: usize, pred: usize, gt: usize },
    #[error("{pred} prediction sets for {gt} ground-truth sets")]
    ObjectCount { pred: usize, gt: usize },
    #[error("part id {0} is not mapped to an object category")]
    UnknownPart(i32),
    #[error("buffers differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("prediction value {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("position {0}: probabilities sum to {1}, not 1")]
    InvalidDistribution(usize, f64),
    #[error("position {position}: target token {token} outside vocabulary of {vocab}")]
    TokenOutOfRange { position: usize, token: usize, vocab: usize },
    #[error("invalid loss weights: {0}")]
    Weights(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
