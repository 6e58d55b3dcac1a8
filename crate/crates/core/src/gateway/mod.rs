//! The segmenter contract: one rendered view plus one instruction in, one
//! binary mask plus an explanation out.
//!
//! Three backends implement [`Segmenter`]: [`OracleSegmenter`] derives masks
//! from ground-truth labels, [`ReplaySegmenter`] reads precomputed mask PNGs,
//! and [`RemoteSegmenter`] speaks the HTTP/JSON protocol in [`wire`].

mod oracle;
mod remote;
mod replay;
pub mod rle;
pub mod wire;

pub use oracle::{oracle_segment, OracleSegmenter};
pub use remote::{RemoteConfig, RemoteSegmenter};
pub use replay::{write_mask_png, ReplaySegmenter};

use image::RgbImage;
use thiserror::Error;

use crate::mask::Mask;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRequest {
    pub image: RgbImage,
    pub instruction: String,
    pub query_id: String,
    pub view_index: usize,
}

impl SegmentRequest {
    pub fn dims(&self) -> (u32, u32) {
        self.image.dimensions()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentResponse {
    pub mask: Mask,
    pub explanation: String,
    /// Whether the model emitted a segmentation at all. When false the mask
    /// is all-false.
    pub has_segmentation: bool,
}

impl SegmentResponse {
    pub fn new(mask: Mask, explanation: String, has_segmentation: bool) -> Result<Self, GatewayErrorKind> {
        if !has_segmentation && !mask.is_all_false() {
            return Err(GatewayErrorKind::Protocol(
                "has_segmentation is false but the mask is not empty".into(),
            ));
        }
        Ok(Self {
            mask,
            explanation,
            has_segmentation,
        })
    }

    pub fn no_segmentation(width: u32, height: u32, explanation: String) -> Self {
        Self {
            mask: Mask::empty(width, height),
            explanation,
            has_segmentation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayErrorKind {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("mask not found: {0}")]
    MaskNotFound(String),
    #[error("unknown query id")]
    UnknownQuery,
    #[error("unknown category id {0}")]
    UnknownCategory(i32),
    #[error("ground-truth labels are required")]
    MissingLabels,
    #[error("no render for this view")]
    MissingView,
    #[error("I/O error: {0}")]
    Io(String),
    #[error("image error: {0}")]
    Image(String),
    #[error("connection failed after {attempts} attempt(s): {detail}")]
    Connect { attempts: u32, detail: String },
    #[error("timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("server answered HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
}

/// A backend failure tagged with the query and view it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("segmenter failed for query `{query_id}`, view {view_index}: {kind}")]
pub struct GatewayError {
    pub query_id: String,
    pub view_index: usize,
    pub kind: GatewayErrorKind,
}

impl GatewayError {
    pub fn new(request: &SegmentRequest, kind: GatewayErrorKind) -> Self {
        Self {
            query_id: request.query_id.clone(),
            view_index: request.view_index,
            kind,
        }
    }
}

/// A 2D instruction-driven segmenter. Implementations must tolerate
/// concurrent calls.
pub trait Segmenter: Send + Sync {
    fn segment(&self, request: &SegmentRequest) -> Result<SegmentResponse, GatewayError>;
}

pub(crate) fn check_request(request: &SegmentRequest) -> Result<(), GatewayError> {
    if request.instruction.trim().is_empty() {
        return Err(GatewayError::new(
            request,
            GatewayErrorKind::InvalidRequest("instruction is empty".into()),
        ));
    }
    Ok(())
}
