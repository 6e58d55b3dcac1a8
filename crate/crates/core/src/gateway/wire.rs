//! JSON bodies of the `POST /segment` protocol.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use super::{rle, GatewayErrorKind, SegmentRequest, SegmentResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub image_png: String,
    pub instruction: String,
    pub query_id: String,
    pub view_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub rle: Vec<u64>,
    pub width: u32,
    pub height: u32,
    pub explanation: String,
    pub has_segmentation: bool,
}

/// 8-bit RGB PNG bytes.
pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, image::ImageError> {
    let mut bytes = Vec::new();
    image.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    Ok(bytes)
}

pub fn decode_png_rgb(bytes: &[u8]) -> Result<RgbImage, image::ImageError> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8())
}

impl WireRequest {
    pub fn from_request(request: &SegmentRequest) -> Result<Self, GatewayErrorKind> {
        let png = encode_png(&request.image).map_err(|e| GatewayErrorKind::Image(e.to_string()))?;
        Ok(Self {
            image_png: BASE64.encode(png),
            instruction: request.instruction.clone(),
            query_id: request.query_id.clone(),
            view_index: request.view_index,
        })
    }

    /// Decodes the embedded PNG.
    pub fn image(&self) -> Result<RgbImage, GatewayErrorKind> {
        let bytes = BASE64
            .decode(&self.image_png)
            .map_err(|e| GatewayErrorKind::Protocol(format!("image_png is not base64: {e}")))?;
        decode_png_rgb(&bytes).map_err(|e| GatewayErrorKind::Image(e.to_string()))
    }
}

impl WireResponse {
    pub fn from_response(response: &SegmentResponse) -> Self {
        Self {
            rle: rle::encode(&response.mask),
            width: response.mask.width(),
            height: response.mask.height(),
            explanation: response.explanation.clone(),
            has_segmentation: response.has_segmentation,
        }
    }

    /// Validates against the expected image size and decodes the mask.
    pub fn into_response(self, expected: (u32, u32)) -> Result<SegmentResponse, GatewayErrorKind> {
        if (self.width, self.height) != expected {
            return Err(GatewayErrorKind::Protocol(format!(
                "dimension mismatch: response is {}x{}, image is {}x{}",
                self.width, self.height, expected.0, expected.1
            )));
        }
        let mask = rle::decode(&self.rle, self.width, self.height)
            .map_err(|e| GatewayErrorKind::Protocol(format!("bad RLE length: {e}")))?;
        SegmentResponse::new(mask, self.explanation, self.has_segmentation)
    }
}
