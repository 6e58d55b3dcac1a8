use std::path::{Path, PathBuf};

use super::{check_request, GatewayError, GatewayErrorKind, SegmentRequest, SegmentResponse, Segmenter};
use crate::mask::Mask;

/// Replays masks stored as `<query_id>_view<k>.png` (8-bit gray, 0 = clear,
/// 255 = set) with optional `<query_id>_view<k>.txt` explanations.
#[derive(Debug, Clone)]
pub struct ReplaySegmenter {
    dir: PathBuf,
}

impl ReplaySegmenter {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn mask_path(&self, query_id: &str, view_index: usize) -> PathBuf {
        self.dir.join(format!("{query_id}_view{view_index}.png"))
    }

    pub fn explanation_path(&self, query_id: &str, view_index: usize) -> PathBuf {
        self.dir.join(format!("{query_id}_view{view_index}.txt"))
    }
}

/// Writes `mask` in the replay layout.
pub fn write_mask_png(mask: &Mask, path: &Path) -> image::ImageResult<()> {
    let img = image::GrayImage::from_fn(mask.width(), mask.height(), |u, v| {
        image::Luma([if mask.get(u, v) { 255 } else { 0 }])
    });
    img.save_with_format(path, image::ImageFormat::Png)
}

impl Segmenter for ReplaySegmenter {
    fn segment(&self, request: &SegmentRequest) -> Result<SegmentResponse, GatewayError> {
        check_request(request)?;
        let fail = |kind| GatewayError::new(request, kind);
        let path = self.mask_path(&request.query_id, request.view_index);
        if !path.is_file() {
            return Err(fail(GatewayErrorKind::MaskNotFound(path.display().to_string())));
        }
        let gray = image::open(&path)
            .map_err(|e| fail(GatewayErrorKind::Image(format!("{}: {e}", path.display()))))?
            .to_luma8();
        if gray.dimensions() != request.dims() {
            let (w, h) = gray.dimensions();
            return Err(fail(GatewayErrorKind::Protocol(format!(
                "dimension mismatch: mask is {w}x{h}, image is {}x{}",
                request.image.width(),
                request.image.height()
            ))));
        }
        let mask = Mask::from_fn(gray.width(), gray.height(), |u, v| gray.get_pixel(u, v).0[0] >= 128);

        let text_path = self.explanation_path(&request.query_id, request.view_index);
        let explanation = match std::fs::read_to_string(&text_path) {
            Ok(text) => text.trim_end().to_string(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(fail(GatewayErrorKind::Io(e.to_string()))),
        };
        Ok(SegmentResponse {
            mask,
            explanation,
            has_segmentation: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::RgbImage;

    fn request(query: &str, view: usize) -> SegmentRequest {
        SegmentRequest {
            image: RgbImage::new(4, 3),
            instruction: "the handle".into(),
            query_id: query.into(),
            view_index: view,
        }
    }

    #[test]
    fn replays_mask_and_text() {
        let dir = tempfile::tempdir().unwrap();
        let seg = ReplaySegmenter::new(dir.path());
        let mask = Mask::from_fn(4, 3, |u, v| u == v);
        write_mask_png(&mask, &seg.mask_path("mug_q0", 2)).unwrap();
        std::fs::write(seg.explanation_path("mug_q0", 2), "it is the handle\n").unwrap();
        let resp = seg.segment(&request("mug_q0", 2)).unwrap();
        assert_eq!(resp.mask, mask);
        assert_eq!(resp.explanation, "it is the handle");
        assert!(resp.has_segmentation);
    }

    #[test]
    fn missing_file_is_mask_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let err = ReplaySegmenter::new(dir.path()).segment(&request("x", 0)).unwrap_err();
        assert!(matches!(err.kind, GatewayErrorKind::MaskNotFound(_)));
        assert!(err.to_string().contains("mask not found"));
        assert_eq!((err.query_id.as_str(), err.view_index), ("x", 0));
    }

    #[test]
    fn wrong_size_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let seg = ReplaySegmenter::new(dir.path());
        write_mask_png(&Mask::empty(5, 5), &seg.mask_path("x", 0)).unwrap();
        let err = seg.segment(&request("x", 0)).unwrap_err();
        assert!(matches!(err.kind, GatewayErrorKind::Protocol(_)));
    }
}
