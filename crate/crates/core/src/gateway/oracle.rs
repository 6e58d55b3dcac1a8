use std::collections::HashMap;

use super::{check_request, GatewayError, GatewayErrorKind, SegmentRequest, SegmentResponse, Segmenter};
use crate::mask::Mask;
use crate::render::ViewRender;

fn explanation_for(category: i32) -> String {
    format!("The highlighted region is the part with category id {category}.")
}

/// Ground-truth segmentation of one view: a pixel is set when the point that
/// owns it carries `category`.
pub fn oracle_segment(
    labels: &[i32],
    render: &ViewRender,
    category: i32,
) -> Result<SegmentResponse, GatewayErrorKind> {
    if category < 0 {
        return Err(GatewayErrorKind::UnknownCategory(category));
    }
    if labels.len() != render.num_points() {
        return Err(GatewayErrorKind::InvalidRequest(format!(
            "{} labels for a render of {} points",
            labels.len(),
            render.num_points()
        )));
    }
    let (width, height) = render.dims();
    let bits = render
        .owners()
        .map(|owner| owner.is_some_and(|p| labels[p] == category))
        .collect();
    let mask = Mask::from_bits(width, height, bits).expect("one bit per pixel");
    Ok(SegmentResponse {
        mask,
        explanation: explanation_for(category),
        has_segmentation: true,
    })
}

/// Oracle backend for a single object: knows the object's labels, its
/// renders, and which category each query id targets.
pub struct OracleSegmenter<'a> {
    labels: &'a [i32],
    renders: &'a [ViewRender],
    queries: HashMap<String, i32>,
}

impl<'a> OracleSegmenter<'a> {
    pub fn new(
        labels: &'a [i32],
        renders: &'a [ViewRender],
        queries: impl IntoIterator<Item = (String, i32)>,
    ) -> Self {
        Self {
            labels,
            renders,
            queries: queries.into_iter().collect(),
        }
    }
}

impl Segmenter for OracleSegmenter<'_> {
    fn segment(&self, request: &SegmentRequest) -> Result<SegmentResponse, GatewayError> {
        check_request(request)?;
        let fail = |kind| GatewayError::new(request, kind);
        let category = *self
            .queries
            .get(&request.query_id)
            .ok_or_else(|| fail(GatewayErrorKind::UnknownQuery))?;
        let render = self
            .renders
            .get(request.view_index)
            .ok_or_else(|| fail(GatewayErrorKind::MissingView))?;
        if render.dims() != request.dims() {
            return Err(fail(GatewayErrorKind::InvalidRequest(
                "image size differs from the render".into(),
            )));
        }
        oracle_segment(self.labels, render, category).map_err(fail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointCloud;
    use crate::render::{render_view, CameraPose, SplatSettings};
    use nalgebra::{Point3, Vector3};

    fn checkerboard() -> (PointCloud, ViewRender) {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                pts.push(Point3::new(i as f64 * 0.1 - 0.35, j as f64 * 0.1 - 0.35, 0.0));
                labels.push((i + j) % 2);
            }
        }
        let n = pts.len();
        let cloud = PointCloud::new(pts, vec![[0; 3]; n]).unwrap().with_labels(labels).unwrap();
        let pose = CameraPose {
            eye: Point3::new(0.0, 0.0, 2.0),
            target: Point3::origin(),
            up: Vector3::y(),
            vertical_fov: 40.0,
            image_size: (64, 64),
        };
        let render = render_view(&cloud, &pose, 0, SplatSettings { splat_radius_px: 2, depth_tolerance: 0.01 });
        (cloud, render)
    }

    #[test]
    fn mask_matches_pixelwise_label_test() {
        let (cloud, render) = checkerboard();
        let labels = cloud.labels().unwrap();
        for category in [0, 1] {
            let resp = oracle_segment(labels, &render, category).unwrap();
            assert!(resp.has_segmentation);
            for v in 0..64 {
                for u in 0..64 {
                    let expected = render.point_at(u, v).is_some_and(|p| labels[p] == category);
                    assert_eq!(resp.mask.get(u, v), expected);
                }
            }
            assert!(resp.mask.count() > 0);
        }
    }

    #[test]
    fn single_category_covers_all_drawn_pixels() {
        let (cloud, render) = checkerboard();
        let labels = vec![3; cloud.len()];
        let resp = oracle_segment(&labels, &render, 3).unwrap();
        let drawn = render.owners().filter(Option::is_some).count();
        assert_eq!(resp.mask.count(), drawn);
    }

    #[test]
    fn absent_category_gives_empty_mask() {
        let (cloud, render) = checkerboard();
        let resp = oracle_segment(cloud.labels().unwrap(), &render, 7).unwrap();
        assert!(resp.mask.is_all_false());
        assert!(resp.has_segmentation);
        assert_eq!(
            oracle_segment(cloud.labels().unwrap(), &render, -1),
            Err(GatewayErrorKind::UnknownCategory(-1))
        );
    }

    #[test]
    fn backend_routes_by_query_id() {
        let (cloud, render) = checkerboard();
        let renders = vec![render];
        let seg = OracleSegmenter::new(cloud.labels().unwrap(), &renders, [("q".to_string(), 1)]);
        let mut req = SegmentRequest {
            image: renders[0].image().clone(),
            instruction: "find it".into(),
            query_id: "q".into(),
            view_index: 0,
        };
        assert!(seg.segment(&req).is_ok());
        req.query_id = "other".into();
        let err = seg.segment(&req).unwrap_err();
        assert_eq!(err.kind, GatewayErrorKind::UnknownQuery);
        assert_eq!(err.query_id, "other");
        req.query_id = "q".into();
        req.view_index = 4;
        assert_eq!(seg.segment(&req).unwrap_err().kind, GatewayErrorKind::MissingView);
    }
}
