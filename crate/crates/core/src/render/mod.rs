//! Camera rigs and z-buffered point-splat rasterization.
//!
//! Each point is drawn as a flat disc of constant depth; the nearest disc wins
//! every pixel it touches (ties go to the lower point index). A point counts
//! as visible when the surface drawn at its own projected pixel is no more
//! than `depth_tolerance × scene diameter` in front of it.

mod camera;

pub use camera::{fibonacci_directions, make_camera_rig, project_point, CameraError, CameraPose, Projection};

use std::path::Path;

use image::{Rgb as Pixel, RgbImage};
use rayon::prelude::*;

use crate::geometry::PointCloud;

pub const DEFAULT_VIEWS: usize = 10;
pub const DEFAULT_IMAGE_SIZE: u32 = 512;
pub const DEFAULT_FOV_DEG: f64 = 60.0;
pub const DEFAULT_DISTANCE_FACTOR: f64 = 2.2;
/// Large enough that a 5k-point object renders as a closed surface at the
/// default image size; with smaller discs, hidden surfaces show through.
pub const DEFAULT_SPLAT_RADIUS_PX: u32 = 5;
pub const DEFAULT_DEPTH_TOLERANCE: f64 = 0.01;

const BACKGROUND_RGB: [u8; 3] = [255, 255, 255];
const NO_POINT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatSettings {
    pub splat_radius_px: u32,
    /// Fraction of the scene diameter.
    pub depth_tolerance: f64,
}

impl Default for SplatSettings {
    fn default() -> Self {
        Self {
            splat_radius_px: DEFAULT_SPLAT_RADIUS_PX,
            depth_tolerance: DEFAULT_DEPTH_TOLERANCE,
        }
    }
}

/// One rasterized view of a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewRender {
    pub view_index: usize,
    pub pose: CameraPose,
    image: RgbImage,
    depth: Vec<f64>,
    point_index: Vec<u32>,
    visible: Vec<bool>,
    /// In-bounds projected pixel of every point, if any.
    pixels: Vec<Option<(u32, u32)>>,
}

impl ViewRender {
    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn dims(&self) -> (u32, u32) {
        self.image.dimensions()
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    fn offset(&self, u: u32, v: u32) -> usize {
        v as usize * self.width() as usize + u as usize
    }

    /// Depth at pixel `(u, v)`; `f64::INFINITY` where nothing was drawn.
    pub fn depth_at(&self, u: u32, v: u32) -> f64 {
        self.depth[self.offset(u, v)]
    }

    /// The point that owns pixel `(u, v)`.
    pub fn point_at(&self, u: u32, v: u32) -> Option<usize> {
        match self.point_index[self.offset(u, v)] {
            NO_POINT => None,
            p => Some(p as usize),
        }
    }

    /// Owning point per pixel in row-major order.
    pub fn owners(&self) -> impl Iterator<Item = Option<usize>> + '_ {
        self.point_index
            .iter()
            .map(|&p| (p != NO_POINT).then_some(p as usize))
    }

    pub fn visible(&self) -> &[bool] {
        &self.visible
    }

    pub fn is_visible(&self, point: usize) -> bool {
        self.visible[point]
    }

    /// Projected pixel of `point` when it lands inside the image.
    pub fn pixel_of(&self, point: usize) -> Option<(u32, u32)> {
        self.pixels[point]
    }

    pub fn num_points(&self) -> usize {
        self.visible.len()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> image::ImageResult<()> {
        self.image.save_with_format(path, image::ImageFormat::Png)
    }
}

fn disc_offsets(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut offsets = Vec::new();
    for dv in -r..=r {
        for du in -r..=r {
            if du * du + dv * dv <= r * r {
                offsets.push((du, dv));
            }
        }
    }
    offsets
}

/// Rasterizes `cloud` through `pose`. Points behind the camera are skipped.
pub fn render_view(
    cloud: &PointCloud,
    pose: &CameraPose,
    view_index: usize,
    settings: SplatSettings,
) -> ViewRender {
    let (width, height) = pose.image_size;
    let frame = pose.frame();
    let pixel_count = width as usize * height as usize;
    let mut depth = vec![f64::INFINITY; pixel_count];
    let mut owner = vec![NO_POINT; pixel_count];
    let offsets = disc_offsets(settings.splat_radius_px);

    let projections: Vec<Projection> = cloud.positions().iter().map(|p| frame.project(p)).collect();

    // Iterating in index order with a strict comparison lets the lower index
    // keep pixels on exact depth ties.
    for (index, proj) in projections.iter().enumerate() {
        let Projection::Pixel { u, v, depth: z } = *proj else {
            continue;
        };
        for &(du, dv) in &offsets {
            let (x, y) = (u + du, v + dv);
            if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
                continue;
            }
            let at = y as usize * width as usize + x as usize;
            if z < depth[at] {
                depth[at] = z;
                owner[at] = index as u32;
            }
        }
    }

    let slack = settings.depth_tolerance * 2.0 * cloud.bounding_radius();
    let mut visible = vec![false; cloud.len()];
    let mut pixels = vec![None; cloud.len()];
    for (index, proj) in projections.iter().enumerate() {
        if let Some((u, v, z)) = proj.in_bounds(width, height) {
            pixels[index] = Some((u, v));
            let at = v as usize * width as usize + u as usize;
            visible[index] = depth[at] >= z - slack;
        }
    }

    let colors = cloud.colors();
    let image = RgbImage::from_fn(width, height, |x, y| {
        match owner[y as usize * width as usize + x as usize] {
            NO_POINT => Pixel(BACKGROUND_RGB),
            p => Pixel(colors[p as usize]),
        }
    });

    ViewRender {
        view_index,
        pose: pose.clone(),
        image,
        depth,
        point_index: owner,
        visible,
        pixels,
    }
}

/// Renders every pose in parallel; output order follows `poses`.
pub fn render_views(
    cloud: &PointCloud,
    poses: &[CameraPose],
    settings: SplatSettings,
) -> Vec<ViewRender> {
    poses
        .par_iter()
        .enumerate()
        .map(|(k, pose)| render_view(cloud, pose, k, settings))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Vector3};

    fn pose() -> CameraPose {
        CameraPose {
            eye: Point3::new(0.0, 0.0, -1.0),
            target: Point3::new(0.0, 0.0, 0.0),
            up: Vector3::y(),
            vertical_fov: 60.0,
            image_size: (33, 21),
        }
    }

    #[test]
    fn nearer_point_wins_and_hides_the_other() {
        // Both on the optical axis: depths 1.0 and 2.0.
        let cloud = PointCloud::new(
            vec![Point3::new(0.0, 0.0, 1.0), Point3::new(0.0, 0.0, 0.0)],
            vec![[1, 1, 1], [2, 2, 2]],
        )
        .unwrap();
        let r = render_view(&cloud, &pose(), 0, SplatSettings { splat_radius_px: 1, depth_tolerance: 0.01 });
        assert_eq!(r.point_at(16, 10), Some(1));
        assert_eq!(r.depth_at(16, 10), 1.0);
        assert!(r.is_visible(1));
        assert!(!r.is_visible(0));
        assert_eq!(r.image().get_pixel(16, 10).0, [2, 2, 2]);
    }

    #[test]
    fn single_point_on_axis_lands_in_center() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 3.0)], vec![[9, 9, 9]]).unwrap();
        let r = render_view(&cloud, &pose(), 0, SplatSettings::default());
        assert_eq!(r.point_at(16, 10), Some(0));
        assert_eq!(r.pixel_of(0), Some((16, 10)));
        assert!(r.is_visible(0));
        assert_eq!(r.image().get_pixel(0, 0).0, [255, 255, 255]);
        assert_eq!(r.point_at(0, 0), None);
        assert_eq!(r.depth_at(0, 0), f64::INFINITY);
    }

    #[test]
    fn equal_depth_goes_to_lower_index() {
        let p = Point3::new(0.0, 0.0, 1.0);
        let cloud = PointCloud::new(vec![p, p], vec![[1; 3], [2; 3]]).unwrap();
        let r = render_view(&cloud, &pose(), 0, SplatSettings::default());
        assert_eq!(r.point_at(16, 10), Some(0));
        assert!(r.is_visible(0) && r.is_visible(1));
    }

    #[test]
    fn points_behind_camera_are_skipped() {
        let cloud = PointCloud::new(
            vec![Point3::new(0.0, 0.0, -2.0), Point3::new(0.0, 0.0, 1.0)],
            vec![[1; 3]; 2],
        )
        .unwrap();
        let r = render_view(&cloud, &pose(), 3, SplatSettings::default());
        assert_eq!(r.view_index, 3);
        assert!(!r.is_visible(0));
        assert_eq!(r.pixel_of(0), None);
        assert!(r.is_visible(1));
    }

    #[test]
    fn empty_pixels_have_infinite_depth() {
        let cloud = PointCloud::new(
            vec![Point3::new(0.1, 0.0, 1.0), Point3::new(-0.2, 0.1, 0.5)],
            vec![[1; 3]; 2],
        )
        .unwrap();
        let r = render_view(&cloud, &pose(), 0, SplatSettings::default());
        for v in 0..r.height() {
            for u in 0..r.width() {
                assert_eq!(r.point_at(u, v).is_some(), r.depth_at(u, v) < f64::INFINITY);
            }
        }
    }
}
