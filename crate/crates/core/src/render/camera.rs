use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::geometry::PointCloud;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("eye and target coincide")]
    DegenerateView,
    #[error("up vector is parallel to the viewing direction")]
    ParallelUp,
    #[error("vertical field of view must lie in (0, 180) degrees, got {0}")]
    BadFov(f64),
    #[error("image size must be nonzero, got {0}x{1}")]
    BadImageSize(u32, u32),
    #[error("view count must be positive")]
    NoViews,
    #[error("distance factor must be positive, got {0}")]
    BadDistance(f64),
}

/// A pinhole camera looking from `eye` at `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub eye: Point3<f64>,
    pub target: Point3<f64>,
    pub up: Vector3<f64>,
    pub vertical_fov: f64,
    pub image_size: (u32, u32),
}

/// Projection of a world point into pixel space.
///
/// `u` is the column, `v` the row (row 0 at the top). Coordinates are floors of
/// the continuous image position and may be outside the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pixel { u: i64, v: i64, depth: f64 },
    BehindCamera,
}

impl Projection {
    /// The pixel if it lands inside a `width × height` image.
    pub fn in_bounds(&self, width: u32, height: u32) -> Option<(u32, u32, f64)> {
        match *self {
            Projection::Pixel { u, v, depth }
                if u >= 0 && v >= 0 && u < width as i64 && v < height as i64 =>
            {
                Some((u as u32, v as u32, depth))
            }
            _ => None,
        }
    }
}

/// Orthonormal camera frame derived from a pose.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Frame {
    eye: Point3<f64>,
    right: Vector3<f64>,
    up: Vector3<f64>,
    forward: Vector3<f64>,
    focal: f64,
    cx: f64,
    cy: f64,
}

impl Frame {
    pub(crate) fn project(&self, p: &Point3<f64>) -> Projection {
        let d = p - self.eye;
        let depth = d.dot(&self.forward);
        if depth <= 0.0 {
            return Projection::BehindCamera;
        }
        let x = d.dot(&self.right);
        let y = d.dot(&self.up);
        let u = self.cx + self.focal * x / depth;
        let v = self.cy - self.focal * y / depth;
        Projection::Pixel {
            u: u.floor() as i64,
            v: v.floor() as i64,
            depth,
        }
    }
}

impl CameraPose {
    pub fn validate(&self) -> Result<(), CameraError> {
        let (w, h) = self.image_size;
        if w == 0 || h == 0 {
            return Err(CameraError::BadImageSize(w, h));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < 180.0) {
            return Err(CameraError::BadFov(self.vertical_fov));
        }
        let view = self.target - self.eye;
        if view.norm() == 0.0 {
            return Err(CameraError::DegenerateView);
        }
        if view.normalize().cross(&self.up).norm() < 1e-9 {
            return Err(CameraError::ParallelUp);
        }
        Ok(())
    }

    /// Focal length in pixels implied by the vertical field of view.
    pub fn focal_px(&self) -> f64 {
        (self.image_size.1 as f64 / 2.0) / (self.vertical_fov.to_radians() / 2.0).tan()
    }

    pub(crate) fn frame(&self) -> Frame {
        let forward = (self.target - self.eye).normalize();
        let right = forward.cross(&self.up).normalize();
        let up = right.cross(&forward);
        Frame {
            eye: self.eye,
            right,
            up,
            forward,
            focal: self.focal_px(),
            cx: self.image_size.0 as f64 / 2.0,
            cy: self.image_size.1 as f64 / 2.0,
        }
    }
}

/// Look-at perspective projection of `point` through `pose`.
///
/// Depth is the distance along the camera's forward axis; points at or behind
/// the eye plane yield [`Projection::BehindCamera`].
pub fn project_point(point: &Point3<f64>, pose: &CameraPose) -> Projection {
    pose.frame().project(point)
}

const WORLD_UP: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);
const ALT_UP: Vector3<f64> = Vector3::new(0.0, 1.0, 0.0);

/// Unit directions on a Fibonacci sphere with `count` points, ordered from
/// +z toward -z.
pub fn fibonacci_directions(count: usize) -> Vec<Vector3<f64>> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// `views` cameras on a Fibonacci sphere around the cloud centroid, at
/// `distance_factor` times the bounding radius, all aimed at the centroid.
pub fn make_camera_rig(
    cloud: &PointCloud,
    views: usize,
    image_size: (u32, u32),
    vertical_fov: f64,
    distance_factor: f64,
) -> Result<Vec<CameraPose>, CameraError> {
    if views == 0 {
        return Err(CameraError::NoViews);
    }
    if !(distance_factor > 0.0 && distance_factor.is_finite()) {
        return Err(CameraError::BadDistance(distance_factor));
    }
    let centroid = cloud.centroid();
    let mut radius = cloud.bounding_radius();
    if radius == 0.0 {
        // All points coincide; any positive scale gives a valid rig.
        radius = 1.0;
    }
    let distance = distance_factor * radius;
    fibonacci_directions(views)
        .into_iter()
        .map(|dir| {
            let up = if dir.cross(&WORLD_UP).norm() < 1e-6 {
                ALT_UP
            } else {
                WORLD_UP
            };
            let pose = CameraPose {
                eye: centroid + dir * distance,
                target: centroid,
                up,
                vertical_fov,
                image_size,
            };
            pose.validate().map(|_| pose)
        })
        .collect()
}
