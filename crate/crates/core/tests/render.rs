use mvpart::geometry::PointCloud;
use mvpart::render::{make_camera_rig, project_point, render_views, CameraPose, Projection, SplatSettings};
use nalgebra::{Point3, Rotation3, Vector3};

fn sphere(n: usize) -> PointCloud {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let positions = (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Point3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect();
    let colors = (0..n).map(|i| [(i % 251) as u8, 90, 200]).collect();
    PointCloud::new(positions, colors).unwrap()
}

fn rig(cloud: &PointCloud, views: usize, size: u32) -> Vec<CameraPose> {
    make_camera_rig(cloud, views, (size, size), 60.0, 2.2).unwrap()
}

#[test]
fn ten_views_see_the_whole_sphere() {
    let cloud = sphere(1000);
    let renders = render_views(&cloud, &rig(&cloud, 10, 256), SplatSettings::default());
    let unseen: Vec<usize> = (0..cloud.len())
        .filter(|&p| !renders.iter().any(|r| r.is_visible(p)))
        .collect();
    assert!(unseen.is_empty(), "never visible: {unseen:?}");
}

#[test]
fn visibility_agrees_with_the_depth_buffer() {
    let cloud = sphere(800);
    let settings = SplatSettings::default();
    let slack = settings.depth_tolerance * 2.0 * cloud.bounding_radius();
    for render in render_views(&cloud, &rig(&cloud, 6, 128), settings) {
        for p in 0..cloud.len() {
            let projection = project_point(&cloud.positions()[p], &render.pose);
            let (w, h) = render.dims();
            match projection.in_bounds(w, h) {
                Some((u, v, z)) => {
                    assert_eq!(render.pixel_of(p), Some((u, v)));
                    assert_eq!(render.is_visible(p), render.depth_at(u, v) >= z - slack);
                    // The buffer holds the nearest depth, never farther than the point itself.
                    assert!(render.depth_at(u, v) <= z);
                }
                None => {
                    assert_eq!(render.pixel_of(p), None);
                    assert!(!render.is_visible(p));
                }
            }
        }
        // Every owned pixel shows its owner's color; empty pixels are white.
        let (w, _) = render.dims();
        for (i, owner) in render.owners().enumerate() {
            let (u, v) = (i as u32 % w, i as u32 / w);
            let pixel = render.image().get_pixel(u, v).0;
            match owner {
                Some(p) => assert_eq!(pixel, cloud.colors()[p]),
                None => assert_eq!(pixel, [255, 255, 255]),
            }
        }
    }
}

#[test]
fn rendering_ignores_thread_count() {
    let cloud = sphere(1500);
    let poses = rig(&cloud, 8, 128);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| render_views(&cloud, &poses, SplatSettings::default()))
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn rotating_cloud_and_cameras_together_keeps_visibility() {
    let cloud = sphere(1200);
    let poses = rig(&cloud, 5, 192);
    let rotation = Rotation3::from_axis_angle(&Vector3::x_axis(), 0.7) * Rotation3::from_axis_angle(&Vector3::z_axis(), 1.1);
    let moved = cloud.map_positions(|p| rotation * p);
    let moved_poses: Vec<CameraPose> = poses
        .iter()
        .map(|pose| CameraPose {
            eye: rotation * pose.eye,
            target: rotation * pose.target,
            up: rotation * pose.up,
            ..pose.clone()
        })
        .collect();
    let before = render_views(&cloud, &poses, SplatSettings::default());
    let after = render_views(&moved, &moved_poses, SplatSettings::default());
    for (a, b) in before.iter().zip(&after) {
        let differing = (0..cloud.len()).filter(|&p| a.is_visible(p) != b.is_visible(p)).count();
        // Only rounding at pixel borders may flip a point.
        assert!(differing * 100 <= cloud.len(), "{differing} points changed in view {}", a.view_index);
    }
}

#[test]
fn points_behind_the_camera_do_not_render() {
    let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 5.0)], vec![[0, 0, 0]]).unwrap();
    let pose = CameraPose {
        eye: Point3::origin(),
        target: Point3::new(0.0, 0.0, -1.0),
        up: Vector3::y(),
        vertical_fov: 60.0,
        image_size: (16, 16),
    };
    assert_eq!(project_point(&cloud.positions()[0], &pose), Projection::BehindCamera);
    let render = &render_views(&cloud, &[pose], SplatSettings::default())[0];
    assert!(render.owners().all(|o| o.is_none()));
    assert!(!render.is_visible(0));
}
