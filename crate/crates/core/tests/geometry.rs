use std::io::Cursor;

use mvpart::geometry::ply::{encode_ply, load_ply, read_ply, write_ply, DEFAULT_LABEL_PROPERTY};
use mvpart::geometry::{estimate_normals, knn, PointCloud};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;

fn fibonacci_sphere(n: usize, radius: f64) -> PointCloud {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let positions = (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Point3::new(radius * r * phi.cos(), radius * r * phi.sin(), radius * z)
        })
        .collect();
    PointCloud::new(positions, vec![[200, 200, 200]; n]).unwrap()
}

fn cloud_strategy(max: usize) -> impl Strategy<Value = PointCloud> {
    (1..max).prop_flat_map(|n| {
        (
            prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, -50.0..50.0f64), n),
            prop::collection::vec(any::<[u8; 3]>(), n),
            prop::option::of(prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64), n)),
            prop::option::of(prop::collection::vec(-1..20i32, n)),
        )
            .prop_map(|(pos, colors, normals, labels)| {
                let positions = pos.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
                let mut cloud = PointCloud::new(positions, colors).unwrap();
                if let Some(normals) = normals {
                    let unit = normals.into_iter().map(|(x, y, z)| Vector3::new(x, y, z).normalize()).collect();
                    cloud = cloud.with_normals(unit).unwrap();
                }
                if let Some(labels) = labels {
                    cloud = cloud.with_labels(labels).unwrap();
                }
                cloud
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ply_round_trip(cloud in cloud_strategy(60)) {
        let mut bytes = Vec::new();
        encode_ply(&cloud, &mut bytes, false).unwrap();
        let back = read_ply(&mut Cursor::new(bytes), DEFAULT_LABEL_PROPERTY).unwrap();
        prop_assert_eq!(back.positions(), cloud.positions());
        prop_assert_eq!(back.colors(), cloud.colors());
        prop_assert_eq!(back.labels(), cloud.labels());
        match (back.normals(), cloud.normals()) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                for (x, y) in a.iter().zip(b) {
                    prop_assert!((x - y).norm() < 1e-12);
                }
            }
            _ => prop_assert!(false, "normals presence changed"),
        }
    }

    #[test]
    fn knn_matches_brute_force(cloud in cloud_strategy(200), k in 1usize..12) {
        prop_assume!(cloud.len() >= 2);
        let graph = knn(&cloud, k).unwrap();
        let pts = cloud.positions();
        for p in 0..cloud.len() {
            let mut others: Vec<(f64, usize)> = (0..cloud.len())
                .filter(|&q| q != p)
                .map(|q| ((pts[q] - pts[p]).norm_squared(), q))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expected: Vec<usize> = others.iter().take(k.min(cloud.len() - 1)).map(|&(_, q)| q).collect();
            prop_assert_eq!(graph.neighbors(p), expected.as_slice(), "point {}", p);
        }
    }
}

#[test]
fn ply_file_round_trip_keeps_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ply");
    let cloud = fibonacci_sphere(50, 1.0).with_labels((0..50).map(|i| i % 3).collect()).unwrap();
    write_ply(&cloud, &path, true).unwrap();
    let back = load_ply(&path).unwrap();
    assert_eq!(back.labels(), cloud.labels());
    assert_eq!(back.positions(), cloud.positions());
}

#[test]
fn sphere_normals_are_radial_unit_and_outward() {
    let cloud = fibonacci_sphere(2000, 1.0);
    let graph = knn(&cloud, 10).unwrap();
    let est = estimate_normals(&cloud, &graph).unwrap();
    assert!(est.degenerate.is_empty());
    let normals = est.cloud.normals().unwrap();
    let max_angle = 5f64.to_radians();
    for (p, n) in cloud.positions().iter().zip(normals) {
        assert!((n.norm() - 1.0).abs() < 1e-9);
        let radial = p.coords.normalize();
        assert!(n.dot(&radial) >= max_angle.cos(), "normal {n:?} at {p:?}");
    }
}

#[test]
fn normals_are_scale_invariant() {
    let cloud = fibonacci_sphere(500, 1.0);
    let scaled = cloud.map_positions(|p| Point3::from(p.coords * 7.5));
    let a = estimate_normals(&cloud, &knn(&cloud, 8).unwrap()).unwrap();
    let b = estimate_normals(&scaled, &knn(&scaled, 8).unwrap()).unwrap();
    for (x, y) in a.cloud.normals().unwrap().iter().zip(b.cloud.normals().unwrap()) {
        assert!((x - y).norm() < 1e-9);
    }
}
