use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sphere_points_sit_on_unit_radius_after_normalization() {
    let spec = ShapeSpec::new(0, 0.0, (1.0, 1.0), 77).unwrap();
    let cloud = generate_cloud(&spec, 256).unwrap();
    for p in cloud.points() {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        assert!((r - 1.0).abs() < 1e-9, "radius {r}");
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    let spec = ShapeSpec::new(4, 0.03, (0.7, 1.3), 123).unwrap();
    let a = generate_cloud(&spec, 64).unwrap();
    let b = generate_cloud(&spec, 64).unwrap();
    assert_eq!(a, b);
    let other = ShapeSpec::new(4, 0.03, (0.7, 1.3), 124).unwrap();
    assert_ne!(generate_cloud(&other, 64).unwrap(), a);
}

#[test]
fn box_faces_receive_area_proportional_points() {
    // Raw surface sample (no normalization) so faces are identifiable by
    // the coordinate pinned at a half-extent.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pts = sample_surface(Primitive::Box, 10_000, &mut rng);
    let h = [0.5, 0.35, 0.2];
    let mut counts = [0usize; 6];
    for p in &pts {
        let mut face = None;
        for axis in 0..3 {
            if (p[axis].abs() - h[axis]).abs() < 1e-12 {
                face = Some(axis * 2 + if p[axis] > 0.0 { 0 } else { 1 });
                break;
            }
        }
        counts[face.expect("every sample lies on a face")] += 1;
    }
    let areas = [
        h[1] * h[2],
        h[1] * h[2],
        h[0] * h[2],
        h[0] * h[2],
        h[0] * h[1],
        h[0] * h[1],
    ];
    let total_area: f64 = areas.iter().sum();
    // Chi-squared against area-proportional expectations, 5 dof.
    let chi2: f64 = counts
        .iter()
        .zip(&areas)
        .map(|(&o, &a)| {
            let e = 10_000.0 * a / total_area;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    assert!(chi2 < 20.5, "chi-squared {chi2}, counts {counts:?}");
}

#[test]
fn every_primitive_generates_requested_count() {
    for class in 0..8 {
        let spec = ShapeSpec::new(class, 0.01, (0.8, 1.2), 5 + class as u64).unwrap();
        let cloud = generate_cloud(&spec, 100).unwrap();
        assert_eq!(cloud.len(), 100);
        assert!(cloud.max_radius() <= 1.0 + 1e-9);
        let c = cloud.centroid();
        for v in c {
            assert!(v.abs() < 1e-9);
        }
    }
    assert!(Primitive::from_class_id(8).is_err());
    assert!("pyramid".parse::<Primitive>().is_err());
    assert!(generate_cloud(&ShapeSpec::new(0, 0.0, (1.0, 1.0), 1).unwrap(), 4).is_err());
}

#[test]
fn normalize_hand_case_and_idempotence() {
    let p = PointCloud::new(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
    let n = normalize(&p).unwrap();
    assert_eq!(n.points(), &[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);

    let again = normalize(&n).unwrap();
    for (a, b) in again.points().iter().zip(n.points()) {
        for axis in 0..3 {
            assert!((a[axis] - b[axis]).abs() < 1e-9);
        }
    }

    // Translation invariance.
    let shifted = PointCloud::new(
        p.points()
            .iter()
            .map(|q| [q[0] + 5.0, q[1] - 3.0, q[2] + 0.5])
            .collect(),
    )
    .unwrap();
    let n2 = normalize(&shifted).unwrap();
    for (a, b) in n2.points().iter().zip(n.points()) {
        for axis in 0..3 {
            assert!((a[axis] - b[axis]).abs() < 1e-9);
        }
    }

    assert!(matches!(
        normalize(&PointCloud::new(vec![[1.0, 1.0, 1.0]; 5]).unwrap()),
        Err(DataError::ZeroScale)
    ));
}

#[test]
fn registration_pair_is_an_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let template = PointCloud::new(
        (0..40)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect(),
    )
    .unwrap();
    let (source, rotation) = make_registration_pair(&template, 45.0, 9).unwrap();

    // Pairwise distances preserved.
    for i in 0..10 {
        for j in (i + 1)..10 {
            let dt = crate::geometry::sq_dist(template.point(i), template.point(j)).sqrt();
            let ds = crate::geometry::sq_dist(source.point(i), source.point(j)).sqrt();
            assert!((dt - ds).abs() < 1e-9);
        }
    }
    // Inverse recovers the template.
    let back = rotation.inverse().apply(&source);
    for (a, b) in back.points().iter().zip(template.points()) {
        for axis in 0..3 {
            assert!((a[axis] - b[axis]).abs() < 1e-9);
        }
    }
    // Zero range gives the identity.
    let (same, rot0) = make_registration_pair(&template, 0.0, 9).unwrap();
    assert_eq!(rot0, crate::networks::Rotation::identity());
    assert_eq!(same.points(), template.points());

    assert!(make_registration_pair(&template, 200.0, 9).is_err());
}

#[test]
fn shuffle_is_a_seeded_permutation() {
    let cloud = PointCloud::new((0..20).map(|i| [i as f64, 0.0, 0.0]).collect()).unwrap();
    let a = shuffle_points(&cloud, 3);
    let b = shuffle_points(&cloud, 3);
    assert_eq!(a, b);
    let mut xs: Vec<f64> = a.points().iter().map(|p| p[0]).collect();
    xs.sort_by(f64::total_cmp);
    assert_eq!(xs, (0..20).map(|i| i as f64).collect::<Vec<_>>());
}

#[test]
fn dataset_generation_is_deterministic_and_balanced() {
    let cfg = DatasetConfig {
        classes: 8,
        clouds_per_class: 20,
        points: 32,
        jitter_sigma: 0.02,
        scale_range: (0.8, 1.2),
        split_fractions: (0.75, 0.05, 0.20),
        seed: 11,
    };
    let a = Dataset::generate(cfg.clone()).unwrap();
    let b = Dataset::generate(cfg.clone()).unwrap();
    assert_eq!(a.items.len(), 160);
    for (x, y) in a.items.iter().zip(&b.items) {
        assert_eq!(x.cloud, y.cloud);
        assert_eq!(x.class_id, y.class_id);
        assert_eq!(x.split, y.split);
    }
    // Class balance in every split.
    for split in [Split::Train, Split::Test] {
        let mut counts = vec![0usize; 8];
        for item in a.split(split) {
            counts[item.class_id] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{split:?}: {counts:?}");
    }
}

#[test]
fn splits_are_disjoint_and_covering() {
    let s = make_split(37, (0.85, 0.05, 0.10));
    let mut all: Vec<usize> = s
        .train
        .iter()
        .chain(&s.validation)
        .chain(&s.test)
        .copied()
        .collect();
    all.sort_unstable();
    assert_eq!(all, (0..37).collect::<Vec<_>>());
    assert!(!s.train.is_empty() && !s.test.is_empty());
}

#[test]
fn xyz_round_trip_and_parsing() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cloud = PointCloud::new(
        (0..25)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect(),
    )
    .unwrap();
    let path = dir.path().join("cloud.xyz");
    write_cloud(&path, &cloud).unwrap();
    let back = read_cloud(&path).unwrap();
    assert_eq!(back, cloud);

    let three = dir.path().join("three.xyz");
    std::fs::write(&three, "0 0 0\n1 1 1\n2 2 2\n").unwrap();
    assert_eq!(read_cloud(&three).unwrap().len(), 3);

    let bad = dir.path().join("bad.xyz");
    std::fs::write(&bad, "0 0 zero\n").unwrap();
    let err = read_cloud(&bad).unwrap_err();
    assert!(err.to_string().contains("line 1"), "{err}");
}

#[test]
fn ply_round_trip_and_count_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = PointCloud::new(vec![
        [0.125, -3.5, 1e-9],
        [1.0 / 3.0, 2.0f64.sqrt(), -0.75],
    ])
    .unwrap();
    let path = dir.path().join("cloud.ply");
    write_cloud(&path, &cloud).unwrap();
    let back = read_cloud(&path).unwrap();
    assert_eq!(back, cloud);

    let mismatched = dir.path().join("mismatch.ply");
    std::fs::write(
        &mismatched,
        "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 1 1\n",
    )
    .unwrap();
    assert!(matches!(
        read_cloud(&mismatched),
        Err(DataError::VertexCount { declared: 3, actual: 2 })
    ));

    let unknown = dir.path().join("cloud.obj");
    std::fs::write(&unknown, "v 0 0 0\n").unwrap();
    assert!(matches!(
        read_cloud(&unknown),
        Err(DataError::UnknownFormat(_))
    ));
}

#[test]
fn dataset_save_and_load_round_trip() {
    let cfg = DatasetConfig {
        classes: 3,
        clouds_per_class: 4,
        points: 16,
        jitter_sigma: 0.01,
        scale_range: (0.9, 1.1),
        split_fractions: (0.5, 0.0, 0.5),
        seed: 21,
    };
    let ds = Dataset::generate(cfg.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let loaded = Dataset::load(&dir.path().join("manifest.csv"), cfg).unwrap();
    assert_eq!(loaded.items.len(), ds.items.len());
    for (a, b) in loaded.items.iter().zip(&ds.items) {
        assert_eq!(a.class_id, b.class_id);
        assert_eq!(a.split, b.split);
        assert_eq!(a.cloud, b.cloud);
    }
}
