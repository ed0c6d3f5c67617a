use super::*;
use crate::autodiff::{gradcheck, Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    let pts = (0..n)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

// --- independent oracles -------------------------------------------------

/// O(n^2 m) farthest point sampling: recomputes the min distance to the
/// entire selected set from scratch for every candidate at every step.
fn fps_bruteforce(cloud: &PointCloud, m: usize, start: usize) -> Vec<usize> {
    let pts = cloud.points();
    let mut selected = vec![start];
    while selected.len() < m {
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..pts.len() {
            if selected.contains(&i) {
                continue;
            }
            let d = selected
                .iter()
                .map(|&s| sq_dist(pts[i], pts[s]))
                .fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        selected.push(best);
    }
    selected
}

fn knn_bruteforce(cloud: &PointCloud, q: Point, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, sq_dist(q, p)))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
}

fn nn_avg_doubleloop(x: &PointCloud, y: &PointCloud) -> f64 {
    x.points()
        .iter()
        .map(|&p| {
            y.points()
                .iter()
                .map(|&q| sq_dist(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / x.len() as f64
}

fn nn_max_doubleloop(x: &PointCloud, y: &PointCloud) -> f64 {
    x.points()
        .iter()
        .map(|&p| {
            y.points()
                .iter()
                .map(|&q| sq_dist(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

// --- fps -----------------------------------------------------------------

#[test]
fn fps_prefers_the_farther_point() {
    let p = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.1, 0.0, 0.0]]).unwrap();
    assert_eq!(fps(&p, 2, 0).unwrap(), vec![0, 1]);
}

#[test]
fn fps_exhaustion_is_a_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_cloud(&mut rng, 17);
    let mut all = fps(&p, 17, 4).unwrap();
    assert_eq!(all[0], 4);
    all.sort_unstable();
    assert_eq!(all, (0..17).collect::<Vec<_>>());
}

#[test]
fn fps_matches_bruteforce() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(4..=64);
        let m = rng.random_range(1..=n);
        let start = rng.random_range(0..n);
        let p = random_cloud(&mut rng, n);
        assert_eq!(fps(&p, m, start).unwrap(), fps_bruteforce(&p, m, start));
    }
}

#[test]
fn fps_rejects_bad_sizes() {
    let p = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
    assert!(fps(&p, 3, 0).is_err());
    assert!(fps(&p, 0, 0).is_err());
    assert!(fps(&p, 1, 5).is_err());
    assert!(PointCloud::new(vec![]).is_err());
}

#[test]
fn fps_complete_skips_seeded_indices() {
    let p = PointCloud::new(vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ])
    .unwrap();
    let out = fps_complete(&p, &[2, 2], 4).unwrap();
    assert_eq!(out[0], 2);
    let mut sorted = out.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), 4);
}

#[test]
fn fps_coverage_beats_random_subsets() {
    // Max-min distance of the FPS set should beat a random subset of the
    // same size nearly always.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let coverage = |cloud: &PointCloud, idx: &[usize]| -> f64 {
        cloud
            .points()
            .iter()
            .map(|&p| {
                idx.iter()
                    .map(|&i| sq_dist(p, cloud.point(i)))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    let mut wins = 0;
    let trials = 120;
    for _ in 0..trials {
        let cloud = random_cloud(&mut rng, 48);
        let idx = fps(&cloud, 8, 0).unwrap();
        let mut random_idx: Vec<usize> = (0..48).collect();
        for i in 0..8 {
            let j = rng.random_range(i..48);
            random_idx.swap(i, j);
        }
        random_idx.truncate(8);
        // Lower max-min distance = better coverage.
        if coverage(&cloud, &idx) <= coverage(&cloud, &random_idx) {
            wins += 1;
        }
    }
    assert!(
        wins as f64 >= 0.95 * trials as f64,
        "FPS won only {wins}/{trials}"
    );
}

#[test]
fn fps_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = random_cloud(&mut rng, 40);
    assert_eq!(fps(&p, 12, 3).unwrap(), fps(&p, 12, 3).unwrap());
}

// --- knn -----------------------------------------------------------------

#[test]
fn knn_sorted_line() {
    let p = PointCloud::new(vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
    let index = SpatialIndex::build(&p);
    let out = index.knn([0.0, 0.0, 0.0], 2).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].0, 0);
    assert!((out[0].1 - 1.0).abs() < 1e-12);
    assert_eq!(out[1].0, 1);
    assert!((out[1].1 - 2.0).abs() < 1e-12);
}

#[test]
fn knn_exhaustion_returns_all_sorted() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_cloud(&mut rng, 23);
    let index = SpatialIndex::build(&p);
    let q = [0.2, -0.4, 0.1];
    let out = index.knn(q, 23).unwrap();
    assert_eq!(out, knn_bruteforce(&p, q, 23));
    assert!(index.knn(q, 24).is_err());
}

#[test]
fn knn_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..30 {
        let p = random_cloud(&mut rng, 128);
        let index = SpatialIndex::build(&p);
        for _ in 0..8 {
            let q = [
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
            ];
            assert_eq!(index.knn(q, 7).unwrap(), knn_bruteforce(&p, q, 7));
        }
    }
}

#[test]
fn knn_ties_break_to_lowest_index() {
    // Four identical points: the index order decides.
    let p = PointCloud::new(vec![[1.0, 0.0, 0.0]; 4]).unwrap();
    let index = SpatialIndex::build(&p);
    let out = index.knn([0.0, 0.0, 0.0], 3).unwrap();
    assert_eq!(out.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2]);
}

// --- losses ---------------------------------------------------------------

#[test]
fn nn_avg_subset_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y = random_cloud(&mut rng, 20);
    let x = y.subset(&[3, 7, 11]).unwrap();
    assert_eq!(nn_loss_avg(&x, &y).unwrap(), 0.0);
    assert_eq!(nn_loss_max(&x, &y).unwrap(), 0.0);
}

#[test]
fn nn_losses_hand_values() {
    let x = PointCloud::new(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
    let y = PointCloud::new(vec![[0.0, 0.0, 0.0]]).unwrap();
    assert!((nn_loss_avg(&x, &y).unwrap() - 2.0).abs() < 1e-12);
    assert!((nn_loss_max(&x, &y).unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn chamfer_hand_values_and_symmetry() {
    let s = PointCloud::new(vec![[0.0, 0.0, 0.0]]).unwrap();
    let t = PointCloud::new(vec![[1.0, 0.0, 0.0]]).unwrap();
    assert!((chamfer(&s, &t).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(chamfer(&s, &s).unwrap(), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let (na, nb) = (rng.random_range(2..20), rng.random_range(2..20));
        let a = random_cloud(&mut rng, na);
        let b = random_cloud(&mut rng, nb);
        let ab = chamfer(&a, &b).unwrap();
        let ba = chamfer(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab >= 0.0);
        let oracle = nn_avg_doubleloop(&a, &b) + nn_avg_doubleloop(&b, &a);
        assert!((ab - oracle).abs() < 1e-9, "{ab} vs {oracle}");
    }
}

#[test]
fn losses_match_double_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let (na, nb) = (rng.random_range(2..40), rng.random_range(2..40));
        let a = random_cloud(&mut rng, na);
        let b = random_cloud(&mut rng, nb);
        assert!((nn_loss_avg(&a, &b).unwrap() - nn_avg_doubleloop(&a, &b)).abs() < 1e-9);
        assert!((nn_loss_max(&a, &b).unwrap() - nn_max_doubleloop(&a, &b)).abs() < 1e-9);
    }
}

#[test]
fn consistency_offset_pair() {
    let s = PointCloud::new(vec![[0.0, 0.0, 0.0], [0.0, 3.0, 0.0]]).unwrap();
    let t = PointCloud::new(vec![[1.0, 0.0, 0.0], [1.0, 3.0, 0.0]]).unwrap();
    // Every point is 1 away from its match in the other set: 1 + 1.
    assert!((sampling_consistency(&s, &t).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(sampling_consistency(&s, &s).unwrap(), 0.0);
}

// --- differentiable versions ----------------------------------------------

fn cloud_leaf(g: &mut Graph, cloud: &PointCloud) -> crate::autodiff::TensorId {
    g.leaf(Tensor::new(vec![cloud.len(), 3], cloud.to_flat(), true).unwrap())
}

#[test]
fn graph_losses_match_plain_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..10 {
        let a = random_cloud(&mut rng, 9);
        let b = random_cloud(&mut rng, 14);
        let mut g = Graph::new();
        let ai = cloud_leaf(&mut g, &a);
        let bi = cloud_leaf(&mut g, &b);
        let avg = nn_loss_avg_graph(&mut g, ai, bi).unwrap();
        let max = nn_loss_max_graph(&mut g, ai, bi).unwrap();
        let cd = chamfer_graph(&mut g, ai, bi).unwrap();
        assert!((g.scalar_value(avg).unwrap() - nn_loss_avg(&a, &b).unwrap()).abs() < 1e-9);
        assert!((g.scalar_value(max).unwrap() - nn_loss_max(&a, &b).unwrap()).abs() < 1e-9);
        assert!((g.scalar_value(cd).unwrap() - chamfer(&a, &b).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn chamfer_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for trial in 0..20 {
        let a = random_cloud(&mut rng, 8);
        let b = random_cloud(&mut rng, 8);
        let mut g = Graph::new();
        let ai = cloud_leaf(&mut g, &a);
        let bi = cloud_leaf(&mut g, &b);
        let cd = chamfer_graph(&mut g, ai, bi).unwrap();
        let err = gradcheck::check(&mut g, cd, &[ai, bi], gradcheck::DEFAULT_STEP).unwrap();
        assert!(err < 1e-5, "trial {trial}: rel err {err}");
    }
}

#[test]
fn nn_loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for trial in 0..20 {
        let (na, nb) = (rng.random_range(8..=16), rng.random_range(8..=16));
        let a = random_cloud(&mut rng, na);
        let b = random_cloud(&mut rng, nb);
        let mut g = Graph::new();
        let ai = cloud_leaf(&mut g, &a);
        let bi = cloud_leaf(&mut g, &b);
        let avg = nn_loss_avg_graph(&mut g, ai, bi).unwrap();
        let max = nn_loss_max_graph(&mut g, ai, bi).unwrap();
        let total = g.add(avg, max).unwrap();
        let err = gradcheck::check(&mut g, total, &[ai, bi], gradcheck::DEFAULT_STEP).unwrap();
        assert!(err < 1e-5, "trial {trial}: rel err {err}");
    }
}
