use super::gradcheck;
use super::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_leaf(g: &mut Graph, rng: &mut ChaCha8Rng, shape: &[usize]) -> super::TensorId {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    g.leaf(Tensor::new(shape.to_vec(), data, true).unwrap())
}

#[test]
fn relu_definition() {
    let mut g = Graph::new();
    let x = g.constant(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
    let y = g.relu(x).unwrap();
    assert_eq!(g.value(y), &[0.0, 0.0, 2.0]);
}

#[test]
fn max_over_axis_columnwise() {
    let mut g = Graph::new();
    let x = g
        .constant(vec![3, 2], vec![1.0, 5.0, 7.0, 2.0, 3.0, 3.0])
        .unwrap();
    let y = g.max_over_axis(x, 0).unwrap();
    assert_eq!(g.value(y), &[7.0, 5.0]);
}

#[test]
fn matmul_identity() {
    let mut g = Graph::new();
    let eye = g
        .constant(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
        .unwrap();
    let v = g.constant(vec![3], vec![0.3, -1.7, 2.5]).unwrap();
    let y = g.matmul(eye, v).unwrap();
    assert_eq!(g.value(y), &[0.3, -1.7, 2.5]);
}

#[test]
fn matmul_shape_error_names_op() {
    let mut g = Graph::new();
    let a = g.constant(vec![2, 3], vec![0.0; 6]).unwrap();
    let b = g.constant(vec![2, 2], vec![0.0; 4]).unwrap();
    let e = g.matmul(a, b).unwrap_err();
    let msg = e.to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
}

#[test]
fn backward_square_scalar() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(3.0, true));
    let y = g.square(x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[6.0]);
}

#[test]
fn softmax_row_sums_have_zero_gradient() {
    // sum of a softmax row is identically 1, so every input gradient is 0.
    let mut g = Graph::new();
    let d2 = g
        .leaf(Tensor::new(vec![1, 4], vec![0.3, 1.9, 0.1, 0.7], true).unwrap());
    let t = g.leaf(Tensor::scalar(0.8, true));
    let w = g.softmax_neg_sq_dist(d2, t).unwrap();
    let s = g.sum(w).unwrap();
    assert!((g.scalar_value(s).unwrap() - 1.0).abs() < 1e-12);
    g.backward(s).unwrap();
    for &v in g.grad(d2).unwrap() {
        assert!(v.abs() < 1e-12, "{v}");
    }
    assert!(g.grad(t).unwrap()[0].abs() < 1e-12);
}

#[test]
fn backward_requires_scalar_root() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(vec![2], vec![1.0, 2.0], true).unwrap());
    let y = g.square(x).unwrap();
    assert!(matches!(
        g.backward(y),
        Err(super::Error::NonScalarRoot { .. })
    ));
}

#[test]
fn second_backward_errors() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(2.0, true));
    let y = g.square(x).unwrap();
    g.backward(y).unwrap();
    assert!(matches!(g.backward(y), Err(super::Error::GraphConsumed)));
}

#[test]
fn recompute_matches_fresh_graph() {
    // Mutating a leaf and recomputing must equal building a new graph.
    let mut r = rng(5);
    let build = |vals: &[f64]| -> Vec<f64> {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2, 2], vals.to_vec(), true).unwrap());
        let w = g
            .constant(vec![2, 2], vec![0.5, -1.0, 2.0, 0.25])
            .unwrap();
        let y = g.matmul(x, w).unwrap();
        let z = g.relu(y).unwrap();
        let m = g.mean(z).unwrap();
        g.value(m).to_vec()
    };
    let first: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
    let second: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();

    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(vec![2, 2], first.clone(), true).unwrap());
    let w = g
        .constant(vec![2, 2], vec![0.5, -1.0, 2.0, 0.25])
        .unwrap();
    let y = g.matmul(x, w).unwrap();
    let z = g.relu(y).unwrap();
    let m = g.mean(z).unwrap();
    assert_eq!(g.value(m), build(&first).as_slice());

    g.set_leaf_data(x, &second).unwrap();
    g.recompute().unwrap();
    assert_eq!(g.value(m), build(&second).as_slice());
}

#[test]
fn gradients_reach_all_leaves_through_shared_nodes() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(vec![3], vec![0.5, -0.25, 1.5], true).unwrap());
    let sq = g.square(x).unwrap();
    let doubled = g.scale(x, 2.0).unwrap();
    let both = g.add(sq, doubled).unwrap(); // x^2 + 2x, x used twice
    let s = g.sum(both).unwrap();
    g.backward(s).unwrap();
    let grad = g.grad(x).unwrap();
    for (i, &xi) in [0.5, -0.25, 1.5].iter().enumerate() {
        assert!((grad[i] - (2.0 * xi + 2.0)).abs() < 1e-12);
    }
}

/// Finite-difference sweep per differentiable op on randomized inputs.
#[test]
fn finite_differences_per_op() {
    let mut r = rng(42);
    for trial in 0..20 {
        let mut g = Graph::new();
        let a = random_leaf(&mut g, &mut r, &[3, 4]);
        let b = random_leaf(&mut g, &mut r, &[3, 4]);
        let w = random_leaf(&mut g, &mut r, &[4, 2]);
        let row = random_leaf(&mut g, &mut r, &[4]);
        let col = random_leaf(&mut g, &mut r, &[3, 1]);

        let sum = g.add(a, b).unwrap();
        let diff = g.sub(sum, b).unwrap();
        let prod = g.mul(diff, a).unwrap();
        let withrow = g.add(prod, row).unwrap();
        let withcol = g.mul(withrow, col).unwrap();
        let mm = g.matmul(withcol, w).unwrap();
        // Keep magnitudes tame for exp, and positive for log/sqrt.
        let damped = g.scale(mm, 0.1).unwrap();
        let e = g.exp(damped).unwrap();
        let shifted = g.add_const(e, 0.5).unwrap();
        let lg = g.log(shifted).unwrap();
        let sq = g.sqrt(shifted).unwrap();
        let joined = g.concat(&[lg, sq], 1).unwrap();
        // Offset keeps every entry strictly positive, so the finite
        // difference probe never straddles the relu kink.
        let lifted = g.add_const(joined, 0.75).unwrap();
        let rl = g.relu(lifted).unwrap();
        let picked = g.gather_rows(rl, &[2, 0, 1, 2]).unwrap();
        let squared = g.square(picked).unwrap();
        let maxed = g.max_over_axis(squared, 1).unwrap();
        let mined = g.min_over_axis(squared, 0).unwrap();
        let m1 = g.mean(maxed).unwrap();
        let m2 = g.sum(mined).unwrap();
        let total = g.add(m1, m2).unwrap();

        let err = gradcheck::check(
            &mut g,
            total,
            &[a, b, w, row, col],
            gradcheck::DEFAULT_STEP,
        )
        .unwrap();
        assert!(err < 1e-5, "trial {trial}: rel err {err}");
    }
}

#[test]
fn finite_differences_softmax_and_affine() {
    let mut r = rng(7);
    for trial in 0..20 {
        let mut g = Graph::new();
        let d2raw = random_leaf(&mut g, &mut r, &[5, 3]);
        let d2 = g.square(d2raw).unwrap(); // keep distances nonnegative
        let t = g.leaf(Tensor::scalar(r.random_range(0.4..1.5), true));
        let w = g.softmax_neg_sq_dist(d2, t).unwrap();

        let x = random_leaf(&mut g, &mut r, &[5, 3]);
        let scale = random_leaf(&mut g, &mut r, &[3]);
        let shift = random_leaf(&mut g, &mut r, &[3]);
        let aff = g.feature_affine(x, scale, shift).unwrap();
        let mixed = g.mul(w, aff).unwrap();
        let flat = g.reshape(mixed, vec![15]).unwrap();
        let picked = g.gather_rows(flat, &[0, 7, 14, 7]).unwrap();
        let loss0 = g.sum(picked).unwrap();
        let wm = g.mean(w).unwrap();
        let loss = g.add(loss0, wm).unwrap();

        let err = gradcheck::check(
            &mut g,
            loss,
            &[d2raw, t, x, scale, shift],
            gradcheck::DEFAULT_STEP,
        )
        .unwrap();
        assert!(err < 1e-5, "trial {trial}: rel err {err}");
    }
}

#[test]
fn concat_axis0_and_gather_1d() {
    let mut g = Graph::new();
    let a = g.constant(vec![2], vec![1.0, 2.0]).unwrap();
    let b = g.constant(vec![3], vec![3.0, 4.0, 5.0]).unwrap();
    let c = g.concat(&[a, b], 0).unwrap();
    assert_eq!(g.value(c), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    let picked = g.gather_rows(c, &[4, 0]).unwrap();
    assert_eq!(g.value(picked), &[5.0, 1.0]);
    let bad = g.gather_rows(c, &[5]);
    assert!(bad.is_err());
}

#[test]
fn clamp_min_blocks_gradient_when_engaged() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(vec![2], vec![0.5, -0.5], true).unwrap());
    let c = g.clamp_min(x, 0.0).unwrap();
    let s = g.sum(c).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0]);
}

#[test]
fn non_positive_temperature_is_an_error() {
    let mut g = Graph::new();
    let d2 = g.constant(vec![1, 2], vec![0.1, 0.2]).unwrap();
    let t = g.constant_scalar(0.0);
    assert!(matches!(
        g.softmax_neg_sq_dist(d2, t),
        Err(super::Error::NonPositiveTemperature { .. })
    ));
}
