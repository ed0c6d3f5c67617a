//! Nearest-neighbor losses, in plain form and as differentiable graph ops.
//!
//! The plain versions query a kd-tree; the double-loop references live in
//! the test suites as independent oracles. The graph versions are built
//! from gather/sub/square/matmul/min/max primitives, so gradients flow to
//! both clouds' coordinates.

use crate::autodiff::{Graph, TensorId};

use super::{PointCloud, Result, SpatialIndex};

/// Mean over `x` of the squared distance to its nearest neighbor in `y`.
pub fn nn_loss_avg(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    let index = SpatialIndex::build(y);
    let mut total = 0.0;
    for &p in x.points() {
        let nn = index.knn(p, 1)?;
        total += nn[0].1 * nn[0].1;
    }
    Ok(total / x.len() as f64)
}

/// Max over `x` of the squared distance to its nearest neighbor in `y`.
pub fn nn_loss_max(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    let index = SpatialIndex::build(y);
    let mut worst = 0.0f64;
    for &p in x.points() {
        let nn = index.knn(p, 1)?;
        worst = worst.max(nn[0].1 * nn[0].1);
    }
    Ok(worst)
}

/// Symmetric Chamfer distance: `nn_loss_avg(s, t) + nn_loss_avg(t, s)`.
pub fn chamfer(s: &PointCloud, t: &PointCloud) -> Result<f64> {
    Ok(nn_loss_avg(s, t)? + nn_loss_avg(t, s)?)
}

/// Chamfer distance between a sampled source set and the ground-truth
/// rotated sampled template. Lower means the sampler picked corresponding
/// points on both clouds.
pub fn sampling_consistency(s_sampled: &PointCloud, t_sampled_gt: &PointCloud) -> Result<f64> {
    chamfer(s_sampled, t_sampled_gt)
}

/// All pairwise squared distances between two in-graph clouds:
/// `x: [a, 3]`, `y: [b, 3]` -> `[a, b]`, via
/// `|x_i|^2 + |y_j|^2 - 2 x_i . y_j`. Differentiable in both. The result
/// is clamped at zero against cancellation for near-coincident points.
pub fn pairwise_sq_dist_graph(
    g: &mut Graph,
    x: TensorId,
    y: TensorId,
) -> crate::autodiff::Result<TensorId> {
    let a = g.shape(x)[0];
    let b = g.shape(y)[0];
    let ones = g.constant(vec![3], vec![1.0; 3])?;
    let x_sq = g.square(x)?;
    let x_norms = g.matmul(x_sq, ones)?; // [a]
    let y_sq = g.square(y)?;
    let y_norms = g.matmul(y_sq, ones)?; // [b]
    let y_t = g.transpose(y)?;
    let cross = g.matmul(x, y_t)?; // [a, b]
    let scaled = g.scale(cross, -2.0)?;
    let with_rows = g.add(scaled, y_norms)?; // broadcast [b] over rows
    let x_col = g.reshape(x_norms, vec![a, 1])?;
    let summed = g.add(with_rows, x_col)?; // broadcast [a, 1] over columns
    g.clamp_min(summed, 0.0)
}

/// Differentiable `nn_loss_avg` over in-graph `[n, 3]` clouds.
pub fn nn_loss_avg_graph(
    g: &mut Graph,
    x: TensorId,
    y: TensorId,
) -> crate::autodiff::Result<TensorId> {
    let d2 = pairwise_sq_dist_graph(g, x, y)?;
    let mins = g.min_over_axis(d2, 1)?;
    g.mean(mins)
}

/// Differentiable `nn_loss_max` over in-graph `[n, 3]` clouds.
pub fn nn_loss_max_graph(
    g: &mut Graph,
    x: TensorId,
    y: TensorId,
) -> crate::autodiff::Result<TensorId> {
    let d2 = pairwise_sq_dist_graph(g, x, y)?;
    let mins = g.min_over_axis(d2, 1)?;
    let n = g.shape(mins)[0];
    let col = g.reshape(mins, vec![n, 1])?;
    g.max_over_axis(col, 0)
}

/// Differentiable symmetric Chamfer distance.
pub fn chamfer_graph(g: &mut Graph, s: TensorId, t: TensorId) -> crate::autodiff::Result<TensorId> {
    let fwd = nn_loss_avg_graph(g, s, t)?;
    let bwd = nn_loss_avg_graph(g, t, s)?;
    g.add(fwd, bwd)
}

/// Differentiable sampling consistency (a Chamfer distance).
pub fn sampling_consistency_graph(
    g: &mut Graph,
    s_sampled: TensorId,
    t_sampled_gt: TensorId,
) -> crate::autodiff::Result<TensorId> {
    chamfer_graph(g, s_sampled, t_sampled_gt)
}
