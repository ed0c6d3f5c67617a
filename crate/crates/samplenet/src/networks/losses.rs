//! Composite training losses for the sampler.
//!
//! The simplification loss keeps the simplified set close to and covering
//! the input; the total sampler loss adds the task loss on the projected
//! set and the squared-temperature regularizer. Progressive training sums
//! the first two terms over nested prefixes of the ordered output.

use crate::autodiff::{Graph, Result as AdResult, TensorId};
use crate::geometry::{nn_loss_avg_graph, nn_loss_max_graph, PointCloud, SpatialIndex};
use crate::projection::{self, SoftProjection};

use super::rotation::Rotation;
use super::sampler::SamplerForward;
use super::tasks::{softmax_cross_entropy, TaskModel, TaskNet};
use super::{NetworkError, Result};

/// `L_a(Q, P) + beta * L_m(Q, P) + (gamma + delta * |Q|) * L_a(P, Q)`.
pub fn simplification_loss_graph(
    g: &mut Graph,
    q: TensorId,
    p: TensorId,
    beta: f64,
    gamma: f64,
    delta: f64,
) -> AdResult<TensorId> {
    let q_count = g.shape(q)[0] as f64;
    let avg_qp = nn_loss_avg_graph(g, q, p)?;
    let max_qp = nn_loss_max_graph(g, q, p)?;
    let avg_pq = nn_loss_avg_graph(g, p, q)?;
    let weighted_max = g.scale(max_qp, beta)?;
    let weighted_cov = g.scale(avg_pq, gamma + delta * q_count)?;
    let partial = g.add(avg_qp, weighted_max)?;
    g.add(partial, weighted_cov)
}

/// `L_task(R) + alpha * L_simplify(Q, P) + lambda * t^2`, with the
/// simplification loss expanded under its own `beta`, `gamma`, `delta`.
#[allow(clippy::too_many_arguments)]
pub fn sampler_total_loss_graph(
    g: &mut Graph,
    task_loss: TensorId,
    q: TensorId,
    p: TensorId,
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    lambda: f64,
    t: TensorId,
) -> AdResult<TensorId> {
    let simplify = simplification_loss_graph(g, q, p, beta, gamma, delta)?;
    let weighted_simplify = g.scale(simplify, alpha)?;
    let proj = projection::projection_loss(g, t)?;
    let weighted_proj = g.scale(proj, lambda)?;
    let partial = g.add(task_loss, weighted_simplify)?;
    g.add(partial, weighted_proj)
}

/// What the task loss is measured against.
pub enum TaskTarget<'a> {
    /// Ground-truth class of the input cloud.
    Class(usize),
    /// Complete cloud the reconstruction should match.
    Reconstruction(&'a PointCloud),
}

/// Task loss of a frozen task network on an in-graph cloud.
pub fn task_loss_graph(
    g: &mut Graph,
    task: &TaskModel,
    input: TensorId,
    target: &TaskTarget,
) -> Result<TensorId> {
    match (&task.net, target) {
        (TaskNet::Classifier(model), TaskTarget::Class(label)) => {
            let fwd = model.forward(g, input, !task.frozen)?;
            Ok(softmax_cross_entropy(g, fwd.logits, *label)?)
        }
        (TaskNet::Autoencoder(model), TaskTarget::Reconstruction(complete)) => {
            let fwd = model.forward(g, input, !task.frozen)?;
            let target_id = complete.constant(g);
            Ok(crate::geometry::chamfer_graph(
                g,
                fwd.reconstruction,
                target_id,
            )?)
        }
        _ => Err(NetworkError::Unsupported(
            "task target does not match the task network".into(),
        )),
    }
}

/// Progressive objective: for every control size `c`, project the first
/// `c` output points and accumulate task and simplification losses, then
/// add the temperature regularizer once.
#[allow(clippy::too_many_arguments)]
pub fn progressive_total_loss_graph(
    g: &mut Graph,
    sampler_fwd: &SamplerForward,
    control_sizes: &[usize],
    p: &PointCloud,
    index: &SpatialIndex,
    k: usize,
    task: &TaskModel,
    target: &TaskTarget,
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    lambda: f64,
) -> Result<TensorId> {
    let n = g.shape(sampler_fwd.simplified)[0];
    let p_id = p.constant(g);
    let mut total: Option<TensorId> = None;
    for &c in control_sizes {
        if c == 0 || c > n {
            return Err(NetworkError::BadConfig(format!(
                "control size {c} out of range for {n} output points"
            )));
        }
        let prefix: Vec<usize> = (0..c).collect();
        let q_c = g.gather_rows(sampler_fwd.simplified, &prefix)?;
        let proj: SoftProjection =
            projection::soft_project_graph(g, p, index, q_c, k, sampler_fwd.temperature)?;
        let task_loss = task_loss_graph(g, task, proj.projected, target)?;
        let simplify = simplification_loss_graph(g, q_c, p_id, beta, gamma, delta)?;
        let weighted = g.scale(simplify, alpha)?;
        let term = g.add(task_loss, weighted)?;
        total = Some(match total {
            Some(acc) => g.add(acc, term)?,
            None => term,
        });
    }
    let base = total.ok_or_else(|| NetworkError::BadConfig("empty control sizes".into()))?;
    let proj_loss = projection::projection_loss(g, sampler_fwd.temperature)?;
    let weighted_proj = g.scale(proj_loss, lambda)?;
    Ok(g.add(base, weighted_proj)?)
}

/// Registration task loss: Chamfer distance between the registered source
/// and the template, plus the Frobenius mismatch `||R_pred^-1 R_gt - I||_F^2`
/// (the inverse of a rotation matrix is its transpose).
pub fn registration_loss_graph(
    g: &mut Graph,
    registered_source: TensorId,
    template: TensorId,
    rotation_t: TensorId,
    gt: &Rotation,
) -> AdResult<TensorId> {
    let cd = crate::geometry::chamfer_graph(g, registered_source, template)?;
    let gt_const = g.constant(vec![3, 3], gt.matrix_flat())?;
    let prod = g.matmul(rotation_t, gt_const)?;
    let eye = g.constant(
        vec![3, 3],
        vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    )?;
    let diff = g.sub(prod, eye)?;
    let sq = g.square(diff)?;
    let frob = g.sum(sq)?;
    g.add(cd, frob)
}

/// Apply an in-graph rotation (given as its transpose) to row-vector
/// points: `registered = points @ R^T`.
pub fn rotate_points_graph(
    g: &mut Graph,
    points: TensorId,
    rotation_t: TensorId,
) -> AdResult<TensorId> {
    g.matmul(points, rotation_t)
}
