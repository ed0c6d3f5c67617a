//! Soft projection of a simplified point set onto its input cloud.
//!
//! Each query point gets the indices of its `k` nearest input points, and a
//! weight per neighbor from a softmax over negative squared distances
//! scaled by a temperature `t`:
//!
//! ```text
//! w_i = exp(-d_i^2 / t^2) / sum_j exp(-d_j^2 / t^2)
//! ```
//!
//! The projected point is the weighted average of its neighbors, so it lies
//! in their convex hull. As `t` drops toward zero the weights collapse onto
//! the nearest neighbor, and the soft operation converges to the hard
//! selection used at inference: take the argmax-weight neighbor per query,
//! deduplicate, and complete to `m` points with farthest point sampling.
//!
//! Neighbor selection always runs on detached coordinates; only distance
//! values and the weighted average are differentiable. Gradients flow to
//! the query coordinates and to `t`.

use crate::autodiff::{Graph, Result as AdResult, TensorId};
use crate::geometry::{fps_complete, GeometryError, PointCloud, SpatialIndex};

#[derive(Debug, thiserror::Error)]
pub enum ProjectionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::Error),
    #[error("temperature must be positive, got {value}")]
    NonPositiveTemperature { value: f64 },
    #[error("epoch {epoch} out of range for {total} total epochs")]
    EpochOutOfRange { epoch: usize, total: usize },
    #[error("unknown temperature profile {name:?}")]
    UnknownProfile { name: String },
}

pub type Result<T> = std::result::Result<T, ProjectionError>;

/// Per-query bookkeeping of one soft projection: neighbor indices into the
/// input cloud, their Euclidean distances, the softmax weights, and the
/// temperature that produced them. Every query has the same `k`.
#[derive(Clone, Debug)]
pub struct ProjectionState {
    pub neighbor_indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl ProjectionState {
    pub fn num_queries(&self) -> usize {
        self.neighbor_indices.len()
    }

    pub fn k(&self) -> usize {
        self.neighbor_indices.first().map_or(0, Vec::len)
    }

    /// Mean weight per neighbor rank (rank 0 = nearest).
    pub fn mean_weight_by_rank(&self) -> Vec<f64> {
        let k = self.k();
        let mut out = vec![0.0; k];
        for row in &self.weights {
            for (j, w) in row.iter().enumerate() {
                out[j] += w;
            }
        }
        let q = self.num_queries() as f64;
        out.iter_mut().for_each(|w| *w /= q);
        out
    }
}

/// Softmax weights over negative squared distances, one row per query.
/// `distances` are unsquared Euclidean norms. Stabilized per query by
/// subtracting the maximal exponent before exponentiation.
pub fn projection_weights(distances: &[Vec<f64>], t: f64) -> Result<Vec<Vec<f64>>> {
    if t <= 0.0 {
        return Err(ProjectionError::NonPositiveTemperature { value: t });
    }
    let t2 = t * t;
    let mut out = Vec::with_capacity(distances.len());
    for row in distances {
        let min_d2 = row.iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
        let mut weights: Vec<f64> = row.iter().map(|d| (-(d * d - min_d2) / t2).exp()).collect();
        let denom: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= denom);
        out.push(weights);
    }
    Ok(out)
}

fn neighborhoods(
    index: &SpatialIndex,
    queries: &[[f64; 3]],
    k: usize,
) -> Result<(Vec<Vec<usize>>, Vec<Vec<f64>>)> {
    let mut idx = Vec::with_capacity(queries.len());
    let mut dist = Vec::with_capacity(queries.len());
    for &q in queries {
        let nn = index.knn(q, k)?;
        idx.push(nn.iter().map(|&(i, _)| i).collect());
        dist.push(nn.iter().map(|&(_, d)| d).collect());
    }
    Ok((idx, dist))
}

/// Plain soft projection: each query in `q` becomes the weighted average of
/// its `k` nearest neighbors in `p`.
pub fn soft_project(
    p: &PointCloud,
    index: &SpatialIndex,
    q: &PointCloud,
    k: usize,
    t: f64,
) -> Result<(PointCloud, ProjectionState)> {
    let (neighbor_indices, distances) = neighborhoods(index, q.points(), k)?;
    let weights = projection_weights(&distances, t)?;
    let mut projected = Vec::with_capacity(q.len());
    for (ni, wi) in neighbor_indices.iter().zip(&weights) {
        let mut r = [0.0; 3];
        for (&i, &w) in ni.iter().zip(wi) {
            let pt = p.point(i);
            for a in 0..3 {
                r[a] += w * pt[a];
            }
        }
        projected.push(r);
    }
    let state = ProjectionState {
        neighbor_indices,
        distances,
        weights,
        temperature: t,
    };
    Ok((PointCloud::new(projected)?, state))
}

/// In-graph soft projection of the `[m, 3]` tensor `q_id` onto `p`.
///
/// Neighborhoods come from the current (detached) values of `q_id`; the
/// squared distances, weights, and weighted average are then rebuilt from
/// graph ops so gradients reach the query coordinates and the temperature.
pub struct SoftProjection {
    /// `[m, 3]` projected points.
    pub projected: TensorId,
    /// `[m, k]` weights, rows sorted by neighbor distance.
    pub weights: TensorId,
    pub state: ProjectionState,
}

pub fn soft_project_graph(
    g: &mut Graph,
    p: &PointCloud,
    index: &SpatialIndex,
    q_id: TensorId,
    k: usize,
    t_id: TensorId,
) -> Result<SoftProjection> {
    let m = g.shape(q_id)[0];
    let queries: Vec<[f64; 3]> = g
        .value(q_id)
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    let (neighbor_indices, distances) = neighborhoods(index, &queries, k)?;
    let t_value = g.value(t_id)[0];
    if t_value <= 0.0 {
        return Err(ProjectionError::NonPositiveTemperature { value: t_value });
    }

    let flat_nbr: Vec<usize> = neighbor_indices.iter().flatten().copied().collect();
    let build = |g: &mut Graph| -> AdResult<(TensorId, TensorId)> {
        // squared distances [m, k], differentiable w.r.t. q
        let p_rows = p.constant(g);
        let q_rep: Vec<usize> = (0..m).flat_map(|i| std::iter::repeat(i).take(k)).collect();
        let qe = g.gather_rows(q_id, &q_rep)?;
        let pn = g.gather_rows(p_rows, &flat_nbr)?;
        let diff = g.sub(qe, pn)?;
        let sq = g.square(diff)?;
        let ones3 = g.constant(vec![3], vec![1.0; 3])?;
        let d2_flat = g.matmul(sq, ones3)?;
        let d2 = g.reshape(d2_flat, vec![m, k])?;
        let weights = g.softmax_neg_sq_dist(d2, t_id)?;

        // weighted average per coordinate: r_c = sum_j w_j * p_cj
        let ones_k = g.constant(vec![k], vec![1.0; k])?;
        let mut coords = Vec::with_capacity(3);
        for axis in 0..3 {
            let column: Vec<f64> = p.points().iter().map(|pt| pt[axis]).collect();
            let col_const = g.constant(vec![p.len()], column)?;
            let nbr_coord_flat = g.gather_rows(col_const, &flat_nbr)?;
            let nbr_coord = g.reshape(nbr_coord_flat, vec![m, k])?;
            let weighted = g.mul(weights, nbr_coord)?;
            let summed = g.matmul(weighted, ones_k)?;
            coords.push(g.reshape(summed, vec![m, 1])?);
        }
        let projected = g.concat(&coords, 1)?;
        Ok((projected, weights))
    };
    let (projected, weights_id) = build(g)?;

    let weights: Vec<Vec<f64>> = g
        .value(weights_id)
        .chunks_exact(k)
        .map(<[f64]>::to_vec)
        .collect();
    Ok(SoftProjection {
        projected,
        weights: weights_id,
        state: ProjectionState {
            neighbor_indices,
            distances,
            weights,
            temperature: t_value,
        },
    })
}

/// The regularizer that pulls the temperature toward zero: `t^2`.
pub fn projection_loss(g: &mut Graph, t_id: TensorId) -> AdResult<TensorId> {
    g.square(t_id)
}

/// Inference-time sampling: per query take the argmax-weight neighbor
/// (ties to the lowest point index), deduplicate preserving first
/// occurrence, and complete to `m` distinct indices with farthest point
/// sampling seeded by the already-selected set. The result is always an
/// exact subset of `p`.
pub fn hard_sample(
    p: &PointCloud,
    state: &ProjectionState,
    m: usize,
) -> Result<(PointCloud, Vec<usize>)> {
    if m == 0 || m > p.len() {
        return Err(GeometryError::SampleSize { m, n: p.len() }.into());
    }
    let mut selected = Vec::with_capacity(m);
    for (ni, wi) in state.neighbor_indices.iter().zip(&state.weights) {
        let mut best_idx = ni[0];
        let mut best_w = wi[0];
        for (&i, &w) in ni.iter().zip(wi).skip(1) {
            if w > best_w || (w == best_w && i < best_idx) {
                best_w = w;
                best_idx = i;
            }
        }
        if !selected.contains(&best_idx) {
            selected.push(best_idx);
        }
    }
    selected.truncate(m);
    let indices = if selected.len() < m {
        fps_complete(p, &selected, m)?
    } else {
        selected
    };
    Ok((p.subset(&indices)?, indices))
}

/// How the squared temperature evolves over training.
#[derive(Clone, Debug, PartialEq)]
pub enum TemperatureProfile {
    /// `t` is a trainable parameter, clipped at `floor` after each update.
    Learned { floor: f64 },
    /// `t^2 = 1` for the whole run.
    Constant,
    /// `t^2 = max(t0_sq * (1 - epoch / decay_epochs), floor^2)`.
    LinearRectified {
        t0_sq: f64,
        floor: f64,
        decay_epochs: usize,
    },
    /// `t^2 = max(t0_sq * exp(-rate * epoch), floor^2)`.
    Exponential { t0_sq: f64, floor: f64, rate: f64 },
}

/// Scheduled squared temperature for an epoch, or the marker that the
/// temperature is learned by the optimizer instead.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleValue {
    Learned { floor: f64 },
    Fixed(f64),
}

pub fn temperature_schedule(
    profile: &TemperatureProfile,
    epoch: usize,
    total_epochs: usize,
) -> Result<ScheduleValue> {
    if epoch >= total_epochs {
        return Err(ProjectionError::EpochOutOfRange {
            epoch,
            total: total_epochs,
        });
    }
    Ok(match profile {
        TemperatureProfile::Learned { floor } => ScheduleValue::Learned { floor: *floor },
        TemperatureProfile::Constant => ScheduleValue::Fixed(1.0),
        TemperatureProfile::LinearRectified {
            t0_sq,
            floor,
            decay_epochs,
        } => {
            let frac = 1.0 - epoch as f64 / (*decay_epochs).max(1) as f64;
            ScheduleValue::Fixed((t0_sq * frac).max(floor * floor))
        }
        TemperatureProfile::Exponential { t0_sq, floor, rate } => {
            ScheduleValue::Fixed((t0_sq * (-rate * epoch as f64).exp()).max(floor * floor))
        }
    })
}

const WEIGHT_LOG_GUARD: f64 = 1e-12;

/// Mean over queries of `-log(w_nearest)`. The nearest neighbor is row
/// position 0 because neighbor lists are sorted by distance. Weights are
/// clamped at 1e-12 before the log.
pub fn weight_cross_entropy_graph(g: &mut Graph, weights: TensorId) -> AdResult<TensorId> {
    let shape = g.shape(weights).to_vec();
    let (m, k) = (shape[0], shape[1]);
    let flat = g.reshape(weights, vec![m * k])?;
    let first: Vec<usize> = (0..m).map(|i| i * k).collect();
    let nearest = g.gather_rows(flat, &first)?;
    let clamped = g.clamp_min(nearest, WEIGHT_LOG_GUARD)?;
    let logs = g.log(clamped)?;
    let mean = g.mean(logs)?;
    g.scale(mean, -1.0)
}

/// Mean over queries of the weight entropy `-sum_i w_i log w_i`, with the
/// same clamp as the cross-entropy loss.
pub fn weight_entropy_graph(g: &mut Graph, weights: TensorId) -> AdResult<TensorId> {
    let m = g.shape(weights)[0];
    let clamped = g.clamp_min(weights, WEIGHT_LOG_GUARD)?;
    let logs = g.log(clamped)?;
    let plogp = g.mul(weights, logs)?;
    let total = g.sum(plogp)?;
    g.scale(total, -1.0 / m as f64)
}

/// Plain counterpart of [`weight_cross_entropy_graph`] for reporting.
pub fn weight_cross_entropy(state: &ProjectionState) -> f64 {
    let m = state.num_queries() as f64;
    state
        .weights
        .iter()
        .map(|row| -row[0].max(WEIGHT_LOG_GUARD).ln())
        .sum::<f64>()
        / m
}

/// Plain counterpart of [`weight_entropy_graph`] for reporting.
pub fn weight_entropy(state: &ProjectionState) -> f64 {
    let m = state.num_queries() as f64;
    state
        .weights
        .iter()
        .map(|row| {
            -row.iter()
                .map(|&w| w * w.max(WEIGHT_LOG_GUARD).ln())
                .sum::<f64>()
        })
        .sum::<f64>()
        / m
}

#[cfg(test)]
#[path = "projection_tests.rs"]
mod tests;
