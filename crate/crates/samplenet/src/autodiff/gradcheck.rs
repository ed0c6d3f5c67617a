//! Central finite-difference gradient checking.
//!
//! The checker runs one backward pass for the analytic gradients, then
//! perturbs each leaf element by ±h and re-runs the forward tape with
//! [`Graph::recompute`]. It never consults the backward rules to produce
//! the numeric side, so it is an independent oracle for them.

use super::{Graph, Result, TensorId};

/// Default step for central differences in f64.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error with a unit floor: `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs())
}

/// Compare analytic gradients of `root` w.r.t. each listed leaf against
/// central finite differences. Returns the worst relative error seen.
///
/// The graph is consumed (one backward pass) but remains usable for
/// forward recomputation afterwards.
pub fn check(g: &mut Graph, root: TensorId, leaves: &[TensorId], step: f64) -> Result<f64> {
    g.backward(root)?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|&id| g.grad(id).map(|s| s.to_vec()).unwrap_or_default())
        .collect();

    let mut worst = 0.0f64;
    for (leaf_idx, &leaf) in leaves.iter().enumerate() {
        let base = g.value(leaf).to_vec();
        let mut probe = base.clone();
        for i in 0..base.len() {
            probe[i] = base[i] + step;
            g.set_leaf_data(leaf, &probe)?;
            g.recompute()?;
            let plus = g.scalar_value(root)?;

            probe[i] = base[i] - step;
            g.set_leaf_data(leaf, &probe)?;
            g.recompute()?;
            let minus = g.scalar_value(root)?;

            probe[i] = base[i];
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[leaf_idx].get(i).copied().unwrap_or(0.0);
            worst = worst.max(relative_error(a, numeric));
        }
        g.set_leaf_data(leaf, &base)?;
    }
    g.recompute()?;
    Ok(worst)
}
