//! Learned, task-aware point cloud sampling.
//!
//! A sampler network simplifies an input cloud to a small point set, softly
//! projects each output point onto its nearest neighbors in the input with
//! temperature-scaled softmax weights, and is trained end to end against a
//! frozen task network (classifier, autoencoder, or registration head). At
//! inference the soft projection is replaced by hard nearest-weight
//! selection, deduplicated and completed with farthest point sampling.
//!
//! Crate layout:
//!
//! - [`autodiff`] — dense f64 tensors with reverse-mode differentiation,
//!   Adam, and checkpoint I/O.
//! - [`geometry`] — point clouds, exact k-NN with a kd-tree, farthest point
//!   sampling, and nearest-neighbor losses (plain and differentiable).
//! - [`projection`] — soft projection, projection weights, temperature
//!   schedules, hard sampling, and the weight regularization losses.
//! - [`networks`] — the sampler network, desk-scale task networks, rotation
//!   utilities, composite losses, and compute/memory accounting.
//! - [`data`] — synthetic shape generation, normalization, registration
//!   pairs, and XYZ/PLY I/O.
//! - [`harness`] — experiment configuration, training/evaluation drivers,
//!   ablations, and CSV reports behind the CLI.

pub mod autodiff;
pub mod data;
pub mod geometry;
pub mod harness;
pub mod networks;
pub mod projection;
