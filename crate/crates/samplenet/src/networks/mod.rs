//! The sampler network, desk-scale task networks, composite losses,
//! rotation utilities, and compute/memory accounting.

mod layers;
pub mod losses;
pub mod macs;
mod rotation;
mod sampler;
mod tasks;

pub use losses::{
    progressive_total_loss_graph, registration_loss_graph, rotate_points_graph,
    sampler_total_loss_graph, simplification_loss_graph, task_loss_graph, TaskTarget,
};
pub use macs::{mac_memory_report, MacReport, NetworkArch};
pub use rotation::{rotation_error_deg, Rotation};
pub use sampler::{SamplerConfig, SamplerForward, SamplerModel, TEMPERATURE_PARAM};
pub use tasks::{
    quaternion_to_matrices, softmax_cross_entropy, AutoencoderConfig, AutoencoderForward,
    AutoencoderModel, ClassifierConfig, ClassifierForward, ClassifierModel, RegistrationConfig,
    RegistrationForward, RegistrationModel, TaskKind, TaskModel, TaskNet,
};

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::Error),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Projection(#[from] crate::projection::ProjectionError),
    #[error("expected a cloud of {expected} points, got {actual}")]
    InputSize { expected: usize, actual: usize },
    #[error("source has {source_len} points but template has {template_len}")]
    PairSize { source_len: usize, template_len: usize },
    #[error("quaternion norm {norm} too small to normalize")]
    DegenerateQuaternion { norm: f64 },
    #[error("bad network configuration: {0}")]
    BadConfig(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, NetworkError>;
