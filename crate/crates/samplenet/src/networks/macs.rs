//! Multiply-accumulate and parameter accounting.
//!
//! An architecture is a flat list of layers: per-point convolutions scale
//! with the number of processed points, fully connected layers are fixed,
//! and point transforms (applying a learned `d x d` matrix to every point)
//! scale with points but carry no parameters of their own.
//!
//! Chaining a sampler in front of a task network trades computation for a
//! little memory:
//!
//! ```text
//! CR = 100 * (1 - (C_sampler(m) + C_task(m)) / C_task(n))
//! MI = 100 * (M_sampler + M_task) / M_task
//! ```

#[derive(Clone, Copy, Debug)]
pub enum ArchLayer {
    /// Shared MLP applied to every point: `points * input * output` MACs.
    PerPointConv { input: usize, output: usize },
    /// Dense layer on a pooled vector: `input * output` MACs.
    FullyConnected { input: usize, output: usize },
    /// Multiplying every point by a learned `dim x dim` matrix.
    PointTransform { dim: usize },
}

#[derive(Clone, Debug)]
pub struct NetworkArch {
    pub name: String,
    pub layers: Vec<ArchLayer>,
}

impl NetworkArch {
    pub fn new(name: impl Into<String>, layers: Vec<ArchLayer>) -> Self {
        NetworkArch {
            name: name.into(),
            layers,
        }
    }

    /// MACs for one forward pass over `points` input points.
    pub fn macs(&self, points: usize) -> u64 {
        self.layers
            .iter()
            .map(|l| match *l {
                ArchLayer::PerPointConv { input, output } => {
                    (points * input * output) as u64
                }
                ArchLayer::FullyConnected { input, output } => (input * output) as u64,
                ArchLayer::PointTransform { dim } => (points * dim * dim) as u64,
            })
            .sum()
    }

    /// Learnable parameter count (weights plus biases).
    pub fn param_count(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| match *l {
                ArchLayer::PerPointConv { input, output }
                | ArchLayer::FullyConnected { input, output } => (input * output + output) as u64,
                ArchLayer::PointTransform { .. } => 0,
            })
            .sum()
    }
}

fn convs(dims: &[usize]) -> impl Iterator<Item = ArchLayer> + '_ {
    dims.windows(2).map(|w| ArchLayer::PerPointConv {
        input: w[0],
        output: w[1],
    })
}

fn fcs(dims: &[usize]) -> impl Iterator<Item = ArchLayer> + '_ {
    dims.windows(2).map(|w| ArchLayer::FullyConnected {
        input: w[0],
        output: w[1],
    })
}

/// The full-scale pooled classifier with both learned point transforms,
/// conv widths (64, 64, 64, 128, 1024) and head (512, 256, classes).
pub fn paper_task_arch() -> NetworkArch {
    let mut layers = Vec::new();
    // input transform predictor and application
    layers.extend(convs(&[3, 64, 128, 1024]));
    layers.extend(fcs(&[1024, 512, 256, 9]));
    layers.push(ArchLayer::PointTransform { dim: 3 });
    layers.extend(convs(&[3, 64, 64]));
    // feature transform predictor and application
    layers.extend(convs(&[64, 64, 128, 1024]));
    layers.extend(fcs(&[1024, 512, 256, 4096]));
    layers.push(ArchLayer::PointTransform { dim: 64 });
    layers.extend(convs(&[64, 64, 128, 1024]));
    layers.extend(fcs(&[1024, 512, 256, 40]));
    NetworkArch::new("task-full", layers)
}

/// The full-scale sampler: conv (64, 64, 64, 128, 128), head
/// (256, 256, 256, m*3).
pub fn paper_sampler_arch(m: usize) -> NetworkArch {
    let mut layers = Vec::new();
    layers.extend(convs(&[3, 64, 64, 64, 128, 128]));
    layers.extend(fcs(&[128, 256, 256, 256, m * 3]));
    NetworkArch::new(format!("sampler-full-m{m}"), layers)
}

/// Arch description of a desk-scale pooled classifier.
pub fn classifier_arch(conv_filters: &[usize], fc_hidden: &[usize], classes: usize) -> NetworkArch {
    let mut conv_dims = vec![3];
    conv_dims.extend_from_slice(conv_filters);
    let mut fc_dims = vec![*conv_filters.last().unwrap()];
    fc_dims.extend_from_slice(fc_hidden);
    fc_dims.push(classes);
    let mut layers = Vec::new();
    layers.extend(convs(&conv_dims));
    layers.extend(fcs(&fc_dims));
    NetworkArch::new("task-desk", layers)
}

/// Arch description of a desk-scale sampler.
pub fn sampler_arch(conv_filters: &[usize], fc_hidden: &[usize], m: usize) -> NetworkArch {
    let mut conv_dims = vec![3];
    conv_dims.extend_from_slice(conv_filters);
    let mut fc_dims = vec![*conv_filters.last().unwrap()];
    fc_dims.extend_from_slice(fc_hidden);
    fc_dims.push(m * 3);
    let mut layers = Vec::new();
    layers.extend(convs(&conv_dims));
    layers.extend(fcs(&fc_dims));
    NetworkArch::new(format!("sampler-desk-m{m}"), layers)
}

#[derive(Clone, Debug)]
pub struct MacReport {
    pub sample_size: usize,
    pub sampler_macs: u64,
    pub task_macs_sampled: u64,
    pub task_macs_full: u64,
    pub sampler_params: u64,
    pub task_params: u64,
    /// Computation reduction percent.
    pub cr: f64,
    /// Memory increase percent.
    pub mi: f64,
}

/// Account for running `sampler` on `n` points and `task` on its `m`
/// outputs, against running `task` on all `n` points directly.
pub fn mac_memory_report(
    sampler: &NetworkArch,
    task: &NetworkArch,
    n: usize,
    m: usize,
) -> MacReport {
    let sampler_macs = sampler.macs(n);
    let task_macs_sampled = task.macs(m);
    let task_macs_full = task.macs(n);
    let sampler_params = sampler.param_count();
    let task_params = task.param_count();
    let cr = 100.0
        * (1.0 - (sampler_macs + task_macs_sampled) as f64 / task_macs_full as f64);
    let mi = 100.0 * (sampler_params + task_params) as f64 / task_params as f64;
    MacReport {
        sample_size: m,
        sampler_macs,
        task_macs_sampled,
        task_macs_full,
        sampler_params,
        task_params,
        cr,
        mi,
    }
}

/// A sampler that costs nothing (the `m = n` identity bound).
pub fn zero_cost_sampler() -> NetworkArch {
    NetworkArch::new("sampler-zero", vec![])
}
