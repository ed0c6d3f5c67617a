//! Shared parameter layout and forward plumbing for the small networks.
//!
//! Every linear layer is `y = x @ w + b`, optionally followed by a
//! per-feature affine (the normalization-free batch-norm stand-in) and a
//! ReLU. Weights initialize uniform in `±sqrt(6 / (fan_in + fan_out))`,
//! biases and shifts at zero, affine scales at one.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Parameter, Result as AdResult, TensorId};

#[derive(Clone, Copy, Debug)]
pub(crate) struct LinearSpec {
    pub input: usize,
    pub output: usize,
    /// Apply affine + ReLU after the matmul.
    pub activated: bool,
}

/// Build the chain `[in] -> hidden.. -> out` where every layer except the
/// last is activated.
pub(crate) fn chain(input: usize, hidden: &[usize], output: usize) -> Vec<LinearSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input;
    for &width in hidden {
        specs.push(LinearSpec {
            input: prev,
            output: width,
            activated: true,
        });
        prev = width;
    }
    specs.push(LinearSpec {
        input: prev,
        output,
        activated: false,
    });
    specs
}

/// All layers activated (per-point feature extractors before pooling).
pub(crate) fn activated_chain(input: usize, widths: &[usize]) -> Vec<LinearSpec> {
    let mut specs = Vec::with_capacity(widths.len());
    let mut prev = input;
    for &width in widths {
        specs.push(LinearSpec {
            input: prev,
            output: width,
            activated: true,
        });
        prev = width;
    }
    specs
}

pub(crate) fn xavier_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..bound))
        .collect()
}

pub(crate) fn push_layer_params(
    params: &mut Vec<Parameter>,
    prefix: &str,
    spec: LinearSpec,
    rng: &mut ChaCha8Rng,
) {
    params.push(
        Parameter::new(
            format!("{prefix}.w"),
            vec![spec.input, spec.output],
            xavier_uniform(rng, spec.input, spec.output),
        )
        .expect("layer shapes are consistent"),
    );
    params.push(
        Parameter::new(format!("{prefix}.b"), vec![spec.output], vec![0.0; spec.output]).unwrap(),
    );
    if spec.activated {
        params.push(
            Parameter::new(
                format!("{prefix}.scale"),
                vec![spec.output],
                vec![1.0; spec.output],
            )
            .unwrap(),
        );
        params.push(
            Parameter::new(
                format!("{prefix}.shift"),
                vec![spec.output],
                vec![0.0; spec.output],
            )
            .unwrap(),
        );
    }
}

/// Leaf ids of a model's parameters, registered in storage order.
pub(crate) struct Leaves {
    ids: Vec<TensorId>,
    cursor: usize,
}

impl Leaves {
    pub fn register(g: &mut Graph, params: &[Parameter], trainable: bool) -> Self {
        let ids = params
            .iter()
            .map(|p| g.leaf(p.tensor(trainable)))
            .collect();
        Leaves { ids, cursor: 0 }
    }

    /// Re-walk an already-registered prefix (weight sharing).
    pub fn from_ids(ids: Vec<TensorId>) -> Self {
        Leaves { ids, cursor: 0 }
    }

    pub fn next(&mut self) -> TensorId {
        let id = self.ids[self.cursor];
        self.cursor += 1;
        id
    }

    pub fn ids(&self) -> &[TensorId] {
        &self.ids
    }

    pub fn into_ids(self) -> Vec<TensorId> {
        self.ids
    }
}

/// Apply one linear layer to `x: [rows, in]`.
pub(crate) fn apply_layer(
    g: &mut Graph,
    x: TensorId,
    spec: LinearSpec,
    leaves: &mut Leaves,
) -> AdResult<TensorId> {
    let w = leaves.next();
    let b = leaves.next();
    let mut y = g.matmul(x, w)?;
    y = g.add(y, b)?;
    if spec.activated {
        let scale = leaves.next();
        let shift = leaves.next();
        y = g.feature_affine(y, scale, shift)?;
        y = g.relu(y)?;
    }
    Ok(y)
}

pub(crate) fn apply_chain(
    g: &mut Graph,
    mut x: TensorId,
    specs: &[LinearSpec],
    leaves: &mut Leaves,
) -> AdResult<TensorId> {
    for &spec in specs {
        x = apply_layer(g, x, spec, leaves)?;
    }
    Ok(x)
}

/// Per-point features then global max pooling: `[n, 3] -> [1, f]`.
pub(crate) fn pooled_features(
    g: &mut Graph,
    x: TensorId,
    convs: &[LinearSpec],
    leaves: &mut Leaves,
) -> AdResult<TensorId> {
    let h = apply_chain(g, x, convs, leaves)?;
    let width = g.shape(h)[1];
    let pooled = g.max_over_axis(h, 0)?;
    g.reshape(pooled, vec![1, width])
}
