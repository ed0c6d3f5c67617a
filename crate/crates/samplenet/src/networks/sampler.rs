//! The sampler network: per-point convolutions, global max pooling, and
//! fully connected layers regressing `m` output points in free space.
//!
//! The raw output `Q` ("simplified" points) is not a subset of the input;
//! the projection module maps it back onto the input cloud. A progressive
//! sampler emits `n` ordered points whose prefixes serve every control
//! size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Parameter, TensorId};

use super::layers::{self, Leaves, LinearSpec};
use super::{NetworkError, Result};

pub const TEMPERATURE_PARAM: &str = "temperature";

#[derive(Clone, Debug)]
pub struct SamplerConfig {
    /// Expected input cloud size `n`.
    pub input_points: usize,
    /// Widths of the per-point convolution layers.
    pub conv_filters: Vec<usize>,
    /// Hidden fully-connected widths; the final `m * 3` layer is implicit.
    pub fc_hidden: Vec<usize>,
    /// Output sample size `m` (equals `input_points` for progressive use).
    pub output_points: usize,
    /// Projection neighborhood size.
    pub k: usize,
    /// Simplification loss weight in the total objective.
    pub alpha: f64,
    /// Max-nearest-neighbor term weight inside the simplification loss.
    pub beta: f64,
    /// Constant coefficient of the coverage term.
    pub gamma: f64,
    /// Per-output-point coefficient of the coverage term.
    pub delta: f64,
    /// Projection (squared temperature) loss weight.
    pub lambda: f64,
    pub t_init: f64,
    pub t_floor: f64,
    /// Nested prefix sizes for progressive training (strictly increasing,
    /// each at most `output_points`).
    pub control_sizes: Option<Vec<usize>>,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.output_points == 0 || self.conv_filters.is_empty() {
            return Err(NetworkError::BadConfig(
                "sampler needs at least one conv layer and one output point".into(),
            ));
        }
        if let Some(cs) = &self.control_sizes {
            let increasing = cs.windows(2).all(|w| w[0] < w[1]);
            if cs.is_empty() || !increasing || *cs.last().unwrap() > self.output_points {
                return Err(NetworkError::BadConfig(format!(
                    "control sizes must be strictly increasing and at most {}: {cs:?}",
                    self.output_points
                )));
            }
        }
        if self.t_init <= 0.0 || self.t_floor <= 0.0 {
            return Err(NetworkError::BadConfig(
                "temperature initial value and floor must be positive".into(),
            ));
        }
        Ok(())
    }

    fn conv_specs(&self) -> Vec<LinearSpec> {
        layers::activated_chain(3, &self.conv_filters)
    }

    fn fc_specs(&self) -> Vec<LinearSpec> {
        let pooled = *self.conv_filters.last().unwrap();
        layers::chain(pooled, &self.fc_hidden, self.output_points * 3)
    }
}

pub struct SamplerModel {
    pub config: SamplerConfig,
    pub params: Vec<Parameter>,
}

/// Graph handles produced by one sampler forward pass.
pub struct SamplerForward {
    /// The simplified point set `Q`, shape `[m, 3]`.
    pub simplified: TensorId,
    /// Leaf ids of every parameter, in storage order.
    pub leaves: Vec<TensorId>,
    /// Leaf id of the temperature scalar.
    pub temperature: TensorId,
}

impl SamplerModel {
    pub fn new(config: SamplerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (i, spec) in config.conv_specs().iter().enumerate() {
            layers::push_layer_params(&mut params, &format!("conv{i}"), *spec, &mut rng);
        }
        for (i, spec) in config.fc_specs().iter().enumerate() {
            layers::push_layer_params(&mut params, &format!("fc{i}"), *spec, &mut rng);
        }
        params.push(
            Parameter::new(TEMPERATURE_PARAM, vec![1], vec![config.t_init]).unwrap(),
        );
        Ok(SamplerModel { config, params })
    }

    pub fn from_params(config: SamplerConfig, params: Vec<Parameter>) -> Result<Self> {
        config.validate()?;
        let fresh = Self::new(config.clone(), 0)?;
        if fresh.params.len() != params.len()
            || fresh
                .params
                .iter()
                .zip(&params)
                .any(|(a, b)| a.name != b.name || a.shape != b.shape)
        {
            return Err(NetworkError::BadConfig(
                "checkpoint parameters do not match the sampler architecture".into(),
            ));
        }
        Ok(SamplerModel { config, params })
    }

    pub fn temperature(&self) -> f64 {
        self.params.last().unwrap().data[0]
    }

    pub fn set_temperature(&mut self, t: f64) {
        self.params.last_mut().unwrap().data[0] = t;
    }

    /// Clip the learned temperature at its configured floor.
    pub fn clip_temperature(&mut self) {
        let floor = self.config.t_floor;
        let t = self.params.last_mut().unwrap();
        if t.data[0] < floor {
            t.data[0] = floor;
        }
    }

    /// Run the network on an `[n, 3]` input. `trainable` registers the
    /// weights as differentiable leaves; `learn_temperature` does the same
    /// for the temperature scalar (fixed-profile training freezes it).
    pub fn forward(
        &self,
        g: &mut Graph,
        input: TensorId,
        trainable: bool,
        learn_temperature: bool,
    ) -> Result<SamplerForward> {
        let (mut outputs, leaves, temperature) =
            self.forward_shared(g, &[input], trainable, learn_temperature)?;
        Ok(SamplerForward {
            simplified: outputs.pop().unwrap(),
            leaves,
            temperature,
        })
    }

    /// Run the network on several inputs with one shared set of parameter
    /// leaves (the registration pipeline applies the same sampler to the
    /// source and the template). Returns one output per input, the leaf
    /// ids in parameter order, and the temperature leaf.
    pub fn forward_shared(
        &self,
        g: &mut Graph,
        inputs: &[TensorId],
        trainable: bool,
        learn_temperature: bool,
    ) -> Result<(Vec<TensorId>, Vec<TensorId>, TensorId)> {
        for &input in inputs {
            let shape = g.shape(input).to_vec();
            if shape != [self.config.input_points, 3] {
                return Err(NetworkError::InputSize {
                    expected: self.config.input_points,
                    actual: shape.first().copied().unwrap_or(0),
                });
            }
        }
        // Register weight leaves once, then the temperature with its own flag.
        let weight_count = self.params.len() - 1;
        let leaves = Leaves::register(g, &self.params[..weight_count], trainable);
        let t_leaf = g.leaf(self.params[weight_count].tensor(learn_temperature));

        let mut outputs = Vec::with_capacity(inputs.len());
        for &input in inputs {
            let mut walk = Leaves::from_ids(leaves.ids().to_vec());
            let pooled = layers::pooled_features(g, input, &self.config.conv_specs(), &mut walk)?;
            let flat = layers::apply_chain(g, pooled, &self.config.fc_specs(), &mut walk)?;
            outputs.push(g.reshape(flat, vec![self.config.output_points, 3])?);
        }
        let mut ids = leaves.into_ids();
        ids.push(t_leaf);
        Ok((outputs, ids, t_leaf))
    }
}
