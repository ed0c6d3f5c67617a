//! Desk-scale task networks: a pooled per-point classifier, a point cloud
//! autoencoder, and a registration head regressing a unit quaternion from
//! a pair of pooled features.
//!
//! Every network is permutation invariant in its point inputs (global max
//! pooling) and accepts clouds of any size, so it can consume both
//! complete inputs and small sampled sets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Parameter, Result as AdResult, TensorId};

use super::layers::{self, Leaves};
use super::{NetworkError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Reconstruction,
    Registration,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Reconstruction => "reconstruction",
            TaskKind::Registration => "registration",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = NetworkError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "reconstruction" => Ok(TaskKind::Reconstruction),
            "registration" => Ok(TaskKind::Registration),
            other => Err(NetworkError::BadConfig(format!("unknown task {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ClassifierConfig {
    pub conv_filters: Vec<usize>,
    pub fc_hidden: Vec<usize>,
    pub classes: usize,
}

pub struct ClassifierModel {
    pub config: ClassifierConfig,
    pub params: Vec<Parameter>,
}

pub struct ClassifierForward {
    /// `[classes]` logits.
    pub logits: TensorId,
    pub leaves: Vec<TensorId>,
}

impl ClassifierModel {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        if config.classes < 2 || config.conv_filters.is_empty() {
            return Err(NetworkError::BadConfig(
                "classifier needs conv layers and at least two classes".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (i, spec) in layers::activated_chain(3, &config.conv_filters)
            .iter()
            .enumerate()
        {
            layers::push_layer_params(&mut params, &format!("conv{i}"), *spec, &mut rng);
        }
        let pooled = *config.conv_filters.last().unwrap();
        for (i, spec) in layers::chain(pooled, &config.fc_hidden, config.classes)
            .iter()
            .enumerate()
        {
            layers::push_layer_params(&mut params, &format!("fc{i}"), *spec, &mut rng);
        }
        Ok(ClassifierModel { config, params })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        input: TensorId,
        trainable: bool,
    ) -> Result<ClassifierForward> {
        let mut leaves = Leaves::register(g, &self.params, trainable);
        let convs = layers::activated_chain(3, &self.config.conv_filters);
        let pooled_width = *self.config.conv_filters.last().unwrap();
        let pooled = layers::pooled_features(g, input, &convs, &mut leaves)?;
        let fcs = layers::chain(pooled_width, &self.config.fc_hidden, self.config.classes);
        let out = layers::apply_chain(g, pooled, &fcs, &mut leaves)?;
        let logits = g.reshape(out, vec![self.config.classes])?;
        Ok(ClassifierForward {
            logits,
            leaves: leaves.into_ids(),
        })
    }

    /// Predicted class of a cloud (argmax logit, ties to lowest index).
    pub fn predict(&self, cloud: &crate::geometry::PointCloud) -> Result<usize> {
        let mut g = Graph::new();
        let x = cloud.constant(&mut g);
        let fwd = self.forward(&mut g, x, false)?;
        let logits = g.value(fwd.logits);
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Softmax cross-entropy of `[c]` logits against a class label, via a
/// numerically stable in-graph log-sum-exp.
pub fn softmax_cross_entropy(g: &mut Graph, logits: TensorId, label: usize) -> AdResult<TensorId> {
    let c = g.shape(logits)[0];
    let col = g.reshape(logits, vec![c, 1])?;
    let max = g.max_over_axis(col, 0)?;
    let shifted = g.sub(logits, max)?;
    let exps = g.exp(shifted)?;
    let total = g.sum(exps)?;
    let log_total = g.log(total)?;
    let lse = g.add(log_total, max)?;
    let picked = g.gather_rows(logits, &[label])?;
    g.sub(lse, picked)
}

// ---------------------------------------------------------------------------
// Autoencoder
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct AutoencoderConfig {
    pub conv_filters: Vec<usize>,
    pub latent: usize,
    pub fc_hidden: Vec<usize>,
    /// Reconstruction size, fixed regardless of the input size.
    pub output_points: usize,
}

pub struct AutoencoderModel {
    pub config: AutoencoderConfig,
    pub params: Vec<Parameter>,
}

pub struct AutoencoderForward {
    /// `[output_points, 3]` reconstruction.
    pub reconstruction: TensorId,
    pub leaves: Vec<TensorId>,
}

impl AutoencoderModel {
    pub fn new(config: AutoencoderConfig, seed: u64) -> Result<Self> {
        if config.conv_filters.is_empty() || config.latent == 0 || config.output_points == 0 {
            return Err(NetworkError::BadConfig("bad autoencoder config".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (i, spec) in layers::activated_chain(3, &config.conv_filters)
            .iter()
            .enumerate()
        {
            layers::push_layer_params(&mut params, &format!("enc{i}"), *spec, &mut rng);
        }
        let pooled = *config.conv_filters.last().unwrap();
        for (i, spec) in layers::chain(pooled, &[config.latent], config.latent)
            .iter()
            .enumerate()
        {
            layers::push_layer_params(&mut params, &format!("lat{i}"), *spec, &mut rng);
        }
        for (i, spec) in layers::chain(
            config.latent,
            &config.fc_hidden,
            config.output_points * 3,
        )
        .iter()
        .enumerate()
        {
            layers::push_layer_params(&mut params, &format!("dec{i}"), *spec, &mut rng);
        }
        Ok(AutoencoderModel { config, params })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        input: TensorId,
        trainable: bool,
    ) -> Result<AutoencoderForward> {
        let mut leaves = Leaves::register(g, &self.params, trainable);
        let convs = layers::activated_chain(3, &self.config.conv_filters);
        let pooled_width = *self.config.conv_filters.last().unwrap();
        let pooled = layers::pooled_features(g, input, &convs, &mut leaves)?;
        let lat_specs = layers::chain(pooled_width, &[self.config.latent], self.config.latent);
        let latent = layers::apply_chain(g, pooled, &lat_specs, &mut leaves)?;
        let dec_specs = layers::chain(
            self.config.latent,
            &self.config.fc_hidden,
            self.config.output_points * 3,
        );
        let out = layers::apply_chain(g, latent, &dec_specs, &mut leaves)?;
        let reconstruction = g.reshape(out, vec![self.config.output_points, 3])?;
        Ok(AutoencoderForward {
            reconstruction,
            leaves: leaves.into_ids(),
        })
    }

    /// Reconstruct a cloud without recording gradients.
    pub fn reconstruct(
        &self,
        cloud: &crate::geometry::PointCloud,
    ) -> Result<crate::geometry::PointCloud> {
        let mut g = Graph::new();
        let x = cloud.constant(&mut g);
        let fwd = self.forward(&mut g, x, false)?;
        Ok(crate::geometry::PointCloud::from_flat(g.value(fwd.reconstruction))
            .expect("reconstruction buffer is n x 3"))
    }
}

// ---------------------------------------------------------------------------
// Registration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct RegistrationConfig {
    pub conv_filters: Vec<usize>,
    pub fc_hidden: Vec<usize>,
}

pub struct RegistrationModel {
    pub config: RegistrationConfig,
    pub params: Vec<Parameter>,
}

pub struct RegistrationForward {
    /// `[4]` unit quaternion (w, x, y, z).
    pub quaternion: TensorId,
    /// `[3, 3]` predicted rotation matrix.
    pub rotation: TensorId,
    /// `[3, 3]` its transpose (also its inverse).
    pub rotation_t: TensorId,
    pub leaves: Vec<TensorId>,
}

impl RegistrationModel {
    pub fn new(config: RegistrationConfig, seed: u64) -> Result<Self> {
        if config.conv_filters.is_empty() {
            return Err(NetworkError::BadConfig("bad registration config".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (i, spec) in layers::activated_chain(3, &config.conv_filters)
            .iter()
            .enumerate()
        {
            layers::push_layer_params(&mut params, &format!("enc{i}"), *spec, &mut rng);
        }
        let pooled = *config.conv_filters.last().unwrap();
        for (i, spec) in layers::chain(2 * pooled, &config.fc_hidden, 4)
            .iter()
            .enumerate()
        {
            layers::push_layer_params(&mut params, &format!("fc{i}"), *spec, &mut rng);
        }
        Ok(RegistrationModel { config, params })
    }

    /// Estimate the rotation aligning `source` onto `template`. The two
    /// clouds share the per-point encoder; pooled features concatenate
    /// into the head that regresses the quaternion.
    pub fn forward(
        &self,
        g: &mut Graph,
        source: TensorId,
        template: TensorId,
        trainable: bool,
    ) -> Result<RegistrationForward> {
        let src_shape = g.shape(source).to_vec();
        let tpl_shape = g.shape(template).to_vec();
        if src_shape != tpl_shape {
            return Err(NetworkError::PairSize {
                source_len: src_shape.first().copied().unwrap_or(0),
                template_len: tpl_shape.first().copied().unwrap_or(0),
            });
        }
        let convs = layers::activated_chain(3, &self.config.conv_filters);
        let pooled_width = *self.config.conv_filters.last().unwrap();

        // One leaf registration; both encoder passes share the weights.
        let mut leaves = Leaves::register(g, &self.params, trainable);
        let enc_leaf_count = convs
            .iter()
            .map(|s| if s.activated { 4 } else { 2 })
            .sum::<usize>();
        let f_src = layers::pooled_features(g, source, &convs, &mut leaves)?;
        let mut enc_again = Leaves::from_ids(leaves.ids()[..enc_leaf_count].to_vec());
        let f_tpl = layers::pooled_features(g, template, &convs, &mut enc_again)?;

        let joint = g.concat(&[f_src, f_tpl], 1)?;
        let fcs = layers::chain(2 * pooled_width, &self.config.fc_hidden, 4);
        let raw = layers::apply_chain(g, joint, &fcs, &mut leaves)?;
        let raw_q = g.reshape(raw, vec![4])?;

        // Normalize to a unit quaternion in-graph.
        let sq = g.square(raw_q)?;
        let norm2 = g.sum(sq)?;
        let norm = g.sqrt(norm2)?;
        let quaternion = g.div(raw_q, norm)?;
        let (rotation, rotation_t) = quaternion_to_matrices(g, quaternion)?;

        Ok(RegistrationForward {
            quaternion,
            rotation,
            rotation_t,
            leaves: leaves.into_ids(),
        })
    }
}

/// Assemble the rotation matrix (and its transpose) of an in-graph unit
/// quaternion `[4]`, each as a differentiable `[3, 3]` tensor.
pub fn quaternion_to_matrices(
    g: &mut Graph,
    q: TensorId,
) -> AdResult<(TensorId, TensorId)> {
    let w = g.gather_rows(q, &[0])?;
    let x = g.gather_rows(q, &[1])?;
    let y = g.gather_rows(q, &[2])?;
    let z = g.gather_rows(q, &[3])?;

    let prod = |g: &mut Graph, a, b| -> AdResult<TensorId> { g.mul(a, b) };
    let xy = prod(g, x, y)?;
    let xz = prod(g, x, z)?;
    let yz = prod(g, y, z)?;
    let wx = prod(g, w, x)?;
    let wy = prod(g, w, y)?;
    let wz = prod(g, w, z)?;
    let x2 = g.square(x)?;
    let y2 = g.square(y)?;
    let z2 = g.square(z)?;

    let diag = |g: &mut Graph, a, b| -> AdResult<TensorId> {
        let s = g.add(a, b)?;
        let neg = g.scale(s, -2.0)?;
        g.add_const(neg, 1.0)
    };
    let off = |g: &mut Graph, a, b, sign: f64| -> AdResult<TensorId> {
        let scaled = g.scale(b, sign)?;
        let s = g.add(a, scaled)?;
        g.scale(s, 2.0)
    };

    let r00 = diag(g, y2, z2)?;
    let r11 = diag(g, x2, z2)?;
    let r22 = diag(g, x2, y2)?;
    let r01 = off(g, xy, wz, -1.0)?;
    let r02 = off(g, xz, wy, 1.0)?;
    let r10 = off(g, xy, wz, 1.0)?;
    let r12 = off(g, yz, wx, -1.0)?;
    let r20 = off(g, xz, wy, -1.0)?;
    let r21 = off(g, yz, wx, 1.0)?;

    let assemble = |g: &mut Graph, entries: [TensorId; 9]| -> AdResult<TensorId> {
        let flat = g.concat(&entries, 0)?;
        g.reshape(flat, vec![3, 3])
    };
    let rotation = assemble(g, [r00, r01, r02, r10, r11, r12, r20, r21, r22])?;
    let rotation_t = assemble(g, [r00, r10, r20, r01, r11, r21, r02, r12, r22])?;
    Ok((rotation, rotation_t))
}

// ---------------------------------------------------------------------------
// Task model wrapper
// ---------------------------------------------------------------------------

pub enum TaskNet {
    Classifier(ClassifierModel),
    Autoencoder(AutoencoderModel),
    Registration(RegistrationModel),
}

/// A downstream network plus its frozen flag. Frozen parameters never
/// receive optimizer updates; gradients still flow through them to the
/// sampler's outputs.
pub struct TaskModel {
    pub net: TaskNet,
    pub frozen: bool,
}

impl TaskModel {
    pub fn kind(&self) -> TaskKind {
        match &self.net {
            TaskNet::Classifier(_) => TaskKind::Classification,
            TaskNet::Autoencoder(_) => TaskKind::Reconstruction,
            TaskNet::Registration(_) => TaskKind::Registration,
        }
    }

    pub fn params(&self) -> &[Parameter] {
        match &self.net {
            TaskNet::Classifier(m) => &m.params,
            TaskNet::Autoencoder(m) => &m.params,
            TaskNet::Registration(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut Vec<Parameter> {
        match &mut self.net {
            TaskNet::Classifier(m) => &mut m.params,
            TaskNet::Autoencoder(m) => &mut m.params,
            TaskNet::Registration(m) => &mut m.params,
        }
    }

    pub fn classifier(&self) -> Option<&ClassifierModel> {
        match &self.net {
            TaskNet::Classifier(m) => Some(m),
            _ => None,
        }
    }

    pub fn autoencoder(&self) -> Option<&AutoencoderModel> {
        match &self.net {
            TaskNet::Autoencoder(m) => Some(m),
            _ => None,
        }
    }

    pub fn registration(&self) -> Option<&RegistrationModel> {
        match &self.net {
            TaskNet::Registration(m) => Some(m),
            _ => None,
        }
    }
}
