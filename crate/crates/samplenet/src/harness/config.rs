//! Flat `key = value` experiment configuration.
//!
//! Defaults depend on the task (neighborhood size, loss weights, learning
//! rate, temperature floor). A file overrides defaults, CLI flags override
//! the file, and the fully resolved config echoes into the output directory
//! as sorted `key = value` lines whose FNV-1a hash stamps every CSV row.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::DatasetConfig;
use crate::networks::{
    AutoencoderConfig, ClassifierConfig, RegistrationConfig, SamplerConfig, TaskKind,
};
use crate::projection::TemperatureProfile;

use super::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKind {
    Learned,
    Constant,
    Linear,
    Exponential,
}

impl ProfileKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProfileKind::Learned => "learned",
            ProfileKind::Constant => "constant",
            ProfileKind::Linear => "linear",
            ProfileKind::Exponential => "exponential",
        }
    }

    pub fn all() -> [ProfileKind; 4] {
        [
            ProfileKind::Learned,
            ProfileKind::Constant,
            ProfileKind::Linear,
            ProfileKind::Exponential,
        ]
    }
}

impl std::str::FromStr for ProfileKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(ProfileKind::Learned),
            "constant" => Ok(ProfileKind::Constant),
            "linear" | "linear_rectified" => Ok(ProfileKind::Linear),
            "exponential" => Ok(ProfileKind::Exponential),
            other => Err(HarnessError::Config(format!(
                "unknown temperature profile {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightLossKind {
    CrossEntropy,
    Entropy,
}

impl WeightLossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightLossKind::CrossEntropy => "cross-entropy",
            WeightLossKind::Entropy => "entropy",
        }
    }
}

impl std::str::FromStr for WeightLossKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-entropy" | "cross_entropy" => Ok(WeightLossKind::CrossEntropy),
            "entropy" => Ok(WeightLossKind::Entropy),
            other => Err(HarnessError::Config(format!(
                "unknown weight loss {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub seed: u64,

    // dataset
    pub classes: usize,
    pub clouds_per_class: usize,
    pub points: usize,
    pub jitter_sigma: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub split_train: f64,
    pub split_val: f64,
    pub split_test: f64,

    // registration data
    pub reg_class: usize,
    pub reg_pairs_train: usize,
    pub reg_pairs_test: usize,
    pub reg_angle_deg: f64,

    // task network
    pub task_conv: Vec<usize>,
    pub task_fc: Vec<usize>,
    pub latent: usize,

    // sampler network and losses
    pub sampler_conv: Vec<usize>,
    pub sampler_fc: Vec<usize>,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub lambda: f64,
    pub eta: f64,
    pub eta_loss: WeightLossKind,
    pub profile: ProfileKind,
    pub t_init: f64,
    pub t_floor: f64,
    /// Fraction of training after which the linear profile hits its floor.
    pub lin_decay_frac: f64,
    /// Squared temperature the exponential profile reaches at the last epoch.
    pub exp_target: f64,
    /// Train against the soft projection (the normal mode). When false the
    /// task loss is taken on the simplified set directly.
    pub projection: bool,
    pub progressive: bool,

    // sampling sizes
    pub ratio: usize,
    pub ratios: Vec<usize>,
    pub k_sweep: Vec<usize>,

    // optimization
    pub epochs_task: usize,
    pub epochs_sampler: usize,
    pub batch_size: usize,
    pub lr_task: f64,
    pub lr_sampler: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
}

impl ExperimentConfig {
    /// Task-specific defaults at desk scale.
    pub fn default_for(task: TaskKind) -> Self {
        let (k, alpha, gamma, delta, lambda, batch, lr, t_floor) = match task {
            TaskKind::Classification => (7, 30.0, 1.0, 0.0, 1.0, 32, 0.01, 0.01),
            TaskKind::Registration => (8, 0.01, 1.0, 0.0, 0.01, 32, 0.001, 0.1),
            TaskKind::Reconstruction => (16, 0.01, 0.0, 1.0 / 64.0, 0.0001, 50, 0.0005, 0.01),
        };
        let task_conv = match task {
            TaskKind::Registration => vec![32, 64],
            _ => vec![32, 64, 128],
        };
        let task_fc = match task {
            TaskKind::Registration => vec![64, 32],
            _ => vec![64],
        };
        ExperimentConfig {
            task,
            seed: 1,
            classes: 8,
            clouds_per_class: 240,
            points: 256,
            jitter_sigma: 0.02,
            scale_min: 0.7,
            scale_max: 1.3,
            split_train: 0.8333333,
            split_val: 0.0,
            split_test: 0.1666667,
            reg_class: 6,
            reg_pairs_train: 400,
            reg_pairs_test: 100,
            reg_angle_deg: 45.0,
            task_conv,
            task_fc,
            latent: 64,
            sampler_conv: vec![16, 32, 64],
            sampler_fc: vec![128],
            k,
            alpha,
            beta: 1.0,
            gamma,
            delta,
            lambda,
            eta: 0.0,
            eta_loss: WeightLossKind::CrossEntropy,
            profile: ProfileKind::Learned,
            t_init: 1.0,
            t_floor,
            lin_decay_frac: 0.6,
            exp_target: 0.05,
            projection: true,
            progressive: false,
            ratio: 8,
            ratios: vec![2, 4, 8, 16],
            k_sweep: vec![2, 4, 7, 12, 16],
            epochs_task: 30,
            epochs_sampler: 20,
            batch_size: batch,
            lr_task: lr,
            lr_sampler: lr,
            lr_decay_factor: 0.7,
            lr_decay_every: 60,
        }
    }

    /// Parse a flat config file over task defaults. The `task` key, when
    /// present, must come before any task-dependent override, so it is read
    /// in a first pass.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut task = TaskKind::Classification;
        for (_, key, value) in entries(text)? {
            if key == "task" {
                task = value
                    .parse()
                    .map_err(|e: crate::networks::NetworkError| HarnessError::Config(e.to_string()))?;
            }
        }
        let mut cfg = Self::default_for(task);
        for (line, key, value) in entries(text)? {
            cfg.set(&key, &value)
                .map_err(|e| match e {
                    HarnessError::Config(msg) => {
                        HarnessError::Config(format!("line {line}: {msg}"))
                    }
                    other => other,
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    /// Apply one `key = value` override (CLI flags funnel through here).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad value {value:?} for {key}")))
        }
        fn list(key: &str, value: &str) -> Result<Vec<usize>> {
            value
                .split(',')
                .map(|t| num::<usize>(key, t.trim()))
                .collect()
        }
        match key {
            "task" => {
                self.task = value
                    .parse()
                    .map_err(|e: crate::networks::NetworkError| HarnessError::Config(e.to_string()))?
            }
            "seed" => self.seed = num(key, value)?,
            "classes" => self.classes = num(key, value)?,
            "clouds_per_class" => self.clouds_per_class = num(key, value)?,
            "points" => self.points = num(key, value)?,
            "jitter" => self.jitter_sigma = num(key, value)?,
            "scale_min" => self.scale_min = num(key, value)?,
            "scale_max" => self.scale_max = num(key, value)?,
            "split_train" => self.split_train = num(key, value)?,
            "split_val" => self.split_val = num(key, value)?,
            "split_test" => self.split_test = num(key, value)?,
            "reg_class" => self.reg_class = num(key, value)?,
            "reg_pairs_train" => self.reg_pairs_train = num(key, value)?,
            "reg_pairs_test" => self.reg_pairs_test = num(key, value)?,
            "reg_angle" => self.reg_angle_deg = num(key, value)?,
            "task_conv" => self.task_conv = list(key, value)?,
            "task_fc" => self.task_fc = list(key, value)?,
            "latent" => self.latent = num(key, value)?,
            "sampler_conv" => self.sampler_conv = list(key, value)?,
            "sampler_fc" => self.sampler_fc = list(key, value)?,
            "k" => self.k = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "eta" => self.eta = num(key, value)?,
            "eta_loss" => self.eta_loss = value.parse()?,
            "profile" => self.profile = value.parse()?,
            "t_init" => self.t_init = num(key, value)?,
            "t_floor" => self.t_floor = num(key, value)?,
            "lin_decay_frac" => self.lin_decay_frac = num(key, value)?,
            "exp_target" => self.exp_target = num(key, value)?,
            "projection" => self.projection = num(key, value)?,
            "progressive" => self.progressive = num(key, value)?,
            "ratio" => self.ratio = num(key, value)?,
            "ratios" => self.ratios = list(key, value)?,
            "k_sweep" => self.k_sweep = list(key, value)?,
            "epochs_task" => self.epochs_task = num(key, value)?,
            "epochs_sampler" => self.epochs_sampler = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr_task" => self.lr_task = num(key, value)?,
            "lr_sampler" => self.lr_sampler = num(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = num(key, value)?,
            "lr_decay_every" => self.lr_decay_every = num(key, value)?,
            other => {
                return Err(HarnessError::Config(format!("unknown key {other:?}")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for &r in self.ratios.iter().chain(std::iter::once(&self.ratio)) {
            if r == 0 || self.points % r != 0 {
                return Err(HarnessError::Config(format!(
                    "ratio {r} does not divide {} points",
                    self.points
                )));
            }
        }
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("t_init", self.t_init),
            ("t_floor", self.t_floor),
            ("lr_task", self.lr_task),
            ("lr_sampler", self.lr_sampler),
        ];
        for (name, v) in positive {
            if v < 0.0 || !v.is_finite() {
                return Err(HarnessError::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.batch_size == 0 || self.epochs_task == 0 || self.epochs_sampler == 0 {
            return Err(HarnessError::Config(
                "batch size and epoch counts must be positive".into(),
            ));
        }
        if self.reg_class >= crate::data::CLASS_NAMES.len() {
            return Err(HarnessError::Config(format!(
                "reg_class {} out of range",
                self.reg_class
            )));
        }
        Ok(())
    }

    /// Canonical resolved text: sorted `key = value` lines.
    pub fn resolved_text(&self) -> String {
        let fmt_list = |v: &[usize]| {
            v.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut pairs: Vec<(String, String)> = vec![
            ("alpha".into(), self.alpha.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("beta".into(), self.beta.to_string()),
            ("classes".into(), self.classes.to_string()),
            ("clouds_per_class".into(), self.clouds_per_class.to_string()),
            ("delta".into(), self.delta.to_string()),
            ("epochs_sampler".into(), self.epochs_sampler.to_string()),
            ("epochs_task".into(), self.epochs_task.to_string()),
            ("eta".into(), self.eta.to_string()),
            ("eta_loss".into(), self.eta_loss.as_str().into()),
            ("exp_target".into(), self.exp_target.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("jitter".into(), self.jitter_sigma.to_string()),
            ("k".into(), self.k.to_string()),
            ("k_sweep".into(), fmt_list(&self.k_sweep)),
            ("lambda".into(), self.lambda.to_string()),
            ("latent".into(), self.latent.to_string()),
            ("lin_decay_frac".into(), self.lin_decay_frac.to_string()),
            ("lr_decay_every".into(), self.lr_decay_every.to_string()),
            ("lr_decay_factor".into(), self.lr_decay_factor.to_string()),
            ("lr_sampler".into(), self.lr_sampler.to_string()),
            ("lr_task".into(), self.lr_task.to_string()),
            ("points".into(), self.points.to_string()),
            ("profile".into(), self.profile.as_str().into()),
            ("progressive".into(), self.progressive.to_string()),
            ("projection".into(), self.projection.to_string()),
            ("ratio".into(), self.ratio.to_string()),
            ("ratios".into(), fmt_list(&self.ratios)),
            ("reg_angle".into(), self.reg_angle_deg.to_string()),
            ("reg_class".into(), self.reg_class.to_string()),
            ("reg_pairs_test".into(), self.reg_pairs_test.to_string()),
            ("reg_pairs_train".into(), self.reg_pairs_train.to_string()),
            ("sampler_conv".into(), fmt_list(&self.sampler_conv)),
            ("sampler_fc".into(), fmt_list(&self.sampler_fc)),
            ("scale_max".into(), self.scale_max.to_string()),
            ("scale_min".into(), self.scale_min.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("split_test".into(), self.split_test.to_string()),
            ("split_train".into(), self.split_train.to_string()),
            ("split_val".into(), self.split_val.to_string()),
            ("t_floor".into(), self.t_floor.to_string()),
            ("t_init".into(), self.t_init.to_string()),
            ("task".into(), self.task.as_str().into()),
            ("task_conv".into(), fmt_list(&self.task_conv)),
            ("task_fc".into(), fmt_list(&self.task_fc)),
        ];
        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    /// FNV-1a hash of the resolved text, as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.resolved_text().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    // --- derived configs ---------------------------------------------------

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            classes: self.classes,
            clouds_per_class: self.clouds_per_class,
            points: self.points,
            jitter_sigma: self.jitter_sigma,
            scale_range: (self.scale_min, self.scale_max),
            split_fractions: (self.split_train, self.split_val, self.split_test),
            seed: self.seed,
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig {
            conv_filters: self.task_conv.clone(),
            fc_hidden: self.task_fc.clone(),
            classes: self.classes,
        }
    }

    pub fn autoencoder_config(&self) -> AutoencoderConfig {
        AutoencoderConfig {
            conv_filters: self.task_conv.clone(),
            latent: self.latent,
            fc_hidden: vec![2 * self.latent],
            output_points: self.points,
        }
    }

    pub fn registration_config(&self) -> RegistrationConfig {
        RegistrationConfig {
            conv_filters: self.task_conv.clone(),
            fc_hidden: self.task_fc.clone(),
        }
    }

    /// Sampler for `m` output points; progressive mode emits all `points`
    /// and carries power-of-two control sizes.
    pub fn sampler_config(&self, m: usize) -> SamplerConfig {
        let (output_points, control_sizes) = if self.progressive {
            let mut cs = Vec::new();
            let mut c = 2;
            while c < self.points {
                cs.push(c);
                c *= 2;
            }
            cs.push(self.points);
            (self.points, Some(cs))
        } else {
            (m, None)
        };
        SamplerConfig {
            input_points: self.points,
            conv_filters: self.sampler_conv.clone(),
            fc_hidden: self.sampler_fc.clone(),
            output_points,
            k: self.k,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
            lambda: self.lambda,
            t_init: self.t_init,
            t_floor: self.t_floor,
            control_sizes,
        }
    }

    /// Temperature profile resolved against the sampler epoch budget.
    pub fn temperature_profile(&self) -> TemperatureProfile {
        let t0_sq = self.t_init * self.t_init;
        match self.profile {
            ProfileKind::Learned => TemperatureProfile::Learned {
                floor: self.t_floor,
            },
            ProfileKind::Constant => TemperatureProfile::Constant,
            ProfileKind::Linear => TemperatureProfile::LinearRectified {
                t0_sq,
                floor: self.t_floor,
                decay_epochs: ((self.epochs_sampler as f64 * self.lin_decay_frac).ceil() as usize)
                    .max(1),
            },
            ProfileKind::Exponential => TemperatureProfile::Exponential {
                t0_sq,
                floor: self.t_floor,
                // reach exp_target at the final epoch
                rate: (t0_sq / self.exp_target).ln() / (self.epochs_sampler.max(2) - 1) as f64,
            },
        }
    }
}

/// `(line, key, value)` triples of non-comment lines.
fn entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(HarnessError::Config(format!(
                "line {}: expected key = value, got {raw:?}",
                i + 1
            )));
        };
        out.push((i + 1, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}
