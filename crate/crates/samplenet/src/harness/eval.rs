//! Evaluation of sampling strategies against a frozen task network, plus
//! the ablation sweeps built on top of it.
//!
//! Strategies: `random` (seeded independently of training), `fps` (start
//! index 0), `samplenet` (hard-sampled), `samplenet-softly-projected`, and
//! `samplenet-simplified` (the raw network output before projection).
//! Registration applies the same sampler to source and template and also
//! reports sampling consistency; completion points count toward it, since
//! they are part of the delivered sample.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Graph;
use crate::data::{Dataset, Split};
use crate::geometry::{fps, sampling_consistency, PointCloud, SpatialIndex};
use crate::networks::{rotation_error_deg, Rotation, SamplerModel, TaskKind, TaskModel, TaskNet};
use crate::projection::{hard_sample, soft_project, ProjectionState};

use super::csv::{write_rows, Provenance};
use super::train::registration_pairs;
use super::{ExperimentConfig, HarnessError, OutputDir, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    Random,
    Fps,
    SampleNet,
    SampleNetSoft,
    SampleNetSimplified,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Fps => "fps",
            Strategy::SampleNet => "samplenet",
            Strategy::SampleNetSoft => "samplenet-softly-projected",
            Strategy::SampleNetSimplified => "samplenet-simplified",
        }
    }

    pub fn all() -> [Strategy; 5] {
        [
            Strategy::Random,
            Strategy::Fps,
            Strategy::SampleNet,
            Strategy::SampleNetSoft,
            Strategy::SampleNetSimplified,
        ]
    }

    pub fn needs_sampler(&self) -> bool {
        !matches!(self, Strategy::Random | Strategy::Fps)
    }
}

impl std::str::FromStr for Strategy {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::all()
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown strategy {s:?}")))
    }
}

/// Where sampler checkpoints come from during evaluation.
pub enum SamplerSource {
    /// Baselines only.
    None,
    /// One fixed-size checkpoint per ratio.
    PerRatio(BTreeMap<usize, PathBuf>),
    /// A single progressive checkpoint whose prefixes serve every ratio.
    Progressive(PathBuf),
}

#[derive(Clone, Debug)]
pub struct EvalRow {
    pub strategy: Strategy,
    pub ratio: usize,
    pub m: usize,
    pub metric_name: &'static str,
    pub metric: f64,
    pub consistency: Option<f64>,
    pub wall_s: f64,
}

pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

// ---------------------------------------------------------------------------
// Sampler outputs on one cloud
// ---------------------------------------------------------------------------

pub(crate) struct SamplerOutputs {
    pub simplified: PointCloud,
    pub soft: PointCloud,
    pub hard: PointCloud,
    pub state: ProjectionState,
}

/// Run a trained sampler on one cloud: simplified points (prefix of the
/// ordered output for progressive models), soft projection at the trained
/// temperature, and the hard sample completed to `m` points.
pub(crate) fn sampler_outputs(
    sampler: &SamplerModel,
    cloud: &PointCloud,
    index: &SpatialIndex,
    m: usize,
) -> Result<SamplerOutputs> {
    let mut g = Graph::new();
    let x = cloud.constant(&mut g);
    let fwd = sampler.forward(&mut g, x, false, false)?;
    let values = g.value(fwd.simplified);
    let simplified = PointCloud::from_flat(&values[..m * 3])?;
    let (soft, state) = soft_project(
        cloud,
        index,
        &simplified,
        sampler.config.k,
        sampler.temperature(),
    )?;
    let (hard, _) = hard_sample(cloud, &state, m)?;
    Ok(SamplerOutputs {
        simplified,
        soft,
        hard,
        state,
    })
}

fn random_subset(cloud: &PointCloud, m: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..cloud.len()).collect();
    for i in 0..m {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    idx.truncate(m);
    Ok(cloud.subset(&idx)?)
}

/// The cloud a strategy hands to the task network.
fn strategy_sample(
    strategy: Strategy,
    cloud: &PointCloud,
    index: &SpatialIndex,
    m: usize,
    sampler: Option<&SamplerModel>,
    random_seed: u64,
) -> Result<PointCloud> {
    match strategy {
        Strategy::Random => random_subset(cloud, m, random_seed),
        Strategy::Fps => {
            let idx = fps(cloud, m, 0)?;
            Ok(cloud.subset(&idx)?)
        }
        _ => {
            let sampler =
                sampler.ok_or_else(|| HarnessError::MissingSampler(strategy.as_str().into()))?;
            let outputs = sampler_outputs(sampler, cloud, index, m)?;
            Ok(match strategy {
                Strategy::SampleNet => outputs.hard,
                Strategy::SampleNetSoft => outputs.soft,
                Strategy::SampleNetSimplified => outputs.simplified,
                _ => unreachable!(),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Public evaluation entry point
// ---------------------------------------------------------------------------

/// Evaluate strategies at every configured ratio and write `report.csv`
/// plus `timing.csv` into `out`. Checkpoint files are only read.
pub fn evaluate(
    cfg: &ExperimentConfig,
    task_checkpoint: &Path,
    samplers: &SamplerSource,
    strategies: &[Strategy],
    out: &Path,
) -> Result<EvalReport> {
    cfg.validate()?;
    let dir = OutputDir::claim(out)?;
    std::fs::write(dir.path().join("config_resolved.txt"), cfg.resolved_text())?;
    let provenance = Provenance::new(cfg.hash(), cfg.seed);

    let task = super::load_task(task_checkpoint, cfg.points)?;
    if task.kind() != cfg.task {
        return Err(HarnessError::Incompatible(format!(
            "task checkpoint is {}, experiment wants {}",
            task.kind().as_str(),
            cfg.task.as_str()
        )));
    }

    let mut rows = Vec::new();
    for &ratio in &cfg.ratios {
        let m = cfg.points / ratio;
        let sampler = load_for_ratio(cfg, samplers, ratio)?;
        for &strategy in strategies {
            if strategy.needs_sampler() && sampler.is_none() {
                return Err(HarnessError::MissingSampler(strategy.as_str().into()));
            }
            let started = Instant::now();
            let row = match cfg.task {
                TaskKind::Classification => {
                    eval_classification(cfg, &task, strategy, ratio, m, sampler.as_ref())?
                }
                TaskKind::Reconstruction => {
                    eval_reconstruction(cfg, &task, strategy, ratio, m, sampler.as_ref())?
                }
                TaskKind::Registration => {
                    eval_registration(cfg, &task, strategy, ratio, m, sampler.as_ref())?
                }
            };
            rows.push(EvalRow {
                wall_s: started.elapsed().as_secs_f64(),
                ..row
            });
        }
    }

    // report.csv is deterministic; wall time goes to timing.csv instead.
    let report_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            let consistency = r
                .consistency
                .map(|c| c.to_string())
                .unwrap_or_default();
            format!(
                "{},{},{},{},{},{},{consistency}",
                cfg.task.as_str(),
                r.strategy.as_str(),
                r.ratio,
                r.m,
                r.metric_name,
                r.metric
            )
        })
        .collect();
    write_rows(
        &dir.path().join("report.csv"),
        &provenance,
        "task,strategy,ratio,m,metric,value,consistency",
        &report_rows,
    )?;
    let timing_rows: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{}", r.strategy.as_str(), r.ratio, r.wall_s))
        .collect();
    write_rows(
        &dir.path().join("timing.csv"),
        &provenance,
        "strategy,ratio,wall_s",
        &timing_rows,
    )?;
    Ok(EvalReport { rows })
}

fn load_for_ratio(
    cfg: &ExperimentConfig,
    samplers: &SamplerSource,
    ratio: usize,
) -> Result<Option<SamplerModel>> {
    match samplers {
        SamplerSource::None => Ok(None),
        SamplerSource::PerRatio(map) => match map.get(&ratio) {
            Some(path) => {
                let sampler = super::load_sampler(path, cfg.points)?;
                let expected = cfg.points / ratio;
                if sampler.config.output_points != expected {
                    return Err(HarnessError::Incompatible(format!(
                        "sampler at {} outputs {} points, ratio {ratio} needs {expected}",
                        path.display(),
                        sampler.config.output_points
                    )));
                }
                Ok(Some(sampler))
            }
            None => Ok(None),
        },
        SamplerSource::Progressive(path) => {
            let sampler = super::load_sampler(path, cfg.points)?;
            if sampler.config.output_points < cfg.points / ratio {
                return Err(HarnessError::Incompatible(format!(
                    "progressive sampler emits {} points, ratio {ratio} needs {}",
                    sampler.config.output_points,
                    cfg.points / ratio
                )));
            }
            Ok(Some(sampler))
        }
    }
}

fn eval_classification(
    cfg: &ExperimentConfig,
    task: &TaskModel,
    strategy: Strategy,
    ratio: usize,
    m: usize,
    sampler: Option<&SamplerModel>,
) -> Result<EvalRow> {
    let TaskNet::Classifier(model) = &task.net else {
        unreachable!()
    };
    let dataset = Dataset::generate(cfg.dataset_config())?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for (i, item) in dataset.split(Split::Test).enumerate() {
        let index = SpatialIndex::build(&item.cloud);
        let sample = strategy_sample(
            strategy,
            &item.cloud,
            &index,
            m,
            sampler,
            super::stream_seed("random-strategy", &[cfg.seed, ratio as u64, i as u64]),
        )?;
        if model.predict(&sample)? == item.class_id {
            correct += 1;
        }
        total += 1;
    }
    Ok(EvalRow {
        strategy,
        ratio,
        m,
        metric_name: "accuracy",
        metric: correct as f64 / total.max(1) as f64,
        consistency: None,
        wall_s: 0.0,
    })
}

fn eval_reconstruction(
    cfg: &ExperimentConfig,
    task: &TaskModel,
    strategy: Strategy,
    ratio: usize,
    m: usize,
    sampler: Option<&SamplerModel>,
) -> Result<EvalRow> {
    let TaskNet::Autoencoder(model) = &task.net else {
        unreachable!()
    };
    let dataset = Dataset::generate(cfg.dataset_config())?;
    let mut sampled_err = 0.0;
    let mut complete_err = 0.0;
    let mut count = 0usize;
    for (i, item) in dataset.split(Split::Test).enumerate() {
        let index = SpatialIndex::build(&item.cloud);
        let sample = strategy_sample(
            strategy,
            &item.cloud,
            &index,
            m,
            sampler,
            super::stream_seed("random-strategy", &[cfg.seed, ratio as u64, i as u64]),
        )?;
        let recon_sampled = model.reconstruct(&sample)?;
        sampled_err += crate::geometry::chamfer(&item.cloud, &recon_sampled)?;
        let recon_complete = model.reconstruct(&item.cloud)?;
        complete_err += crate::geometry::chamfer(&item.cloud, &recon_complete)?;
        count += 1;
    }
    let _ = count;
    Ok(EvalRow {
        strategy,
        ratio,
        m,
        metric_name: "nre",
        metric: sampled_err / complete_err,
        consistency: None,
        wall_s: 0.0,
    })
}

fn eval_registration(
    cfg: &ExperimentConfig,
    task: &TaskModel,
    strategy: Strategy,
    ratio: usize,
    m: usize,
    sampler: Option<&SamplerModel>,
) -> Result<EvalRow> {
    let TaskNet::Registration(model) = &task.net else {
        unreachable!()
    };
    let pairs = registration_pairs(cfg, Split::Test, cfg.reg_pairs_test)?;
    let mut mre_total = 0.0;
    let mut consistency_total = 0.0;
    for (i, pair) in pairs.iter().enumerate() {
        let src_index = SpatialIndex::build(&pair.source);
        let tpl_index = SpatialIndex::build(&pair.template);
        // The same sampler (or baseline rule) runs on both clouds.
        let s_sample = strategy_sample(
            strategy,
            &pair.source,
            &src_index,
            m,
            sampler,
            super::stream_seed("random-strategy", &[cfg.seed, ratio as u64, 2 * i as u64]),
        )?;
        let t_sample = strategy_sample(
            strategy,
            &pair.template,
            &tpl_index,
            m,
            sampler,
            super::stream_seed(
                "random-strategy",
                &[cfg.seed, ratio as u64, 2 * i as u64 + 1],
            ),
        )?;

        let mut g = Graph::new();
        let s = s_sample.constant(&mut g);
        let t = t_sample.constant(&mut g);
        let fwd = model.forward(&mut g, s, t, false)?;
        let q = g.value(fwd.quaternion);
        let pred = Rotation::from_quaternion([q[0], q[1], q[2], q[3]])?;
        mre_total += rotation_error_deg(&pred, &pair.rotation);
        consistency_total +=
            sampling_consistency(&s_sample, &pair.rotation.apply(&t_sample))?;
    }
    let count = pairs.len().max(1) as f64;
    Ok(EvalRow {
        strategy,
        ratio,
        m,
        metric_name: "mre_deg",
        metric: mre_total / count,
        consistency: Some(consistency_total / count),
        wall_s: 0.0,
    })
}

// ---------------------------------------------------------------------------
// Ablation sweeps
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    Profiles,
    Neighborhood,
    WeightLoss,
}

impl std::str::FromStr for Sweep {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "profiles" => Ok(Sweep::Profiles),
            "k" | "neighborhood" => Ok(Sweep::Neighborhood),
            "eta" | "weight-loss" => Ok(Sweep::WeightLoss),
            other => Err(HarnessError::Config(format!("unknown sweep {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AblateRow {
    pub sweep: &'static str,
    pub variant: String,
    pub ratio: usize,
    pub metric: f64,
    /// Mean first-neighbor projection weight at the final epoch.
    pub first_nn_weight: f64,
}

/// Train one sampler variant per sweep point (in a subdirectory of `out`)
/// and evaluate the hard-sampled strategy at `cfg.ratio`. Returns one row
/// per variant and writes `ablate.csv`.
pub fn ablate(
    cfg: &ExperimentConfig,
    task_checkpoint: &Path,
    sweep: Sweep,
    out: &Path,
) -> Result<Vec<AblateRow>> {
    let dir = OutputDir::claim(out)?;
    let provenance = Provenance::new(cfg.hash(), cfg.seed);
    let mut rows = Vec::new();

    let mut variants: Vec<(String, ExperimentConfig)> = Vec::new();
    match sweep {
        Sweep::Profiles => {
            for kind in super::ProfileKind::all() {
                let mut sub = cfg.clone();
                sub.profile = kind;
                variants.push((kind.as_str().to_string(), sub));
            }
        }
        Sweep::Neighborhood => {
            for &k in &cfg.k_sweep {
                let mut sub = cfg.clone();
                sub.k = k;
                variants.push((format!("k{k}"), sub));
            }
        }
        Sweep::WeightLoss => {
            let eta = if cfg.eta > 0.0 { cfg.eta } else { 0.1 };
            for value in [0.0, eta] {
                let mut sub = cfg.clone();
                sub.eta = value;
                let name = if value == 0.0 {
                    "eta-0".to_string()
                } else {
                    format!("eta-{value}-{}", cfg.eta_loss.as_str())
                };
                variants.push((name, sub));
            }
        }
    }

    let sweep_name = match sweep {
        Sweep::Profiles => "profiles",
        Sweep::Neighborhood => "neighborhood",
        Sweep::WeightLoss => "weight-loss",
    };
    for (name, sub) in variants {
        let run_dir = dir.path().join(&name);
        let outcome = super::train_sampler(&sub, task_checkpoint, &run_dir)?;
        let (metric, _) = eval_single(&sub, task_checkpoint, &outcome.checkpoint)?;
        let first_nn_weight = outcome
            .logs
            .last()
            .and_then(|l| l.mean_weights.first().copied())
            .unwrap_or(0.0);
        rows.push(AblateRow {
            sweep: sweep_name,
            variant: name,
            ratio: sub.ratio,
            metric,
            first_nn_weight,
        });
    }

    let body: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.sweep, r.variant, r.ratio, r.metric, r.first_nn_weight
            )
        })
        .collect();
    write_rows(
        &dir.path().join("ablate.csv"),
        &provenance,
        "sweep,variant,ratio,metric,first_nn_weight",
        &body,
    )?;
    Ok(rows)
}

/// Hard-sampled task metric of one sampler checkpoint at `cfg.ratio`,
/// without touching the filesystem. Returns `(metric, consistency)`.
pub fn eval_single(
    cfg: &ExperimentConfig,
    task_checkpoint: &Path,
    sampler_checkpoint: &Path,
) -> Result<(f64, Option<f64>)> {
    let task = super::load_task(task_checkpoint, cfg.points)?;
    let sampler = super::load_sampler(sampler_checkpoint, cfg.points)?;
    let m = cfg.points / cfg.ratio;
    let row = match cfg.task {
        TaskKind::Classification => eval_classification(
            cfg,
            &task,
            Strategy::SampleNet,
            cfg.ratio,
            m,
            Some(&sampler),
        )?,
        TaskKind::Reconstruction => eval_reconstruction(
            cfg,
            &task,
            Strategy::SampleNet,
            cfg.ratio,
            m,
            Some(&sampler),
        )?,
        TaskKind::Registration => eval_registration(
            cfg,
            &task,
            Strategy::SampleNet,
            cfg.ratio,
            m,
            Some(&sampler),
        )?,
    };
    Ok((row.metric, row.consistency))
}
