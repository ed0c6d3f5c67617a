//! Training drivers for task networks and samplers.
//!
//! Both loops run per-cloud graphs with gradient accumulation: a fresh tape
//! per example, backward, gradients summed into a batch buffer, one Adam
//! step per batch on the mean. Epoch order, initialization, and data all
//! come from purpose-tagged seed streams, so a rerun with the same config
//! reproduces every metric exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, Graph, Parameter, TensorId};
use crate::data::{
    generate_cloud, make_registration_pair, shuffle_points, Dataset, LabeledCloud, ShapeSpec,
    Split,
};
use crate::geometry::{PointCloud, SpatialIndex};
use crate::networks::{
    registration_loss_graph, rotate_points_graph, rotation_error_deg, simplification_loss_graph,
    softmax_cross_entropy, AutoencoderModel, ClassifierModel, RegistrationModel, Rotation,
    SamplerModel, TaskKind, TaskModel, TaskNet, TaskTarget,
};
use crate::projection::{self, soft_project_graph, temperature_schedule, ScheduleValue};

use super::csv::{write_rows, Provenance};
use super::eval::sampler_outputs;
use super::{ExperimentConfig, HarnessError, OutputDir, Result, WeightLossKind};

// ---------------------------------------------------------------------------
// Gradient accumulation
// ---------------------------------------------------------------------------

struct GradAccum {
    sums: Vec<Vec<f64>>,
    count: usize,
}

impl GradAccum {
    fn new(params: &[Parameter]) -> Self {
        GradAccum {
            sums: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            count: 0,
        }
    }

    /// Add the gradients of one example. Leaves without a gradient (frozen
    /// or unused) contribute zero.
    fn add(&mut self, g: &Graph, leaves: &[TensorId]) {
        debug_assert_eq!(leaves.len(), self.sums.len());
        for (sum, &leaf) in self.sums.iter_mut().zip(leaves) {
            if let Some(grad) = g.grad(leaf) {
                for (s, &v) in sum.iter_mut().zip(grad) {
                    *s += v;
                }
            }
        }
        self.count += 1;
    }

    /// Mean over the batch, one optimizer step, reset.
    fn apply(&mut self, adam: &mut Adam, params: &mut [Parameter]) -> Result<()> {
        if self.count == 0 {
            return Ok(());
        }
        let scale = 1.0 / self.count as f64;
        for sum in &mut self.sums {
            for v in sum.iter_mut() {
                *v *= scale;
            }
        }
        adam.step(params, &self.sums)?;
        for sum in &mut self.sums {
            sum.iter_mut().for_each(|v| *v = 0.0);
        }
        self.count = 0;
        Ok(())
    }
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

fn decayed_lr(cfg_lr: f64, factor: f64, every: usize, epoch: usize) -> f64 {
    cfg_lr * factor.powi((epoch / every.max(1)) as i32)
}

// ---------------------------------------------------------------------------
// Registration data
// ---------------------------------------------------------------------------

/// A source/template pair with its ground-truth rotation. The source is the
/// rotated template with its point order re-shuffled, so no sampler can
/// exploit index correspondence between the two clouds.
pub struct RegPair {
    pub template: PointCloud,
    pub source: PointCloud,
    pub rotation: Rotation,
}

pub(crate) fn registration_pairs(
    cfg: &ExperimentConfig,
    split: Split,
    count: usize,
) -> Result<Vec<RegPair>> {
    let tag = match split {
        Split::Train => 0u64,
        Split::Validation => 1,
        Split::Test => 2,
    };
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        let spec = ShapeSpec::new(
            cfg.reg_class,
            cfg.jitter_sigma,
            (cfg.scale_min, cfg.scale_max),
            super::stream_seed("reg-template", &[cfg.seed, tag, i as u64]),
        )?;
        let template = generate_cloud(&spec, cfg.points)?;
        let (source, rotation) = make_registration_pair(
            &template,
            cfg.reg_angle_deg,
            super::stream_seed("reg-rotation", &[cfg.seed, tag, i as u64]),
        )?;
        let source = shuffle_points(
            &source,
            super::stream_seed("reg-shuffle", &[cfg.seed, tag, i as u64]),
        );
        pairs.push(RegPair {
            template,
            source,
            rotation,
        });
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Task training
// ---------------------------------------------------------------------------

pub struct TaskTrainOutcome {
    pub checkpoint: PathBuf,
    /// Test accuracy, mean test Chamfer, or mean rotation error.
    pub final_metric: f64,
    pub epoch_metrics: Vec<(usize, f64, f64)>,
}

/// Train the configured task network on complete clouds and save it.
/// Writes `config_resolved.txt`, `metrics.csv`, and `task.ckpt` into `out`.
pub fn train_task(cfg: &ExperimentConfig, out: &Path) -> Result<TaskTrainOutcome> {
    cfg.validate()?;
    let dir = OutputDir::claim(out)?;
    std::fs::write(dir.path().join("config_resolved.txt"), cfg.resolved_text())?;
    let provenance = Provenance::new(cfg.hash(), cfg.seed);

    let outcome = match cfg.task {
        TaskKind::Classification => train_classifier(cfg, dir.path(), &provenance)?,
        TaskKind::Reconstruction => train_autoencoder(cfg, dir.path(), &provenance)?,
        TaskKind::Registration => train_registration(cfg, dir.path(), &provenance)?,
    };
    Ok(outcome)
}

fn finite_or_diverged(loss: f64, epoch: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(HarnessError::Diverged { epoch })
    }
}

fn write_task_metrics(
    out: &Path,
    provenance: &Provenance,
    metric_name: &str,
    rows: &[(usize, f64, f64)],
) -> Result<()> {
    let body: Vec<String> = rows
        .iter()
        .map(|(e, l, m)| format!("{e},{l},{m}"))
        .collect();
    write_rows(
        &out.join("metrics.csv"),
        provenance,
        &format!("epoch,train_loss,{metric_name}"),
        &body,
    )
}

pub(crate) fn classification_accuracy<'a>(
    model: &ClassifierModel,
    items: impl Iterator<Item = (&'a PointCloud, usize)>,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (cloud, label) in items {
        if model.predict(cloud)? == label {
            correct += 1;
        }
        total += 1;
    }
    Ok(correct as f64 / total.max(1) as f64)
}

fn train_classifier(
    cfg: &ExperimentConfig,
    out: &Path,
    provenance: &Provenance,
) -> Result<TaskTrainOutcome> {
    let dataset = Dataset::generate(cfg.dataset_config())?;
    let train: Vec<&LabeledCloud> = dataset.split(Split::Train).collect();
    let test: Vec<&LabeledCloud> = dataset.split(Split::Test).collect();
    let mut model = ClassifierModel::new(
        cfg.classifier_config(),
        super::stream_seed("task-init", &[cfg.seed]),
    )?;
    let mut adam = Adam::new(cfg.lr_task);
    let mut rows = Vec::with_capacity(cfg.epochs_task);

    for epoch in 0..cfg.epochs_task {
        adam.lr = decayed_lr(cfg.lr_task, cfg.lr_decay_factor, cfg.lr_decay_every, epoch);
        let order = shuffled_indices(
            train.len(),
            super::stream_seed("task-order", &[cfg.seed, epoch as u64]),
        );
        let mut accum = GradAccum::new(&model.params);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let item = train[i];
            let mut g = Graph::new();
            let x = item.cloud.constant(&mut g);
            let fwd = model.forward(&mut g, x, true)?;
            let loss = softmax_cross_entropy(&mut g, fwd.logits, item.class_id)?;
            epoch_loss += finite_or_diverged(g.scalar_value(loss)?, epoch)?;
            g.backward(loss)?;
            accum.add(&g, &fwd.leaves);
            if accum.count == cfg.batch_size {
                accum.apply(&mut adam, &mut model.params)?;
            }
        }
        accum.apply(&mut adam, &mut model.params)?;
        let acc = classification_accuracy(
            &model,
            test.iter().map(|it| (&it.cloud, it.class_id)),
        )?;
        rows.push((epoch, epoch_loss / train.len() as f64, acc));
    }

    write_task_metrics(out, provenance, "test_accuracy", &rows)?;
    let checkpoint = out.join("task.ckpt");
    let task = TaskModel {
        net: TaskNet::Classifier(model),
        frozen: true,
    };
    super::save_task(&checkpoint, &task, cfg)?;
    Ok(TaskTrainOutcome {
        checkpoint,
        final_metric: rows.last().map_or(0.0, |r| r.2),
        epoch_metrics: rows,
    })
}

pub(crate) fn mean_test_chamfer<'a>(
    model: &AutoencoderModel,
    clouds: impl Iterator<Item = &'a PointCloud>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for cloud in clouds {
        let recon = model.reconstruct(cloud)?;
        total += crate::geometry::chamfer(cloud, &recon)?;
        count += 1;
    }
    Ok(total / count.max(1) as f64)
}

fn train_autoencoder(
    cfg: &ExperimentConfig,
    out: &Path,
    provenance: &Provenance,
) -> Result<TaskTrainOutcome> {
    let dataset = Dataset::generate(cfg.dataset_config())?;
    let train: Vec<&LabeledCloud> = dataset.split(Split::Train).collect();
    let test: Vec<&LabeledCloud> = dataset.split(Split::Test).collect();
    let mut model = AutoencoderModel::new(
        cfg.autoencoder_config(),
        super::stream_seed("task-init", &[cfg.seed]),
    )?;
    let mut adam = Adam::new(cfg.lr_task);
    let mut rows = Vec::with_capacity(cfg.epochs_task);

    for epoch in 0..cfg.epochs_task {
        adam.lr = decayed_lr(cfg.lr_task, cfg.lr_decay_factor, cfg.lr_decay_every, epoch);
        let order = shuffled_indices(
            train.len(),
            super::stream_seed("task-order", &[cfg.seed, epoch as u64]),
        );
        let mut accum = GradAccum::new(&model.params);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let item = train[i];
            let mut g = Graph::new();
            let x = item.cloud.constant(&mut g);
            let fwd = model.forward(&mut g, x, true)?;
            let target = item.cloud.constant(&mut g);
            let loss = crate::geometry::chamfer_graph(&mut g, fwd.reconstruction, target)?;
            epoch_loss += finite_or_diverged(g.scalar_value(loss)?, epoch)?;
            g.backward(loss)?;
            accum.add(&g, &fwd.leaves);
            if accum.count == cfg.batch_size {
                accum.apply(&mut adam, &mut model.params)?;
            }
        }
        accum.apply(&mut adam, &mut model.params)?;
        let cd = mean_test_chamfer(&model, test.iter().map(|it| &it.cloud))?;
        rows.push((epoch, epoch_loss / train.len() as f64, cd));
    }

    write_task_metrics(out, provenance, "test_chamfer", &rows)?;
    let checkpoint = out.join("task.ckpt");
    let task = TaskModel {
        net: TaskNet::Autoencoder(model),
        frozen: true,
    };
    super::save_task(&checkpoint, &task, cfg)?;
    Ok(TaskTrainOutcome {
        checkpoint,
        final_metric: rows.last().map_or(f64::INFINITY, |r| r.2),
        epoch_metrics: rows,
    })
}

pub(crate) fn registration_mre(
    model: &RegistrationModel,
    pairs: &[(PointCloud, PointCloud, Rotation)],
) -> Result<f64> {
    let mut total = 0.0;
    for (source, template, gt) in pairs {
        let mut g = Graph::new();
        let s = source.constant(&mut g);
        let t = template.constant(&mut g);
        let fwd = model.forward(&mut g, s, t, false)?;
        let q = g.value(fwd.quaternion);
        let pred = Rotation::from_quaternion([q[0], q[1], q[2], q[3]])?;
        total += rotation_error_deg(&pred, gt);
    }
    Ok(total / pairs.len().max(1) as f64)
}

fn train_registration(
    cfg: &ExperimentConfig,
    out: &Path,
    provenance: &Provenance,
) -> Result<TaskTrainOutcome> {
    let train = registration_pairs(cfg, Split::Train, cfg.reg_pairs_train)?;
    let test = registration_pairs(cfg, Split::Test, cfg.reg_pairs_test)?;
    let mut model = RegistrationModel::new(
        cfg.registration_config(),
        super::stream_seed("task-init", &[cfg.seed]),
    )?;
    let mut adam = Adam::new(cfg.lr_task);
    let mut rows = Vec::with_capacity(cfg.epochs_task);

    for epoch in 0..cfg.epochs_task {
        adam.lr = decayed_lr(cfg.lr_task, cfg.lr_decay_factor, cfg.lr_decay_every, epoch);
        let order = shuffled_indices(
            train.len(),
            super::stream_seed("task-order", &[cfg.seed, epoch as u64]),
        );
        let mut accum = GradAccum::new(&model.params);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let pair = &train[i];
            let mut g = Graph::new();
            let s = pair.source.constant(&mut g);
            let t = pair.template.constant(&mut g);
            let fwd = model.forward(&mut g, s, t, true)?;
            let registered = rotate_points_graph(&mut g, s, fwd.rotation_t)?;
            let loss =
                registration_loss_graph(&mut g, registered, t, fwd.rotation_t, &pair.rotation)?;
            epoch_loss += finite_or_diverged(g.scalar_value(loss)?, epoch)?;
            g.backward(loss)?;
            accum.add(&g, &fwd.leaves);
            if accum.count == cfg.batch_size {
                accum.apply(&mut adam, &mut model.params)?;
            }
        }
        accum.apply(&mut adam, &mut model.params)?;
        let eval_pairs: Vec<(PointCloud, PointCloud, Rotation)> = test
            .iter()
            .map(|p| (p.source.clone(), p.template.clone(), p.rotation))
            .collect();
        let mre = registration_mre(&model, &eval_pairs)?;
        rows.push((epoch, epoch_loss / train.len() as f64, mre));
    }

    write_task_metrics(out, provenance, "test_mre_deg", &rows)?;
    let checkpoint = out.join("task.ckpt");
    let task = TaskModel {
        net: TaskNet::Registration(model),
        frozen: true,
    };
    super::save_task(&checkpoint, &task, cfg)?;
    Ok(TaskTrainOutcome {
        checkpoint,
        final_metric: rows.last().map_or(f64::INFINITY, |r| r.2),
        epoch_metrics: rows,
    })
}

// ---------------------------------------------------------------------------
// Sampler training
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SamplerEpochLog {
    pub epoch: usize,
    pub t_squared: f64,
    /// Mean projection weight per neighbor rank over the test split.
    pub mean_weights: Vec<f64>,
    pub train_loss: f64,
    /// Task metric with hard-sampled points on the test split.
    pub test_metric: f64,
}

pub struct SamplerTrainOutcome {
    pub checkpoint: PathBuf,
    pub logs: Vec<SamplerEpochLog>,
}

/// Train a sampler against a frozen task checkpoint at `cfg.ratio`.
/// Writes `metrics.csv`, `temperature.csv`, `weights_evolution.csv`, and
/// `sampler.ckpt` into `out`.
pub fn train_sampler(
    cfg: &ExperimentConfig,
    task_checkpoint: &Path,
    out: &Path,
) -> Result<SamplerTrainOutcome> {
    cfg.validate()?;
    if cfg.progressive && !cfg.projection {
        return Err(HarnessError::Config(
            "progressive training requires the projection stage".into(),
        ));
    }
    if cfg.progressive && cfg.task == TaskKind::Registration {
        return Err(HarnessError::Config(
            "progressive mode is not supported for registration".into(),
        ));
    }
    let dir = OutputDir::claim(out)?;
    std::fs::write(dir.path().join("config_resolved.txt"), cfg.resolved_text())?;
    let provenance = Provenance::new(cfg.hash(), cfg.seed);

    let task = super::load_task(task_checkpoint, cfg.points)?;
    if task.kind() != cfg.task {
        return Err(HarnessError::Incompatible(format!(
            "task checkpoint is {:?}, experiment wants {:?}",
            task.kind().as_str(),
            cfg.task.as_str()
        )));
    }
    let m = cfg.points / cfg.ratio;
    let mut sampler = SamplerModel::new(
        cfg.sampler_config(m),
        super::stream_seed("sampler-init", &[cfg.seed, m as u64]),
    )?;
    let profile = cfg.temperature_profile();
    let logs = match cfg.task {
        TaskKind::Registration => train_sampler_registration(
            cfg,
            &task,
            &mut sampler,
            &profile,
        )?,
        _ => train_sampler_pointwise(cfg, &task, &mut sampler, &profile, m)?,
    };

    // Epoch logs out to CSV.
    let metric_name = match cfg.task {
        TaskKind::Classification => "test_accuracy",
        TaskKind::Reconstruction => "test_chamfer",
        TaskKind::Registration => "test_mre_deg",
    };
    write_task_metrics(
        dir.path(),
        &provenance,
        metric_name,
        &logs
            .iter()
            .map(|l| (l.epoch, l.train_loss, l.test_metric))
            .collect::<Vec<_>>(),
    )?;
    let t_rows: Vec<String> = logs
        .iter()
        .map(|l| format!("{},{}", l.epoch, l.t_squared))
        .collect();
    write_rows(
        &dir.path().join("temperature.csv"),
        &provenance,
        "epoch,t_squared",
        &t_rows,
    )?;
    let k = cfg.k;
    let mut w_header = String::from("epoch");
    for rank in 0..k {
        write!(w_header, ",w{rank}").unwrap();
    }
    let w_rows: Vec<String> = logs
        .iter()
        .map(|l| {
            let mut row = l.epoch.to_string();
            for rank in 0..k {
                write!(row, ",{}", l.mean_weights.get(rank).copied().unwrap_or(0.0)).unwrap();
            }
            row
        })
        .collect();
    write_rows(
        &dir.path().join("weights_evolution.csv"),
        &provenance,
        &w_header,
        &w_rows,
    )?;

    let checkpoint = dir.path().join("sampler.ckpt");
    super::save_sampler(&checkpoint, &sampler)?;
    Ok(SamplerTrainOutcome { checkpoint, logs })
}

fn apply_schedule(
    profile: &crate::projection::TemperatureProfile,
    sampler: &mut SamplerModel,
    epoch: usize,
    total: usize,
) -> Result<bool> {
    Ok(match temperature_schedule(profile, epoch, total)? {
        ScheduleValue::Learned { .. } => true,
        ScheduleValue::Fixed(t_sq) => {
            sampler.set_temperature(t_sq.sqrt());
            false
        }
    })
}

fn weight_regularizer(
    g: &mut Graph,
    cfg: &ExperimentConfig,
    weights: TensorId,
) -> Result<TensorId> {
    let loss = match cfg.eta_loss {
        WeightLossKind::CrossEntropy => projection::weight_cross_entropy_graph(g, weights)?,
        WeightLossKind::Entropy => projection::weight_entropy_graph(g, weights)?,
    };
    Ok(g.scale(loss, cfg.eta)?)
}

/// Mean projection weights per rank and the task metric on the test split.
fn test_split_stats(
    cfg: &ExperimentConfig,
    task: &TaskModel,
    sampler: &SamplerModel,
    m: usize,
    test: &[(PointCloud, SpatialIndex, usize)],
) -> Result<(Vec<f64>, f64)> {
    let mut weight_sums = vec![0.0; cfg.k];
    let mut metric_acc = 0.0;
    let mut correct = 0usize;
    for (cloud, index, label) in test {
        let outputs = sampler_outputs(sampler, cloud, index, m)?;
        for (rank, w) in outputs.state.mean_weight_by_rank().iter().enumerate() {
            weight_sums[rank] += w;
        }
        match &task.net {
            TaskNet::Classifier(model) => {
                if model.predict(&outputs.hard)? == *label {
                    correct += 1;
                }
            }
            TaskNet::Autoencoder(model) => {
                let recon = model.reconstruct(&outputs.hard)?;
                metric_acc += crate::geometry::chamfer(cloud, &recon)?;
            }
            TaskNet::Registration(_) => unreachable!("pointwise path"),
        }
    }
    let count = test.len().max(1) as f64;
    for w in &mut weight_sums {
        *w /= count;
    }
    let metric = match &task.net {
        TaskNet::Classifier(_) => correct as f64 / count,
        _ => metric_acc / count,
    };
    Ok((weight_sums, metric))
}

fn train_sampler_pointwise(
    cfg: &ExperimentConfig,
    task: &TaskModel,
    sampler: &mut SamplerModel,
    profile: &crate::projection::TemperatureProfile,
    m: usize,
) -> Result<Vec<SamplerEpochLog>> {
    let dataset = Dataset::generate(cfg.dataset_config())?;
    let train: Vec<(PointCloud, SpatialIndex, usize)> = dataset
        .split(Split::Train)
        .map(|it| {
            let index = SpatialIndex::build(&it.cloud);
            (it.cloud.clone(), index, it.class_id)
        })
        .collect();
    let test: Vec<(PointCloud, SpatialIndex, usize)> = dataset
        .split(Split::Test)
        .map(|it| {
            let index = SpatialIndex::build(&it.cloud);
            (it.cloud.clone(), index, it.class_id)
        })
        .collect();

    let mut adam = Adam::new(cfg.lr_sampler);
    let mut logs = Vec::with_capacity(cfg.epochs_sampler);
    let control_sizes = sampler.config.control_sizes.clone();

    for epoch in 0..cfg.epochs_sampler {
        adam.lr = decayed_lr(cfg.lr_sampler, cfg.lr_decay_factor, cfg.lr_decay_every, epoch);
        let learn_t = apply_schedule(profile, sampler, epoch, cfg.epochs_sampler)?;
        let order = shuffled_indices(
            train.len(),
            super::stream_seed("sampler-order", &[cfg.seed, epoch as u64]),
        );
        let mut accum = GradAccum::new(&sampler.params);
        let mut epoch_loss = 0.0;

        for &i in &order {
            let (cloud, index, label) = &train[i];
            let mut g = Graph::new();
            let x = cloud.constant(&mut g);
            let fwd = sampler.forward(&mut g, x, true, learn_t)?;
            let target = match cfg.task {
                TaskKind::Classification => TaskTarget::Class(*label),
                _ => TaskTarget::Reconstruction(cloud),
            };

            let total = if let Some(cs) = &control_sizes {
                crate::networks::progressive_total_loss_graph(
                    &mut g, &fwd, cs, cloud, index, cfg.k, task, &target, cfg.alpha, cfg.beta,
                    cfg.gamma, cfg.delta, cfg.lambda,
                )?
            } else {
                let (task_input, weights) = if cfg.projection {
                    let proj =
                        soft_project_graph(&mut g, cloud, index, fwd.simplified, cfg.k, fwd.temperature)?;
                    (proj.projected, Some(proj.weights))
                } else {
                    (fwd.simplified, None)
                };
                let task_loss =
                    crate::networks::task_loss_graph(&mut g, task, task_input, &target)?;
                let p_id = cloud.constant(&mut g);
                let simp = simplification_loss_graph(
                    &mut g,
                    fwd.simplified,
                    p_id,
                    cfg.beta,
                    cfg.gamma,
                    cfg.delta,
                )?;
                let weighted_simp = g.scale(simp, cfg.alpha)?;
                let mut total = g.add(task_loss, weighted_simp)?;
                if learn_t {
                    let proj_loss = projection::projection_loss(&mut g, fwd.temperature)?;
                    let weighted = g.scale(proj_loss, cfg.lambda)?;
                    total = g.add(total, weighted)?;
                }
                if cfg.eta > 0.0 {
                    if let Some(w) = weights {
                        let reg = weight_regularizer(&mut g, cfg, w)?;
                        total = g.add(total, reg)?;
                    }
                }
                total
            };

            epoch_loss += finite_or_diverged(g.scalar_value(total)?, epoch)?;
            g.backward(total)?;
            accum.add(&g, &fwd.leaves);
            if accum.count == cfg.batch_size {
                accum.apply(&mut adam, &mut sampler.params)?;
                if learn_t {
                    sampler.clip_temperature();
                }
            }
        }
        accum.apply(&mut adam, &mut sampler.params)?;
        if learn_t {
            sampler.clip_temperature();
        }

        let (mean_weights, test_metric) = test_split_stats(cfg, task, sampler, m, &test)?;
        logs.push(SamplerEpochLog {
            epoch,
            t_squared: sampler.temperature().powi(2),
            mean_weights,
            train_loss: epoch_loss / train.len() as f64,
            test_metric,
        });
    }
    Ok(logs)
}

fn train_sampler_registration(
    cfg: &ExperimentConfig,
    task: &TaskModel,
    sampler: &mut SamplerModel,
    profile: &crate::projection::TemperatureProfile,
) -> Result<Vec<SamplerEpochLog>> {
    let model = task
        .registration()
        .expect("registration sampler trains against a registration task");
    let m = cfg.points / cfg.ratio;
    let train: Vec<(RegPair, SpatialIndex, SpatialIndex)> =
        registration_pairs(cfg, Split::Train, cfg.reg_pairs_train)?
            .into_iter()
            .map(|p| {
                let si = SpatialIndex::build(&p.source);
                let ti = SpatialIndex::build(&p.template);
                (p, si, ti)
            })
            .collect();
    let test: Vec<(RegPair, SpatialIndex, SpatialIndex)> =
        registration_pairs(cfg, Split::Test, cfg.reg_pairs_test)?
            .into_iter()
            .map(|p| {
                let si = SpatialIndex::build(&p.source);
                let ti = SpatialIndex::build(&p.template);
                (p, si, ti)
            })
            .collect();

    let mut adam = Adam::new(cfg.lr_sampler);
    let mut logs = Vec::with_capacity(cfg.epochs_sampler);

    for epoch in 0..cfg.epochs_sampler {
        adam.lr = decayed_lr(cfg.lr_sampler, cfg.lr_decay_factor, cfg.lr_decay_every, epoch);
        let learn_t = apply_schedule(profile, sampler, epoch, cfg.epochs_sampler)?;
        let order = shuffled_indices(
            train.len(),
            super::stream_seed("sampler-order", &[cfg.seed, epoch as u64]),
        );
        let mut accum = GradAccum::new(&sampler.params);
        let mut epoch_loss = 0.0;

        for &i in &order {
            let (pair, src_index, tpl_index) = &train[i];
            let mut g = Graph::new();
            let xs = pair.source.constant(&mut g);
            let xt = pair.template.constant(&mut g);
            let (outputs, leaves, t_leaf) =
                sampler.forward_shared(&mut g, &[xs, xt], true, learn_t)?;
            let (q_s, q_t) = (outputs[0], outputs[1]);

            let (in_s, in_t, weights) = if cfg.projection {
                let proj_s =
                    soft_project_graph(&mut g, &pair.source, src_index, q_s, cfg.k, t_leaf)?;
                let proj_t =
                    soft_project_graph(&mut g, &pair.template, tpl_index, q_t, cfg.k, t_leaf)?;
                (proj_s.projected, proj_t.projected, Some(proj_s.weights))
            } else {
                (q_s, q_t, None)
            };
            let fwd = model.forward(&mut g, in_s, in_t, false)?;
            let registered = rotate_points_graph(&mut g, in_s, fwd.rotation_t)?;
            let task_loss =
                registration_loss_graph(&mut g, registered, in_t, fwd.rotation_t, &pair.rotation)?;

            let simp_s = simplification_loss_graph(&mut g, q_s, xs, cfg.beta, cfg.gamma, cfg.delta)?;
            let simp_t = simplification_loss_graph(&mut g, q_t, xt, cfg.beta, cfg.gamma, cfg.delta)?;
            let simp = g.add(simp_s, simp_t)?;
            let weighted_simp = g.scale(simp, cfg.alpha)?;
            let mut total = g.add(task_loss, weighted_simp)?;
            if learn_t {
                let proj_loss = projection::projection_loss(&mut g, t_leaf)?;
                let weighted = g.scale(proj_loss, cfg.lambda)?;
                total = g.add(total, weighted)?;
            }
            if cfg.eta > 0.0 {
                if let Some(w) = weights {
                    let reg = weight_regularizer(&mut g, cfg, w)?;
                    total = g.add(total, reg)?;
                }
            }

            epoch_loss += finite_or_diverged(g.scalar_value(total)?, epoch)?;
            g.backward(total)?;
            accum.add(&g, &leaves);
            if accum.count == cfg.batch_size {
                accum.apply(&mut adam, &mut sampler.params)?;
                if learn_t {
                    sampler.clip_temperature();
                }
            }
        }
        accum.apply(&mut adam, &mut sampler.params)?;
        if learn_t {
            sampler.clip_temperature();
        }

        // Test-split stats: weights averaged over sampled sources, MRE over
        // hard-sampled pairs.
        let mut weight_sums = vec![0.0; cfg.k];
        let mut mre_total = 0.0;
        for (pair, src_index, tpl_index) in &test {
            let out_s = sampler_outputs(sampler, &pair.source, src_index, m)?;
            let out_t = sampler_outputs(sampler, &pair.template, tpl_index, m)?;
            for (rank, w) in out_s.state.mean_weight_by_rank().iter().enumerate() {
                weight_sums[rank] += w;
            }
            let eval_pair = [(out_s.hard, out_t.hard, pair.rotation)];
            mre_total += registration_mre(model, &eval_pair)?;
        }
        let count = test.len().max(1) as f64;
        for w in &mut weight_sums {
            *w /= count;
        }
        logs.push(SamplerEpochLog {
            epoch,
            t_squared: sampler.temperature().powi(2),
            mean_weights: weight_sums,
            train_loss: epoch_loss / train.len() as f64,
            test_metric: mre_total / count,
        });
    }
    Ok(logs)
}
