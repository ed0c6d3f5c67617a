//! Command line interface for the sampling experiments.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use samplenet::data::Dataset;
use samplenet::harness::{self, ArchPreset, ExperimentConfig, SamplerSource, Strategy, Sweep};
use samplenet::networks::TaskKind;

#[derive(Parser)]
#[command(
    name = "samplenet",
    version,
    about = "Learned, task-aware point cloud sampling: train task networks, \
             train samplers, evaluate strategies, and profile compute"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config file; defaults depend on the task.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task when no config file sets one.
    #[arg(long)]
    task: Option<String>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (one experiment per directory).
    #[arg(long)]
    out: PathBuf,
    /// Override the config's evaluation ratios, e.g. `2,4,8`.
    #[arg(long)]
    ratios: Option<String>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)
                .with_context(|| format!("reading {}", path.display()))?,
            None => {
                let task: TaskKind = self
                    .task
                    .as_deref()
                    .unwrap_or("classification")
                    .parse()
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                ExperimentConfig::default_for(task)
            }
        };
        if let Some(task) = &self.task {
            cfg.set("task", task)?;
        }
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        if let Some(ratios) = &self.ratios {
            cfg.set("ratios", ratios)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset as XYZ files plus a manifest CSV.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the task network on complete clouds and save a checkpoint.
    TrainTask {
        #[command(flatten)]
        common: Common,
    },
    /// Train a sampler against a frozen task checkpoint.
    TrainSampler {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        task_checkpoint: PathBuf,
        /// Sampling ratio n/m for this sampler.
        #[arg(long)]
        ratio: Option<usize>,
        /// Temperature profile: learned, constant, linear, exponential.
        #[arg(long)]
        profile_kind: Option<String>,
        /// Emit n ordered points serving every power-of-two prefix.
        #[arg(long)]
        progressive: bool,
        /// Train the task loss on the simplified set, skipping projection.
        #[arg(long)]
        no_projection: bool,
    },
    /// Evaluate sampling strategies against a frozen task checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        task_checkpoint: PathBuf,
        /// Fixed-size sampler checkpoints (ratio read from each file).
        #[arg(long)]
        sampler_checkpoint: Vec<PathBuf>,
        /// A progressive checkpoint serving every ratio.
        #[arg(long)]
        progressive: bool,
        /// Restrict to one strategy (default: all applicable).
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Sweep temperature profiles, neighborhood sizes, or weight losses.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        task_checkpoint: PathBuf,
        /// One of: profiles, k, eta.
        #[arg(long)]
        sweep: String,
        #[arg(long)]
        ratio: Option<usize>,
        #[arg(long)]
        profile_kind: Option<String>,
    },
    /// Report MACs, parameters, and compute/memory trade-offs per ratio.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Architecture preset: paper (1024 points) or desk.
        #[arg(long, default_value = "desk")]
        preset: String,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::GenData { common } => {
            let cfg = common.resolve()?;
            let dataset = Dataset::generate(cfg.dataset_config())?;
            dataset.save(&common.out)?;
            std::fs::write(common.out.join("config_resolved.txt"), cfg.resolved_text())?;
            println!(
                "wrote {} clouds and manifest.csv to {}",
                dataset.items.len(),
                common.out.display()
            );
        }
        Command::TrainTask { common } => {
            let cfg = common.resolve()?;
            let outcome = harness::train_task(&cfg, &common.out)?;
            println!(
                "trained {} task: final metric {:.4}, checkpoint {}",
                cfg.task.as_str(),
                outcome.final_metric,
                outcome.checkpoint.display()
            );
        }
        Command::TrainSampler {
            common,
            task_checkpoint,
            ratio,
            profile_kind,
            progressive,
            no_projection,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(r) = ratio {
                cfg.set("ratio", &r.to_string())?;
            }
            if let Some(kind) = profile_kind {
                cfg.set("profile", &kind)?;
            }
            if progressive {
                cfg.set("progressive", "true")?;
            }
            if no_projection {
                cfg.set("projection", "false")?;
            }
            cfg.validate()?;
            let outcome = harness::train_sampler(&cfg, &task_checkpoint, &common.out)?;
            let last = outcome.logs.last().expect("at least one epoch");
            println!(
                "trained sampler (ratio {}): test metric {:.4}, t^2 {:.4}, checkpoint {}",
                cfg.ratio,
                last.test_metric,
                last.t_squared,
                outcome.checkpoint.display()
            );
        }
        Command::Eval {
            common,
            task_checkpoint,
            sampler_checkpoint,
            progressive,
            strategy,
        } => {
            let cfg = common.resolve()?;
            let strategies: Vec<Strategy> = match &strategy {
                Some(s) => vec![s.parse()?],
                None if sampler_checkpoint.is_empty() => {
                    vec![Strategy::Random, Strategy::Fps]
                }
                None => Strategy::all().to_vec(),
            };
            let source = if sampler_checkpoint.is_empty() {
                SamplerSource::None
            } else if progressive {
                if sampler_checkpoint.len() != 1 {
                    bail!("--progressive takes exactly one sampler checkpoint");
                }
                SamplerSource::Progressive(sampler_checkpoint[0].clone())
            } else {
                let mut map = BTreeMap::new();
                for path in &sampler_checkpoint {
                    let sampler = harness::load_sampler(path, cfg.points)?;
                    let m = sampler.config.output_points;
                    if cfg.points % m != 0 {
                        bail!(
                            "sampler {} outputs {m} points, which is not a divisor ratio of {}",
                            path.display(),
                            cfg.points
                        );
                    }
                    map.insert(cfg.points / m, path.clone());
                }
                SamplerSource::PerRatio(map)
            };
            let report =
                harness::evaluate(&cfg, &task_checkpoint, &source, &strategies, &common.out)?;
            for row in &report.rows {
                let consistency = row
                    .consistency
                    .map(|c| format!(", consistency {c:.6}"))
                    .unwrap_or_default();
                println!(
                    "{:>28} ratio {:>3}: {} = {:.4}{}",
                    row.strategy.as_str(),
                    row.ratio,
                    row.metric_name,
                    row.metric,
                    consistency
                );
            }
            println!(
                "report written to {}",
                common.out.join("report.csv").display()
            );
        }
        Command::Ablate {
            common,
            task_checkpoint,
            sweep,
            ratio,
            profile_kind,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(r) = ratio {
                cfg.set("ratio", &r.to_string())?;
            }
            if let Some(kind) = profile_kind {
                cfg.set("profile", &kind)?;
            }
            cfg.validate()?;
            let sweep: Sweep = sweep.parse()?;
            let rows = harness::ablate(&cfg, &task_checkpoint, sweep, &common.out)?;
            for row in &rows {
                println!(
                    "{:>12} {:>24} ratio {:>3}: metric {:.4}, first-NN weight {:.4}",
                    row.sweep, row.variant, row.ratio, row.metric, row.first_nn_weight
                );
            }
        }
        Command::Profile { common, preset } => {
            let cfg = common.resolve()?;
            let preset: ArchPreset = preset.parse()?;
            let rows = harness::profile_report(&cfg, preset)?;
            println!(
                "{:>6} {:>6} {:>14} {:>14} {:>14} {:>10} {:>10} {:>8} {:>8}",
                "ratio",
                "m",
                "sampler_macs",
                "task_macs_m",
                "task_macs_n",
                "s_params",
                "t_params",
                "CR%",
                "MI%"
            );
            for r in &rows {
                println!(
                    "{:>6} {:>6} {:>14} {:>14} {:>14} {:>10} {:>10} {:>8.2} {:>8.2}",
                    r.ratio,
                    r.m,
                    r.sampler_macs,
                    r.task_macs_sampled,
                    r.task_macs_full,
                    r.sampler_params,
                    r.task_params,
                    r.cr,
                    r.mi
                );
            }
            std::fs::create_dir_all(&common.out)?;
            let csv_path = common.out.join("profile.csv");
            harness::write_profile_csv(&cfg, &rows, &csv_path)?;
            println!("profile written to {}", csv_path.display());
        }
    }
    Ok(())
}
