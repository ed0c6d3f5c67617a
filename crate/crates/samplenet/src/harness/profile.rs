//! The compute/memory profiling command: MACs, parameter counts, and the
//! computation-reduction / memory-increase percentages per sampling ratio.

use std::path::Path;

use crate::networks::macs::{
    classifier_arch, mac_memory_report, paper_sampler_arch, paper_task_arch, sampler_arch,
};

use super::csv::{write_rows, Provenance};
use super::{ExperimentConfig, HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchPreset {
    /// Full-scale networks at 1024 input points.
    Paper,
    /// The architectures this experiment actually trains.
    Desk,
}

impl std::str::FromStr for ArchPreset {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(ArchPreset::Paper),
            "desk" => Ok(ArchPreset::Desk),
            other => Err(HarnessError::Config(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProfileRow {
    pub ratio: usize,
    pub m: usize,
    pub sampler_macs: u64,
    pub task_macs_sampled: u64,
    pub task_macs_full: u64,
    pub sampler_params: u64,
    pub task_params: u64,
    pub cr: f64,
    pub mi: f64,
}

pub fn profile_report(cfg: &ExperimentConfig, preset: ArchPreset) -> Result<Vec<ProfileRow>> {
    let n = match preset {
        ArchPreset::Paper => 1024,
        ArchPreset::Desk => cfg.points,
    };
    let mut rows = Vec::new();
    for &ratio in &cfg.ratios {
        if ratio == 0 || n % ratio != 0 {
            return Err(HarnessError::Config(format!(
                "ratio {ratio} does not divide {n} points"
            )));
        }
        let m = n / ratio;
        let (sampler, task) = match preset {
            ArchPreset::Paper => (paper_sampler_arch(m), paper_task_arch()),
            ArchPreset::Desk => (
                sampler_arch(&cfg.sampler_conv, &cfg.sampler_fc, m),
                classifier_arch(&cfg.task_conv, &cfg.task_fc, cfg.classes),
            ),
        };
        let report = mac_memory_report(&sampler, &task, n, m);
        rows.push(ProfileRow {
            ratio,
            m,
            sampler_macs: report.sampler_macs,
            task_macs_sampled: report.task_macs_sampled,
            task_macs_full: report.task_macs_full,
            sampler_params: report.sampler_params,
            task_params: report.task_params,
            cr: report.cr,
            mi: report.mi,
        });
    }
    Ok(rows)
}

pub fn write_profile_csv(
    cfg: &ExperimentConfig,
    rows: &[ProfileRow],
    path: &Path,
) -> Result<()> {
    let provenance = Provenance::new(cfg.hash(), cfg.seed);
    let body: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                r.ratio,
                r.m,
                r.sampler_macs,
                r.task_macs_sampled,
                r.task_macs_full,
                r.sampler_params,
                r.task_params,
                r.cr,
                r.mi
            )
        })
        .collect();
    write_rows(
        path,
        &provenance,
        "ratio,m,sampler_macs,task_macs_sampled,task_macs_full,sampler_params,task_params,cr_percent,mi_percent",
        &body,
    )
}
