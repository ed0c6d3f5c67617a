//! Saving and loading task and sampler models with enough metadata to
//! rebuild their configurations and reject incompatible combinations.

use std::collections::BTreeMap;
use std::path::Path;

use crate::autodiff::checkpoint;
use crate::networks::{
    AutoencoderConfig, AutoencoderModel, ClassifierConfig, ClassifierModel, RegistrationConfig,
    RegistrationModel, SamplerConfig, SamplerModel, TaskKind, TaskModel, TaskNet,
};

use super::{ExperimentConfig, HarnessError, Result};

fn fmt_list(v: &[usize]) -> String {
    v.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| HarnessError::Incompatible(format!("bad width list {s:?}")))
        })
        .collect()
}

fn get<'a>(meta: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| HarnessError::Incompatible(format!("checkpoint missing meta {key:?}")))
}

fn get_num<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    get(meta, key)?
        .parse()
        .map_err(|_| HarnessError::Incompatible(format!("bad meta value for {key:?}")))
}

pub fn save_task(path: &Path, task: &TaskModel, cfg: &ExperimentConfig) -> Result<()> {
    let mut meta = BTreeMap::new();
    meta.insert("model".into(), "task".into());
    meta.insert("kind".into(), task.kind().as_str().into());
    meta.insert("points".into(), cfg.points.to_string());
    meta.insert("conv".into(), fmt_list(&cfg.task_conv));
    meta.insert("fc".into(), fmt_list(&cfg.task_fc));
    match task.kind() {
        TaskKind::Classification => {
            meta.insert("classes".into(), cfg.classes.to_string());
        }
        TaskKind::Reconstruction => {
            meta.insert("latent".into(), cfg.latent.to_string());
        }
        TaskKind::Registration => {}
    }
    checkpoint::save(path, &meta, task.params())?;
    Ok(())
}

/// Load a frozen task model. Errors when the checkpoint was trained for a
/// different input size than `expected_points`.
pub fn load_task(path: &Path, expected_points: usize) -> Result<TaskModel> {
    let (meta, params) = checkpoint::load(path)?;
    if get(&meta, "model")? != "task" {
        return Err(HarnessError::Incompatible(
            "not a task checkpoint".into(),
        ));
    }
    let points: usize = get_num(&meta, "points")?;
    if points != expected_points {
        return Err(HarnessError::Incompatible(format!(
            "task checkpoint trained for {points} points, experiment uses {expected_points}"
        )));
    }
    let conv = parse_list(get(&meta, "conv")?)?;
    let fc = parse_list(get(&meta, "fc")?)?;
    let kind: TaskKind = get(&meta, "kind")?
        .parse()
        .map_err(|e: crate::networks::NetworkError| HarnessError::Incompatible(e.to_string()))?;
    let net = match kind {
        TaskKind::Classification => {
            let classes = get_num(&meta, "classes")?;
            let mut model = ClassifierModel::new(
                ClassifierConfig {
                    conv_filters: conv,
                    fc_hidden: fc,
                    classes,
                },
                0,
            )?;
            replace_params(&mut model.params, params)?;
            TaskNet::Classifier(model)
        }
        TaskKind::Reconstruction => {
            let latent = get_num(&meta, "latent")?;
            let mut model = AutoencoderModel::new(
                AutoencoderConfig {
                    conv_filters: conv,
                    latent,
                    fc_hidden: vec![2 * latent],
                    output_points: points,
                },
                0,
            )?;
            replace_params(&mut model.params, params)?;
            TaskNet::Autoencoder(model)
        }
        TaskKind::Registration => {
            let mut model = RegistrationModel::new(
                RegistrationConfig {
                    conv_filters: conv,
                    fc_hidden: fc,
                },
                0,
            )?;
            replace_params(&mut model.params, params)?;
            TaskNet::Registration(model)
        }
    };
    Ok(TaskModel { net, frozen: true })
}

pub fn save_sampler(path: &Path, sampler: &SamplerModel) -> Result<()> {
    let cfg = &sampler.config;
    let mut meta = BTreeMap::new();
    meta.insert("model".into(), "sampler".into());
    meta.insert("points".into(), cfg.input_points.to_string());
    meta.insert("m".into(), cfg.output_points.to_string());
    meta.insert("k".into(), cfg.k.to_string());
    meta.insert("conv".into(), fmt_list(&cfg.conv_filters));
    meta.insert("fc".into(), fmt_list(&cfg.fc_hidden));
    meta.insert("alpha".into(), cfg.alpha.to_string());
    meta.insert("beta".into(), cfg.beta.to_string());
    meta.insert("gamma".into(), cfg.gamma.to_string());
    meta.insert("delta".into(), cfg.delta.to_string());
    meta.insert("lambda".into(), cfg.lambda.to_string());
    meta.insert("t_init".into(), cfg.t_init.to_string());
    meta.insert("t_floor".into(), cfg.t_floor.to_string());
    if let Some(cs) = &cfg.control_sizes {
        meta.insert("control_sizes".into(), fmt_list(cs));
    }
    checkpoint::save(path, &meta, &sampler.params)?;
    Ok(())
}

pub fn load_sampler(path: &Path, expected_points: usize) -> Result<SamplerModel> {
    let (meta, params) = checkpoint::load(path)?;
    if get(&meta, "model")? != "sampler" {
        return Err(HarnessError::Incompatible("not a sampler checkpoint".into()));
    }
    let points: usize = get_num(&meta, "points")?;
    if points != expected_points {
        return Err(HarnessError::Incompatible(format!(
            "sampler checkpoint trained for {points} points, experiment uses {expected_points}"
        )));
    }
    let config = SamplerConfig {
        input_points: points,
        conv_filters: parse_list(get(&meta, "conv")?)?,
        fc_hidden: parse_list(get(&meta, "fc")?)?,
        output_points: get_num(&meta, "m")?,
        k: get_num(&meta, "k")?,
        alpha: get_num(&meta, "alpha")?,
        beta: get_num(&meta, "beta")?,
        gamma: get_num(&meta, "gamma")?,
        delta: get_num(&meta, "delta")?,
        lambda: get_num(&meta, "lambda")?,
        t_init: get_num(&meta, "t_init")?,
        t_floor: get_num(&meta, "t_floor")?,
        control_sizes: match meta.get("control_sizes") {
            Some(s) => Some(parse_list(s)?),
            None => None,
        },
    };
    Ok(SamplerModel::from_params(config, params)?)
}

fn replace_params(
    slot: &mut Vec<crate::autodiff::Parameter>,
    loaded: Vec<crate::autodiff::Parameter>,
) -> Result<()> {
    if slot.len() != loaded.len()
        || slot
            .iter()
            .zip(&loaded)
            .any(|(a, b)| a.name != b.name || a.shape != b.shape)
    {
        return Err(HarnessError::Incompatible(
            "checkpoint parameters do not match the declared architecture".into(),
        ));
    }
    *slot = loaded;
    Ok(())
}
