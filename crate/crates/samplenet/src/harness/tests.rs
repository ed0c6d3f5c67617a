use super::*;
use crate::networks::TaskKind;

fn tiny_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(TaskKind::Classification);
    cfg.classes = 3;
    cfg.clouds_per_class = 8;
    cfg.points = 32;
    cfg.split_train = 0.75;
    cfg.split_val = 0.0;
    cfg.split_test = 0.25;
    cfg.task_conv = vec![8, 16];
    cfg.task_fc = vec![8];
    cfg.sampler_conv = vec![8];
    cfg.sampler_fc = vec![16];
    cfg.k = 3;
    cfg.epochs_task = 3;
    cfg.epochs_sampler = 2;
    cfg.batch_size = 4;
    cfg.ratio = 4;
    cfg.ratios = vec![2, 4];
    cfg
}

#[test]
fn config_text_round_trip() {
    let cfg = tiny_cfg();
    let text = cfg.resolved_text();
    let parsed = ExperimentConfig::from_text(&text).unwrap();
    assert_eq!(parsed.resolved_text(), text);
    assert_eq!(parsed.hash(), cfg.hash());
}

#[test]
fn config_rejects_unknown_keys_and_bad_ratios() {
    assert!(ExperimentConfig::from_text("frobnicate = 1").is_err());
    assert!(ExperimentConfig::from_text("points = 100\nratios = 3").is_err());
    let e = ExperimentConfig::from_text("task = classification\nratio = 7").unwrap_err();
    assert!(e.to_string().contains("ratio"), "{e}");
}

#[test]
fn config_task_defaults_follow_the_task() {
    let cls = ExperimentConfig::default_for(TaskKind::Classification);
    assert_eq!(cls.k, 7);
    assert_eq!(cls.alpha, 30.0);
    assert_eq!(cls.lambda, 1.0);
    assert_eq!(cls.batch_size, 32);
    let reg = ExperimentConfig::default_for(TaskKind::Registration);
    assert_eq!(reg.k, 8);
    assert_eq!(reg.t_floor, 0.1);
    assert_eq!(reg.lr_task, 0.001);
    let rec = ExperimentConfig::default_for(TaskKind::Reconstruction);
    assert_eq!(rec.k, 16);
    assert_eq!(rec.delta, 1.0 / 64.0);
    assert_eq!(rec.lambda, 0.0001);
    assert_eq!(rec.batch_size, 50);

    // The task key in a file switches the defaults even when it appears last.
    let parsed = ExperimentConfig::from_text("task = reconstruction").unwrap();
    assert_eq!(parsed.k, 16);
}

#[test]
fn output_dir_lock_is_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let first = OutputDir::claim(dir.path()).unwrap();
    assert!(matches!(
        OutputDir::claim(dir.path()),
        Err(HarnessError::LockHeld(_))
    ));
    drop(first);
    OutputDir::claim(dir.path()).unwrap();
}

#[test]
fn stream_seed_separates_purposes() {
    assert_ne!(stream_seed("a", &[1]), stream_seed("b", &[1]));
    assert_ne!(stream_seed("a", &[1]), stream_seed("a", &[2]));
    assert_eq!(stream_seed("a", &[1, 2]), stream_seed("a", &[1, 2]));
}

#[test]
fn classifier_trains_and_checkpoint_round_trips() {
    let cfg = tiny_cfg();
    let dir = tempfile::tempdir().unwrap();
    let outcome = train_task(&cfg, dir.path()).unwrap();
    assert!(outcome.checkpoint.exists());
    assert!(dir.path().join("metrics.csv").exists());
    assert!(dir.path().join("config_resolved.txt").exists());
    assert!(!dir.path().join(".lock").exists(), "lock released");

    let task = load_task(&outcome.checkpoint, cfg.points).unwrap();
    assert_eq!(task.kind(), TaskKind::Classification);
    assert!(task.frozen);
    // Wrong point count is rejected.
    assert!(matches!(
        load_task(&outcome.checkpoint, 64),
        Err(HarnessError::Incompatible(_))
    ));
}

#[test]
fn task_training_is_deterministic() {
    let cfg = tiny_cfg();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let a = train_task(&cfg, d1.path()).unwrap();
    let b = train_task(&cfg, d2.path()).unwrap();
    assert_eq!(a.epoch_metrics, b.epoch_metrics);
    let ca = std::fs::read(&a.checkpoint).unwrap();
    let cb = std::fs::read(&b.checkpoint).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn sampler_trains_logs_and_freezes_the_task() {
    let cfg = tiny_cfg();
    let dir = tempfile::tempdir().unwrap();
    let task_out = train_task(&cfg, &dir.path().join("task")).unwrap();
    let task_bytes = std::fs::read(&task_out.checkpoint).unwrap();

    let outcome = train_sampler(&cfg, &task_out.checkpoint, &dir.path().join("sampler")).unwrap();
    assert_eq!(outcome.logs.len(), cfg.epochs_sampler);
    for log in &outcome.logs {
        assert_eq!(log.mean_weights.len(), cfg.k);
        let sum: f64 = log.mean_weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6, "rank means sum to 1: {sum}");
        assert!(log.t_squared > 0.0);
    }
    for name in ["metrics.csv", "temperature.csv", "weights_evolution.csv"] {
        assert!(dir.path().join("sampler").join(name).exists(), "{name}");
    }
    // The frozen task checkpoint is untouched, byte for byte.
    assert_eq!(task_bytes, std::fs::read(&task_out.checkpoint).unwrap());

    let sampler = load_sampler(&outcome.checkpoint, cfg.points).unwrap();
    assert_eq!(sampler.config.output_points, cfg.points / cfg.ratio);
}

#[test]
fn evaluation_covers_strategies_and_is_byte_deterministic() {
    let cfg = tiny_cfg();
    let dir = tempfile::tempdir().unwrap();
    let task_out = train_task(&cfg, &dir.path().join("task")).unwrap();
    let sampler_out =
        train_sampler(&cfg, &task_out.checkpoint, &dir.path().join("sampler")).unwrap();

    let mut map = std::collections::BTreeMap::new();
    map.insert(4usize, sampler_out.checkpoint.clone());
    let mut cfg_eval = cfg.clone();
    cfg_eval.ratios = vec![4];
    let source = SamplerSource::PerRatio(map);

    let report = evaluate(
        &cfg_eval,
        &task_out.checkpoint,
        &source,
        &Strategy::all(),
        &dir.path().join("eval1"),
    )
    .unwrap();
    assert_eq!(report.rows.len(), 5);
    for row in &report.rows {
        assert!((0.0..=1.0).contains(&row.metric), "{:?}", row);
    }

    // Same config and seed: byte-identical report.csv in a fresh directory.
    evaluate(
        &cfg_eval,
        &task_out.checkpoint,
        &source,
        &Strategy::all(),
        &dir.path().join("eval2"),
    )
    .unwrap();
    let a = std::fs::read(dir.path().join("eval1/report.csv")).unwrap();
    let b = std::fs::read(dir.path().join("eval2/report.csv")).unwrap();
    assert_eq!(a, b);

    // Checkpoints were only read.
    assert!(std::fs::metadata(&task_out.checkpoint).unwrap().is_file());

    // Missing sampler for a sampler strategy errors.
    let err = evaluate(
        &cfg_eval,
        &task_out.checkpoint,
        &SamplerSource::None,
        &[Strategy::SampleNet],
        &dir.path().join("eval3"),
    );
    assert!(matches!(err, Err(HarnessError::MissingSampler(_))));
}

#[test]
fn fps_at_ratio_one_matches_complete_input_metric() {
    let cfg = {
        let mut c = tiny_cfg();
        c.ratios = vec![1];
        c
    };
    let dir = tempfile::tempdir().unwrap();
    let task_out = train_task(&cfg, &dir.path().join("task")).unwrap();
    let report = evaluate(
        &cfg,
        &task_out.checkpoint,
        &SamplerSource::None,
        &[Strategy::Fps],
        &dir.path().join("eval"),
    )
    .unwrap();
    // m = n: FPS returns a permutation, and the classifier is permutation
    // invariant, so the metric equals the complete-input metric.
    assert!((report.rows[0].metric - task_out.final_metric).abs() < 1e-12);
}

#[test]
fn progressive_sampler_serves_multiple_ratios() {
    let mut cfg = tiny_cfg();
    cfg.progressive = true;
    cfg.epochs_sampler = 1;
    let dir = tempfile::tempdir().unwrap();
    let task_out = train_task(&cfg, &dir.path().join("task")).unwrap();
    let sampler_out =
        train_sampler(&cfg, &task_out.checkpoint, &dir.path().join("sampler")).unwrap();
    let sampler = load_sampler(&sampler_out.checkpoint, cfg.points).unwrap();
    assert_eq!(sampler.config.output_points, cfg.points);
    assert_eq!(
        sampler.config.control_sizes.as_deref(),
        Some(&[2, 4, 8, 16, 32][..])
    );

    let report = evaluate(
        &cfg,
        &task_out.checkpoint,
        &SamplerSource::Progressive(sampler_out.checkpoint.clone()),
        &[Strategy::SampleNet],
        &dir.path().join("eval"),
    )
    .unwrap();
    assert_eq!(report.rows.len(), 2); // ratios 2 and 4
}

#[test]
fn registration_pipeline_end_to_end() {
    let mut cfg = ExperimentConfig::default_for(TaskKind::Registration);
    cfg.points = 32;
    cfg.reg_pairs_train = 8;
    cfg.reg_pairs_test = 4;
    cfg.task_conv = vec![8, 16];
    cfg.task_fc = vec![16];
    cfg.sampler_conv = vec![8];
    cfg.sampler_fc = vec![16];
    cfg.k = 3;
    cfg.epochs_task = 2;
    cfg.epochs_sampler = 1;
    cfg.batch_size = 4;
    cfg.ratio = 4;
    cfg.ratios = vec![4];

    let dir = tempfile::tempdir().unwrap();
    let task_out = train_task(&cfg, &dir.path().join("task")).unwrap();
    let sampler_out =
        train_sampler(&cfg, &task_out.checkpoint, &dir.path().join("sampler")).unwrap();
    let mut map = std::collections::BTreeMap::new();
    map.insert(4usize, sampler_out.checkpoint);
    let report = evaluate(
        &cfg,
        &task_out.checkpoint,
        &SamplerSource::PerRatio(map),
        &[Strategy::Fps, Strategy::SampleNet],
        &dir.path().join("eval"),
    )
    .unwrap();
    for row in &report.rows {
        assert!(row.metric >= 0.0, "MRE nonnegative");
        let c = row.consistency.expect("registration reports consistency");
        assert!(c >= 0.0);
    }
    // FPS consistency must be positive: the source order is shuffled, so
    // start-index-0 lands on different points in the two clouds.
    let fps_row = report
        .rows
        .iter()
        .find(|r| r.strategy == Strategy::Fps)
        .unwrap();
    assert!(fps_row.consistency.unwrap() > 0.0);
}

#[test]
fn profile_rows_paper_preset() {
    let mut cfg = ExperimentConfig::default_for(TaskKind::Classification);
    cfg.ratios = vec![2, 32];
    let rows = profile_report(&cfg, ArchPreset::Paper).unwrap();
    assert_eq!(rows.len(), 2);
    let at32 = &rows[1];
    assert_eq!(at32.m, 32);
    assert!((at32.cr - 89.0).abs() < 2.0, "CR {}", at32.cr);
    assert!((at32.mi - 106.0).abs() < 2.0, "MI {}", at32.mi);
    assert!(rows[0].cr < rows[1].cr, "CR grows with the ratio");
}

#[test]
fn incompatible_task_and_sampler_configs_error() {
    let cfg = tiny_cfg();
    let dir = tempfile::tempdir().unwrap();
    let task_out = train_task(&cfg, &dir.path().join("task")).unwrap();
    let mut other = cfg.clone();
    other.points = 64;
    other.ratios = vec![2, 4];
    let err = train_sampler(&other, &task_out.checkpoint, &dir.path().join("sampler"))
        .err()
        .expect("mismatched point counts must fail");
    assert!(matches!(err, HarnessError::Incompatible(_)), "{err}");
}
