//! End-to-end command tests on a tiny workload: synth -> train -> eval ->
//! infer -> plot -> score, plus the error-path exit codes.

use changecap_cli::commands::{
    run_eval, run_infer, run_plot, run_score, run_synth, run_train, EvalArgs, InferArgs, PlotArgs,
    ScoreArgs, SynthArgs, TrainArgs,
};
use changecap_cli::CliError;
use std::fs;
use std::path::PathBuf;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("changecap_cli_{name}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn synth_args(out: PathBuf, num_pairs: usize, seed: u64) -> SynthArgs {
    SynthArgs {
        out,
        num_pairs,
        changed_fraction: 0.5,
        noise: "light".into(),
        seed,
        image_size: 64,
        splits: None,
        pseudo_all_objects: false,
        force: false,
    }
}

#[test]
fn synth_writes_expected_layout_and_counts() {
    let root = scratch("synth");
    let data = root.join("data");
    run_synth(&synth_args(data.clone(), 10, 3)).unwrap();
    for sub in ["A", "B", "label", "gt"] {
        assert_eq!(fs::read_dir(data.join(sub)).unwrap().count(), 10, "{sub}/");
    }
    assert!(data.join("captions.json").exists());
    assert!(data.join("manifest.json").exists());
    assert!(data.join("resolved_config.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["changed_pairs"], 5);
    assert_eq!(manifest["unchanged_pairs"], 5);
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn synth_refuses_nonempty_dir_without_force() {
    let root = scratch("synth_force");
    let data = root.join("data");
    fs::create_dir_all(&data).unwrap();
    fs::write(data.join("occupied.txt"), "x").unwrap();
    let err = run_synth(&synth_args(data.clone(), 2, 0)).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    let mut args = synth_args(data, 2, 0);
    args.force = true;
    run_synth(&args).unwrap();
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn synth_zero_fraction_gives_no_change_captions_only() {
    let root = scratch("synth_zero");
    let data = root.join("data");
    let mut args = synth_args(data.clone(), 4, 9);
    args.changed_fraction = 0.0;
    run_synth(&args).unwrap();
    let samples = changecap::data::load_dataset(&data).unwrap();
    for s in &samples {
        assert_eq!(s.gt_mask.ones_count(), 0);
        for c in &s.captions {
            assert!(changecap::data::grammar::parse_caption(c).unwrap().is_empty());
        }
    }
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn unknown_noise_preset_is_a_usage_error() {
    let root = scratch("synth_noise");
    let mut args = synth_args(root.join("d"), 2, 0);
    args.noise = "extreme".into();
    let err = run_synth(&args).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    fs::remove_dir_all(&root).unwrap();
}

fn tiny_train_args(data: PathBuf, out: PathBuf, mode: &str, seed: u64) -> TrainArgs {
    TrainArgs {
        data,
        mode: mode.into(),
        config: Some(write_tiny_config()),
        out,
        epochs: Some(2),
        learning_rate: Some(1e-3),
        batch_size: Some(4),
        seed: Some(seed),
        force: false,
    }
}

fn write_tiny_config() -> PathBuf {
    let path = std::env::temp_dir().join(format!("changecap_tiny_cfg_{}.json", std::process::id()));
    fs::write(
        &path,
        r#"{
  "model": { "stem_width": 4, "widths": [4, 8, 12, 16], "head_width": 4 },
  "train": { "eval_every": 1 }
}"#,
    )
    .unwrap();
    path
}

#[test]
fn train_eval_infer_plot_pipeline() {
    let root = scratch("pipeline");
    let data = root.join("data");
    let mut synth = synth_args(data.clone(), 8, 21);
    synth.splits = Some("5,2,1".into());
    run_synth(&synth).unwrap();

    let run_dir = root.join("run");
    let ckpt = run_train(&tiny_train_args(data.clone(), run_dir.clone(), "full", 5)).unwrap();
    assert!(ckpt.exists());
    assert!(run_dir.join("train_log.jsonl").exists());
    assert!(run_dir.join("vocab.txt").exists());
    assert!(run_dir.join("resolved_config.json").exists());

    // vocabulary file round-trips
    let vocab_text = fs::read_to_string(run_dir.join("vocab.txt")).unwrap();
    let vocab = changecap::model::Vocabulary::from_lines(&vocab_text).unwrap();
    assert_eq!(vocab.word(0), "<pad>");

    let eval_dir = root.join("eval");
    let report = run_eval(&EvalArgs {
        ckpt: ckpt.clone(),
        data: data.clone(),
        split: "test".into(),
        out: eval_dir.clone(),
        force: false,
    })
    .unwrap();
    assert!(report.bleu1.is_finite());
    assert!(eval_dir.join("metric_report.json").exists());
    assert!(eval_dir.join("report.txt").exists());
    assert!(eval_dir.join("predictions.json").exists());

    // infer on one of the dataset's own pairs
    let infer_dir = root.join("infer");
    let caption = run_infer(&InferArgs {
        ckpt: ckpt.clone(),
        pre: data.join("A/pair_000000.png"),
        post: data.join("B/pair_000000.png"),
        out: infer_dir.clone(),
        beam: 2,
    })
    .unwrap();
    assert!(!caption.is_empty() || infer_dir.join("caption.txt").exists());
    assert!(infer_dir.join("predicted_mask.png").exists(), "full mode exports a mask");

    // plot: exactly one curve per logged scalar
    let plot_dir = root.join("plots");
    let files = run_plot(&PlotArgs {
        log: run_dir.join("train_log.jsonl"),
        out: plot_dir.clone(),
        force: false,
    })
    .unwrap();
    let log_first: serde_json::Value = serde_json::from_str(
        fs::read_to_string(run_dir.join("train_log.jsonl")).unwrap().lines().next().unwrap(),
    )
    .unwrap();
    let mut expected = 0;
    fn count_scalars(v: &serde_json::Value, skip_epoch: bool, n: &mut usize) {
        match v {
            serde_json::Value::Number(_) => *n += 1,
            serde_json::Value::Object(map) => {
                for (k, inner) in map {
                    if skip_epoch && k == "epoch" {
                        continue;
                    }
                    count_scalars(inner, false, n);
                }
            }
            _ => {}
        }
    }
    count_scalars(&log_first, true, &mut expected);
    assert_eq!(files.len(), expected, "one curve image per logged scalar");
    for f in &files {
        assert!(plot_dir.join(f).exists());
    }
    assert!(plot_dir.join("plots.json").exists());

    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn baseline_training_emits_no_detection_series_or_mask() {
    let root = scratch("baseline");
    let data = root.join("data");
    let mut synth = synth_args(data.clone(), 6, 31);
    synth.splits = Some("4,1,1".into());
    run_synth(&synth).unwrap();
    let run_dir = root.join("run");
    let ckpt = run_train(&tiny_train_args(data.clone(), run_dir.clone(), "baseline", 5)).unwrap();
    let first_line = fs::read_to_string(run_dir.join("train_log.jsonl")).unwrap();
    let record: serde_json::Value = serde_json::from_str(first_line.lines().next().unwrap()).unwrap();
    assert!(record.get("l_det").is_none(), "baseline log must not carry l_det");
    let infer_dir = root.join("infer");
    run_infer(&InferArgs {
        ckpt,
        pre: data.join("A/pair_000000.png"),
        post: data.join("B/pair_000000.png"),
        out: infer_dir.clone(),
        beam: 1,
    })
    .unwrap();
    assert!(!infer_dir.join("predicted_mask.png").exists());
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn eval_missing_split_is_a_data_error() {
    let root = scratch("nosplit");
    let data = root.join("data");
    let mut synth = synth_args(data.clone(), 4, 11);
    synth.splits = Some("4,0,0".into());
    run_synth(&synth).unwrap();
    let run_dir = root.join("run");
    let ckpt = run_train(&tiny_train_args(data.clone(), run_dir, "full", 1)).unwrap();
    let err = run_eval(&EvalArgs {
        ckpt,
        data,
        split: "test".into(),
        out: root.join("eval"),
        force: false,
    })
    .unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn config_with_unknown_keys_is_a_usage_error() {
    let root = scratch("badcfg");
    let cfg = root.join("bad.json");
    fs::write(&cfg, r#"{ "model": { "wdiths": [8, 16, 32, 64] } }"#).unwrap();
    let err = changecap_cli::runconfig::RunConfig::load(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    assert!(err.to_string().contains("wdiths"), "{err}");
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let root = scratch("badckpt");
    let ckpt = root.join("model.ckpt");
    fs::write(&ckpt, b"definitely not a checkpoint").unwrap();
    let err = run_eval(&EvalArgs {
        ckpt,
        data: root.clone(),
        split: "test".into(),
        out: root.join("eval"),
        force: false,
    })
    .unwrap_err();
    assert_eq!(err.exit_code(), 3);
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn score_command_reports_perfect_match() {
    let root = scratch("score");
    let input = root.join("pairs.json");
    fs::write(
        &input,
        r#"{
  "pair_a": {
    "candidate": "a building appears at the top of the scene",
    "references": [
      "a building appears at the top of the scene",
      "one building appears at the top of the scene",
      "a new building shows up at the top of the scene",
      "a building has appeared at the top of the scene",
      "a building has been added at the top of the scene"
    ]
  }
}"#,
    )
    .unwrap();
    let out = root.join("report.json");
    let report = run_score(&ScoreArgs {
        input,
        out: Some(out.clone()),
        table: true,
    })
    .unwrap();
    assert!((report.bleu4 - 100.0).abs() < 1e-9, "candidate equals one reference");
    let written: changecap::metrics::MetricReport =
        serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(written, report);
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn rerunning_from_the_echoed_config_reproduces_outputs() {
    let root = scratch("echo");
    let data = root.join("data");
    run_synth(&synth_args(data.clone(), 4, 51)).unwrap();
    // first run: config file + flag overrides
    let run_a = root.join("run_a");
    run_train(&tiny_train_args(data.clone(), run_a.clone(), "full", 3)).unwrap();
    // second run: only the echoed resolved config, no overrides
    let run_b = root.join("run_b");
    run_train(&TrainArgs {
        data,
        mode: "full".into(),
        config: Some(run_a.join("resolved_config.json")),
        out: run_b.clone(),
        epochs: None,
        learning_rate: None,
        batch_size: None,
        seed: None,
        force: false,
    })
    .unwrap();
    let ckpt_a = fs::read(run_a.join("model.ckpt")).unwrap();
    let ckpt_b = fs::read(run_b.join("model.ckpt")).unwrap();
    assert_eq!(ckpt_a, ckpt_b, "echoed config must reproduce the checkpoint");
    assert_eq!(
        fs::read(run_a.join("train_log.jsonl")).unwrap(),
        fs::read(run_b.join("train_log.jsonl")).unwrap()
    );
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn error_kinds_map_to_contract_exit_codes() {
    assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
    assert_eq!(CliError::Data("x".into()).exit_code(), 3);
    assert_eq!(CliError::Divergence("x".into()).exit_code(), 4);
}
