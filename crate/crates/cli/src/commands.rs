//! The six subcommands: synth, train, eval, infer, plot, score.

use crate::runconfig::RunConfig;
use crate::{plot, write_json, CliError};
use changecap::checkpoint;
use changecap::data::{
    build_dataset, load_dataset, write_dataset, BiTemporalSample, CorruptionPreset,
    PseudoLabelPolicy, RgbBuffer, Split, SynthConfig,
};
use changecap::model::{image_to_tensor, ChangeCaptionModel, Mode};
use changecap::train::{evaluate, generate_caption, train, DecodeStrategy};
use clap::Args;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

fn ensure_out_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .map_err(|e| CliError::Data(format!("reading {}: {e}", dir.display())))?
            .next()
            .is_some();
        if occupied && !force {
            return Err(CliError::Usage(format!(
                "output directory {} is not empty (pass --force to overwrite)",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("creating {}: {e}", dir.display())))?;
    Ok(())
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub num_pairs: usize,
    /// Fraction of pairs with at least one change event.
    #[arg(long, default_value_t = 0.5)]
    pub changed_fraction: f64,
    /// Pseudo-label corruption preset: none | light | heavy.
    #[arg(long, default_value = "light")]
    pub noise: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub image_size: usize,
    /// Explicit split sizes as train,val,test (default 80/10/10).
    #[arg(long)]
    pub splits: Option<String>,
    /// Label all changed objects instead of changed buildings only.
    #[arg(long, default_value_t = false)]
    pub pseudo_all_objects: bool,
    /// Allow writing into a non-empty directory.
    #[arg(long, default_value_t = false)]
    pub force: bool,
}

#[derive(Debug, Serialize)]
struct SynthManifest {
    command: &'static str,
    num_pairs: usize,
    changed_fraction: f64,
    noise: String,
    seed: u64,
    image_size: usize,
    splits: (usize, usize, usize),
    pseudo_policy: PseudoLabelPolicy,
    changed_pairs: usize,
    unchanged_pairs: usize,
}

fn parse_splits(text: &str, total: usize) -> Result<(usize, usize, usize), CliError> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--splits must be three integers: {e}")))?;
    if parts.len() != 3 {
        return Err(CliError::Usage("--splits must be train,val,test".into()));
    }
    if parts.iter().sum::<usize>() != total {
        return Err(CliError::Usage(format!(
            "--splits {} do not sum to --num-pairs {total}",
            text
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

pub fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    let preset = CorruptionPreset::parse(&args.noise)
        .ok_or_else(|| CliError::Usage(format!("unknown noise preset '{}'", args.noise)))?;
    ensure_out_dir(&args.out, args.force)?;
    let mut cfg = SynthConfig::new(args.num_pairs, args.seed);
    cfg.changed_fraction = args.changed_fraction;
    cfg.corruption = preset.params();
    cfg.image_size = args.image_size;
    if let Some(text) = &args.splits {
        cfg.split_counts = parse_splits(text, args.num_pairs)?;
    }
    if args.pseudo_all_objects {
        cfg.pseudo_policy = PseudoLabelPolicy::AllChangedObjects;
    }
    let samples = build_dataset(&cfg)?;
    write_dataset(&samples, &args.out)?;
    let changed = samples.iter().filter(|s| s.gt_mask.ones_count() > 0).count();
    let manifest = SynthManifest {
        command: "synth",
        num_pairs: args.num_pairs,
        changed_fraction: args.changed_fraction,
        noise: preset.as_str().to_string(),
        seed: args.seed,
        image_size: args.image_size,
        splits: cfg.split_counts,
        pseudo_policy: cfg.pseudo_policy,
        changed_pairs: changed,
        unchanged_pairs: samples.len() - changed,
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    write_json(&args.out.join("resolved_config.json"), &manifest)?;
    println!(
        "wrote {} pairs ({} changed, {} unchanged) to {}",
        samples.len(),
        changed,
        samples.len() - changed,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Dataset directory (as produced by `synth`).
    #[arg(long)]
    pub data: PathBuf,
    /// full (detection branch + fusion) or baseline (caption branch only).
    #[arg(long, default_value = "full")]
    pub mode: String,
    /// JSON run configuration; flags below override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = false)]
    pub force: bool,
}

pub fn run_train(args: &TrainArgs) -> Result<PathBuf, CliError> {
    let mode = Mode::parse(&args.mode)
        .ok_or_else(|| CliError::Usage(format!("unknown mode '{}'", args.mode)))?;
    let mut run_config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    run_config.model.mode = mode;
    if let Some(v) = args.epochs {
        run_config.train.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        run_config.train.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        run_config.train.batch_size = v;
    }
    if let Some(v) = args.seed {
        run_config.train.seed = v;
    }
    run_config.model.validate().map_err(CliError::usage)?;
    ensure_out_dir(&args.out, args.force)?;
    let dataset = load_dataset(&args.data)?;
    let outcome = train(&dataset, &run_config.model, &run_config.train)?;

    let ckpt_path = args.out.join("model.ckpt");
    checkpoint::write_file(&ckpt_path, &outcome.store, &outcome.meta)?;
    let mut log = String::new();
    for record in &outcome.records {
        log.push_str(&serde_json::to_string(record).expect("serializable"));
        log.push('\n');
    }
    fs::write(args.out.join("train_log.jsonl"), log)
        .map_err(|e| CliError::Data(format!("writing training log: {e}")))?;
    fs::write(args.out.join("vocab.txt"), outcome.vocab.to_lines())
        .map_err(|e| CliError::Data(format!("writing vocabulary: {e}")))?;
    write_json(&args.out.join("resolved_config.json"), &run_config)?;
    write_json(
        &args.out.join("manifest.json"),
        &serde_json::json!({
            "command": "train",
            "data": args.data.display().to_string(),
            "mode": mode.as_str(),
            "best_epoch": outcome.best_epoch,
            "outputs": ["model.ckpt", "train_log.jsonl", "vocab.txt", "resolved_config.json"],
        }),
    )?;
    println!(
        "trained {} epochs (best epoch {}), checkpoint at {}",
        outcome.records.len(),
        outcome.best_epoch,
        ckpt_path.display()
    );
    Ok(ckpt_path)
}

// ----------------------------------------------------------------- eval

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Which split to score: train | val | test.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = false)]
    pub force: bool,
}

pub fn load_model(ckpt: &Path) -> Result<ChangeCaptionModel<f32>, CliError> {
    let (store, meta) = checkpoint::read_file::<f32>(ckpt)?;
    let vocab = meta.vocabulary()?;
    let mut model = ChangeCaptionModel::new(meta.model.clone(), vocab, 0)?;
    model.load_values(&store)?;
    Ok(model)
}

pub fn run_eval(args: &EvalArgs) -> Result<changecap::metrics::MetricReport, CliError> {
    let split = Split::parse(&args.split)
        .ok_or_else(|| CliError::Usage(format!("unknown split '{}'", args.split)))?;
    let model = load_model(&args.ckpt)?;
    let dataset = load_dataset(&args.data)?;
    let subset: Vec<&BiTemporalSample> = dataset.iter().filter(|s| s.split == split).collect();
    if subset.is_empty() {
        return Err(CliError::Data(format!(
            "dataset {} has no samples in split '{}'",
            args.data.display(),
            args.split
        )));
    }
    ensure_out_dir(&args.out, args.force)?;
    let evaluation = evaluate(&model, &subset, None)?;
    if evaluation.report.cider_idf_smoothed {
        eprintln!("warning: single-pair corpus; CIDEr uses smoothed document frequencies");
    }
    let label = format!("{} ({})", model.config.mode.as_str(), args.split);
    let table = evaluation.report.render_table(&label);
    print!("{table}");
    if let Some(acc) = evaluation.pixel_accuracy {
        println!(
            "detection: pixel accuracy {:.4}, mean IoU {:.4}",
            acc,
            evaluation.mean_iou.unwrap_or(0.0)
        );
    }
    write_json(&args.out.join("metric_report.json"), &evaluation.report)?;
    fs::write(args.out.join("report.txt"), &table)
        .map_err(|e| CliError::Data(format!("writing report: {e}")))?;
    write_json(&args.out.join("predictions.json"), &evaluation.predictions)?;
    let about = serde_json::json!({
        "command": "eval",
        "ckpt": args.ckpt.display().to_string(),
        "data": args.data.display().to_string(),
        "split": args.split,
        "model": model.config,
        "outputs": ["metric_report.json", "report.txt", "predictions.json", "resolved_config.json"],
    });
    write_json(&args.out.join("resolved_config.json"), &about)?;
    write_json(&args.out.join("manifest.json"), &about)?;
    Ok(evaluation.report)
}

// ---------------------------------------------------------------- infer

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Pre-change image (PNG).
    #[arg(long)]
    pub pre: PathBuf,
    /// Post-change image (PNG).
    #[arg(long)]
    pub post: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Beam width (1 = greedy).
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
}

fn read_rgb(path: &Path) -> Result<RgbBuffer, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("missing image {}", path.display())));
    }
    let img = image::open(path)
        .map_err(|e| CliError::Data(format!("decoding {}: {e}", path.display())))?
        .to_rgb8();
    let (width, height) = (img.width() as usize, img.height() as usize);
    let mut out = RgbBuffer::filled(height, width, 0.0);
    for y in 0..height {
        for x in 0..width {
            let px = img.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                out.set(y, x, c, px[c] as f32 / 255.0);
            }
        }
    }
    Ok(out)
}

pub fn run_infer(args: &InferArgs) -> Result<String, CliError> {
    let model = load_model(&args.ckpt)?;
    let pre = read_rgb(&args.pre)?;
    let post = read_rgb(&args.post)?;
    if pre.height != post.height || pre.width != post.width {
        return Err(CliError::Data(format!(
            "image sizes differ: {}x{} vs {}x{}",
            pre.height, pre.width, post.height, post.width
        )));
    }
    fs::create_dir_all(&args.out).map_err(|e| CliError::Data(format!("creating output dir: {e}")))?;
    let strategy = if args.beam <= 1 {
        DecodeStrategy::Greedy
    } else {
        DecodeStrategy::Beam(args.beam)
    };
    let bind = model.bind(false);
    let pre_t = image_to_tensor::<f32>(&pre);
    let post_t = image_to_tensor::<f32>(&post);
    let generated = generate_caption(&model, &bind, &pre_t, &post_t, strategy)?;
    println!("{}", generated.text);
    fs::write(args.out.join("caption.txt"), format!("{}\n", generated.text))
        .map_err(|e| CliError::Data(format!("writing caption: {e}")))?;
    if let Some(mask) = &generated.mask {
        changecap::data::mask_to_png(mask, &args.out.join("predicted_mask.png"))?;
    }
    let about = serde_json::json!({
        "command": "infer",
        "ckpt": args.ckpt.display().to_string(),
        "pre": args.pre.display().to_string(),
        "post": args.post.display().to_string(),
        "beam": args.beam,
        "model": model.config,
        "outputs": if generated.mask.is_some() {
            vec!["caption.txt", "predicted_mask.png", "resolved_config.json"]
        } else {
            vec!["caption.txt", "resolved_config.json"]
        },
    });
    write_json(&args.out.join("resolved_config.json"), &about)?;
    write_json(&args.out.join("manifest.json"), &about)?;
    Ok(generated.text)
}

// ----------------------------------------------------------------- plot

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Training log (JSONL, one record per epoch).
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = false)]
    pub force: bool,
}

/// Flattens one JSONL record into scalar series points keyed by field
/// path ("l_cap", "val.s_star_m", ...).
fn flatten_record(prefix: &str, value: &serde_json::Value, out: &mut BTreeMap<String, f64>) {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(v) = n.as_f64() {
                out.insert(prefix.to_string(), v);
            }
        }
        serde_json::Value::Object(map) => {
            for (key, inner) in map {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                flatten_record(&path, inner, out);
            }
        }
        _ => {}
    }
}

pub fn run_plot(args: &PlotArgs) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(&args.log)
        .map_err(|e| CliError::Data(format!("reading log {}: {e}", args.log.display())))?;
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("log line {}: {e}", line_no + 1)))?;
        let mut flat = BTreeMap::new();
        flatten_record("", &record, &mut flat);
        let epoch = flat
            .get("epoch")
            .copied()
            .ok_or_else(|| CliError::Data(format!("log line {} has no epoch field", line_no + 1)))?;
        for (key, value) in flat {
            if key != "epoch" {
                series.entry(key).or_default().push((epoch, value));
            }
        }
    }
    if series.is_empty() {
        return Err(CliError::Data("log contains no scalar series".into()));
    }
    ensure_out_dir(&args.out, args.force)?;
    let mut infos = Vec::new();
    let mut files = Vec::new();
    for (name, points) in &series {
        let file = format!("{}.png", name.replace('.', "_"));
        plot::render_series(points, &args.out.join(&file))?;
        infos.push(plot::SeriesInfo {
            name: name.clone(),
            file: file.clone(),
            min: points.iter().map(|p| p.1).fold(f64::MAX, f64::min),
            max: points.iter().map(|p| p.1).fold(f64::MIN, f64::max),
            final_value: points.last().map(|p| p.1).unwrap_or(f64::NAN),
            points: points.len(),
        });
        files.push(file);
    }
    write_json(&args.out.join("plots.json"), &infos)?;
    write_json(
        &args.out.join("manifest.json"),
        &serde_json::json!({
            "command": "plot",
            "log": args.log.display().to_string(),
            "outputs": files,
        }),
    )?;
    println!("rendered {} curves to {}", files.len(), args.out.display());
    Ok(files)
}

// ---------------------------------------------------------------- score

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// JSON input: {"<id>": {"candidate": str, "references": [str x5]}}.
    #[arg(long)]
    pub input: PathBuf,
    /// Metric report output path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also print an aligned score table.
    #[arg(long, default_value_t = false)]
    pub table: bool,
}

#[derive(Debug, serde::Deserialize)]
struct ScoreEntry {
    candidate: String,
    references: Vec<String>,
}

pub fn run_score(args: &ScoreArgs) -> Result<changecap::metrics::MetricReport, CliError> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| CliError::Data(format!("reading {}: {e}", args.input.display())))?;
    let entries: BTreeMap<String, ScoreEntry> = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("parsing {}: {e}", args.input.display())))?;
    if entries.is_empty() {
        return Err(CliError::Data("score input contains no entries".into()));
    }
    let pairs: Vec<changecap::metrics::EvalPair> = entries
        .values()
        .map(|e| changecap::metrics::EvalPair::from_raw(&e.candidate, &e.references))
        .collect();
    let report = changecap::metrics::score_corpus(&pairs);
    if report.cider_idf_smoothed {
        eprintln!("warning: single-pair corpus; CIDEr uses smoothed document frequencies");
    }
    let json = serde_json::to_string_pretty(&report).expect("serializable");
    match &args.out {
        Some(path) => fs::write(path, &json)
            .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    if args.table {
        print!("{}", report.render_table("scored corpus"));
    }
    Ok(report)
}
