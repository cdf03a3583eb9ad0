//! Command-line driver for the detection-correction pipeline:
//! synthesize corruption data, train the two fine-tuning stages, detect,
//! correct, evaluate, grid-search control thresholds, and benchmark
//! inference phases.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical abort.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use gec_core::alignment::{align, derive_labels, DetectionLabels, LabelSet};
use gec_core::corpus::{
    detokenize, load_parallel, synthesize_corpus, tokenize, CorruptionRules, TokenSeq, Vocab,
};
use gec_core::error::Error as CoreError;
use gec_core::eval::{detection_metrics, extract_edits, score_corpus, EditSet};
use gec_core::inference::{
    correct, correct_with_labels, detect, grid_search_control, ControlGrids, DecodeConfig,
    DetectionControl, Trace,
};
use gec_core::model::{Model, ModelConfig, ModelMode};
use gec_core::training::{
    build_sft1_dataset, build_sft2_dataset, train, DatasetOptions, TrainConfig,
};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "gec", version, about = "Detection-correction grammatical error correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt a clean corpus into a parallel TSV training file.
    Synth(SynthArgs),
    /// Train one fine-tuning stage.
    Train(TrainArgs),
    /// Predict detection labels for each input line.
    Detect(DetectArgs),
    /// Correct each input line.
    Correct(CorrectArgs),
    /// Score a model against a parallel TSV file.
    Evaluate(EvaluateArgs),
    /// Greedy grid search for detection-control thresholds.
    Grid(GridArgs),
    /// Per-phase inference timing report.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Clean corpus: one sentence per line.
    #[arg(long)]
    clean: PathBuf,
    /// Corruption rules (JSON: p_insert, p_replace, p_delete,
    /// max_corruptions_per_sentence).
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Base seed; per-sentence streams are derived from it.
    #[arg(long, default_value_t = 111)]
    seed: u64,
    /// Output TSV path (source<TAB>target per line).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = ["sft1", "sft2"])]
    stage: String,
    #[arg(long, default_value = "joint", value_parser = ["joint", "detect", "correct"])]
    mode: String,
    /// Training pairs (TSV).
    #[arg(long)]
    data: PathBuf,
    /// Dev pairs (TSV) for model selection.
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// JSON config with "model" and "train" sections.
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint to continue from; required for sft2.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Output checkpoint path; the log goes to <out>.log.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "kei", value_parser = ["ke", "kei", "keid"])]
    label_set: String,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input sentences, one per line.
    #[arg(long = "in")]
    input: PathBuf,
    /// Control string "delta,phi_e,phi_i"; empty fields mean unset.
    #[arg(long)]
    ctrl: Option<String>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    ctrl: Option<String>,
    #[arg(long, default_value_t = 3)]
    beam: usize,
    #[arg(long = "max-piece", default_value_t = 10)]
    max_piece: usize,
    /// Write per-sentence traces (JSON lines) here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// External detection labels (one "K E I ..." line per input line);
    /// required for correction-only models.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Sentence-level worker threads. Outputs are identical for any
    /// thread count; only timings vary.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Parallel TSV with gold targets.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    ctrl: Option<String>,
    #[arg(long, default_value_t = 3)]
    beam: usize,
    #[arg(long = "max-piece", default_value_t = 10)]
    max_piece: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dev pairs (TSV).
    #[arg(long)]
    dev: PathBuf,
    /// Comma-separated KEEP-threshold values; the neutral value is
    /// always added.
    #[arg(long = "delta-grid", default_value = "")]
    delta_grid: String,
    /// Comma-separated ERROR lower bounds.
    #[arg(long = "phi-grid", default_value = "")]
    phi_grid: String,
    /// Comma-separated INSERT lower bounds; defaults to the ERROR grid.
    #[arg(long = "phi-insert-grid")]
    phi_insert_grid: Option<String>,
    /// Score-table CSV output (delta,phi_e,phi_i,precision,recall,f0_5).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    beam: usize,
    #[arg(long = "max-piece", default_value_t = 10)]
    max_piece: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    ctrl: Option<String>,
    #[arg(long, default_value_t = 3)]
    beam: usize,
    #[arg(long = "max-piece", default_value_t = 10)]
    max_piece: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = now_secs();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args, started),
        Command::Train(args) => cmd_train(args, started),
        Command::Detect(args) => cmd_detect(args, started),
        Command::Correct(args) => cmd_correct(args, started),
        Command::Evaluate(args) => cmd_evaluate(args, started),
        Command::Grid(args) => cmd_grid(args, started),
        Command::Bench(args) => cmd_bench(args, started),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                CoreError::Diverged { .. } | CoreError::NumericalOverflow(_) => EXIT_NUMERIC,
                _ => EXIT_INPUT,
            };
            ExitCode::from(code)
        }
    }
}

fn now_secs() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Every invocation records enough to reproduce itself: the argv, the
/// seed, and timestamps. Written to --manifest when given, next to --out
/// when there is one, otherwise logged to stderr.
fn write_manifest(
    explicit: &Option<PathBuf>,
    out: Option<&Path>,
    command: &str,
    seed: Option<u64>,
    started: f64,
) -> Result<(), CoreError> {
    let manifest = serde_json::json!({
        "command": command,
        "argv": std::env::args().collect::<Vec<_>>(),
        "seed": seed,
        "started_at": started,
        "finished_at": now_secs(),
    });
    let path = explicit
        .clone()
        .or_else(|| out.map(|p| PathBuf::from(format!("{}.manifest.json", p.display()))));
    match path {
        Some(p) => fs::write(p, format!("{manifest}\n"))?,
        None => eprintln!("manifest: {manifest}"),
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>, CoreError> {
    Ok(fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), CoreError> {
    match out {
        Some(path) => fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn parse_ctrl(ctrl: &Option<String>) -> Result<DetectionControl, CoreError> {
    match ctrl {
        Some(s) => DetectionControl::parse(s),
        None => Ok(DetectionControl::none()),
    }
}

fn decode_config(beam: usize, max_piece: usize) -> Result<DecodeConfig, CoreError> {
    let cfg = DecodeConfig { beam_size: beam, max_piece_len: max_piece };
    cfg.validate()?;
    Ok(cfg)
}

/// Run `f` over `items`, preserving order, on up to `threads` workers.
fn run_parallel<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>, CoreError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, CoreError> + Sync,
{
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let mut results: Vec<Option<Result<R, CoreError>>> = Vec::new();
    results.resize_with(items.len(), || None);
    std::thread::scope(|scope| {
        let f = &f;
        for (slot, part) in results.chunks_mut(chunk).zip(items.chunks(chunk)) {
            scope.spawn(move || {
                for (dst, item) in slot.iter_mut().zip(part) {
                    *dst = Some(f(item));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("worker filled slot")).collect()
}

fn cmd_synth(args: SynthArgs, started: f64) -> Result<ExitCode, CoreError> {
    let vocab = Vocab::load(&args.vocab)?;
    let rules: CorruptionRules = serde_json::from_str(&fs::read_to_string(&args.rules)?)?;
    rules.validate()?;
    let lines = read_lines(&args.clean)?;
    let clean: Vec<TokenSeq> = lines
        .iter()
        .map(|l| tokenize(l, &vocab))
        .collect::<Result<_, _>>()?;
    let (pairs, counts) = synthesize_corpus(&clean, &rules, args.seed, &vocab)?;
    let mut out = String::new();
    for pair in &pairs {
        out.push_str(&detokenize(&pair.source, &vocab)?);
        out.push('\t');
        out.push_str(&detokenize(&pair.target, &vocab)?);
        out.push('\n');
    }
    fs::write(&args.out, out)?;
    println!(
        "wrote {} pairs to {} (replaced {}, deleted {}, inserted {})",
        pairs.len(),
        args.out.display(),
        counts.replaced,
        counts.deleted,
        counts.inserted
    );
    write_manifest(&args.manifest, Some(&args.out), "synth", Some(args.seed), started)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Deserialize)]
struct TrainFileConfig {
    model: ModelConfig,
    train: TrainConfig,
}

fn cmd_train(args: TrainArgs, started: f64) -> Result<ExitCode, CoreError> {
    let vocab = Vocab::load(&args.vocab)?;
    let label_set: LabelSet = args.label_set.parse()?;
    let file_cfg: TrainFileConfig = serde_json::from_str(&fs::read_to_string(&args.config)?)?;
    let mut model_cfg = file_cfg.model;
    let mut train_cfg = file_cfg.train;
    train_cfg.mode = args.mode.parse::<ModelMode>()?;
    if model_cfg.vocab_size != vocab.len() {
        return Err(CoreError::InvalidConfig(format!(
            "config vocab_size {} but vocab file has {} tokens",
            model_cfg.vocab_size,
            vocab.len()
        )));
    }
    if model_cfg.label_count != label_set.label_count() {
        return Err(CoreError::InvalidConfig(format!(
            "config label_count {} but label set {} has {}",
            model_cfg.label_count,
            args.label_set,
            label_set.label_count()
        )));
    }

    let init_model = match (&args.init, args.stage.as_str()) {
        (Some(path), _) => Some(Model::load(path)?),
        (None, "sft2") => {
            return Err(CoreError::InvalidConfig(
                "sft2 requires --init pointing at an sft1 checkpoint".into(),
            ))
        }
        (None, _) => None,
    };
    if let Some(init) = &init_model {
        if init.vocab.tokens() != vocab.tokens() {
            return Err(CoreError::InvalidConfig("init checkpoint vocab differs".into()));
        }
        model_cfg = init.params.config.clone();
    }

    let pairs = load_parallel(&args.data, &vocab)?;
    let dev = load_parallel(&args.dev, &vocab)?;
    let opts = DatasetOptions::from_model(&model_cfg, train_cfg.max_piece_len);
    let (samples, stats) = match args.stage.as_str() {
        "sft1" => build_sft1_dataset(&pairs, label_set, &opts)?,
        _ => {
            let sft1 = init_model.as_ref().expect("checked above");
            build_sft2_dataset(&pairs, sft1, label_set, &opts)?
        }
    };
    eprintln!(
        "dataset: {} samples built, {} skipped (long piece {}, too long {}, unrepresentable {})",
        stats.built,
        stats.skipped(),
        stats.skipped_long_piece,
        stats.skipped_too_long,
        stats.skipped_unrepresentable
    );

    let outcome = train(
        &samples,
        &dev,
        &train_cfg,
        &model_cfg,
        &vocab,
        label_set,
        init_model.as_ref().map(|m| &m.params),
    )?;
    outcome.model.save(&args.out)?;
    let log_path = PathBuf::from(format!("{}.log.jsonl", args.out.display()));
    let mut log_file = std::io::BufWriter::new(fs::File::create(&log_path)?);
    for record in &outcome.log {
        serde_json::to_writer(&mut log_file, record)?;
        log_file.write_all(b"\n")?;
    }
    log_file.flush()?;
    if let Some(best) = &outcome.best_eval {
        eprintln!(
            "best eval: ad_accuracy {:.4}, general_accuracy {:.4} (rec_k {:.3} rec_e {:.3} rec_i {:.3} acc_c {:.3})",
            best.ad_accuracy, best.general_accuracy, best.rec_k, best.rec_e, best.rec_i, best.acc_c
        );
    }
    println!("checkpoint written to {} after {} steps", args.out.display(), outcome.steps);
    write_manifest(&args.manifest, Some(&args.out), "train", Some(train_cfg.rng_seed), started)?;
    if outcome.diverged {
        eprintln!("training diverged; wrote the best checkpoint reached before the abort");
        return Ok(ExitCode::from(EXIT_NUMERIC));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_detect(args: DetectArgs, started: f64) -> Result<ExitCode, CoreError> {
    let model = Model::load(&args.model)?;
    if model.mode == ModelMode::CorrectOnly {
        return Err(CoreError::WrongMode("correction-only model has no trained detector"));
    }
    let ctrl = parse_ctrl(&args.ctrl)?;
    let lines = read_lines(&args.input)?;
    let mut out = String::new();
    for line in &lines {
        let source = tokenize(line, &model.vocab)?;
        let (labels, _) = detect(&model, &source, &ctrl)?;
        out.push_str(&labels.to_string());
        out.push('\n');
    }
    write_or_print(&args.out, &out)?;
    write_manifest(&args.manifest, args.out.as_deref(), "detect", None, started)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_correct(args: CorrectArgs, started: f64) -> Result<ExitCode, CoreError> {
    let model = Model::load(&args.model)?;
    let ctrl = parse_ctrl(&args.ctrl)?;
    let decode = decode_config(args.beam, args.max_piece)?;
    let lines = read_lines(&args.input)?;

    let external_labels: Option<Vec<DetectionLabels>> = match &args.labels {
        Some(path) => {
            let label_lines = read_lines(path)?;
            if label_lines.len() != lines.len() {
                return Err(CoreError::LabelLengthMismatch {
                    got: label_lines.len(),
                    want: lines.len(),
                });
            }
            Some(
                label_lines
                    .iter()
                    .map(|l| DetectionLabels::parse(l))
                    .collect::<Result<_, _>>()?,
            )
        }
        None => None,
    };
    match (model.mode, &external_labels) {
        (ModelMode::DetectOnly, _) => {
            return Err(CoreError::WrongMode("detection-only model"));
        }
        (ModelMode::CorrectOnly, None) => {
            return Err(CoreError::WrongMode(
                "correction-only model needs --labels with external detections",
            ));
        }
        _ => {}
    }

    let items: Vec<(usize, &String)> = lines.iter().enumerate().collect();
    let results: Vec<(String, Trace)> = run_parallel(&items, args.threads, |(i, line)| {
        let source = tokenize(line, &model.vocab)?;
        let (output, trace) = match &external_labels {
            Some(labels) => correct_with_labels(&model, &source, &labels[*i], &decode)?,
            None => correct(&model, &source, &ctrl, &decode)?,
        };
        Ok((detokenize(&output, &model.vocab)?, trace))
    })?;

    let mut out = String::new();
    let mut trace_out = String::new();
    let (mut det_ms, mut cor_ms, mut steps) = (0.0, 0.0, 0usize);
    for (line, trace) in &results {
        out.push_str(line);
        out.push('\n');
        det_ms += trace.detection_ms;
        cor_ms += trace.correction_ms;
        steps += trace.decoder_steps;
        if args.trace.is_some() {
            trace_out.push_str(&serde_json::to_string(trace)?);
            trace_out.push('\n');
        }
    }
    write_or_print(&args.out, &out)?;
    if let Some(path) = &args.trace {
        fs::write(path, trace_out)?;
    }
    let n = results.len().max(1) as f64;
    eprintln!(
        "corrected {} sentences | avg detection {:.2} ms, correction {:.2} ms, total {:.2} ms | {} decoder steps",
        results.len(),
        det_ms / n,
        cor_ms / n,
        (det_ms + cor_ms) / n,
        steps
    );
    write_manifest(&args.manifest, args.out.as_deref(), "correct", None, started)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(args: EvaluateArgs, started: f64) -> Result<ExitCode, CoreError> {
    let model = Model::load(&args.model)?;
    let ctrl = parse_ctrl(&args.ctrl)?;
    let decode = decode_config(args.beam, args.max_piece)?;
    let pairs = load_parallel(&args.pairs, &model.vocab)?;
    if pairs.is_empty() {
        return Err(CoreError::EmptyDevSet);
    }

    let results: Vec<(EditSet, EditSet, DetectionLabels, DetectionLabels)> =
        run_parallel(&pairs, args.threads, |pair| {
            let (output, trace) = correct(&model, &pair.source, &ctrl, &decode)?;
            let hyp = extract_edits(&pair.source, &output, &model.vocab)?;
            let gold = extract_edits(&pair.source, &pair.target, &model.vocab)?;
            let predicted = DetectionLabels::parse(&trace.labels)?;
            let gold_labels = derive_labels(&align(&pair.source, &pair.target), model.label_set)?;
            Ok((hyp, gold, predicted, gold_labels))
        })?;

    let scored: Vec<(EditSet, EditSet)> =
        results.iter().map(|(h, g, _, _)| (h.clone(), g.clone())).collect();
    let report = score_corpus(&scored);
    let predicted: Vec<DetectionLabels> = results.iter().map(|r| r.2.clone()).collect();
    let gold_labels: Vec<DetectionLabels> = results.iter().map(|r| r.3.clone()).collect();
    let det = detection_metrics(&predicted, &gold_labels)?;
    let summary = serde_json::json!({
        "score": report,
        "detection": det,
        "sentences": pairs.len(),
        "ctrl": ctrl.to_string(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    write_manifest(&args.manifest, None, "evaluate", None, started)?;
    Ok(ExitCode::SUCCESS)
}

fn parse_grid(s: &str) -> Result<Vec<f64>, CoreError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| CoreError::InvalidConfig(format!("bad grid value {f:?}")))
        })
        .collect()
}

fn cmd_grid(args: GridArgs, started: f64) -> Result<ExitCode, CoreError> {
    let model = Model::load(&args.model)?;
    if model.mode != ModelMode::Joint {
        return Err(CoreError::WrongMode("grid search needs a joint model"));
    }
    let decode = decode_config(args.beam, args.max_piece)?;
    let pairs = load_parallel(&args.dev, &model.vocab)?;
    if pairs.is_empty() {
        return Err(CoreError::EmptyDevSet);
    }
    let dev: Vec<(TokenSeq, TokenSeq)> = pairs.into_iter().map(|p| (p.source, p.target)).collect();
    let delta = parse_grid(&args.delta_grid)?;
    let phi_e = parse_grid(&args.phi_grid)?;
    let phi_i = match &args.phi_insert_grid {
        Some(s) => parse_grid(s)?,
        None => phi_e.clone(),
    };
    let grids = ControlGrids::with_neutral(&delta, &phi_e, &phi_i);
    let (best, table) = grid_search_control(&model, &dev, &grids, &decode)?;

    if let Some(path) = &args.table {
        let mut csv = String::from("delta,phi_e,phi_i,precision,recall,f0_5\n");
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for point in &table {
            csv.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6}\n",
                cell(point.ctrl.keep_threshold),
                cell(point.ctrl.error_lower_bound),
                cell(point.ctrl.insert_lower_bound),
                point.report.precision,
                point.report.recall,
                point.report.f_half,
            ));
        }
        fs::write(path, csv)?;
    }
    let best_point = table.iter().find(|p| p.ctrl == best).expect("best config comes from the table");
    println!(
        "best control: \"{}\" (precision {:.4}, recall {:.4}, F0.5 {:.4}) over {} cells",
        best,
        best_point.report.precision,
        best_point.report.recall,
        best_point.report.f_half,
        table.len()
    );
    write_manifest(&args.manifest, args.table.as_deref(), "grid", None, started)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: BenchArgs, started: f64) -> Result<ExitCode, CoreError> {
    let model = Model::load(&args.model)?;
    let ctrl = parse_ctrl(&args.ctrl)?;
    let decode = decode_config(args.beam, args.max_piece)?;
    let lines = read_lines(&args.input)?;
    if lines.is_empty() {
        return Err(CoreError::EmptyDevSet);
    }
    let mut det_ms = Vec::with_capacity(lines.len());
    let mut cor_ms = Vec::with_capacity(lines.len());
    let mut steps = Vec::with_capacity(lines.len());
    for line in &lines {
        let source = tokenize(line, &model.vocab)?;
        let (_, trace) = correct(&model, &source, &ctrl, &decode)?;
        det_ms.push(trace.detection_ms);
        cor_ms.push(trace.correction_ms);
        steps.push(trace.decoder_steps);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let det = mean(&det_ms);
    let cor = mean(&cor_ms);
    println!("sentences:            {}", lines.len());
    println!("avg detection (ms):   {det:.3}");
    println!("avg correction (ms):  {cor:.3}");
    println!("avg total (ms):       {:.3}", det + cor);
    println!(
        "decoder steps:        total {}, mean {:.2}",
        steps.iter().sum::<usize>(),
        steps.iter().sum::<usize>() as f64 / steps.len() as f64
    );
    write_manifest(&args.manifest, None, "bench", None, started)?;
    Ok(ExitCode::SUCCESS)
}
