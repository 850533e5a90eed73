//! Command-line entry points: dataset building, training, prediction,
//! evaluation and diversity diagnostics.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::corpus::{
    convert_stackexchange, encode_example, load_jsonl, write_jsonl, RawRecord, SplitConfig,
};
use crate::decode::{exhaustive_decode, self_terminating_decode, DecodeResult, Strategy};
use crate::error::{KpError, Result};
use crate::eval::{evaluate_dataset, mean_pairwise_cosine, render_table};
use crate::manifest::RunManifest;
use crate::text::{Document, Phrase};
use crate::train::{load_checkpoint, save_checkpoint, train, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "kpgen", version, about = "Keyphrase generation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Normalize a JSONL dataset or convert a StackExchange dump into
    /// train/valid/test splits plus a stats file.
    BuildData(BuildDataArgs),
    /// Train a model and keep the checkpoint with the best validation F1@O.
    Train(TrainArgs),
    /// Decode keyphrases for every document of a dataset.
    Predict(PredictArgs),
    /// Score a prediction file against gold keyphrases.
    Evaluate(EvaluateArgs),
    /// Sample delimiter-following decoder states and report cosine statistics.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct BuildDataArgs {
    /// Existing dataset in the JSONL schema.
    #[arg(long, conflicts_with = "stackexchange")]
    pub jsonl: Option<PathBuf>,
    /// StackExchange Posts.xml dump.
    #[arg(long)]
    pub stackexchange: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Validation split size.
    #[arg(long, default_value_t = 0)]
    pub valid: usize,
    /// Test split size.
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Token budget for training sources (StackExchange conversion).
    #[arg(long, default_value_t = 300)]
    pub train_truncate: usize,
    /// Token budget for validation/test sources (StackExchange conversion).
    #[arg(long, default_value_t = 1000)]
    pub eval_truncate: usize,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Directory holding train.jsonl and valid.jsonl.
    #[arg(long, required_unless_present = "train")]
    pub data: Option<PathBuf>,
    /// Explicit training file (overrides --data).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Explicit validation file (overrides --data).
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Output checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML config file whose keys mirror the hyperparameter flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cap on validation documents used for model selection.
    #[arg(long)]
    pub valid_limit: Option<usize>,

    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub target_encoder_hidden: Option<usize>,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub lambda_or: Option<f64>,
    #[arg(long)]
    pub lambda_sc: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "exhaustive")]
    pub strategy: Strategy,
    /// Beam width for top-beam and exhaustive strategies.
    #[arg(long, default_value_t = 50)]
    pub beam: usize,
    #[arg(long, default_value_t = 40)]
    pub max_len: usize,
    /// Rank hypotheses by length-normalized score.
    #[arg(long, default_value_t = false)]
    pub length_normalize: bool,
    /// Worker threads (documents decode independently; output keeps input order).
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Where to write the JSON report (the aligned table goes to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra fixed-k columns.
    #[arg(long = "k")]
    pub extra_k: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for inspect.json and states.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    /// Cohorts: states at k steps after a delimiter.
    #[arg(long, num_args = 1.., default_values_t = vec![1usize, 2, 3])]
    pub steps_after_delimiter: Vec<usize>,
    /// Sample size per cohort.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// Cap on documents decoded.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 40)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildData(args) => cmd_build_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn cmd_build_data(args: BuildDataArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new(
        "build-data",
        serde_json::json!({
            "valid": args.valid,
            "test": args.test,
            "seed": args.seed,
            "train_truncate": args.train_truncate,
            "eval_truncate": args.eval_truncate,
        }),
    );
    manifest.seed = Some(args.seed);
    std::fs::create_dir_all(&args.out).map_err(|e| KpError::io(&args.out, e))?;

    if let Some(xml) = &args.stackexchange {
        manifest.inputs.push(xml.clone());
        let cfg = SplitConfig {
            valid: args.valid,
            test: args.test,
            seed: args.seed,
            train_truncate: args.train_truncate,
            eval_truncate: args.eval_truncate,
        };
        let report = convert_stackexchange(xml, &args.out, &cfg)?;
        eprintln!(
            "converted {} of {} rows (skipped: {} non-question, {} tagless, {} empty)",
            report.kept,
            report.rows_seen,
            report.skipped_not_question,
            report.skipped_no_tags,
            report.skipped_empty
        );
        for name in ["train.jsonl", "valid.jsonl", "test.jsonl", "stats.json"] {
            manifest.outputs.push(args.out.join(name));
        }
    } else if let Some(jsonl) = &args.jsonl {
        manifest.inputs.push(jsonl.clone());
        normalize_jsonl_splits(jsonl, &args.out, args.valid, args.test, args.seed)?;
        for name in ["train.jsonl", "valid.jsonl", "test.jsonl", "stats.json"] {
            manifest.outputs.push(args.out.join(name));
        }
    } else {
        return Err(KpError::InvalidInput(
            "build-data needs either --jsonl or --stackexchange".into(),
        ));
    }

    manifest.wall_clock_ms = started.elapsed().as_millis();
    manifest.write(args.out.join("manifest.json"))?;
    Ok(())
}

/// Normalize an existing JSONL dataset and split it, writing the same file
/// layout as the StackExchange converter.
fn normalize_jsonl_splits(
    input: &Path,
    out: &Path,
    valid: usize,
    test: usize,
    seed: u64,
) -> Result<()> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let (records, skipped) = crate::corpus::load_raw_records(input)?;
    if records.len() < valid + test {
        return Err(KpError::InvalidInput(format!(
            "{} documents cannot cover valid={valid} + test={test}",
            records.len()
        )));
    }
    eprintln!("loaded {} documents ({skipped} skipped for empty keyphrases)", records.len());
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let to_records = |idx: &[usize]| -> Vec<RawRecord> {
        let mut idx: Vec<usize> = idx.to_vec();
        idx.sort_unstable();
        idx.iter().map(|&i| records[i].clone()).collect()
    };
    write_jsonl(out.join("valid.jsonl"), &to_records(&order[..valid]))?;
    write_jsonl(out.join("test.jsonl"), &to_records(&order[valid..valid + test]))?;
    write_jsonl(out.join("train.jsonl"), &to_records(&order[valid + test..]))?;
    let stats = serde_json::json!({
        "train": crate::corpus::stats_for_file(&out.join("train.jsonl"))?,
        "valid": crate::corpus::stats_for_file(&out.join("valid.jsonl"))?,
        "test": crate::corpus::stats_for_file(&out.join("test.jsonl"))?,
    });
    std::fs::write(out.join("stats.json"), serde_json::to_string_pretty(&stats).unwrap())
        .map_err(|e| KpError::io(out.join("stats.json"), e))?;
    Ok(())
}

/// Flags > config file > defaults.
pub fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let body = std::fs::read_to_string(path).map_err(|e| KpError::io(path, e))?;
            toml::from_str::<TrainConfig>(&body)
                .map_err(|e| KpError::InvalidInput(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    macro_rules! merge {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    merge!(
        embedding_dim,
        hidden,
        target_encoder_hidden,
        vocab,
        dropout,
        learning_rate,
        batch_size,
        max_epochs,
        lambda_or,
        lambda_sc,
        negatives,
        seed
    );
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = resolve_train_config(&args)?;
    let train_path = match (&args.train, &args.data) {
        (Some(t), _) => t.clone(),
        (None, Some(d)) => d.join("train.jsonl"),
        (None, None) => unreachable!("clap enforces --data or --train"),
    };
    let valid_path = match (&args.valid, &args.data) {
        (Some(v), _) => v.clone(),
        (None, Some(d)) => d.join("valid.jsonl"),
        (None, None) => {
            return Err(KpError::InvalidInput("--train needs --valid (or use --data)".into()))
        }
    };
    let train_docs = load_jsonl(&train_path)?.docs;
    let mut valid_docs = load_jsonl(&valid_path)?.docs;
    if let Some(limit) = args.valid_limit {
        valid_docs.truncate(limit);
    }
    eprintln!(
        "training on {} documents, validating on {} (seed {})",
        train_docs.len(),
        valid_docs.len(),
        cfg.seed
    );

    let outcome = train(&cfg, &train_docs, &valid_docs, |s| {
        eprintln!(
            "epoch {:>3}  total {:.4}  nll {:.4}  or {:.4}  sc {:.4}  val F1@O {:.4}",
            s.epoch, s.mean_total, s.mean_nll, s.mean_or, s.mean_sc, s.val_f1_o
        );
    })?;

    let mut manifest = RunManifest::new("train", serde_json::to_value(&cfg).unwrap());
    manifest.seed = Some(cfg.seed);
    manifest.inputs.push(train_path);
    manifest.inputs.push(valid_path);
    manifest.outputs.push(args.out.clone());
    manifest.wall_clock_ms = started.elapsed().as_millis();

    match (&outcome.best, outcome.diverged) {
        (Some(best), false) => {
            save_checkpoint(&args.out, best)?;
            manifest.write(manifest_path(&args.out))?;
            eprintln!(
                "best epoch {} with validation F1@O {:.4} -> {}",
                outcome.best_epoch,
                outcome.best_f1_o,
                args.out.display()
            );
            Ok(())
        }
        (Some(best), true) => {
            // keep the last good checkpoint, then report the divergence
            save_checkpoint(&args.out, best)?;
            manifest.write(manifest_path(&args.out))?;
            Err(KpError::Divergence(format!(
                "loss became non-finite; last good checkpoint (epoch {}) retained at {}",
                best.epoch,
                args.out.display()
            )))
        }
        (None, _) => Err(KpError::Divergence(
            "loss became non-finite before the first epoch completed".into(),
        )),
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn decode_one(
    ckpt: &crate::train::Checkpoint,
    doc: &Document,
    args: &PredictArgs,
) -> Result<DecodeResult> {
    let ex = encode_example(doc, &ckpt.vocab);
    match args.strategy {
        Strategy::Exhaustive => exhaustive_decode(
            &ckpt.params,
            &ckpt.vocab,
            &ex,
            args.beam,
            args.max_len,
            args.length_normalize,
        ),
        mode => self_terminating_decode(
            &ckpt.params,
            &ckpt.vocab,
            &ex,
            mode,
            args.beam,
            args.max_len,
            args.length_normalize,
        ),
    }
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let started = Instant::now();
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let docs = load_jsonl(&args.input)?.docs;
    eprintln!(
        "decoding {} documents with strategy {} (beam {}, max len {})",
        docs.len(),
        args.strategy,
        args.beam,
        args.max_len
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.max(1))
        .build()
        .map_err(|e| KpError::InvalidInput(format!("thread pool: {e}")))?;
    let results: Result<Vec<DecodeResult>> =
        pool.install(|| docs.par_iter().map(|doc| decode_one(&ckpt, doc, &args)).collect());
    let results = results?;

    let mut file = std::fs::File::create(&args.out).map_err(|e| KpError::io(&args.out, e))?;
    let mut unk_total = 0usize;
    for r in &results {
        unk_total += r.unk_emitted;
        let line = serde_json::json!({
            "id": r.doc_id,
            "phrases": r.surfaces(),
            "scores": r.phrases.iter().map(|p| p.score).collect::<Vec<f64>>(),
            "strategy": r.strategy.to_string(),
        });
        writeln!(file, "{line}").map_err(|e| KpError::io(&args.out, e))?;
    }
    if unk_total > 0 {
        eprintln!("note: {unk_total} <unk> tokens were emitted as argmax");
    }

    let mut manifest = RunManifest::new(
        "predict",
        serde_json::json!({
            "strategy": args.strategy.to_string(),
            "beam": args.beam,
            "max_len": args.max_len,
            "length_normalize": args.length_normalize,
        }),
    );
    manifest.inputs.push(args.checkpoint.clone());
    manifest.inputs.push(args.input.clone());
    manifest.outputs.push(args.out.clone());
    manifest.wall_clock_ms = started.elapsed().as_millis();
    manifest.write(manifest_path(&args.out))?;
    Ok(())
}

/// Prediction-file schema: {"id": str, "phrases": [str], ...} per line.
pub fn load_predictions(path: &Path) -> Result<Vec<(String, Vec<Phrase>)>> {
    let file = std::fs::File::open(path).map_err(|e| KpError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| KpError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| KpError::JsonLine {
            path: path.to_path_buf(),
            line: line_no,
            msg: e.to_string(),
        })?;
        let id = value
            .get("id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| KpError::MissingField {
                path: path.to_path_buf(),
                line: line_no,
                field: "id".into(),
            })?
            .to_string();
        let phrases = value
            .get("phrases")
            .and_then(|v| v.as_array())
            .ok_or_else(|| KpError::MissingField {
                path: path.to_path_buf(),
                line: line_no,
                field: "phrases".into(),
            })?
            .iter()
            .filter_map(|v| v.as_str())
            .filter_map(Phrase::from_text)
            .collect();
        out.push((id, phrases));
    }
    Ok(out)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let started = Instant::now();
    let gold = load_jsonl(&args.gold)?.docs;
    let preds = load_predictions(&args.pred)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.max(1))
        .build()
        .map_err(|e| KpError::InvalidInput(format!("thread pool: {e}")))?;
    let report = pool.install(|| evaluate_dataset(&gold, &preds, &args.extra_k))?;
    print!("{}", render_table(&report));
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&report).unwrap())
            .map_err(|e| KpError::io(out, e))?;
        let mut manifest = RunManifest::new(
            "evaluate",
            serde_json::json!({"extra_k": args.extra_k}),
        );
        manifest.inputs.push(args.pred.clone());
        manifest.inputs.push(args.gold.clone());
        manifest.outputs.push(out.clone());
        manifest.wall_clock_ms = started.elapsed().as_millis();
        manifest.write(manifest_path(out))?;
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let started = Instant::now();
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let mut docs = load_jsonl(&args.input)?.docs;
    if let Some(limit) = args.limit {
        docs.truncate(limit);
    }
    std::fs::create_dir_all(&args.out).map_err(|e| KpError::io(&args.out, e))?;

    // harvest states per cohort, tagged with their document
    let mut cohorts: std::collections::BTreeMap<usize, Vec<(String, ndarray::Array1<f64>)>> =
        args.steps_after_delimiter.iter().map(|&k| (k, Vec::new())).collect();
    for doc in &docs {
        let ex = encode_example(doc, &ckpt.vocab);
        let states = crate::eval::delimiter_following_states(
            &ckpt.params,
            &ex,
            args.max_len,
            &args.steps_after_delimiter,
        )?;
        for (k, v) in states {
            cohorts.get_mut(&k).expect("requested cohort").push((doc.id.clone(), v));
        }
    }

    let states_path = args.out.join("states.jsonl");
    let mut states_file =
        std::fs::File::create(&states_path).map_err(|e| KpError::io(&states_path, e))?;
    let mut summaries = Vec::new();
    for (k, tagged) in &cohorts {
        // deterministic subsample, written in original harvest order
        let keep: std::collections::HashSet<usize> = {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut idx: Vec<usize> = (0..tagged.len()).collect();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed ^ (*k as u64));
            idx.shuffle(&mut rng);
            idx.truncate(args.samples);
            idx.into_iter().collect()
        };
        let mut sampled = Vec::with_capacity(keep.len());
        for (i, (doc_id, v)) in tagged.iter().enumerate() {
            if keep.contains(&i) {
                let line = serde_json::json!({
                    "k": k,
                    "doc": doc_id,
                    "vec": v.iter().cloned().collect::<Vec<f64>>(),
                });
                writeln!(states_file, "{line}").map_err(|e| KpError::io(&states_path, e))?;
                sampled.push(v.clone());
            }
        }
        summaries.push(serde_json::json!({
            "k": k,
            "count": sampled.len(),
            "mean_pairwise_cosine": mean_pairwise_cosine(&sampled),
        }));
    }

    let report = serde_json::json!({
        "documents": docs.len(),
        "samples_requested": args.samples,
        "cohorts": summaries,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    let report_path = args.out.join("inspect.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report).unwrap())
        .map_err(|e| KpError::io(&report_path, e))?;

    let mut manifest = RunManifest::new(
        "inspect",
        serde_json::json!({
            "steps_after_delimiter": args.steps_after_delimiter,
            "samples": args.samples,
            "max_len": args.max_len,
            "seed": args.seed,
        }),
    );
    manifest.seed = Some(args.seed);
    manifest.inputs.push(args.checkpoint.clone());
    manifest.inputs.push(args.input.clone());
    manifest.outputs.push(states_path);
    manifest.outputs.push(report_path);
    manifest.wall_clock_ms = started.elapsed().as_millis();
    manifest.write(args.out.join("manifest.json"))?;
    Ok(())
}
