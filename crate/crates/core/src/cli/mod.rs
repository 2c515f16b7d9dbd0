//! Command-line front end. Each subcommand reads and writes files in the
//! work directory; diagnostics go to the log, data only to files.

mod config;

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use config::{
    config_hash, Context, PathsConfig, PipelineConfig, Preset, ReportConfig, SplitConfig,
    SynthConfig,
};

use crate::classifier::{init_model, predict, train, Example, SoftmaxModel, TrainLog};
use crate::corpus::{ingest_csv, ingest_csv_with, split, synth_corpus, write_csv, TweetRecord};
use crate::emoji::{label_records, EmojiRangeSet};
use crate::error::{Error, Result};
use crate::features::{tokenize, TfidfModel};
use crate::metrics::{render_report, score_external, EvalReport};
use crate::normalize::clean_text_with;

pub const CLEAN_CSV: &str = "clean.csv";
pub const CLEAN_STATS: &str = "clean_stats.json";
pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";
pub const SPLIT_MANIFEST: &str = "split_manifest.json";
pub const TFIDF_FILE: &str = "tfidf.tsv";
pub const MODEL_FILE: &str = "model.txt";
pub const TRAIN_LOG: &str = "train_log.tsv";
pub const TRAIN_SUMMARY: &str = "train_summary.json";

#[derive(Debug, Parser)]
#[command(
    name = "emocat",
    version,
    about = "Predict emoji categories for Arabic tweets"
)]
pub struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for splitting, training and synthesis.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding the pipeline's files.
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label raw tweets by their first emoji and clean their text.
    Clean {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Split the cleaned corpus into train and test files.
    Split {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        train_size: Option<usize>,
        #[arg(long)]
        stratified: bool,
    },
    /// Fit TF-IDF on the training file and train the classifier.
    Train {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        initial_lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Predict the test file and write the report.
    Eval {
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Score an `id,predicted` CSV produced elsewhere against the test file.
    ScoreExternal {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Generate a synthetic labeled corpus.
    Synth {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        noise_rate: Option<f64>,
        /// TOML file describing lexicons and counts; overrides the preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render a report JSON file as a text table.
    Report {
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// A JSON artifact with its provenance line as the first field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub provenance: String,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanStats {
    pub records_in: usize,
    pub dropped_empty: usize,
    pub malformed: usize,
    pub with_emoji: usize,
    pub without_emoji: usize,
    /// Emoji-bearing rows whose first emoji has no category.
    pub unmapped_emoji: usize,
    /// Rows with nothing left once cleaned.
    pub empty_after_cleaning: usize,
    pub records_out: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub input_records: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
    pub stratified: bool,
}

/// Run a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Clean { input } => {
            let input = input
                .or_else(|| config.paths.input.clone())
                .ok_or_else(|| Error::Config("no input: pass --input or set paths.input".into()))?;
            let ctx = Context::new(config, cli.workdir)?;
            cmd_clean(&ctx, &input).map(drop)
        }
        Command::Split {
            input,
            train_size,
            stratified,
        } => {
            if train_size.is_some() {
                config.split.train_size = train_size;
            }
            config.split.stratified |= stratified;
            let ctx = Context::new(config, cli.workdir)?;
            let input = input.unwrap_or_else(|| ctx.path(CLEAN_CSV));
            cmd_split(&ctx, &input).map(drop)
        }
        Command::Train {
            train,
            test,
            epochs,
            initial_lr,
            batch_size,
        } => {
            let t = &mut config.train;
            t.epochs = epochs.unwrap_or(t.epochs);
            t.initial_lr = initial_lr.unwrap_or(t.initial_lr);
            t.batch_size = batch_size.unwrap_or(t.batch_size);
            let ctx = Context::new(config, cli.workdir)?;
            let train = train.unwrap_or_else(|| ctx.path(TRAIN_CSV));
            let test = test.unwrap_or_else(|| ctx.path(TEST_CSV));
            cmd_train(&ctx, &train, &test).map(drop)
        }
        Command::Eval { test } => {
            let ctx = Context::new(config, cli.workdir)?;
            let test = test.unwrap_or_else(|| ctx.path(TEST_CSV));
            cmd_eval(&ctx, &test).map(drop)
        }
        Command::ScoreExternal { predictions, test } => {
            let ctx = Context::new(config, cli.workdir)?;
            let test = test.unwrap_or_else(|| ctx.path(TEST_CSV));
            cmd_score_external(&ctx, &predictions, &test).map(drop)
        }
        Command::Synth {
            preset,
            per_class,
            noise_rate,
            spec,
            output,
        } => {
            let s = &mut config.synth;
            s.preset = preset.unwrap_or(s.preset);
            s.per_class = per_class.unwrap_or(s.per_class);
            s.noise_rate = noise_rate.unwrap_or(s.noise_rate);
            if spec.is_some() {
                s.spec = spec;
            }
            let ctx = Context::new(config, cli.workdir)?;
            let output = output.unwrap_or_else(|| ctx.path(&ctx.config.synth.output));
            cmd_synth(&ctx, &output).map(drop)
        }
        Command::Report { json, output } => {
            let ctx = Context::new(config, cli.workdir)?;
            let json = json.unwrap_or_else(|| ctx.path(&ctx.config.report.json));
            let output = output.unwrap_or_else(|| json.with_extension("txt"));
            cmd_report(&json, &output)
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(ctx: &Context, path: &Path, body: T) -> Result<()> {
    let stamped = Stamped {
        provenance: ctx.provenance().to_string(),
        body,
    };
    let mut text = serde_json::to_string_pretty(&stamped)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Label by first emoji, keep labeled rows, clean their text.
///
/// Writes `clean.csv` and `clean_stats.json` to the work directory.
pub fn cmd_clean(ctx: &Context, input: &Path) -> Result<CleanStats> {
    let map = &ctx.label_map;
    let extractor = EmojiRangeSet::for_label_map(map);
    let (records, ingest) = ingest_csv_with(input, &extractor)?;
    if ingest.malformed > 0 {
        log::warn!(
            "{}: skipped {} malformed rows",
            input.display(),
            ingest.malformed
        );
    }
    let bearing: Vec<TweetRecord> = records.into_iter().filter(|r| r.emoji.is_some()).collect();
    let (labeled, unmapped_emoji) = label_records(bearing, map);

    let mut empty_after_cleaning = 0;
    let mut out = Vec::with_capacity(labeled.len());
    for mut r in labeled {
        let cleaned = clean_text_with(&r.raw_text, &ctx.config.cleaning, &extractor);
        if cleaned.is_empty() {
            empty_after_cleaning += 1;
            continue;
        }
        r.clean_text = Some(cleaned);
        out.push(r);
    }

    let stats = CleanStats {
        records_in: ingest.total_ingested,
        dropped_empty: ingest.dropped_empty,
        malformed: ingest.malformed,
        with_emoji: ingest.with_emoji,
        without_emoji: ingest.without_emoji,
        unmapped_emoji,
        empty_after_cleaning,
        records_out: out.len(),
    };
    write_csv(&ctx.path(CLEAN_CSV), &out, Some(ctx.provenance()))?;
    write_json(ctx, &ctx.path(CLEAN_STATS), stats)?;
    log::info!(
        "cleaned {} of {} records ({} without emoji)",
        stats.records_out,
        stats.records_in,
        stats.without_emoji
    );
    Ok(stats)
}

/// Seeded train/test split of a cleaned corpus.
pub fn cmd_split(ctx: &Context, input: &Path) -> Result<SplitManifest> {
    let (records, stats) = ingest_csv(input)?;
    if stats.dropped_empty + stats.malformed > 0 {
        log::warn!(
            "{}: skipped {} empty and {} malformed rows",
            input.display(),
            stats.dropped_empty,
            stats.malformed
        );
    }
    let spec = ctx.config.split.spec(records.len(), ctx.config.seed);
    let (train_set, test_set) = split(&records, &spec)?;
    write_csv(&ctx.path(TRAIN_CSV), &train_set, Some(ctx.provenance()))?;
    write_csv(&ctx.path(TEST_CSV), &test_set, Some(ctx.provenance()))?;
    let manifest = SplitManifest {
        input_records: records.len(),
        train_size: train_set.len(),
        test_size: test_set.len(),
        seed: spec.seed,
        stratified: spec.stratified,
    };
    write_json(ctx, &ctx.path(SPLIT_MANIFEST), &manifest)?;
    log::info!(
        "split {} records into {} / {}",
        records.len(),
        train_set.len(),
        test_set.len()
    );
    Ok(manifest)
}

fn labeled(records: &[TweetRecord], path: &Path, classes: usize) -> Result<Vec<usize>> {
    records
        .iter()
        .map(|r| match r.label {
            Some(l) if l < classes => Ok(l),
            Some(l) => Err(Error::LabelOutOfRange { label: l, classes }),
            None => Err(Error::Precondition(format!(
                "{}: record {} has no label",
                path.display(),
                r.id
            ))),
        })
        .collect()
}

fn examples(
    tfidf: &TfidfModel<f64>,
    records: &[TweetRecord],
    labels: &[usize],
) -> Vec<Example<f64>> {
    records
        .iter()
        .zip(labels)
        .map(|(r, &y)| Example::new(tfidf.transform(&tokenize(r.text())), y))
        .collect()
}

/// Fit TF-IDF on the training file and train the classifier, validating on
/// the test file at each epoch boundary.
pub fn cmd_train(ctx: &Context, train_path: &Path, test_path: &Path) -> Result<TrainLog> {
    let classes = ctx.label_map.num_classes();
    let (train_records, _) = ingest_csv(train_path)?;
    let (test_records, _) = ingest_csv(test_path)?;
    let train_labels = labeled(&train_records, train_path, classes)?;
    let test_labels = labeled(&test_records, test_path, classes)?;

    let docs: Vec<Vec<&str>> = train_records.iter().map(|r| tokenize(r.text())).collect();
    let tfidf = TfidfModel::<f64>::fit(&docs)?;
    let train_set = examples(&tfidf, &train_records, &train_labels);
    let test_set = examples(&tfidf, &test_records, &test_labels);

    let cfg = &ctx.config.train;
    if cfg.epochs == 0 {
        log::warn!("epochs = 0: writing the untrained zero model");
    }
    let model = init_model(tfidf.vocab_size(), classes)?;
    let (model, log) = train(model, &train_set, &test_set, cfg)?;

    let prov = Some(ctx.provenance());
    tfidf.save(&ctx.path(TFIDF_FILE), prov)?;
    model.save(&ctx.path(MODEL_FILE), prov)?;
    log.save(&ctx.path(TRAIN_LOG), prov)?;
    write_json(ctx, &ctx.path(TRAIN_SUMMARY), &log)?;
    if let Some(last) = log.epochs.last() {
        log::info!(
            "trained {} steps, final training objective {:.6}",
            last.step,
            last.train_loss
        );
    }
    Ok(log)
}

fn write_report(ctx: &Context, report: &EvalReport<f64>, text: &Path, json: &Path) -> Result<()> {
    let rendered = format!("# {}\n{}", ctx.provenance(), render_report(report));
    write_file(text, rendered.as_bytes())?;
    write_json(ctx, json, report)
}

/// Predict every test record; write the report and the per-example file.
pub fn cmd_eval(ctx: &Context, test_path: &Path) -> Result<EvalReport<f64>> {
    let map = &ctx.label_map;
    let tfidf = TfidfModel::<f64>::load(&ctx.path(TFIDF_FILE))?;
    let model = SoftmaxModel::<f64>::load(&ctx.path(MODEL_FILE))?;
    if model.features() != tfidf.vocab_size() {
        return Err(Error::Dimension {
            expected: tfidf.vocab_size(),
            actual: model.features(),
        });
    }
    if model.classes() != map.num_classes() {
        return Err(Error::Dimension {
            expected: map.num_classes(),
            actual: model.classes(),
        });
    }
    let (records, _) = ingest_csv(test_path)?;
    let truth = labeled(&records, test_path, map.num_classes())?;

    let mut predicted = Vec::with_capacity(records.len());
    let mut lines = format!("# {}\n", ctx.provenance());
    for (r, &y) in records.iter().zip(&truth) {
        let p = predict(&model, &tfidf.transform(&tokenize(r.text())))?;
        predicted.push(p);
        let name = |i: usize| map.decode_label(i).unwrap_or("?");
        lines.push_str(&format!(
            "{} | predicted: {} | actual: {}\n",
            r.text(),
            name(p),
            name(y)
        ));
    }
    write_file(&ctx.path(&ctx.config.report.predictions), lines.as_bytes())?;

    let report = EvalReport::from_labels(&truth, &predicted, map)?;
    let rc = &ctx.config.report;
    write_report(ctx, &report, &ctx.path(&rc.text), &ctx.path(&rc.json))?;
    log::info!(
        "accuracy {:.4}, macro F1 {:.4} over {} records",
        report.accuracy,
        report.macro_avg.f1,
        report.evaluated_count
    );
    Ok(report)
}

/// Score predictions made by another system against the test file.
pub fn cmd_score_external(
    ctx: &Context,
    predictions: &Path,
    test_path: &Path,
) -> Result<EvalReport<f64>> {
    let (records, _) = ingest_csv(test_path)?;
    let report = score_external(predictions, &records, &ctx.label_map)?;
    let rc = &ctx.config.report;
    write_report(
        ctx,
        &report,
        &ctx.path(&rc.external_text),
        &ctx.path(&rc.external_json),
    )?;
    log::info!(
        "scored {} of {} test records",
        report.evaluated_count,
        records.len()
    );
    Ok(report)
}

/// Write a synthetic labeled corpus in the standard CSV layout.
pub fn cmd_synth(ctx: &Context, output: &Path) -> Result<usize> {
    let spec = ctx.config.synth.build()?;
    let records = synth_corpus(&spec, &ctx.label_map, ctx.config.seed)?;
    write_csv(output, &records, Some(ctx.provenance()))?;
    log::info!(
        "wrote {} synthetic records to {}",
        records.len(),
        output.display()
    );
    Ok(records.len())
}

/// Re-render a report JSON as the text table, keeping its provenance line.
pub fn cmd_report(json: &Path, output: &Path) -> Result<()> {
    let text = std::fs::read_to_string(json).map_err(|e| Error::io(json, e))?;
    let stamped: Stamped<EvalReport<f64>> = serde_json::from_str(&text)?;
    let rendered = format!("# {}\n{}", stamped.provenance, render_report(&stamped.body));
    write_file(output, rendered.as_bytes())
}
