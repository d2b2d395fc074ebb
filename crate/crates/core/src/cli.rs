//! Command-line front end.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 empty result,
//! 3 failed numerical self-check.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::bundle::{write_atomic, write_dataset, BundleLayout};
use crate::fusion_reference::{
    assemble_sequence, expected_length, gradcheck, Activation, FusionConfig, MlpParams,
};
use crate::layout_engine::LayoutStyle;
use crate::metrics::{score, Prediction, DEFAULT_TAU};
use crate::modality_export::{from_layout_records, ExportFormat};
use crate::qa_builder::{
    build_bundle, build_dataset, parse_jsonl, parse_sources_jsonl, BuildOptions, QAPair,
    SourceFieldMap, Split,
};
use crate::table_model::DEFAULT_ID_ATTRIBUTE;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_EMPTY: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Gradcheck errors at or above this fail `fuse-check`.
pub const GRADCHECK_LIMIT: f64 = 1e-4;

/// Environment variable holding the log filter (default `warn`).
pub const LOG_ENV: &str = "TCQA_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "tcqa",
    version,
    about = "Table modality exports, cell-level QA datasets and answer scoring"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, lay out, render and export tables, then build a QA split.
    Build(BuildArgs),
    /// Export one HTML table in the requested formats.
    Export(ExportArgs),
    /// Score predictions against gold QA pairs.
    Score(ScoreArgs),
    /// Sequence-assembly statistics and MLP gradient check over a bundle.
    FuseCheck(FuseCheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct StyleArgs {
    #[arg(long, default_value_t = 16)]
    pub em: u32,
    #[arg(long, default_value_t = 4)]
    pub pad: u32,
    #[arg(long, default_value_t = 1)]
    pub border: u32,
    #[arg(long, default_value_t = 8)]
    pub ascii_advance: u32,
    #[arg(long, default_value_t = 16)]
    pub wide_advance: u32,
    #[arg(long, default_value_t = 20_000)]
    pub page_limit: u32,
}

impl StyleArgs {
    fn style(&self) -> LayoutStyle {
        LayoutStyle {
            em: self.em,
            ascii_advance: self.ascii_advance,
            wide_advance: self.wide_advance,
            pad: self.pad,
            border: self.border,
            page_limit: self.page_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Directory of `<table_id>.html` files.
    #[arg(long)]
    pub tables: PathBuf,
    /// JSON Lines file of source questions.
    #[arg(long)]
    pub sources: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Bundle output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = DEFAULT_ID_ATTRIBUTE)]
    pub id_attr: String,
    #[arg(long, default_value = "qa_id")]
    pub qa_id_field: String,
    #[arg(long, default_value = "table_id")]
    pub table_id_field: String,
    #[arg(long, default_value = "question")]
    pub question_field: String,
    #[arg(long, default_value = "answer_cell_id")]
    pub cell_id_field: String,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[command(flatten)]
    pub style: StyleArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// HTML file holding one table; its stem becomes the table ID.
    #[arg(long)]
    pub table: PathBuf,
    /// Comma-separated: clean-html, markdown, json, layout, svg.
    #[arg(long, value_delimiter = ',', required = true)]
    pub formats: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = DEFAULT_ID_ATTRIBUTE)]
    pub id_attr: String,
    #[command(flatten)]
    pub style: StyleArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Gold QA pairs, e.g. `<bundle>/qa/test.jsonl`.
    #[arg(long)]
    pub gold: PathBuf,
    /// JSON Lines of `{"qa_id", "prediction"}`.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Where to write the report.
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Gelu,
    Relu,
    Tanh,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Gelu => Activation::Gelu,
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Debug, Args)]
pub struct FuseCheckArgs {
    /// Bundle directory produced by `build`.
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, value_enum, default_value = "gelu")]
    pub activation: ActivationArg,
    #[arg(long, default_value_t = 4)]
    pub image_tokens: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Build(a) => cmd_build(&a),
        Command::Export(a) => cmd_export(&a),
        Command::Score(a) => cmd_score(&a),
        Command::FuseCheck(a) => cmd_fuse_check(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}

pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().filter_or(LOG_ENV, "warn"))
        .try_init();
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn cmd_build(args: &BuildArgs) -> Result<i32> {
    let started = Instant::now();
    let text = read_text(&args.sources)?;
    let fields = SourceFieldMap {
        qa_id: args.qa_id_field.clone(),
        table_id: args.table_id_field.clone(),
        question: args.question_field.clone(),
        answer_cell_id: args.cell_id_field.clone(),
    };
    let sources = parse_sources_jsonl(&text, &fields)
        .map_err(|e| anyhow!("{}: {e}", args.sources.display()))?;
    if !args.tables.is_dir() {
        bail!("tables directory {} is not readable", args.tables.display());
    }
    let style = args.style.style();
    style.validate()?;

    let opts = BuildOptions {
        style,
        id_attribute: args.id_attr.clone(),
        split: args.split.into(),
        threads: args.threads,
    };
    let dataset = build_dataset(&sources, &args.tables, &opts);
    write_dataset(&BundleLayout::new(&args.out), &dataset)?;

    let m = &dataset.manifest;
    info!(
        "built {} tables in {:.2?}",
        dataset.bundles.len(),
        started.elapsed()
    );
    println!("pairs={} skipped={}", m.pairs.len(), m.skipped.len());
    Ok(if m.pairs.is_empty() {
        EXIT_EMPTY
    } else {
        EXIT_OK
    })
}

pub fn cmd_export(args: &ExportArgs) -> Result<i32> {
    let mut formats = Vec::new();
    for name in &args.formats {
        match ExportFormat::from_name(name.trim()) {
            Some(f) => formats.push(f),
            None => {
                let known: Vec<_> = ExportFormat::ALL.iter().map(|f| f.name()).collect();
                eprintln!(
                    "error: unknown format {name:?}\nusage: tcqa export --table <FILE> --formats <{}> --out <DIR>",
                    known.join(",")
                );
                return Ok(EXIT_INPUT);
            }
        }
    }
    formats.sort();
    formats.dedup();

    let table_id = args
        .table
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| anyhow!("cannot derive a table id from {}", args.table.display()))?;
    let html = read_text(&args.table)?;
    let style = args.style.style();
    let (_, bundle) = build_bundle(table_id, &html, &style, &args.id_attr)
        .map_err(|e| anyhow!("{}: {e}", args.table.display()))?;
    for f in formats {
        write_atomic(
            &args.out.join(f.file_name(table_id)),
            bundle.export(f).as_bytes(),
        )?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_score(args: &ScoreArgs) -> Result<i32> {
    let gold: Vec<QAPair> = parse_jsonl(&read_text(&args.gold)?)
        .map_err(|e| anyhow!("{}: {e}", args.gold.display()))?;
    let predictions: Vec<Prediction> = parse_jsonl(&read_text(&args.predictions)?)
        .map_err(|e| anyhow!("{}: {e}", args.predictions.display()))?;
    let report = score(&predictions, &gold, args.tau)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_atomic(&args.report, json.as_bytes())?;
    if !report.missing.is_empty() {
        eprintln!("missing predictions: {}", report.missing.len());
    }
    if !report.extra.is_empty() {
        eprintln!("unscored extra predictions: {}", report.extra.len());
    }
    println!("{}", report.summary_line());
    Ok(EXIT_OK)
}

/// Summary printed by `fuse-check`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuseCheckSummary {
    pub sequences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub mean_len: f64,
    pub gradcheck: f64,
}

pub fn fuse_check(bundle: &Path, cfg: &FusionConfig, trials: usize) -> Result<FuseCheckSummary> {
    let layout = BundleLayout::new(bundle);
    let exports = layout.exports_dir();
    let mut docs = std::collections::BTreeMap::new();
    let entries =
        fs::read_dir(&exports).with_context(|| format!("reading {}", exports.display()))?;
    for entry in entries {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name.strip_suffix(".layout.json") {
            let doc = from_layout_records(&read_text(&path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            docs.insert(id.to_string(), doc);
        }
    }

    let mut questions: Vec<(String, String)> = Vec::new();
    for split in [Split::Train, Split::Test] {
        let path = layout.qa_file(split);
        if path.exists() {
            let pairs: Vec<QAPair> =
                parse_jsonl(&read_text(&path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
            questions.extend(pairs.into_iter().map(|p| (p.table_id, p.question)));
        }
    }
    if questions.is_empty() {
        questions = docs.keys().map(|id| (id.clone(), String::new())).collect();
    }

    let params = MlpParams::init(cfg);
    let mut lengths = Vec::with_capacity(questions.len());
    for (table_id, question) in &questions {
        let doc = docs
            .get(table_id)
            .ok_or_else(|| anyhow!("no layout export for table {table_id:?}"))?;
        let seq = assemble_sequence(doc, question, &params, cfg)?;
        if seq.len() != expected_length(doc, question, cfg) {
            bail!("sequence length mismatch for table {table_id:?}");
        }
        seq.check_block_order(cfg.n_image_tokens)
            .map_err(|e| anyhow!("table {table_id:?}: {e}"))?;
        lengths.push(seq.len());
    }

    let gradcheck = gradcheck(&params, cfg, trials)?;
    Ok(FuseCheckSummary {
        sequences: lengths.len(),
        min_len: lengths.iter().copied().min().unwrap_or(0),
        max_len: lengths.iter().copied().max().unwrap_or(0),
        mean_len: if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
        },
        gradcheck,
    })
}

pub fn cmd_fuse_check(args: &FuseCheckArgs) -> Result<i32> {
    let cfg = FusionConfig {
        d: args.d,
        hidden: args.hidden,
        activation: args.activation.into(),
        n_image_tokens: args.image_tokens,
        seed: args.seed,
    };
    let s = fuse_check(&args.bundle, &cfg, args.trials)?;
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "sequences={} min_len={} max_len={} mean_len={:.2}",
        s.sequences, s.min_len, s.max_len, s.mean_len
    )?;
    writeln!(
        out,
        "gradcheck max_rel_err={:.3e} trials={}",
        s.gradcheck, args.trials
    )?;
    Ok(if s.gradcheck < GRADCHECK_LIMIT {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}
