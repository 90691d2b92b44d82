//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for input or configuration errors, 3 when an
//! external scorer misbehaves. Options may also come from a JSON file given
//! with `--config`; flags on the command line take precedence.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::active_learning::{run_loop, ALConfig, OracleHandle, Strategy};
use crate::classifier::{LinearModel, Scorer, TfidfLogReg, TfidfLrLearner, TrainConfig};
use crate::corpus::{corpus_stats, load_corpus, Column, Corpus, CsvSchema, Label, Language, Split};
use crate::error::{Error, Result};
use crate::evaluation::{
    confusion, metrics, stratified_kfold, ConfusionMatrix, MetricsReport, MetricsSummary, ReportWriter,
};
use crate::features::{Vectorizer, DEFAULT_MAX_TOKENS};
use crate::scorer_protocol::ScorerSession;

#[derive(Debug, Parser)]
#[command(name = "hope-al", version, about = "Hope-speech classification with active learning")]
pub struct Cli {
    /// JSON file with default option values; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print label distribution and mean word counts as JSON.
    Stats(StatsArgs),
    /// Train TF-IDF logistic regression on a full training file.
    Train(TrainArgs),
    /// Run the active learning loop.
    AlRun(AlRunArgs),
    /// Label a CSV file with a saved model.
    Predict(PredictArgs),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
}

#[derive(Debug, Default, Args)]
pub struct SchemaArgs {
    /// Id column; ids default to zero-based row numbers.
    #[arg(long)]
    pub id_col: Option<String>,
    #[arg(long)]
    pub text_col: Option<String>,
    #[arg(long)]
    pub label_col: Option<String>,
    /// The file has no header row; columns are given as zero-based positions.
    #[arg(long)]
    pub no_header: bool,
    #[arg(long)]
    pub language: Option<String>,
}

#[derive(Debug, Default, Args)]
pub struct TrainingArgs {
    /// L2 regularization strength.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Tokens kept per document.
    #[arg(long)]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<Split>,
    /// Require every row to carry a label.
    #[arg(long)]
    pub labeled: bool,
    #[command(flatten)]
    pub schema: SchemaArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct AlRunArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Directory for model.json, vectorizer.json, history.jsonl and metrics.json.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub batch_k: Option<usize>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[arg(long)]
    pub min_rounds: Option<usize>,
    #[arg(long)]
    pub plateau_delta: Option<f64>,
    #[arg(long)]
    pub seed_frac: Option<f64>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// `lr` or `external:<command>`.
    #[arg(long)]
    pub model: Option<String>,
    /// Seconds to wait for an external scorer's handshake.
    #[arg(long)]
    pub scorer_timeout: Option<f64>,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model JSON written by `train` or `al-run`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub vectorizer: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// CSV rows (rounded); defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Full-precision per-fold and mean reports.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

/// Contents of a `--config` file. Keys mirror the long flag names with
/// underscores.
#[derive(Debug, Default, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub json_out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub vectorizer: Option<PathBuf>,
    pub model_file: Option<PathBuf>,
    pub split: Option<Split>,
    pub id_col: Option<String>,
    pub text_col: Option<String>,
    pub label_col: Option<String>,
    pub no_header: Option<bool>,
    pub language: Option<String>,
    pub lambda: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub max_tokens: Option<usize>,
    pub batch_k: Option<usize>,
    pub max_rounds: Option<usize>,
    pub min_rounds: Option<usize>,
    pub plateau_delta: Option<f64>,
    pub seed_frac: Option<f64>,
    pub strategy: Option<Strategy>,
    pub rng_seed: Option<u64>,
    pub model: Option<String>,
    pub scorer_timeout: Option<f64>,
    pub k: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Which model drives the loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelChoice {
    LogisticRegression,
    External(String),
}

impl std::str::FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lr" => Ok(ModelChoice::LogisticRegression),
            other => match other.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(ModelChoice::External(cmd.trim().to_string())),
                _ => Err(Error::Config(format!(
                    "model must be `lr` or `external:<command>`, got `{s}`"
                ))),
            },
        }
    }
}

/// Fully resolved settings after merging flags, config file and defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub schema: CsvSchema,
    pub language: Language,
    pub train: TrainConfig,
    pub max_tokens: usize,
    pub al: ALConfig,
    pub model: ModelChoice,
    pub scorer_timeout: Duration,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn column(name: &str, has_header: bool) -> Result<Column> {
    if has_header {
        Ok(Column::Name(name.to_string()))
    } else {
        name.parse::<usize>().map(Column::Index).map_err(|_| {
            Error::Config(format!(
                "column `{name}` must be a zero-based position when there is no header"
            ))
        })
    }
}

fn resolve_schema(args: &SchemaArgs, file: &FileConfig, labeled: bool) -> Result<(CsvSchema, Language)> {
    let has_header = !(args.no_header || file.no_header.unwrap_or(false));
    let default_text = if has_header { "text" } else { "0" };
    let default_label = if has_header { "label" } else { "1" };
    let text = pick(args.text_col.clone(), file.text_col.clone(), default_text.to_string());
    let label = args.label_col.clone().or_else(|| file.label_col.clone());
    let label = match label {
        Some(l) => Some(column(&l, has_header)?),
        None if labeled || has_header => Some(column(default_label, has_header)?),
        None => None,
    };
    let id = args
        .id_col
        .clone()
        .or_else(|| file.id_col.clone())
        .map(|c| column(&c, has_header))
        .transpose()?;
    let language = pick(args.language.clone(), file.language.clone(), "unknown".to_string());
    Ok((
        CsvSchema {
            id,
            text: column(&text, has_header)?,
            label,
            has_header,
        },
        language.parse().expect("infallible"),
    ))
}

fn resolve_training(args: &TrainingArgs, file: &FileConfig) -> Result<(TrainConfig, usize)> {
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        lambda: pick(args.lambda, file.lambda, defaults.lambda),
        max_iters: pick(args.max_iters, file.max_iters, defaults.max_iters),
        grad_tol: pick(args.grad_tol, file.grad_tol, defaults.grad_tol),
        seed: file.rng_seed.unwrap_or(defaults.seed),
    };
    cfg.validate()?;
    let max_tokens = pick(args.max_tokens, file.max_tokens, DEFAULT_MAX_TOKENS);
    if max_tokens == 0 {
        return Err(Error::Config("max_tokens must be >= 1".into()));
    }
    Ok((cfg, max_tokens))
}

impl RunConfig {
    pub fn resolve(args: &AlRunArgs, file: &FileConfig) -> Result<Self> {
        let (schema, language) = resolve_schema(&args.schema, file, true)?;
        let (mut train, max_tokens) = resolve_training(&args.training, file)?;
        let d = ALConfig::default();
        let al = ALConfig {
            batch_k: pick(args.batch_k, file.batch_k, d.batch_k),
            max_rounds: pick(args.max_rounds, file.max_rounds, d.max_rounds),
            min_rounds: pick(args.min_rounds, file.min_rounds, d.min_rounds),
            plateau_delta: pick(args.plateau_delta, file.plateau_delta, d.plateau_delta),
            seed_fraction: pick(args.seed_frac, file.seed_frac, d.seed_fraction),
            strategy: pick(args.strategy, file.strategy, d.strategy),
            rng_seed: pick(args.rng_seed, file.rng_seed, d.rng_seed),
        };
        al.validate()?;
        train.seed = al.rng_seed;
        let model = pick(args.model.clone(), file.model.clone(), "lr".into()).parse()?;
        let timeout = pick(args.scorer_timeout, file.scorer_timeout, 60.0);
        if !(timeout > 0.0 && timeout.is_finite()) {
            return Err(Error::Config("scorer_timeout must be positive".into()));
        }
        Ok(RunConfig {
            schema,
            language,
            train,
            max_tokens,
            al,
            model,
            scorer_timeout: Duration::from_secs_f64(timeout),
        })
    }
}

fn required(path: Option<PathBuf>, file: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.or(file)
        .ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(contents.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Protocol(_) => 3,
        _ => 2,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("hope-al: error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Stats(a) => cmd_stats(a, &file),
        Command::Train(a) => cmd_train(a, &file),
        Command::AlRun(a) => cmd_al_run(a, &file),
        Command::Predict(a) => cmd_predict(a, &file),
        Command::Cv(a) => cmd_cv(a, &file),
    }
}

pub fn cmd_stats(args: StatsArgs, file: &FileConfig) -> Result<()> {
    let input = required(args.input, file.input.clone(), "input")?;
    let split = pick(args.split, file.split, Split::Train);
    let (schema, language) = resolve_schema(&args.schema, file, args.labeled || split.requires_labels())?;
    let corpus = load_corpus(&input, &schema, split, language)?;
    if args.labeled && !corpus.is_labeled() {
        return Err(Error::Unlabeled(corpus.name));
    }
    let stats = corpus_stats(&corpus)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

/// Everything written after scoring a labeled evaluation set.
#[derive(Debug, Serialize)]
struct EvaluationOutput<'a> {
    model: &'a str,
    language: String,
    split: String,
    report: &'a MetricsReport,
    confusion: &'a ConfusionMatrix,
}

fn evaluate<S: Scorer + ?Sized>(scorer: &mut S, corpus: &Corpus) -> Result<(ConfusionMatrix, MetricsReport)> {
    let docs = corpus.labeled()?;
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let inputs: Vec<_> = docs.iter().map(|d| d.doc.clone()).collect();
    let scores = scorer.score_batch(&inputs)?;
    let gold: Vec<Label> = docs.iter().map(|d| d.label).collect();
    let pred: Vec<Label> = scores.iter().map(|p| p.predicted()).collect();
    let cm = confusion(&gold, &pred)?;
    let report = metrics(&cm)?;
    Ok((cm, report))
}

fn report_dev<S: Scorer + ?Sized>(
    scorer: &mut S,
    dev_path: &Path,
    schema: &CsvSchema,
    language: &Language,
    model_name: &str,
    out: &Path,
) -> Result<()> {
    let dev = load_corpus(dev_path, schema, Split::Dev, language.clone())?;
    let (cm, report) = evaluate(scorer, &dev)?;
    let output = EvaluationOutput {
        model: model_name,
        language: language.to_string(),
        split: Split::Dev.to_string(),
        report: &report,
        confusion: &cm,
    };
    write_file(out, &(serde_json::to_string_pretty(&output)? + "\n"))?;
    print!("{cm}");
    println!(
        "accuracy={:.3} macro_f1={:.3} weighted_f1={:.3}",
        report.accuracy, report.macro_f1, report.weighted_f1
    );
    Ok(())
}

fn save_lr(lr: &TfidfLogReg, out_dir: &Path) -> Result<()> {
    write_file(&out_dir.join("model.json"), &(lr.model.to_json() + "\n"))?;
    write_file(&out_dir.join("vectorizer.json"), &(lr.vectorizer.to_json() + "\n"))
}

pub fn cmd_train(args: TrainArgs, file: &FileConfig) -> Result<()> {
    let train_path = required(args.train, file.train.clone(), "train")?;
    let out_dir = pick(args.out_dir, file.out_dir.clone(), PathBuf::from("model-out"));
    let (schema, language) = resolve_schema(&args.schema, file, true)?;
    let (cfg, max_tokens) = resolve_training(&args.training, file)?;
    let corpus = load_corpus(&train_path, &schema, Split::Train, language.clone())?;
    let mut lr = TfidfLogReg::fit(&corpus.labeled()?, &cfg, max_tokens)?;
    save_lr(&lr, &out_dir)?;
    if let Some(dev) = args.dev.or(file.dev.clone()) {
        report_dev(&mut lr, &dev, &schema, &language, "lr", &out_dir.join("metrics.json"))?;
    }
    Ok(())
}

pub fn cmd_al_run(args: AlRunArgs, file: &FileConfig) -> Result<()> {
    let train_path = required(args.train.clone(), file.train.clone(), "train")?;
    let dev_path = args.dev.clone().or(file.dev.clone());
    let out_dir = pick(args.out_dir.clone(), file.out_dir.clone(), PathBuf::from("al-out"));
    let cfg = RunConfig::resolve(&args, file)?;

    let corpus = load_corpus(&train_path, &cfg.schema, Split::Train, cfg.language.clone())?;
    let train_set = corpus.labeled()?;
    let oracle = OracleHandle::from_documents(&train_set);

    let (state, model_name) = match &cfg.model {
        ModelChoice::LogisticRegression => {
            let mut learner = TfidfLrLearner::new(cfg.train.clone(), cfg.max_tokens);
            let state = run_loop(&train_set, &mut learner, &oracle, &cfg.al)?;
            let mut lr = learner.into_fitted().ok_or(Error::NotFitted)?;
            save_lr(&lr, &out_dir)?;
            if let Some(dev) = &dev_path {
                report_dev(
                    &mut lr,
                    dev,
                    &cfg.schema,
                    &cfg.language,
                    "lr",
                    &out_dir.join("metrics.json"),
                )?;
            }
            (state, "lr")
        }
        ModelChoice::External(command) => {
            let mut session = ScorerSession::spawn_command(command, cfg.scorer_timeout)?;
            let state = run_loop(&train_set, &mut session, &oracle, &cfg.al)?;
            if let Some(dev) = &dev_path {
                report_dev(
                    &mut session,
                    dev,
                    &cfg.schema,
                    &cfg.language,
                    "external",
                    &out_dir.join("metrics.json"),
                )?;
            }
            (state, "external")
        }
    };

    let history_path = out_dir.join("history.jsonl");
    let mut w = create(&history_path)?;
    state.write_history(&mut w)?;
    w.flush().map_err(|e| Error::io(&history_path, e))?;
    eprintln!(
        "{model_name}: {} rounds, {} labeled, {} left in pool ({:?})",
        state.history.len(),
        state.labeled.len(),
        state.pool.len(),
        state.stop_reason
    );
    Ok(())
}

fn read_json_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn cmd_predict(args: PredictArgs, file: &FileConfig) -> Result<()> {
    let model_path = required(args.model, file.model_file.clone(), "model")?;
    let vec_path = required(args.vectorizer, file.vectorizer.clone(), "vectorizer")?;
    let input = required(args.input, file.input.clone(), "input")?;
    let (schema, language) = resolve_schema(&args.schema, file, false)?;

    let model = LinearModel::from_json(&read_json_file(&model_path)?)?;
    let vectorizer = Vectorizer::from_json(&read_json_file(&vec_path)?)?;
    let lr = TfidfLogReg::from_parts(vectorizer, model)?;
    let corpus = load_corpus(&input, &schema, Split::Test, language)?;

    let sink: Box<dyn Write> = match args.output.or(file.output.clone()) {
        Some(p) => Box::new(create(&p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(["id", "label"])?;
    for doc in corpus.documents() {
        w.write_record([doc.id.as_str(), lr.predict(doc).as_str()])?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

/// Per-fold reports plus their mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<MetricsReport>,
    pub mean: MetricsSummary,
}

/// Trains and evaluates TF-IDF logistic regression on each fold.
pub fn cross_validate(
    corpus: &Corpus,
    k: usize,
    rng_seed: u64,
    cfg: &TrainConfig,
    max_tokens: usize,
) -> Result<CvResult> {
    let docs = corpus.labeled()?;
    let split = stratified_kfold(&docs, k, rng_seed)?;
    let mut folds = Vec::with_capacity(k);
    for fold in &split.folds {
        let held: HashSet<&str> = fold.iter().map(String::as_str).collect();
        let (test, train): (Vec<_>, Vec<_>) = docs.iter().cloned().partition(|d| held.contains(d.doc.id.as_str()));
        let lr = TfidfLogReg::fit(&train, cfg, max_tokens)?;
        let gold: Vec<Label> = test.iter().map(|d| d.label).collect();
        let pred: Vec<Label> = test.iter().map(|d| lr.predict(&d.doc)).collect();
        folds.push(metrics(&confusion(&gold, &pred)?)?);
    }
    let summaries: Vec<MetricsSummary> = folds.iter().map(MetricsReport::summary).collect();
    let mean = MetricsSummary::mean(&summaries).expect("k >= 2 folds");
    Ok(CvResult { folds, mean })
}

pub fn cmd_cv(args: CvArgs, file: &FileConfig) -> Result<()> {
    let input = required(args.input, file.input.clone(), "input")?;
    let (schema, language) = resolve_schema(&args.schema, file, true)?;
    let (cfg, max_tokens) = resolve_training(&args.training, file)?;
    let k = pick(args.k, file.k, 5);
    let rng_seed = pick(args.rng_seed, file.rng_seed, 0);
    let corpus = load_corpus(&input, &schema, Split::Train, language.clone())?;
    let result = cross_validate(&corpus, k, rng_seed, &cfg, max_tokens)?;

    let sink: Box<dyn Write> = match args.output.or(file.output.clone()) {
        Some(p) => Box::new(create(&p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = ReportWriter::new(sink)?;
    let lang = language.to_string();
    for (i, report) in result.folds.iter().enumerate() {
        w.row("lr", &lang, &format!("fold-{}", i + 1), &report.summary())?;
    }
    w.row("lr", &lang, "mean", &result.mean)?;
    w.finish()?;
    if let Some(p) = args.json_out.or(file.json_out.clone()) {
        write_file(&p, &(serde_json::to_string_pretty(&result)? + "\n"))?;
    }
    Ok(())
}
