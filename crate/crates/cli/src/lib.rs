//! Command-line front end: partition tables, training, evaluation, toy
//! data and metrics export.
//!
//! Exit codes: 0 on success, 2 for usage and configuration errors, 1 when a
//! run fails.

mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tempervi::engine::Checkpoint;
use tempervi::eval::{predictive_loglik, HeldoutSet};
use tempervi::fmm::{
    feature_rmse, fmm_generate, fmm_log_partition, matrix_to_csv, parse_matrix_csv, toy_features, FmmNormalizer,
    VarianceConvention,
};
use tempervi::metrics::{export_long, read_metrics_csv, METRICS_HEADER};
use tempervi::partition::{lda_log_partition, map_log_partition, mc_log_partition};
use tempervi::tempering::LocalTemperatureForm;
use tempervi::{
    elbo, ConjugateModel, Corpus, Error, Fmm, FmmConfig, FmmGlobal, GridConfig, GridSpacing, Lda, LdaConfig,
    LdaGlobal, Mode, PartitionMethod, PartitionTable, TrainConfig, Trainer,
};

const SUBCOMMANDS: [&str; 5] = ["precompute-partition", "train", "evaluate", "generate-fmm", "export-metrics"];

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "TEMPERVI_THREADS";

#[derive(Parser, Debug)]
#[command(name = "tempervi", version, about = "Variational inference with annealing and variational tempering")]
struct Cli {
    /// Flat key=value file of flags for the subcommand; flags on the command
    /// line take precedence over the file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Keep outputs byte-identical across runs (refuses --wallclock)
    #[arg(long, global = true)]
    reproducible: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate log C(T) on a temperature grid
    PrecomputePartition(PrecomputeArgs),
    /// Fit a model and write metrics, checkpoint and the fitted model
    Train(TrainArgs),
    /// Score a fitted model
    Evaluate(EvaluateArgs),
    /// Sample the toy factorial-mixture data set
    GenerateFmm(GenerateArgs),
    /// Merge metrics files into one long-format CSV
    ExportMetrics(ExportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelKind {
    Lda,
    Fmm,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: ModelKind,

    /// Topics (lda) or features (fmm) [default: 100 for lda, 8 for fmm]
    #[arg(long)]
    k: Option<usize>,

    /// Dirichlet parameter of the topic proportions [default: 1/K]
    #[arg(long)]
    alpha: Option<f64>,

    /// Dirichlet parameter of the topics [default: 1/K]
    #[arg(long)]
    eta: Option<f64>,

    /// Activation probability of each feature (fmm)
    #[arg(long, default_value_t = 0.3)]
    pi: f64,

    /// Observation noise scale (fmm)
    #[arg(long, default_value_t = 0.1)]
    sigma_n: f64,

    /// Prior scale of the features (fmm)
    #[arg(long, default_value_t = 0.35)]
    sigma_mu: f64,

    /// Whether the fmm scales are `stddev`s or `variance`s
    #[arg(long, default_value = "stddev")]
    variance_convention: VarianceConvention,
}

impl ModelArgs {
    fn k_or_default(&self) -> usize {
        self.k.unwrap_or(match self.model {
            ModelKind::Lda => 100,
            ModelKind::Fmm => 8,
        })
    }

    fn lda(&self, v: usize) -> Result<LdaConfig, Failure> {
        let k = self.k_or_default();
        if k == 0 {
            return Err(Failure::Config("--k must be at least 1".into()));
        }
        let cfg = LdaConfig {
            k,
            v,
            alpha: self.alpha.unwrap_or(1.0 / k as f64),
            eta: self.eta.unwrap_or(1.0 / k as f64),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn fmm(&self, d: usize) -> Result<FmmConfig, Failure> {
        let cfg = FmmConfig {
            k: self.k_or_default(),
            d,
            pi: self.pi,
            sigma_n: self.sigma_n,
            sigma_mu: self.sigma_mu,
            convention: self.variance_convention,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct GridArgs {
    /// exponential, linear or inverse-linear
    #[arg(long, default_value = "exponential")]
    grid_spacing: GridSpacing,

    /// Number of temperatures
    #[arg(long, default_value_t = 100)]
    grid_size: usize,

    /// Largest temperature
    #[arg(long, default_value_t = 10.0)]
    t_max: f64,
}

impl GridArgs {
    fn config(&self) -> GridConfig {
        GridConfig {
            spacing: self.grid_spacing,
            size: self.grid_size,
            t_max: self.t_max,
        }
    }
}

#[derive(Args, Debug)]
struct PrecomputeArgs {
    #[command(flatten)]
    model: ModelArgs,

    #[command(flatten)]
    grid: GridArgs,

    /// analytic, mc or map for fmm; lda-nested for lda [default: analytic for fmm, lda-nested for lda]
    #[arg(long)]
    method: Option<PartitionMethod>,

    /// Training corpus (lda); supplies V, D and words per document
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,

    /// Vocabulary size (lda, without --corpus)
    #[arg(long)]
    v: Option<usize>,

    /// Number of documents (lda, without --corpus)
    #[arg(long)]
    docs: Option<usize>,

    /// Average words per document (lda, without --corpus)
    #[arg(long)]
    words_per_doc: Option<f64>,

    /// Training data, one comma-separated row per point (fmm); supplies N and D
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,

    /// Number of data points (fmm, without --data)
    #[arg(long)]
    n: Option<usize>,

    /// Data dimension (fmm, without --data) [default: 16]
    #[arg(long)]
    d: Option<usize>,

    /// Feature matrix, K rows of D values, at which `map` is evaluated
    #[arg(long, value_name = "PATH")]
    features: Option<PathBuf>,

    /// Monte Carlo draws (mc) or topic draws (lda-nested)
    #[arg(long, default_value_t = 100)]
    samples: usize,

    /// Topic-proportion draws per topic draw (lda-nested)
    #[arg(long, default_value_t = 100)]
    inner_samples: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output table
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,

    #[command(flatten)]
    grid: GridArgs,

    /// Training corpus in UCI bag-of-words format (lda)
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,

    /// Training data, one comma-separated row per point (fmm)
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,

    /// svi, avi, vt or lvt
    #[arg(long, default_value = "svi")]
    mode: Mode,

    #[arg(long, default_value_t = 100)]
    batch_size: usize,

    /// Update from all data at every iteration with unit step size
    #[arg(long)]
    full_batch: bool,

    /// Step-size delay
    #[arg(long, default_value_t = 1024.0)]
    tau: f64,

    /// Step-size forgetting rate
    #[arg(long, default_value_t = 0.7)]
    kappa: f64,

    /// Initial annealing temperature (avi) [default: mean grid temperature]
    #[arg(long)]
    anneal_t0: Option<f64>,

    /// Length of the annealing schedule in passes (avi)
    #[arg(long, default_value_t = 1.0)]
    anneal_passes: f64,

    /// Iterations between annealing steps (avi)
    #[arg(long, default_value_t = 1000)]
    anneal_update_every: usize,

    /// Iterations between temperature-posterior refreshes (vt)
    #[arg(long, default_value_t = 1000)]
    temp_update_every: usize,

    /// Weight of the newest temperature statistic in a moving average (vt)
    #[arg(long)]
    temp_ema: Option<f64>,

    /// prior-inside-bracket, prior-outside-bracket or mean-field (lvt)
    #[arg(long, default_value = "prior-inside-bracket")]
    lvt_form: LocalTemperatureForm,

    /// Alternations between local fits and local temperatures (lvt)
    #[arg(long, default_value_t = 5)]
    lvt_rounds: usize,

    /// Training length in effective passes over the data
    #[arg(long, default_value_t = 1.0)]
    passes: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Iterations between metrics rows
    #[arg(long, default_value_t = 100)]
    eval_every: usize,

    /// Report the ELBO at T = 1 in full-batch runs
    #[arg(long)]
    track_elbo: bool,

    /// Record elapsed seconds in the metrics
    #[arg(long)]
    wallclock: bool,

    /// Table from precompute-partition (required by vt)
    #[arg(long, value_name = "PATH")]
    partition_table: Option<PathBuf>,

    /// Held-out corpus scored at each metrics row (lda)
    #[arg(long, value_name = "PATH")]
    test_corpus: Option<PathBuf>,

    /// Seed of the observed/held-out split of test documents
    #[arg(long, default_value_t = 0)]
    heldout_seed: u64,

    /// Metrics CSV [default: stdout]
    #[arg(long, value_name = "PATH")]
    metrics: Option<PathBuf>,

    /// Checkpoint written at the end of the run and on failure
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,

    /// Checkpoint to continue from; the configuration must match
    #[arg(long, value_name = "PATH")]
    resume: Option<PathBuf>,

    /// Fitted model (JSON)
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Fitted model written by `train --output`
    #[arg(long, value_name = "PATH")]
    model_file: PathBuf,

    /// Test corpus for the held-out log-likelihood (lda)
    #[arg(long, value_name = "PATH")]
    test_corpus: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    heldout_seed: u64,

    /// Data for the ELBO at T = 1 (fmm)
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,

    /// True feature matrix for the feature RMSE (fmm)
    #[arg(long, value_name = "PATH")]
    truth: Option<PathBuf>,

    /// Vocabulary, one token per line (lda)
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,

    /// Print this many top words per topic (lda, needs --vocab)
    #[arg(long, default_value_t = 0)]
    top_words: usize,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 0.3)]
    pi: f64,

    #[arg(long, default_value_t = 0.1)]
    sigma_n: f64,

    #[arg(long, default_value = "stddev")]
    variance_convention: VarianceConvention,

    /// Data CSV, one point per row
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// True features, one per row
    #[arg(long, value_name = "PATH")]
    features_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Metrics files as `name=path`, or `path` to name the run after the file
    #[arg(required = true, value_name = "RUN")]
    runs: Vec<String>,

    /// Output CSV [default: stdout]
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// A fitted model together with the settings needed to use it.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
enum ModelFile {
    Lda { config: LdaConfig, global: LdaGlobal },
    Fmm { config: FmmConfig, global: FmmGlobal },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    if argv.is_empty() {
        argv.push("tempervi".into());
    }
    match expand_config(&mut argv) {
        Ok(()) => {}
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    }
    let command = Cli::command()
        .args_override_self(true)
        .mut_subcommands(|c| c.args_override_self(true));
    let cli = match command
        .try_get_matches_from(&argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return 2;
    }
    let result = match cli.command {
        Command::PrecomputePartition(a) => precompute(a),
        Command::Train(a) => train(a, cli.reproducible),
        Command::Evaluate(a) => evaluate(a),
        Command::GenerateFmm(a) => generate(a),
        Command::ExportMetrics(a) => export(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("see `tempervi --help` for usage");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

/// Splices the entries of `--config` right after the subcommand name, so
/// explicit flags, which come later, override them.
fn expand_config(argv: &mut Vec<String>) -> Result<(), String> {
    let Some(path) = config::find_config_flag(&argv[1..])? else {
        return Ok(());
    };
    let extra = config::file_to_args(Path::new(&path))?;
    let Some(at) = argv.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(());
    };
    let at = at + 2;
    argv.splice(at..at, extra);
    Ok(())
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV}={value} is not a positive integer"))?;
    // a pool built earlier in this process keeps its size
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        log::debug!("global thread pool already initialized");
    }
    Ok(())
}

fn precompute(a: PrecomputeArgs) -> Result<(), Failure> {
    let grid = a.grid.config().build()?;
    let table = match a.model.model {
        ModelKind::Lda => {
            let method = a.method.unwrap_or(PartitionMethod::LdaNested);
            if method != PartitionMethod::LdaNested {
                return Err(Failure::Config(format!("method {method} is not available for lda; use lda-nested")));
            }
            let (v, docs, words_per_doc) = match &a.corpus {
                Some(path) => {
                    let c = Corpus::load(path)?;
                    (c.vocab_size, c.num_docs(), c.mean_doc_len())
                }
                None => match (a.v, a.docs, a.words_per_doc) {
                    (Some(v), Some(d), Some(w)) => (v, d, w),
                    _ => {
                        return Err(Failure::Config(
                            "lda needs --corpus, or all of --v, --docs and --words-per-doc".into(),
                        ))
                    }
                },
            };
            let cfg = a.model.lda(v)?;
            lda_log_partition(&cfg.priors(), words_per_doc, docs as f64, &grid, a.samples, a.inner_samples, a.seed)?
        }
        ModelKind::Fmm => {
            let (n, d) = match &a.data {
                Some(path) => {
                    let rows = load_matrix(path)?;
                    let d = rows.first().map_or(0, Vec::len);
                    (rows.len(), d)
                }
                None => (
                    a.n.ok_or_else(|| Failure::Config("fmm needs --data or --n".into()))?,
                    a.d.unwrap_or(16),
                ),
            };
            let cfg = a.model.fmm(d)?;
            let n = n as f64;
            match a.method.unwrap_or(PartitionMethod::Analytic) {
                PartitionMethod::Analytic => fmm_log_partition(&cfg, n, &grid)?,
                PartitionMethod::Mc => mc_log_partition(&FmmNormalizer { config: cfg }, n, &grid, a.samples, a.seed)?,
                PartitionMethod::Map => {
                    let path = a
                        .features
                        .as_ref()
                        .ok_or_else(|| Failure::Config("method map needs --features".into()))?;
                    let mu: Vec<f64> = load_matrix(path)?.concat();
                    if mu.len() != cfg.k * cfg.d {
                        return Err(Failure::Runtime(format!(
                            "{}: expected {} x {} feature values",
                            path.display(),
                            cfg.k,
                            cfg.d
                        )));
                    }
                    let normalizer = FmmNormalizer { config: cfg };
                    let beta = normalizer.natural_from_features(&mu);
                    map_log_partition(&normalizer, n, &grid, &beta)?
                }
                PartitionMethod::LdaNested => {
                    return Err(Failure::Config("method lda-nested is only available for lda".into()))
                }
            }
        }
    };
    table.save(&a.out)?;
    log::info!("wrote {} temperatures to {}", table.grid().len(), a.out.display());
    Ok(())
}

fn load_matrix(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let rows = parse_matrix_csv(&text, path)?;
    if rows.is_empty() {
        return Err(Failure::Runtime(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn train(a: TrainArgs, reproducible: bool) -> Result<(), Failure> {
    if reproducible && a.wallclock {
        return Err(Failure::Config("--wallclock records timings and cannot be combined with --reproducible".into()));
    }
    let config = TrainConfig {
        mode: a.mode,
        batch_size: (!a.full_batch).then_some(a.batch_size),
        tau: a.tau,
        kappa: a.kappa,
        grid: a.grid.config(),
        anneal_t0: a.anneal_t0,
        anneal_passes: a.anneal_passes,
        anneal_update_every: a.anneal_update_every,
        temp_update_every: a.temp_update_every,
        temp_ema: a.temp_ema,
        lvt_form: a.lvt_form,
        lvt_rounds: a.lvt_rounds,
        max_passes: a.passes,
        seed: a.seed,
        eval_every: a.eval_every,
        track_elbo: a.track_elbo,
        record_wallclock: a.wallclock,
    };
    // fail on configuration before touching any data
    config.validate()?;
    if a.mode == Mode::Vt && a.partition_table.is_none() {
        return Err(Failure::Config(
            "mode vt requires a partition table: pass --partition-table (see precompute-partition)".into(),
        ));
    }
    let table = a.partition_table.as_deref().map(PartitionTable::load).transpose()?;

    let fitted = match a.model.model {
        ModelKind::Lda => {
            let path = a
                .corpus
                .as_ref()
                .ok_or_else(|| Failure::Config("lda training needs --corpus".into()))?;
            let corpus = Corpus::load(path)?;
            let cfg = a.model.lda(corpus.vocab_size)?;
            let model = Lda::new(cfg)?;
            let heldout = match &a.test_corpus {
                Some(p) => {
                    let test = Corpus::load(p)?;
                    if test.vocab_size != corpus.vocab_size {
                        return Err(Failure::Runtime(format!(
                            "test corpus has {} words, training corpus {}",
                            test.vocab_size, corpus.vocab_size
                        )));
                    }
                    Some(HeldoutSet::new(&test.docs, a.heldout_seed))
                }
                None => None,
            };
            let score = |g: &LdaGlobal| predictive_loglik(&model, g, heldout.as_ref().expect("checked"));
            let score_ref: Option<&dyn Fn(&LdaGlobal) -> tempervi::Result<f64>> =
                heldout.as_ref().map(|_| &score as _);
            let global = fit(&model, &corpus.docs, config, table, score_ref, &a)?;
            ModelFile::Lda { config: cfg, global }
        }
        ModelKind::Fmm => {
            if a.test_corpus.is_some() {
                return Err(Failure::Config("--test-corpus applies to lda only".into()));
            }
            let path = a
                .data
                .as_ref()
                .ok_or_else(|| Failure::Config("fmm training needs --data".into()))?;
            let data = load_matrix(path)?;
            let cfg = a.model.fmm(data[0].len())?;
            let model = Fmm::new(cfg)?.with_init_count(data.len());
            let global = fit(&model, &data, config, table, None, &a)?;
            ModelFile::Fmm { config: cfg, global }
        }
    };
    if let Some(path) = &a.output {
        let json = serde_json::to_string_pretty(&fitted).map_err(|e| Failure::Runtime(e.to_string()))?;
        fs::write(path, json).map_err(|e| io_failure(path, e))?;
    }
    Ok(())
}

fn fit<M: ConjugateModel>(
    model: &M,
    data: &[M::Datum],
    config: TrainConfig,
    table: Option<PartitionTable>,
    heldout: Option<&dyn Fn(&M::Global) -> tempervi::Result<f64>>,
    a: &TrainArgs,
) -> Result<M::Global, Failure> {
    let mut trainer = Trainer::new(model, data, config, table)?;
    if let Some(path) = &a.resume {
        trainer.restore(Checkpoint::load(path)?)?;
        log::info!("resuming at iteration {}", trainer.iteration());
    }
    let mut out: Box<dyn Write> = match &a.metrics {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| io_failure(path, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let metrics_name = a.metrics.as_deref().unwrap_or(Path::new("<stdout>"));
    writeln!(out, "{METRICS_HEADER}").map_err(|e| io_failure(metrics_name, e))?;
    let mut write_error = None;
    let run = trainer.run(heldout, a.checkpoint.as_deref(), |row| {
        if write_error.is_none() {
            let r = writeln!(out, "{}", row.to_csv_line()).and_then(|_| out.flush());
            write_error = r.err();
        }
        log::info!(
            "iteration {} passes {:.3} E[T] {:.4} heldout {:?}",
            row.iteration,
            row.effective_passes,
            row.expected_t,
            row.heldout
        );
    });
    out.flush().map_err(|e| io_failure(metrics_name, e))?;
    if let Some(e) = write_error {
        return Err(io_failure(metrics_name, e));
    }
    // a failing run is a runtime error even when the library calls it a
    // configuration problem, since the configuration was accepted above
    run.map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(trainer.global().clone())
}

fn evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.model_file).map_err(|e| io_failure(&a.model_file, e))?;
    let fitted: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", a.model_file.display())))?;
    match fitted {
        ModelFile::Lda { config, global } => {
            if a.data.is_some() || a.truth.is_some() {
                return Err(Failure::Config("--data and --truth apply to fmm models".into()));
            }
            let model = Lda::new(config)?;
            model.check_global(&global)?;
            if let Some(path) = &a.test_corpus {
                let test = Corpus::load(path)?;
                if test.vocab_size != config.v {
                    return Err(Failure::Runtime(format!(
                        "test corpus has {} words, model {}",
                        test.vocab_size, config.v
                    )));
                }
                let score = predictive_loglik(&model, &global, &HeldoutSet::new(&test.docs, a.heldout_seed))?;
                println!("heldout_loglik_per_word={score}");
            }
            if a.top_words > 0 {
                let path = a
                    .vocab
                    .as_ref()
                    .ok_or_else(|| Failure::Config("--top-words needs --vocab".into()))?;
                let vocab: Vec<String> = fs::read_to_string(path)
                    .map_err(|e| io_failure(path, e))?
                    .lines()
                    .map(str::to_string)
                    .collect();
                if vocab.len() != config.v {
                    return Err(Failure::Runtime(format!(
                        "{}: {} tokens for a vocabulary of {}",
                        path.display(),
                        vocab.len(),
                        config.v
                    )));
                }
                for k in 0..config.k {
                    let topic = global.topic(k);
                    let mut order: Vec<usize> = (0..config.v).collect();
                    order.sort_by(|&x, &y| topic[y].total_cmp(&topic[x]).then(x.cmp(&y)));
                    let words: Vec<&str> = order.iter().take(a.top_words).map(|&w| vocab[w].as_str()).collect();
                    println!("topic {k}: {}", words.join(" "));
                }
            }
        }
        ModelFile::Fmm { config, global } => {
            if a.test_corpus.is_some() || a.top_words > 0 {
                return Err(Failure::Config("--test-corpus and --top-words apply to lda models".into()));
            }
            let model = Fmm::new(config)?;
            model.check_global(&global)?;
            if let Some(path) = &a.data {
                let data = load_matrix(path)?;
                let cache = model.prepare(&global);
                let locals: Vec<_> = data.par_iter().map(|x| model.local_step(x, &cache, 1.0, None)).collect();
                println!("elbo_T1={}", elbo(&model, &data, &global, &locals)?);
            }
            if let Some(path) = &a.truth {
                let truth = load_matrix(path)?.concat();
                println!("feature_rmse={}", feature_rmse(&global.m, &truth, config.k)?);
            }
        }
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let cfg = FmmConfig {
        pi: a.pi,
        sigma_n: a.sigma_n,
        convention: a.variance_convention,
        ..FmmConfig::toy()
    };
    let features = toy_features(a.seed);
    let data = fmm_generate(&cfg, &features, a.n, a.seed)?;
    fs::write(&a.out, matrix_to_csv(&data)).map_err(|e| io_failure(&a.out, e))?;
    if let Some(path) = &a.features_out {
        let rows: Vec<Vec<f64>> = features.chunks(cfg.d).map(<[f64]>::to_vec).collect();
        fs::write(path, matrix_to_csv(&rows)).map_err(|e| io_failure(path, e))?;
    }
    Ok(())
}

fn export(a: ExportArgs) -> Result<(), Failure> {
    let mut runs = Vec::new();
    for entry in &a.runs {
        let (name, path) = match entry.split_once('=') {
            Some((name, path)) => (name.to_string(), PathBuf::from(path)),
            None => {
                let path = PathBuf::from(entry);
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| entry.clone());
                (name, path)
            }
        };
        if name.contains(',') {
            return Err(Failure::Config(format!("run name `{name}` contains a comma")));
        }
        runs.push((name, read_metrics_csv(&path)?));
    }
    let csv = export_long(&runs);
    match &a.out {
        Some(path) => fs::write(path, csv).map_err(|e| io_failure(path, e))?,
        None => io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| io_failure(Path::new("<stdout>"), e))?,
    }
    Ok(())
}
