//! Command-line front end: `generate`, `train`, `predict`, `sweep` and
//! `balance`.
//!
//! Every command writes its outputs plus a `<command>_manifest.txt` into `--out-dir`.
//! A `--config` file of `key=value` lines (a previous manifest works) fills
//! in flags; flags given on the command line take precedence.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use log::{info, warn};
use ndarray::{Array1, Array2, Axis};

use crate::dataset::{binarize, load_dataset, Dataset, LabelColumn, Table, INTERCEPT_NAME};
use crate::error::{exit, Error, Result};
use crate::eval::{
    self, grid_search, parse_lambda_grid, parse_methods, run_bias_sweep, SweepConfig,
};
use crate::loss::{balancing_loss, BalanceReport, Hyperparams, Problem};
use crate::manifest::{file_digest, read_config, RunManifest};
use crate::model_io::SavedModel;
use crate::solver::{accuracy, fit, predict_proba, SolverConfig};
use crate::synthgen::{derive_seed, generate, parse_grid, write_metadata, SynthConfig};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, bad flag value, malformed config file)
  3  missing file or other i/o failure
  4  invalid input data (ragged or non-numeric CSV, missing column, bad model file)
  5  invalid parameter or violated invariant (empty balancing set, empty selection)
  6  numerical failure (non-finite gradient or objective)

Errors are reported on stderr as one line:
  error kind=<kind> code=<exit code> message=\"<text>\"";

#[derive(Debug, Parser)]
#[command(name = "crlr", version, about = "Causally regularized logistic regression", after_help = EXIT_CODES)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses one per core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// key=value file supplying flag values (a run manifest works).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset with a selection bias.
    Generate(GenerateArgs),
    /// Fit a model on a CSV dataset.
    Train(TrainArgs),
    /// Apply a saved model to a CSV dataset.
    Predict(PredictArgs),
    /// Train at one bias rate, test across a grid of bias rates.
    Sweep(SweepArgs),
    /// Report per-feature imbalance of a dataset under given sample weights.
    Balance(BalanceArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Sweep(_) => "sweep",
            Command::Balance(_) => "balance",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    /// Weight of the confounder-balancing term.
    #[arg(long, default_value_t = 1.0)]
    pub lambda1: f64,
    /// Weight of the squared norm of the sample weights.
    #[arg(long, default_value_t = 0.1)]
    pub lambda2: f64,
    /// Ridge weight on the coefficients.
    #[arg(long, default_value_t = 0.01)]
    pub lambda3: f64,
    /// Lasso weight on the coefficients.
    #[arg(long, default_value_t = 0.001)]
    pub lambda4: f64,
    /// Weight of the (sum of weights - 1)^2 penalty.
    #[arg(long, default_value_t = 1.0)]
    pub lambda5: f64,
    /// Floor on treated and control weight totals.
    #[arg(long, default_value_t = 1e-12)]
    pub denom_epsilon: f64,
}

impl HyperArgs {
    fn resolve(&self) -> Hyperparams<f64> {
        Hyperparams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            lambda4: self.lambda4,
            lambda5: self.lambda5,
            denom_epsilon: self.denom_epsilon,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 200)]
    pub max_outer_iters: usize,
    /// Proximal-gradient steps on the coefficients per outer iteration.
    #[arg(long, default_value_t = 50)]
    pub inner_beta_iters: usize,
    /// Gradient steps on the weights per outer iteration.
    #[arg(long, default_value_t = 50)]
    pub inner_omega_iters: usize,
    /// Stop when the relative objective change falls below this.
    #[arg(long, default_value_t = 1e-6)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 0.5)]
    pub armijo_shrink: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub armijo_slope: f64,
    #[arg(long, default_value_t = 1.0)]
    pub initial_step: f64,
}

impl SolverArgs {
    fn resolve(&self, seed: u64) -> SolverConfig<f64> {
        SolverConfig {
            max_outer_iters: self.max_outer_iters,
            inner_beta_iters: self.inner_beta_iters,
            inner_omega_iters: self.inner_omega_iters,
            rel_tol: self.rel_tol,
            armijo_shrink: self.armijo_shrink,
            armijo_slope: self.armijo_slope,
            initial_step: self.initial_step,
            seed,
            freeze_weights: false,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Number of samples to select.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Pool size; defaults to max(20n, 1000) draws.
    #[arg(long)]
    pub n_pool: Option<usize>,
    /// Draw exactly --n-pool samples and keep whatever is selected.
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub fixed_pool: bool,
    #[arg(long, default_value_t = 10)]
    pub p_causal: usize,
    #[arg(long, default_value_t = 10)]
    pub p_noise: usize,
    #[arg(long, default_value_t = 0.85)]
    pub bias_rate: f64,
    /// Standard deviation of the label noise.
    #[arg(long, default_value_t = 0.1)]
    pub noise_scale: f64,
    /// Comma-separated causal coefficients; all 1 by default.
    #[arg(long)]
    pub coefficients: Option<String>,
    /// Index into the noisy block of the feature used for selection.
    #[arg(long, default_value_t = 0)]
    pub bias_feature: usize,
    #[arg(long, default_value = "data.csv")]
    pub output: String,
    #[arg(long, default_value = "y")]
    pub label_name: String,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Training CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column name, or a 0-based index.
    #[arg(long, default_value = "y")]
    pub label: String,
    /// Append a constant column (never balanced).
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub intercept: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "model.txt")]
    pub model: String,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV holding at least the model's feature columns.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column; metrics are written when it is present.
    #[arg(long, default_value = "y")]
    pub label: String,
    #[arg(long, default_value = "predictions.csv")]
    pub output: String,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Bias rate of the training sets.
    #[arg(long, default_value_t = 0.85)]
    pub train_bias: f64,
    /// Test bias rates, `start:stop:step` or a comma list.
    #[arg(long, default_value = "0.1:0.9:0.1")]
    pub grid: String,
    /// Comma list from crlr, lr, lr-l1, two-step.
    #[arg(long, default_value = "crlr,lr")]
    pub methods: String,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Samples per training and test set.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub p_causal: usize,
    #[arg(long, default_value_t = 10)]
    pub p_noise: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise_scale: f64,
    /// Ridge weight of the logistic baselines.
    #[arg(long, default_value_t = 0.0)]
    pub lr_l2: f64,
    /// Lasso weight of the lr-l1 baseline.
    #[arg(long, default_value_t = 0.001)]
    pub lasso_l1: f64,
    /// Features kept by two-step; half the features, rounded up, by default.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Append a constant column (never balanced).
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub intercept: bool,
    /// Tune crlr first, e.g. `lambda1=1,10;lambda2=0.1,1`; unlisted lambdas
    /// keep their flag values.
    #[arg(long)]
    pub grid_search: Option<String>,
    /// Held-out fraction of the tuning set.
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BalanceArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub label: String,
    /// CSV of sample weights: a `weight` column, or else the last column.
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    pub denom_epsilon: f64,
    #[arg(long, default_value = "balance.csv")]
    pub output: String,
}

const GLOBAL_VALUE_FLAGS: [&str; 4] = ["--seed", "--threads", "--config", "--out-dir"];
const GLOBAL_KEYS: [&str; 3] = ["seed", "threads", "out-dir"];

/// Position of the subcommand name in `args`, skipping global flag values.
fn subcommand_position(args: &[OsString]) -> Option<usize> {
    let names: Vec<String> = Cli::command()
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if GLOBAL_VALUE_FLAGS.contains(&a.as_ref()) {
            i += 2;
            continue;
        }
        if names.iter().any(|n| n == a.as_ref()) {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    let mut found = None;
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            found = it.next().map(PathBuf::from);
        } else if let Some(v) = s.strip_prefix("--config=") {
            found = Some(PathBuf::from(v));
        }
    }
    found
}

/// Splices config entries into `args` ahead of the user's own flags, so
/// the last occurrence (the user's) wins.
fn inject_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let entries = read_config(&path)?;
    let sub = subcommand_position(&args)
        .ok_or_else(|| Error::Config("a subcommand is required".into()))?;
    let (global, local): (Vec<_>, Vec<_>) = entries
        .into_iter()
        .filter(|(k, _)| k != "config")
        .partition(|(k, _)| GLOBAL_KEYS.contains(&k.as_str()));
    let as_flags = |v: Vec<(String, String)>| -> Vec<OsString> {
        v.into_iter()
            .map(|(k, v)| OsString::from(format!("--{k}={v}")))
            .collect()
    };
    args.splice(sub + 1..sub + 1, as_flags(local));
    args.splice(1..1, as_flags(global));
    Ok(args)
}

/// Every resolved flag of the subcommand, sorted by name.
fn resolved_flags(name: &str, matches: &ArgMatches) -> Vec<(String, String)> {
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(name).expect("known subcommand");
    let known: Vec<&str> = cmd
        .get_arguments()
        .chain(sub.get_arguments())
        .map(|a| a.get_id().as_str())
        .collect();
    let mut flags: Vec<(String, String)> = matches
        .ids()
        .filter(|id| id.as_str() != "config" && known.contains(&id.as_str()))
        .filter_map(|id| {
            let raw = matches.get_raw(id.as_str())?;
            let value = raw
                .map(|v| v.to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join(",");
            Some((id.as_str().replace('_', "-"), value))
        })
        .collect();
    flags.sort();
    flags
}

fn report(err: &Error) -> i32 {
    let code = err.exit_code();
    let msg = err.to_string().replace('\n', " ");
    eprintln!("error kind={} code={code} message={msg:?}", err.kind());
    code
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match inject_config(args) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let matches = match Cli::command().try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let text = e.to_string();
                    let line = text
                        .lines()
                        .find(|l| !l.trim().is_empty())
                        .unwrap_or("usage error")
                        .trim_start_matches("error: ");
                    eprintln!("error kind=usage code={} message={line:?}", exit::USAGE);
                    exit::USAGE
                }
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!(
                "error kind=usage code={} message={:?}",
                exit::USAGE,
                e.to_string().trim()
            );
            return exit::USAGE;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();

    let sub_matches = matches
        .subcommand()
        .map(|(_, m)| m.clone())
        .expect("subcommand is required");
    match execute(&cli, &sub_matches) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn execute(cli: &Cli, sub_matches: &ArgMatches) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
    let start = Instant::now();
    let inputs = pool.install(|| match &cli.command {
        Command::Generate(a) => cmd_generate(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Predict(a) => cmd_predict(cli, a),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::Balance(a) => cmd_balance(cli, a),
    })?;
    let inputs = inputs
        .into_iter()
        .map(|p| file_digest(&p).map(|d| (p, d)))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        flags: resolved_flags(cli.command.name(), sub_matches),
        seed: cli.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        inputs,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    manifest.write(
        &cli.out_dir
            .join(format!("{}_manifest.txt", cli.command.name())),
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes a whole file through `body`, mapping i/o failures to `path`.
fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let mut out = create(path)?;
    body(&mut out)
        .and_then(|()| out.flush())
        .map_err(|e| Error::io(path, e))
}

fn cmd_generate(cli: &Cli, a: &GenerateArgs) -> Result<Vec<PathBuf>> {
    let mut config = SynthConfig::with_target(a.n, a.p_causal, a.p_noise, a.bias_rate, cli.seed);
    if let Some(pool) = a.n_pool {
        config.n_pool = pool;
    }
    if a.fixed_pool {
        if a.n_pool.is_none() {
            return Err(Error::InvalidParameter(
                "--fixed-pool needs --n-pool".into(),
            ));
        }
        config.target_n = None;
    }
    config.noise_scale = a.noise_scale;
    config.bias_feature_index = a.bias_feature;
    if let Some(list) = &a.coefficients {
        config.causal_coefficients = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad coefficient {v:?}")))
            })
            .collect::<Result<_>>()?;
    }
    let synth = generate(&config)?;
    let data_path = cli.out_dir.join(&a.output);
    crate::dataset::write_dataset_csv(&synth.dataset, &data_path, &a.label_name)?;
    write_metadata(&synth, &cli.out_dir.join("metadata.txt"))?;
    info!(
        "selected {} of {} pool draws",
        synth.dataset.n_samples(),
        synth.pool_size()
    );
    Ok(Vec::new())
}

fn load_training(data: &Path, label: &str, intercept: bool) -> Result<Dataset> {
    let label: LabelColumn = label.parse().expect("infallible");
    let dataset = load_dataset(data, &label)?.dataset;
    Ok(if intercept {
        dataset.with_intercept()
    } else {
        dataset
    })
}

fn write_balance_csv(
    path: &Path,
    dataset: &Dataset,
    report: Option<&BalanceReport<f64>>,
) -> Result<()> {
    let names = dataset.resolved_names();
    let indicator = crate::dataset::indicator_from_features(dataset);
    write_file(path, |out| {
        writeln!(out, "feature,treated,control,imbalance,skipped")?;
        for (j, name) in names.iter().enumerate() {
            let (loss, skipped) = match report {
                Some(r) => (r.per_feature_loss[j], r.skipped[j]),
                None => (0.0, true),
            };
            writeln!(
                out,
                "{name},{},{},{},{}",
                indicator.treated_count(j),
                indicator.control_count(j),
                eval::sig6(loss),
                skipped
            )?;
        }
        Ok(())
    })
}

fn balance_report(
    problem: &Problem<f64>,
    w: &Array1<f64>,
    eps: f64,
) -> Result<Option<BalanceReport<f64>>> {
    match balancing_loss(problem, w.view(), eps) {
        Ok(r) => Ok(Some(r)),
        Err(Error::EmptyBalancing) => {
            warn!("every feature is degenerate; no balancing report");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<Vec<PathBuf>> {
    let dataset = load_training(&a.data, &a.label, a.intercept)?;
    let hyper = a.hyper.resolve();
    let solver = a.solver.resolve(cli.seed);
    let result = fit(&dataset, &hyper, &solver)?;
    if !result.converged {
        warn!(
            "not converged after {} outer iterations",
            result.iterations_used
        );
    }
    let problem = Problem::<f64>::from_dataset(&dataset);
    let weights = result.weights();
    let beta = result.state.beta.clone();

    SavedModel {
        feature_names: dataset.resolved_names(),
        intercept: dataset.has_intercept(),
        beta: beta.clone(),
        hyper,
        solver: solver.clone(),
        converged: result.converged,
        iterations_used: result.iterations_used,
    }
    .write(&cli.out_dir.join(&a.model))?;

    let report = match &result.balance {
        Some(r) => Some(r.clone()),
        None => balance_report(&problem, &weights, hyper.denom_epsilon)?,
    };
    write_balance_csv(&cli.out_dir.join("balance.csv"), &dataset, report.as_ref())?;

    write_file(&cli.out_dir.join("weights.csv"), |out| {
        writeln!(out, "row,weight")?;
        for (i, w) in weights.iter().enumerate() {
            writeln!(out, "{i},{w:.16e}")?;
        }
        Ok(())
    })?;

    write_file(&cli.out_dir.join("trace.csv"), |out| {
        writeln!(out, "iteration,objective")?;
        for (t, v) in result.objective_trace.iter().enumerate() {
            writeln!(out, "{t},{v:.16e}")?;
        }
        Ok(())
    })?;

    let m = eval::evaluate(&beta, &dataset)?;
    let acc = accuracy(&problem, beta.view())?;
    write_file(&cli.out_dir.join("train_metrics.csv"), |out| {
        writeln!(out, "accuracy,f1,rmse,n,converged,iterations,objective")?;
        writeln!(
            out,
            "{acc},{},{},{},{},{},{:.16e}",
            m.f1,
            m.rmse,
            m.n_test,
            result.converged,
            result.iterations_used,
            result.final_objective.total
        )
    })?;
    Ok(vec![a.data.clone()])
}

/// Reads the model's feature columns (by name) and, when present, the label.
fn load_for_model(
    path: &Path,
    model: &SavedModel,
    label: &str,
) -> Result<(Array2<f64>, Option<Vec<u8>>)> {
    let table = Table::read(path)?;
    let wanted: Vec<&String> = if model.intercept {
        model.feature_names[..model.feature_names.len() - 1]
            .iter()
            .collect()
    } else {
        model.feature_names.iter().collect()
    };
    let cols = wanted
        .iter()
        .map(|name| {
            table.header.iter().position(|h| h == *name).ok_or_else(|| {
                Error::InvalidDataset(format!("feature column {name:?} not in {}", path.display()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = table.values.select(Axis(1), &cols);
    let non_binary: Vec<&String> = raw
        .axis_iter(Axis(1))
        .zip(&wanted)
        .filter(|(c, _)| c.iter().any(|&v| v != 0.0 && v != 1.0))
        .map(|(_, n)| *n)
        .collect();
    for name in non_binary {
        warn!("column {name:?} is not binary; binarized with the >= 0 rule");
    }
    let mut x = binarize(raw.view())?.mapv(f64::from);
    if model.intercept {
        let n = x.nrows();
        x.push_column(Array1::ones(n).view())
            .expect("row counts agree");
    }
    let label_col = match label.parse::<LabelColumn>().expect("infallible") {
        LabelColumn::Name(name) => table.header.iter().position(|h| *h == name),
        LabelColumn::Index(i) => (i < table.header.len()).then_some(i),
    };
    let labels = match label_col {
        Some(j) => {
            let col = table.values.select(Axis(1), &[j]);
            if col.iter().any(|&v| v != 0.0 && v != 1.0) {
                warn!("label column is not binary; binarized with the >= 0 rule");
            }
            Some(binarize(col.view())?.into_iter().collect())
        }
        None => None,
    };
    Ok((x, labels))
}

fn cmd_predict(cli: &Cli, a: &PredictArgs) -> Result<Vec<PathBuf>> {
    let model = SavedModel::read(&a.model)?;
    if model.intercept && model.feature_names.last().map(String::as_str) != Some(INTERCEPT_NAME) {
        return Err(Error::ModelFormat(
            "intercept model without a trailing intercept coefficient".into(),
        ));
    }
    let (x, labels) = load_for_model(&a.data, &model, &a.label)?;
    let proba = predict_proba(model.beta.view(), x.view())?;
    let predicted: Vec<u8> = proba.iter().map(|&q| u8::from(q >= 0.5)).collect();
    write_file(&cli.out_dir.join(&a.output), |out| {
        writeln!(out, "row,probability,label")?;
        for (i, (q, l)) in proba.iter().zip(&predicted).enumerate() {
            writeln!(out, "{i},{q:.16e},{l}")?;
        }
        Ok(())
    })?;
    if let Some(y) = labels {
        let m = eval::metrics(&y, &predicted, proba.as_slice().expect("contiguous"))?;
        write_file(&cli.out_dir.join("metrics.csv"), |out| {
            writeln!(out, "accuracy,f1,rmse,n")?;
            writeln!(out, "{},{},{},{}", m.accuracy, m.f1, m.rmse, m.n_test)
        })?;
    } else {
        info!("no label column {:?}; metrics skipped", a.label);
    }
    Ok(vec![a.model.clone(), a.data.clone()])
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> Result<Vec<PathBuf>> {
    let grid = parse_grid(&a.grid)?;
    let methods = parse_methods(&a.methods)?;
    let mut train = SynthConfig::with_target(a.n, a.p_causal, a.p_noise, a.train_bias, cli.seed);
    train.noise_scale = a.noise_scale;
    let mut cfg = SweepConfig::new(train.clone(), grid, methods, a.repeats);
    cfg.hyper = a.hyper.resolve();
    cfg.solver = a.solver.resolve(cli.seed);
    cfg.lr_l2 = a.lr_l2;
    cfg.lasso_l1 = a.lasso_l1;
    cfg.two_step_top_k = a.top_k;
    cfg.intercept = a.intercept;

    if let Some(spec) = &a.grid_search {
        let candidates = parse_lambda_grid(spec, &cfg.hyper)?;
        // a tuning set of its own, on a seed stream no repeat uses
        let tune_cfg = SynthConfig {
            seed: derive_seed(cli.seed, u64::MAX),
            ..train
        };
        let mut tune = generate(&tune_cfg)?.dataset;
        if a.intercept {
            tune = tune.with_intercept();
        }
        let (best, scores) = grid_search(
            &tune,
            &candidates,
            &cfg.solver,
            a.validation_fraction,
            cli.seed,
        )?;
        write_file(&cli.out_dir.join("grid_search.csv"), |out| {
            writeln!(
                out,
                "lambda1,lambda2,lambda3,lambda4,lambda5,validation_rmse"
            )?;
            for (h, s) in candidates.iter().zip(&scores) {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    h.lambda1,
                    h.lambda2,
                    h.lambda3,
                    h.lambda4,
                    h.lambda5,
                    eval::sig6(*s)
                )?;
            }
            Ok(())
        })?;
        info!("grid search picked {best:?}");
        cfg.hyper = best;
    }

    let result = run_bias_sweep(&cfg)?;
    write_file(&cli.out_dir.join("sweep_rows.csv"), |out| {
        result.write_records_csv(out)
    })?;
    write_file(&cli.out_dir.join("sweep_summary.csv"), |out| {
        result.write_summary_csv(out)
    })?;
    write_file(&cli.out_dir.join("sweep_failures.csv"), |out| {
        writeln!(out, "repeat,message")?;
        for f in &result.failures {
            writeln!(out, "{},{:?}", f.repeat, f.message)?;
        }
        Ok(())
    })?;
    Ok(Vec::new())
}

fn read_weights(path: &Path) -> Result<Array1<f64>> {
    let table = Table::read(path)?;
    let col = table
        .header
        .iter()
        .position(|h| h == "weight")
        .or_else(|| table.header.len().checked_sub(1))
        .ok_or_else(|| Error::InvalidDataset(format!("{} has no columns", path.display())))?;
    let w = table.values.column(col).to_owned();
    if let Some(v) = w.iter().find(|&&v| v < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "negative sample weight {v}"
        )));
    }
    Ok(w)
}

fn cmd_balance(cli: &Cli, a: &BalanceArgs) -> Result<Vec<PathBuf>> {
    let dataset = load_training(&a.data, &a.label, false)?;
    let w = read_weights(&a.weights)?;
    if w.len() != dataset.n_samples() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} samples",
            w.len(),
            dataset.n_samples()
        )));
    }
    let problem = Problem::<f64>::from_dataset(&dataset);
    let report = balancing_loss(&problem, w.view(), a.denom_epsilon)?;
    write_balance_csv(&cli.out_dir.join(&a.output), &dataset, Some(&report))?;
    Ok(vec![a.data.clone(), a.weights.clone()])
}
