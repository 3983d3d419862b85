//! Metrics, the train/test bias level, and the bias-shift sweep: train each
//! method at one bias rate and score it across a grid of test bias rates.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::warn;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{fit_logistic, two_step_fit, BalanceConfig, TwoStepConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::Hyperparams;
use crate::solver::{fit, predict_proba, SolverConfig};
use crate::synthgen::{derive_seed, generate, resample_test_grid, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub accuracy: f64,
    /// F1 of the positive class; 0 when precision and recall are both 0.
    pub f1: f64,
    /// Root mean squared difference between predicted probability and label.
    pub rmse: f64,
    pub n_test: usize,
}

pub fn metrics(y_true: &[u8], y_pred: &[u8], proba: &[f64]) -> Result<MetricReport> {
    let n = y_true.len();
    if y_pred.len() != n || proba.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} labels, {} predictions, {} probabilities",
            y_pred.len(),
            proba.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("metrics of an empty sample".into()));
    }
    if y_true.iter().chain(y_pred).any(|&v| v > 1) {
        return Err(Error::InvalidParameter("labels must be 0 or 1".into()));
    }
    if proba.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
        return Err(Error::InvalidParameter(
            "probabilities must lie in [0, 1]".into(),
        ));
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    let mut sq = 0.0;
    for ((&y, &l), &q) in y_true.iter().zip(y_pred).zip(proba) {
        correct += usize::from(y == l);
        match (y, l) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => {}
        }
        let d = q - f64::from(y);
        sq += d * d;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricReport {
        accuracy: correct as f64 / n as f64,
        f1,
        rmse: (sq / n as f64).sqrt(),
        n_test: n,
    })
}

/// Scores coefficients on a dataset with the 0.5 threshold.
pub fn evaluate(beta: &Array1<f64>, dataset: &Dataset) -> Result<MetricReport> {
    let x: Array2<f64> = dataset.features_as();
    let proba = predict_proba(beta.view(), x.view())?;
    let labels: Vec<u8> = proba.iter().map(|&q| u8::from(q >= 0.5)).collect();
    metrics(
        dataset.labels().as_slice().expect("labels are contiguous"),
        &labels,
        proba.as_slice().expect("contiguous"),
    )
}

/// 1-norm of the difference between the mean feature vectors of two
/// datasets. Stands in for an earth mover's distance between the two mean
/// vectors: zero for identical means, monotone in every per-feature gap.
pub fn bias_level(train: &Dataset, test: &Dataset) -> Result<f64> {
    if train.n_features() != test.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "train has {} features, test has {}",
            train.n_features(),
            test.n_features()
        )));
    }
    let a = train.mean_feature_vector();
    let b = test.mean_feature_vector();
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum())
}

/// Unbiased (n − 1) standard deviation; NaN for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let mean = mean(values);
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Crlr,
    Lr,
    LrL1,
    TwoStep,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Crlr, Method::Lr, Method::LrL1, Method::TwoStep];

    pub fn name(self) -> &'static str {
        match self {
            Method::Crlr => "crlr",
            Method::Lr => "lr",
            Method::LrL1 => "lr-l1",
            Method::TwoStep => "two-step",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crlr" => Ok(Method::Crlr),
            "lr" => Ok(Method::Lr),
            "lr-l1" | "lr+l1" | "lrl1" => Ok(Method::LrL1),
            "two-step" | "twostep" | "two_step" => Ok(Method::TwoStep),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for m in list.split(',').filter(|s| !s.trim().is_empty()) {
        let m: Method = m.parse()?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods given".into()));
    }
    Ok(methods)
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Training generator; its bias rate is the training bias rate and its
    /// seed the base seed of the sweep.
    pub train: SynthConfig,
    pub test_grid: Vec<f64>,
    pub methods: Vec<Method>,
    pub repeats: usize,
    pub hyper: Hyperparams<f64>,
    pub solver: SolverConfig<f64>,
    /// Ridge weight shared by the logistic baselines.
    pub lr_l2: f64,
    /// Lasso weight of the L1 baseline.
    pub lasso_l1: f64,
    /// Defaults to half the candidate features, rounded up.
    pub two_step_top_k: Option<usize>,
    pub balance: BalanceConfig<f64>,
    /// Append a constant column before fitting.
    pub intercept: bool,
}

impl SweepConfig {
    pub fn new(
        train: SynthConfig,
        test_grid: Vec<f64>,
        methods: Vec<Method>,
        repeats: usize,
    ) -> Self {
        SweepConfig {
            train,
            test_grid,
            methods,
            repeats,
            hyper: Hyperparams::default(),
            solver: SolverConfig::default(),
            lr_l2: 0.0,
            lasso_l1: 0.001,
            two_step_top_k: None,
            balance: BalanceConfig::default(),
            intercept: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidParameter("repeats must be positive".into()));
        }
        if self.methods.is_empty() || self.test_grid.is_empty() {
            return Err(Error::InvalidParameter(
                "need at least one method and one test rate".into(),
            ));
        }
        if let Some(&r) = self.test_grid.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "test bias rate {r} outside (0, 1)"
            )));
        }
        self.train.validate()?;
        self.hyper.validate()?;
        self.solver.validate()
    }

    /// Seeds of the training set and of the test grid for one repeat.
    pub fn repeat_seeds(&self, repeat: usize) -> (u64, u64) {
        let r = repeat as u64;
        (
            derive_seed(self.train.seed, 2 * r),
            derive_seed(self.train.seed, 2 * r + 1),
        )
    }
}

/// Coefficients of `method` fitted on `train`.
pub fn fit_method(method: Method, train: &Dataset, cfg: &SweepConfig) -> Result<Array1<f64>> {
    match method {
        Method::Crlr => Ok(fit(train, &cfg.hyper, &cfg.solver)?.state.beta),
        Method::Lr => Ok(fit_logistic(train, 0.0, cfg.lr_l2, &cfg.solver)?.state.beta),
        Method::LrL1 => Ok(fit_logistic(train, cfg.lasso_l1, cfg.lr_l2, &cfg.solver)?
            .state
            .beta),
        Method::TwoStep => {
            let mut ts = TwoStepConfig::for_dataset(train);
            if let Some(k) = cfg.two_step_top_k {
                ts.top_k = k;
            }
            ts.l2 = cfg.lr_l2;
            ts.balance = cfg.balance;
            ts.solver = cfg.solver.clone();
            Ok(two_step_fit(train, &ts)?.beta)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub method: Method,
    pub bias_rate: f64,
    pub repeat: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatFailure {
    pub repeat: usize,
    pub message: String,
}

/// RMSE statistics for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    /// Over every grid point of every successful repeat.
    pub mean_rmse: f64,
    pub std_rmse: f64,
    /// Per grid point, across repeats: `(bias_rate, mean, std)`.
    pub per_rate: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub train_bias_rate: f64,
    pub grid: Vec<f64>,
    pub methods: Vec<Method>,
    /// Ordered by repeat, then method, then grid position.
    pub records: Vec<SweepRecord>,
    pub summaries: Vec<MethodSummary>,
    pub failures: Vec<RepeatFailure>,
    /// `(train seed, test seed)` per repeat.
    pub seeds: Vec<(u64, u64)>,
}

impl SweepResult {
    /// RMSE values of `method` in one repeat, in grid order.
    pub fn rmse_curve(&self, method: Method, repeat: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.repeat == repeat)
            .map(|r| r.report.rmse)
            .collect()
    }

    /// Successful repeats.
    pub fn repeats(&self) -> Vec<usize> {
        let mut reps: Vec<usize> = self.records.iter().map(|r| r.repeat).collect();
        reps.dedup();
        reps
    }

    /// `(repeat, mean, std)` of RMSE across the grid for each repeat.
    pub fn per_repeat_stats(&self, method: Method) -> Vec<(usize, f64, f64)> {
        self.repeats()
            .into_iter()
            .map(|rep| {
                let curve = self.rmse_curve(method, rep);
                (rep, mean(&curve), sample_std(&curve))
            })
            .collect()
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// `method,bias_rate,repeat,rmse,accuracy,f1`
    pub fn write_records_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "method,bias_rate,repeat,rmse,accuracy,f1")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.method,
                sig6(r.bias_rate),
                r.repeat,
                sig6(r.report.rmse),
                sig6(r.report.accuracy),
                sig6(r.report.f1)
            )?;
        }
        Ok(())
    }

    /// `method,bias_rate,mean_rmse,std_rmse`, one row per method and grid
    /// point.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "method,bias_rate,mean_rmse,std_rmse")?;
        for s in &self.summaries {
            for &(rate, m, sd) in &s.per_rate {
                writeln!(out, "{},{},{},{}", s.method, sig6(rate), sig6(m), sig6(sd))?;
            }
        }
        Ok(())
    }
}

/// Six significant digits, plain notation for moderate magnitudes.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return "NaN".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

fn run_repeat(cfg: &SweepConfig, repeat: usize) -> Result<Vec<SweepRecord>> {
    let (train_seed, test_seed) = cfg.repeat_seeds(repeat);
    let train_cfg = SynthConfig {
        seed: train_seed,
        ..cfg.train.clone()
    };
    let prepare = |d: Dataset| if cfg.intercept { d.with_intercept() } else { d };
    let train = prepare(generate(&train_cfg)?.dataset);
    let test_cfg = SynthConfig {
        seed: test_seed,
        ..cfg.train.clone()
    };
    let tests: Vec<Dataset> = resample_test_grid(&test_cfg, &cfg.test_grid)?
        .into_iter()
        .map(|s| prepare(s.dataset))
        .collect();

    let mut records = Vec::with_capacity(cfg.methods.len() * tests.len());
    for &method in &cfg.methods {
        let beta = fit_method(method, &train, cfg)?;
        for (&rate, test) in cfg.test_grid.iter().zip(&tests) {
            records.push(SweepRecord {
                method,
                bias_rate: rate,
                repeat,
                report: evaluate(&beta, test)?,
            });
        }
    }
    Ok(records)
}

/// Runs every repeat (in parallel on the current rayon pool) and aggregates
/// in repeat order. Each repeat draws from its own derived seeds, so the
/// result does not depend on the thread count.
pub fn run_bias_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let outcomes: Vec<Result<Vec<SweepRecord>>> = (0..cfg.repeats)
        .into_par_iter()
        .map(|rep| run_repeat(cfg, rep))
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (repeat, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => records.extend(r),
            Err(e) => {
                warn!("repeat {repeat} failed and is excluded: {e}");
                failures.push(RepeatFailure {
                    repeat,
                    message: e.to_string(),
                });
            }
        }
    }

    let summaries = cfg
        .methods
        .iter()
        .map(|&method| {
            let all: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method)
                .map(|r| r.report.rmse)
                .collect();
            let per_rate = cfg
                .test_grid
                .iter()
                .map(|&rate| {
                    let v: Vec<f64> = records
                        .iter()
                        .filter(|r| r.method == method && r.bias_rate == rate)
                        .map(|r| r.report.rmse)
                        .collect();
                    (rate, mean(&v), sample_std(&v))
                })
                .collect();
            MethodSummary {
                method,
                mean_rmse: mean(&all),
                std_rmse: sample_std(&all),
                per_rate,
            }
        })
        .collect();

    Ok(SweepResult {
        train_bias_rate: cfg.train.bias_rate,
        grid: cfg.test_grid.clone(),
        methods: cfg.methods.clone(),
        records,
        summaries,
        failures,
        seeds: (0..cfg.repeats).map(|r| cfg.repeat_seeds(r)).collect(),
    })
}

/// Seeded split into `(fit rows, validation rows)`.
pub fn holdout_split(
    n: usize,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "validation fraction must be in (0, 1), got {validation_fraction}"
        )));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64) * validation_fraction).round() as usize;
    let n_val = n_val.clamp(2, n.saturating_sub(2));
    let mut val = rows.split_off(n - n_val);
    rows.sort_unstable();
    val.sort_unstable();
    Ok((rows, val))
}

/// Parses `lambda1=1,10;lambda5=100` into the cartesian product of the
/// listed values over `base`.
pub fn parse_lambda_grid(spec: &str, base: &Hyperparams<f64>) -> Result<Vec<Hyperparams<f64>>> {
    let mut grid = vec![*base];
    for part in spec.split(';').filter(|s| !s.trim().is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("bad grid entry {part:?}")))?;
        let values: Vec<f64> = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad value {v:?} in {part:?}")))
            })
            .collect::<Result<_>>()?;
        let set: fn(&mut Hyperparams<f64>, f64) = match key.trim() {
            "lambda1" => |h, v| h.lambda1 = v,
            "lambda2" => |h, v| h.lambda2 = v,
            "lambda3" => |h, v| h.lambda3 = v,
            "lambda4" => |h, v| h.lambda4 = v,
            "lambda5" => |h, v| h.lambda5 = v,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown grid key {other:?}"
                )))
            }
        };
        grid = grid
            .iter()
            .flat_map(|h| {
                values.iter().map(move |&v| {
                    let mut h = *h;
                    set(&mut h, v);
                    h
                })
            })
            .collect();
    }
    Ok(grid)
}

/// Picks the candidate with the lowest validation RMSE on a held-out split
/// of `train`. Returns the winner and every candidate's score in order.
pub fn grid_search(
    train: &Dataset,
    candidates: &[Hyperparams<f64>],
    solver: &SolverConfig<f64>,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Hyperparams<f64>, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("empty hyperparameter grid".into()));
    }
    let (fit_rows, val_rows) = holdout_split(train.n_samples(), validation_fraction, seed)?;
    let fit_set = train.select_rows(&fit_rows)?;
    let val_set = train.select_rows(&val_rows)?;
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|h| -> Result<f64> {
            let beta = fit(&fit_set, h, solver)?.state.beta;
            Ok(evaluate(&beta, &val_set)?.rmse)
        })
        .collect::<Result<_>>()?;
    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .expect("non-empty");
    Ok((candidates[best], scores))
}
