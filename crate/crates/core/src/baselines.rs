//! Comparison methods: plain and L1-penalized logistic regression, and the
//! two-step method that first estimates per-feature effects under
//! single-treatment confounder balancing, keeps the strongest features and
//! then fits logistic regression on them.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::dataset::{ConfounderView, Dataset};
use crate::error::{Error, Result};
use crate::loss::Hyperparams;
use crate::scalar::Scalar;
use crate::solver::{fit, FitResult, SolverConfig};

/// Logistic regression with an elastic-net penalty and uniform sample
/// weights: the CRLR solver with every weight-related term switched off and
/// ω frozen.
pub fn fit_logistic<F: Scalar>(
    dataset: &Dataset,
    l1: F,
    l2: F,
    config: &SolverConfig<F>,
) -> Result<FitResult<F>> {
    let config = SolverConfig {
        freeze_weights: true,
        ..config.clone()
    };
    fit(dataset, &Hyperparams::elastic_net(l1, l2), &config)
}

/// Stopping rule for the single-treatment balancing problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceConfig<F> {
    pub max_iters: usize,
    /// Projected-gradient norm at which the solve stops.
    pub grad_tol: F,
}

impl<F: Scalar> Default for BalanceConfig<F> {
    fn default() -> Self {
        BalanceConfig {
            max_iters: 10_000,
            grad_tol: F::lit(1e-8),
        }
    }
}

/// Non-negative control-group weights for one treatment feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleBalanceResult<F> {
    pub treatment_feature: usize,
    /// Rows of the control group, aligned with `weights`.
    pub control_rows: Vec<usize>,
    pub weights: Array1<F>,
    /// `‖x̄_treated − Σ_c w_c x_c‖²` at the returned weights.
    pub residual_imbalance: F,
    pub iterations: usize,
    /// Objective before the first step and after each step.
    pub objective_trace: Vec<F>,
}

fn largest_eigenvalue<F: Scalar>(gram: &Array2<F>) -> F {
    let p = gram.nrows();
    let mut v = Array1::from_elem(p, F::one() / F::lit(p as f64).sqrt());
    let mut lambda = F::zero();
    for _ in 0..200 {
        let next = gram.dot(&v);
        let norm = next.dot(&next).sqrt();
        if norm == F::zero() {
            return F::zero();
        }
        lambda = norm;
        v = next / norm;
    }
    lambda
}

/// Minimizes `‖x̄_treated − Σ_{c ∈ control} w_c·x_c‖²` over `w ≥ 0` by
/// projected gradient descent, where `x` are the confounders of
/// `treatment` (that column masked to zero) and the treated mean is
/// unweighted. Starts from the uniform average of the control group.
pub fn single_treatment_weights<F: Scalar>(
    x: ArrayView2<'_, F>,
    treatment: usize,
    config: &BalanceConfig<F>,
) -> Result<SingleBalanceResult<F>> {
    let (n, p) = x.dim();
    if treatment >= p {
        return Err(Error::InvalidParameter(format!(
            "treatment {treatment} out of range for p = {p}"
        )));
    }
    let view = ConfounderView::new(x, treatment);
    let (treated, control): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| x[[i, treatment]] == F::one());
    if treated.is_empty() || control.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "treatment feature {treatment} is degenerate: {} treated, {} control",
            treated.len(),
            control.len()
        )));
    }

    let mut target = Array1::<F>::zeros(p);
    for &i in &treated {
        for (t, v) in target.iter_mut().zip(view.row(i)) {
            *t = *t + v;
        }
    }
    target.mapv_inplace(|t| t / F::lit(treated.len() as f64));
    // rows of `controls` are the masked control samples
    let mut controls = Array2::<F>::zeros((control.len(), p));
    for (r, &i) in control.iter().enumerate() {
        for (c, v) in controls.row_mut(r).iter_mut().zip(view.row(i)) {
            *c = v;
        }
    }

    let two = F::lit(2.0);
    let objective = |w: &Array1<F>| {
        let r = &target - &controls.t().dot(w);
        r.dot(&r)
    };
    let gram = controls.t().dot(&controls);
    let mut lipschitz = two * largest_eigenvalue(&gram) * F::lit(1.01);
    if lipschitz == F::zero() {
        lipschitz = F::one();
    }

    let mut w = Array1::from_elem(control.len(), F::one() / F::lit(control.len() as f64));
    let mut value = objective(&w);
    let mut trace = vec![value];
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let residual = &target - &controls.t().dot(&w);
        let grad = controls.dot(&residual).mapv(|g| -two * g);
        let (candidate, cand_value) = loop {
            let cand = (&w - &grad.mapv(|g| g / lipschitz)).mapv(|v| v.max(F::zero()));
            let cv = objective(&cand);
            if cv <= value || lipschitz > F::lit(1e30) {
                break (cand, cv);
            }
            lipschitz = lipschitz * two;
        };
        let moved = &candidate - &w;
        let pg_norm = moved.dot(&moved).sqrt() * lipschitz;
        if cand_value > value {
            break;
        }
        w = candidate;
        value = cand_value;
        trace.push(value);
        if pg_norm < config.grad_tol {
            break;
        }
    }

    Ok(SingleBalanceResult {
        treatment_feature: treatment,
        control_rows: control,
        weights: w,
        residual_imbalance: value,
        iterations,
        objective_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepConfig<F> {
    /// Number of features kept. The intercept column, when present, is not
    /// a candidate and is always kept.
    pub top_k: usize,
    pub l1: F,
    pub l2: F,
    pub balance: BalanceConfig<F>,
    pub solver: SolverConfig<F>,
}

impl<F: Scalar> TwoStepConfig<F> {
    /// `top_k = ⌈p/2⌉` over the candidate features.
    pub fn for_dataset(dataset: &Dataset) -> Self {
        let candidates = dataset.n_features() - usize::from(dataset.has_intercept());
        TwoStepConfig {
            top_k: candidates.div_ceil(2),
            l1: F::zero(),
            l2: F::zero(),
            balance: BalanceConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoStepResult<F> {
    /// Balanced treated-minus-control outcome difference per feature;
    /// `None` for degenerate features and the intercept.
    pub effects: Vec<Option<F>>,
    /// Selected columns in ascending order, intercept included.
    pub selected: Vec<usize>,
    /// Coefficients over all `p` features, zero where unselected.
    pub beta: Array1<F>,
    pub fit: FitResult<F>,
}

/// Effect of `treatment` on the label: treated outcome mean minus the
/// balanced-weighted control outcome mean.
pub fn balanced_effect<F: Scalar>(
    x: ArrayView2<'_, F>,
    y: &Array1<F>,
    treatment: usize,
    config: &BalanceConfig<F>,
) -> Result<F> {
    let balance = single_treatment_weights(x, treatment, config)?;
    let treated: Vec<usize> = (0..x.nrows())
        .filter(|&i| x[[i, treatment]] == F::one())
        .collect();
    let treated_mean = treated.iter().map(|&i| y[i]).sum::<F>() / F::lit(treated.len() as f64);
    let weight_total = balance.weights.sum();
    let control_mean = if weight_total > F::zero() {
        balance
            .control_rows
            .iter()
            .zip(balance.weights.iter())
            .map(|(&i, &w)| w * y[i])
            .sum::<F>()
            / weight_total
    } else {
        let rows = &balance.control_rows;
        rows.iter().map(|&i| y[i]).sum::<F>() / F::lit(rows.len() as f64)
    };
    Ok(treated_mean - control_mean)
}

pub fn two_step_fit<F: Scalar>(
    dataset: &Dataset,
    config: &TwoStepConfig<F>,
) -> Result<TwoStepResult<F>> {
    let p = dataset.n_features();
    let candidates: Vec<usize> = (0..p - usize::from(dataset.has_intercept())).collect();
    if config.top_k == 0 || config.top_k > candidates.len() {
        return Err(Error::InvalidParameter(format!(
            "top_k must be in 1..={}, got {}",
            candidates.len(),
            config.top_k
        )));
    }
    let x: Array2<F> = dataset.features_as();
    let y: Array1<F> = dataset.labels_as();
    let n = dataset.n_samples();

    let effects: Vec<Option<F>> = candidates
        .par_iter()
        .map(|&j| {
            let treated = x.column(j).iter().filter(|&&v| v == F::one()).count();
            if treated == 0 || treated == n {
                return Ok(None);
            }
            balanced_effect(x.view(), &y, j, &config.balance).map(Some)
        })
        .collect::<Result<_>>()?;

    let mut ranked = candidates.clone();
    let strength = |j: usize| effects[j].map_or(F::zero(), F::abs);
    ranked.sort_by(|&a, &b| {
        strength(b)
            .partial_cmp(&strength(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = ranked[..config.top_k].to_vec();
    selected.sort_unstable();
    if dataset.has_intercept() {
        selected.push(p - 1);
    }

    let sub = dataset.select_columns(&selected)?;
    let fit = fit_logistic(&sub, config.l1, config.l2, &config.solver)?;
    let mut beta = Array1::zeros(p);
    for (&j, &b) in selected.iter().zip(fit.beta().iter()) {
        beta[j] = b;
    }
    let mut all_effects = effects;
    all_effects.resize(p, None);
    Ok(TwoStepResult {
        effects: all_effects,
        selected,
        beta,
        fit,
    })
}

/// Mean of `y` over rows where column `j` equals one, a convenience for
/// tests and diagnostics.
pub fn treated_outcome_mean<F: Scalar>(x: ArrayView2<'_, F>, y: &Array1<F>, j: usize) -> Option<F> {
    let rows: Vec<F> = x
        .axis_iter(Axis(0))
        .zip(y.iter())
        .filter(|(row, _)| row[j] == F::one())
        .map(|(_, &v)| v)
        .collect();
    (!rows.is_empty()).then(|| rows.iter().copied().sum::<F>() / F::lit(rows.len() as f64))
}
