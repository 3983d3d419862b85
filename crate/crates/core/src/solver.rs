//! Alternating minimization: a proximal-gradient pass on β with the weights
//! fixed, then an Armijo-line-searched gradient pass on ω with β fixed,
//! repeated until the objective stops moving.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::{
    balancing_loss, grad_omega_from_losses, grad_smooth_beta, objective, omega_objective,
    sample_losses, sigmoid, BalanceReport, Hyperparams, Margins, Objective, Problem,
};
use crate::scalar::Scalar;

/// Shrinks tried per line search before giving up on the current iterate.
pub const MAX_SHRINKS: usize = 50;

/// Gradient norm below which ω counts as stationary.
pub const OMEGA_STATIONARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<F> {
    pub max_outer_iters: usize,
    pub inner_beta_iters: usize,
    pub inner_omega_iters: usize,
    /// Stop once `|ΔJ| < rel_tol·|J|` between outer iterations.
    pub rel_tol: F,
    pub armijo_shrink: F,
    pub armijo_slope: F,
    pub initial_step: F,
    /// Recorded with every fit. Initialization is deterministic, so the
    /// solver itself draws nothing from it.
    pub seed: u64,
    /// Keep ω at its uniform start and only fit β.
    pub freeze_weights: bool,
}

impl<F: Scalar> Default for SolverConfig<F> {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: 200,
            inner_beta_iters: 50,
            inner_omega_iters: 50,
            rel_tol: F::lit(1e-6),
            armijo_shrink: F::lit(0.5),
            armijo_slope: F::lit(1e-4),
            initial_step: F::one(),
            seed: 0,
            freeze_weights: false,
        }
    }
}

impl<F: Scalar> SolverConfig<F> {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.max_outer_iters == 0 || self.inner_beta_iters == 0 || self.inner_omega_iters == 0 {
            return bad("iteration caps must be positive".into());
        }
        if !(self.rel_tol > F::zero()) {
            return bad(format!("rel_tol must be > 0, got {}", self.rel_tol));
        }
        let unit = |v: F| v > F::zero() && v < F::one();
        if !unit(self.armijo_shrink) {
            return bad(format!(
                "armijo_shrink must be in (0, 1), got {}",
                self.armijo_shrink
            ));
        }
        if !unit(self.armijo_slope) {
            return bad(format!(
                "armijo_slope must be in (0, 1), got {}",
                self.armijo_slope
            ));
        }
        if !(self.initial_step > F::zero() && self.initial_step.is_finite()) {
            return bad(format!(
                "initial_step must be > 0, got {}",
                self.initial_step
            ));
        }
        Ok(())
    }
}

/// Coefficients and the root of the sample weights, `W = ω ⊙ ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<F> {
    pub beta: Array1<F>,
    pub omega: Array1<F>,
    /// `(outer iteration, J)`; iteration 0 is the starting point.
    pub objective_trace: Vec<(usize, F)>,
}

impl<F: Scalar> ModelState<F> {
    /// `β = 0`, `Wᵢ = 1/n`.
    pub fn initial(n: usize, p: usize) -> Self {
        let root = F::one() / F::lit(n as f64).sqrt();
        ModelState {
            beta: Array1::zeros(p),
            omega: Array1::from_elem(n, root),
            objective_trace: Vec::new(),
        }
    }

    pub fn weights(&self) -> Array1<F> {
        self.omega.mapv(|o| o * o)
    }
}

/// Which block an inner step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Beta,
    Omega,
}

/// Subproblem objective after an accepted inner step. Within one
/// `(outer, block)` run the values never increase; index 0 of a run is the
/// value before its first step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerStep<F> {
    pub outer: usize,
    pub block: Block,
    pub value: F,
}

#[derive(Debug, Clone)]
pub struct FitResult<F> {
    pub state: ModelState<F>,
    pub converged: bool,
    pub iterations_used: usize,
    pub objective_trace: Vec<F>,
    pub inner_trace: Vec<InnerStep<F>>,
    /// Inner ω loops cut short because no decreasing step was found.
    pub line_search_failures: usize,
    pub final_objective: Objective<F>,
    /// `None` when every feature is degenerate (only possible with λ₁ = 0).
    pub balance: Option<BalanceReport<F>>,
}

impl<F: Scalar> FitResult<F> {
    pub fn beta(&self) -> &Array1<F> {
        &self.state.beta
    }

    pub fn weights(&self) -> Array1<F> {
        self.state.weights()
    }
}

/// Outcome of one β pass.
#[derive(Debug, Clone)]
pub struct BetaUpdate<F> {
    pub beta: Array1<F>,
    /// Composite subproblem value before the pass and after each accepted step.
    pub values: Vec<F>,
    pub step: F,
}

/// Outcome of one ω pass.
#[derive(Debug, Clone)]
pub struct OmegaUpdate<F> {
    pub omega: Array1<F>,
    /// Subproblem value before the pass and after each accepted step.
    pub values: Vec<F>,
    /// The pass ended because a line search ran out of shrinks.
    pub line_search_failed: bool,
}

/// Soft-thresholding, the proximal operator of `threshold·‖·‖₁`.
pub fn soft_threshold<F: Scalar>(v: F, threshold: F) -> F {
    if v > threshold {
        v - threshold
    } else if v < -threshold {
        v + threshold
    } else {
        F::zero()
    }
}

/// One proximal-gradient step of length `step` on the β subproblem.
pub fn proximal_step<F: Scalar>(
    problem: &Problem<F>,
    beta: ArrayView1<'_, F>,
    w: ArrayView1<'_, F>,
    hyper: &Hyperparams<F>,
    step: F,
) -> Result<Array1<F>> {
    let grad = grad_smooth_beta(problem, beta, w, hyper.lambda3)?;
    let threshold = step * hyper.lambda4;
    Ok(beta
        .iter()
        .zip(grad.iter())
        .map(|(&b, &g)| soft_threshold(b - step * g, threshold))
        .collect())
}

fn l1_norm<F: Scalar>(v: ArrayView1<'_, F>) -> F {
    v.mapv(F::abs).sum()
}

/// Proximal gradient on `Σ Wᵢ softplus(·) + λ₃‖β‖² + λ₄‖β‖₁` with `W` fixed.
///
/// The step is backtracked until the quadratic upper bound holds at the
/// candidate, which makes every accepted step a descent step. After an
/// accepted step the trial step grows by `1/armijo_shrink`.
pub fn update_beta<F: Scalar>(
    problem: &Problem<F>,
    beta: ArrayView1<'_, F>,
    w: ArrayView1<'_, F>,
    hyper: &Hyperparams<F>,
    config: &SolverConfig<F>,
) -> Result<BetaUpdate<F>> {
    let half = F::lit(0.5);
    let mut beta = beta.to_owned();
    let mut step = config.initial_step;
    problem.check_samples(w, "weight vector")?;
    let mut margins = Margins::new(problem, beta.view())?;
    let mut smooth = margins.smooth_value(beta.view(), w, hyper.lambda3);
    let mut composite = smooth + hyper.lambda4 * l1_norm(beta.view());
    let mut values = vec![composite];

    for _ in 0..config.inner_beta_iters {
        let grad = margins.smooth_gradient(problem, beta.view(), w, hyper.lambda3);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: "beta gradient",
                feature: None,
            });
        }
        let mut accepted = None;
        for _ in 0..MAX_SHRINKS {
            let threshold = step * hyper.lambda4;
            let candidate: Array1<F> = beta
                .iter()
                .zip(grad.iter())
                .map(|(&b, &g)| soft_threshold(b - step * g, threshold))
                .collect();
            let cand_margins = Margins::new(problem, candidate.view())?;
            let cand_smooth = cand_margins.smooth_value(candidate.view(), w, hyper.lambda3);
            let diff = &candidate - &beta;
            let bound = smooth + grad.dot(&diff) + half * diff.dot(&diff) / step;
            if cand_smooth <= bound {
                accepted = Some((candidate, cand_margins, cand_smooth, diff));
                break;
            }
            step = step * config.armijo_shrink;
        }
        let Some((candidate, cand_margins, cand_smooth, diff)) = accepted else {
            break;
        };
        if diff.iter().all(|d| *d == F::zero()) {
            break;
        }
        let cand_composite = cand_smooth + hyper.lambda4 * l1_norm(candidate.view());
        // rounding can break the bound's guarantee right at the optimum
        if cand_composite > composite {
            break;
        }
        beta = candidate;
        margins = cand_margins;
        smooth = cand_smooth;
        composite = cand_composite;
        values.push(composite);
        step = step / config.armijo_shrink;
    }
    Ok(BetaUpdate { beta, values, step })
}

/// Gradient descent on ω with `β` fixed and an Armijo backtracking line
/// search. A pass stops early at a stationary point or when no step of
/// sufficient decrease is found within [`MAX_SHRINKS`] shrinks.
pub fn update_omega<F: Scalar>(
    problem: &Problem<F>,
    beta: ArrayView1<'_, F>,
    omega: ArrayView1<'_, F>,
    hyper: &Hyperparams<F>,
    config: &SolverConfig<F>,
) -> Result<OmegaUpdate<F>> {
    let losses = sample_losses(problem, beta)?;
    let mut omega = omega.to_owned();
    let mut value = omega_objective(problem, losses.view(), omega.view(), hyper)?;
    let mut values = vec![value];
    let mut step = config.initial_step;
    let mut line_search_failed = false;
    let stationary = F::lit(OMEGA_STATIONARY_TOL);

    for _ in 0..config.inner_omega_iters {
        let grad = grad_omega_from_losses(problem, losses.view(), omega.view(), hyper)?;
        let sq_norm = grad.dot(&grad);
        if sq_norm.sqrt() <= stationary {
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_SHRINKS {
            let mut candidate = omega.clone();
            candidate.scaled_add(-step, &grad);
            let cand_value = omega_objective(problem, losses.view(), candidate.view(), hyper)?;
            if cand_value <= value - config.armijo_slope * step * sq_norm {
                accepted = Some((candidate, cand_value));
                break;
            }
            step = step * config.armijo_shrink;
        }
        let Some((candidate, cand_value)) = accepted else {
            line_search_failed = true;
            break;
        };
        omega = candidate;
        value = cand_value;
        values.push(value);
        step = step / config.armijo_shrink;
    }
    Ok(OmegaUpdate {
        omega,
        values,
        line_search_failed,
    })
}

/// Fits β and the sample weights on a binary dataset.
pub fn fit<F: Scalar>(
    dataset: &Dataset,
    hyper: &Hyperparams<F>,
    config: &SolverConfig<F>,
) -> Result<FitResult<F>> {
    fit_problem(&Problem::from_dataset(dataset), hyper, config)
}

/// [`fit`] on an already converted problem.
pub fn fit_problem<F: Scalar>(
    problem: &Problem<F>,
    hyper: &Hyperparams<F>,
    config: &SolverConfig<F>,
) -> Result<FitResult<F>> {
    hyper.validate()?;
    config.validate()?;
    if hyper.lambda1 > F::zero() && !problem.has_balancing_features() {
        return Err(Error::EmptyBalancing);
    }
    let (n, p) = (problem.n_samples(), problem.n_features());
    let mut state = ModelState::initial(n, p);
    let mut current = objective(problem, state.beta.view(), state.omega.view(), hyper)?;
    let mut trace = vec![current.total];
    state.objective_trace.push((0, current.total));
    let mut inner_trace = Vec::new();
    let mut line_search_failures = 0;
    let mut converged = false;
    let mut iterations_used = 0;

    for outer in 1..=config.max_outer_iters {
        iterations_used = outer;
        let w = state.weights();
        let beta_pass = update_beta(problem, state.beta.view(), w.view(), hyper, config)?;
        inner_trace.extend(beta_pass.values.iter().map(|&value| InnerStep {
            outer,
            block: Block::Beta,
            value,
        }));
        state.beta = beta_pass.beta;

        if !config.freeze_weights {
            let omega_pass = update_omega(
                problem,
                state.beta.view(),
                state.omega.view(),
                hyper,
                config,
            )?;
            inner_trace.extend(omega_pass.values.iter().map(|&value| InnerStep {
                outer,
                block: Block::Omega,
                value,
            }));
            if omega_pass.line_search_failed {
                line_search_failures += 1;
            }
            state.omega = omega_pass.omega;
        }

        let next = objective(problem, state.beta.view(), state.omega.view(), hyper)?;
        if !next.total.is_finite() {
            return Err(Error::Diverged {
                iteration: outer,
                trace: trace
                    .iter()
                    .map(|v| v.to_f64().unwrap_or(f64::NAN))
                    .collect(),
            });
        }
        trace.push(next.total);
        state.objective_trace.push((outer, next.total));
        let change = (current.total - next.total).abs();
        let scale = current.total.abs().max(F::min_positive_value());
        current = next;
        if change < config.rel_tol * scale {
            converged = true;
            break;
        }
    }

    let balance = if problem.has_balancing_features() {
        Some(balancing_loss(
            problem,
            state.weights().view(),
            hyper.denom_epsilon,
        )?)
    } else {
        None
    };
    Ok(FitResult {
        state,
        converged,
        iterations_used,
        objective_trace: trace,
        inner_trace,
        line_search_failures,
        final_objective: current,
        balance,
    })
}

/// `σ(xᵢβ)` for every row.
pub fn predict_proba<F: Scalar>(
    beta: ArrayView1<'_, F>,
    x: ArrayView2<'_, F>,
) -> Result<Array1<F>> {
    if beta.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, features have {} columns",
            beta.len(),
            x.ncols()
        )));
    }
    Ok(x.dot(&beta).mapv(sigmoid))
}

/// Label 1 iff the probability is at least `threshold`; exactly 0.5 maps to
/// 1 at the default threshold.
pub fn predict<F: Scalar>(
    beta: ArrayView1<'_, F>,
    x: ArrayView2<'_, F>,
    threshold: F,
) -> Result<Array1<u8>> {
    Ok(predict_proba(beta, x)?.mapv(|p| u8::from(p >= threshold)))
}

/// Training-set accuracy of `beta`.
pub fn accuracy<F: Scalar>(problem: &Problem<F>, beta: ArrayView1<'_, F>) -> Result<f64> {
    let labels = predict(beta, problem.x(), F::lit(0.5))?;
    let correct = labels
        .iter()
        .zip(problem.y())
        .filter(|(&l, &y)| (l == 1) == (y == F::one()))
        .count();
    Ok(correct as f64 / problem.n_samples() as f64)
}
