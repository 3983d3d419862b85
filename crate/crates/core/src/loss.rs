//! Objective terms and their gradients.
//!
//! With `W = ω ⊙ ω` the full objective is
//!
//! ```text
//! J(W, β) = Σᵢ Wᵢ·softplus((1 − 2yᵢ)·xᵢβ)
//!         + λ₁·Σⱼ ‖μ_treated(j) − μ_control(j)‖²
//!         + λ₂‖W‖² + λ₃‖β‖² + λ₄‖β‖₁ + λ₅(Σₖ Wₖ − 1)²
//! ```
//!
//! where `μ_treated(j)` and `μ_control(j)` are the `W`-weighted means of the
//! confounders of feature `j` (all other columns) over the samples with and
//! without feature `j`.
//!
//! The balancing term is evaluated through the `p × p` matrix
//! `A = Xᵀ diag(W) I`, whose column `j` holds the treated confounder sums for
//! treatment `j`; control sums follow from `Xᵀ W − A[:, j]`. This keeps both
//! the term and its gradient at `O(n p²)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::dataset::{indicator_from_features, Dataset};
use crate::error::{Error, Result};
use crate::scalar::{Field, Scalar};

/// Trade-off weights of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams<F> {
    /// Global balancing regularizer.
    pub lambda1: F,
    /// Sample-weight variance, `‖W‖²`.
    pub lambda2: F,
    /// Ridge on β.
    pub lambda3: F,
    /// Lasso on β.
    pub lambda4: F,
    /// Pulls `Σ W` towards 1.
    pub lambda5: F,
    /// Floor for the weighted group totals in the balancing denominators.
    pub denom_epsilon: F,
}

impl<F: Scalar> Default for Hyperparams<F> {
    fn default() -> Self {
        Hyperparams {
            lambda1: F::lit(1.0),
            lambda2: F::lit(0.1),
            lambda3: F::lit(0.01),
            lambda4: F::lit(0.001),
            lambda5: F::lit(1.0),
            denom_epsilon: F::lit(1e-12),
        }
    }
}

impl<F: Scalar> Hyperparams<F> {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("lambda5", self.lambda5),
        ];
        for (name, v) in lambdas {
            if !(v.is_finite() && v >= F::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.denom_epsilon.is_finite() && self.denom_epsilon > F::zero()) {
            return Err(Error::InvalidParameter(format!(
                "denom_epsilon must be > 0, got {}",
                self.denom_epsilon
            )));
        }
        Ok(())
    }

    /// Only the β penalties; what a plain elastic-net logistic fit uses.
    pub fn elastic_net(l1: F, l2: F) -> Self {
        Hyperparams {
            lambda1: F::zero(),
            lambda2: F::zero(),
            lambda3: l2,
            lambda4: l1,
            lambda5: F::zero(),
            ..Hyperparams::default()
        }
    }
}

/// Feature matrix, labels and treatment indicator in scalar form, plus the
/// features excluded from balancing because one of their groups is empty.
#[derive(Debug, Clone)]
pub struct Problem<T> {
    x: Array2<T>,
    y: Array1<T>,
    indicator: Array2<T>,
    skipped: Vec<bool>,
    /// The indicator is the feature matrix and every entry is 0 or 1.
    self_indicator: bool,
}

impl<T: Field> Problem<T> {
    pub fn new(x: Array2<T>, y: Array1<T>, indicator: Array2<T>) -> Result<Self> {
        let (n, p) = x.dim();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} rows but {} labels",
                y.len()
            )));
        }
        if indicator.dim() != (n, p) {
            return Err(Error::DimensionMismatch(format!(
                "indicator is {:?}, features are {:?}",
                indicator.dim(),
                (n, p)
            )));
        }
        let skipped = indicator
            .axis_iter(Axis(1))
            .map(|col| {
                let treated = col.iter().filter(|&&v| v != T::zero()).count();
                let control = col.iter().filter(|&&v| v != T::one()).count();
                treated == 0 || control == 0
            })
            .collect();
        let self_indicator = x == indicator && x.iter().all(|&v| v == T::zero() || v == T::one());
        Ok(Problem {
            x: x.as_standard_layout().into_owned(),
            y,
            indicator: indicator.as_standard_layout().into_owned(),
            skipped,
            self_indicator,
        })
    }

    /// `Xᵀv`, accumulated row by row over the contiguous feature matrix.
    pub(crate) fn xt_dot(&self, v: ArrayView1<'_, T>) -> Array1<T> {
        xt_dot(&self.x, v)
    }

    pub fn from_dataset(dataset: &Dataset) -> Self {
        let indicator = indicator_from_features(dataset);
        let to_t = |v: u8| if v == 1 { T::one() } else { T::zero() };
        let x: Array2<T> = dataset.features_as();
        let indicator_t = indicator.entries().mapv(to_t);
        Problem {
            self_indicator: x == indicator_t,
            x: x.as_standard_layout().into_owned(),
            y: dataset.labels_as(),
            indicator: indicator_t.as_standard_layout().into_owned(),
            skipped: indicator.degenerate_flags(),
        }
    }

    /// Rows of the indicator matrix as slices.
    fn indicator_rows(&self) -> std::slice::ChunksExact<'_, T> {
        let p = self.n_features().max(1);
        self.indicator
            .as_slice()
            .expect("indicator is kept in standard layout")
            .chunks_exact(p)
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, T> {
        self.y.view()
    }

    pub fn indicator(&self) -> ArrayView2<'_, T> {
        self.indicator.view()
    }

    pub fn skipped(&self) -> &[bool] {
        &self.skipped
    }

    pub fn has_balancing_features(&self) -> bool {
        self.skipped.iter().any(|&s| !s)
    }

    pub(crate) fn check_samples(&self, v: ArrayView1<'_, T>, what: &str) -> Result<()> {
        if v.len() != self.n_samples() {
            return Err(Error::DimensionMismatch(format!(
                "{what} has length {}, expected n = {}",
                v.len(),
                self.n_samples()
            )));
        }
        Ok(())
    }

    fn check_features(&self, v: ArrayView1<'_, T>, what: &str) -> Result<()> {
        if v.len() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "{what} has length {}, expected p = {}",
                v.len(),
                self.n_features()
            )));
        }
        Ok(())
    }
}

/// `Mᵀv` for a standard-layout `m`. ndarray's product on the transposed
/// view walks columns with a stride; summing scaled rows is several times
/// faster for the tall, narrow matrices used here.
fn xt_dot<T: Field>(m: &Array2<T>, v: ArrayView1<'_, T>) -> Array1<T> {
    let p = m.ncols();
    let mut out = vec![T::zero(); p];
    let rows = m
        .as_slice()
        .expect("standard layout")
        .chunks_exact(p.max(1));
    for (row, &vi) in rows.zip(v.iter()) {
        for (o, &e) in out.iter_mut().zip(row) {
            *o = *o + e * vi;
        }
    }
    Array1::from(out)
}

/// Per-treatment confounder imbalance.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport<T> {
    /// Squared 2-norm of the treated/control confounder-mean gap; zero for
    /// skipped features.
    pub per_feature_loss: Vec<T>,
    /// Features with an empty treated or control group.
    pub skipped: Vec<bool>,
    /// Sum of `per_feature_loss` over non-skipped features.
    pub total: T,
}

fn sum<T: Field>(values: impl IntoIterator<Item = T>) -> T {
    values.into_iter().fold(T::zero(), |acc, v| acc + v)
}

/// Intermediate quantities shared by the balancing term and its gradient.
struct BalanceParts<T> {
    report: BalanceReport<T>,
    /// `gap[[k, j]]`: treated minus control mean of confounder `k` for
    /// treatment `j`; zero on the diagonal and for skipped columns.
    gap: Array2<T>,
    treated_mean: Array2<T>,
    control_mean: Array2<T>,
    treated_total: Vec<T>,
    control_total: Vec<T>,
    treated_floored: Vec<bool>,
    control_floored: Vec<bool>,
}

fn balance_parts<T: Field>(problem: &Problem<T>, w: ArrayView1<'_, T>, eps: T) -> BalanceParts<T> {
    let p = problem.n_features();
    let x = problem.x();

    let n = x.nrows();
    let mut weighted = Vec::with_capacity(n * p);
    for (ind_row, &wi) in problem.indicator_rows().zip(w.iter()) {
        weighted.extend(ind_row.iter().map(|&v| v * wi));
    }
    let weighted = Array2::from_shape_vec((n, p), weighted).expect("n * p entries");
    // a[[k, j]] = Σᵢ x_ik Wᵢ I_ij
    let a = x.t().dot(&weighted);
    // with I = X binary, x² = x puts both weighted sums on the diagonal of a
    let (col_sums, treated_sums) = if problem.self_indicator {
        let d = a.diag().to_owned();
        (d.clone(), d)
    } else {
        (xt_dot(&problem.x, w), xt_dot(&problem.indicator, w))
    };
    let weight_total = sum(w.iter().copied());

    let mut gap = Array2::zeros((p, p));
    let mut treated_mean = Array2::zeros((p, p));
    let mut control_mean = Array2::zeros((p, p));
    let mut per_feature_loss = vec![T::zero(); p];
    let mut treated_total = vec![T::one(); p];
    let mut control_total = vec![T::one(); p];
    let mut treated_floored = vec![false; p];
    let mut control_floored = vec![false; p];

    for j in 0..p {
        if problem.skipped[j] {
            continue;
        }
        let t = treated_sums[j];
        let c = weight_total - t;
        treated_floored[j] = t < eps;
        control_floored[j] = c < eps;
        let t = if treated_floored[j] { eps } else { t };
        let c = if control_floored[j] { eps } else { c };
        treated_total[j] = t;
        control_total[j] = c;
        let mut loss = T::zero();
        for k in 0..p {
            if k == j {
                continue;
            }
            let mt = a[[k, j]] / t;
            let mc = (col_sums[k] - a[[k, j]]) / c;
            let d = mt - mc;
            treated_mean[[k, j]] = mt;
            control_mean[[k, j]] = mc;
            gap[[k, j]] = d;
            loss = loss + d * d;
        }
        per_feature_loss[j] = loss;
    }
    let total = sum(per_feature_loss
        .iter()
        .zip(&problem.skipped)
        .filter(|(_, &s)| !s)
        .map(|(&v, _)| v));
    BalanceParts {
        report: BalanceReport {
            per_feature_loss,
            skipped: problem.skipped.clone(),
            total,
        },
        gap,
        treated_mean,
        control_mean,
        treated_total,
        control_total,
        treated_floored,
        control_floored,
    }
}

/// Global confounder-balancing loss: for every non-degenerate feature taken
/// as treatment, the squared distance between the weighted treated and
/// control means of the remaining features.
pub fn balancing_loss<T: Field>(
    problem: &Problem<T>,
    w: ArrayView1<'_, T>,
    denom_epsilon: T,
) -> Result<BalanceReport<T>> {
    problem.check_samples(w, "weight vector")?;
    if !problem.has_balancing_features() {
        return Err(Error::EmptyBalancing);
    }
    Ok(balance_parts(problem, w, denom_epsilon).report)
}

/// Gradient of the balancing total with respect to `W`.
fn balance_gradient_w<T: Field>(problem: &Problem<T>, parts: &BalanceParts<T>) -> Array1<T> {
    let (n, p) = problem.x.dim();
    let two = T::one() + T::one();
    // xg[[i, j]] = Σ_k x_ik gap[[k, j]]
    let xg = problem.x.dot(&parts.gap);
    let proj = |means: &Array2<T>, j: usize| {
        sum(parts
            .gap
            .column(j)
            .iter()
            .zip(means.column(j))
            .map(|(&d, &m)| d * m))
    };
    let mut treated_proj = vec![T::zero(); p];
    let mut control_proj = vec![T::zero(); p];
    for j in (0..p).filter(|&j| !problem.skipped[j]) {
        // a floored denominator is a constant, so its quotient term drops out
        if !parts.treated_floored[j] {
            treated_proj[j] = proj(&parts.treated_mean, j);
        }
        if !parts.control_floored[j] {
            control_proj[j] = proj(&parts.control_mean, j);
        }
    }
    // Per sample, Σ_j I_ij (s_ij − cT_j)/T_j − (1 − I_ij)(s_ij − cC_j)/C_j
    // regrouped as Σ_j s_ij (I_ij u_j − 1/C_j) + I_ij v_j + Σ_j cC_j/C_j,
    // with u = 1/T + 1/C and v = −(cT/T + cC/C). Skipped columns get zeros.
    let mut u = vec![T::zero(); p];
    let mut inv_c = vec![T::zero(); p];
    let mut v = vec![T::zero(); p];
    let mut offset = T::zero();
    for j in (0..p).filter(|&j| !problem.skipped[j]) {
        let it = T::one() / parts.treated_total[j];
        let ic = T::one() / parts.control_total[j];
        u[j] = it + ic;
        inv_c[j] = ic;
        v[j] = T::zero() - (treated_proj[j] * it + control_proj[j] * ic);
        offset = offset + control_proj[j] * ic;
    }
    let xg = xg.as_standard_layout();
    let xg_rows = xg
        .as_slice()
        .expect("standard layout")
        .chunks_exact(p.max(1));
    let grad: Array1<T> = xg_rows
        .zip(problem.indicator_rows())
        .map(|(s_row, ind_row)| {
            let mut acc = offset;
            for ((((&s, &ind), &uj), &icj), &vj) in
                s_row.iter().zip(ind_row).zip(&u).zip(&inv_c).zip(&v)
            {
                acc = acc + s * (ind * uj - icj) + ind * vj;
            }
            two * acc
        })
        .collect();
    debug_assert_eq!(grad.len(), n);
    grad
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus<F: Scalar>(z: F) -> F {
    z.max(F::zero()) + (-z.abs()).exp().ln_1p()
}

/// Logistic function, evaluated on the side that cannot overflow.
pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

fn signed_margins<F: Scalar>(problem: &Problem<F>, beta: ArrayView1<'_, F>) -> Array1<F> {
    let mut m = problem.x.dot(&beta);
    Zip::from(&mut m)
        .and(&problem.y)
        .for_each(|m, &y| *m = *m * (F::one() - (y + y)));
    m
}

/// Per-sample logistic losses `softplus((1 − 2yᵢ)·xᵢβ)`.
pub fn sample_losses<F: Scalar>(
    problem: &Problem<F>,
    beta: ArrayView1<'_, F>,
) -> Result<Array1<F>> {
    problem.check_features(beta, "beta")?;
    Ok(signed_margins(problem, beta).mapv(softplus))
}

/// `Σᵢ Wᵢ·softplus((1 − 2yᵢ)·xᵢβ)`.
pub fn weighted_logistic_loss<F: Scalar>(
    problem: &Problem<F>,
    beta: ArrayView1<'_, F>,
    w: ArrayView1<'_, F>,
) -> Result<F> {
    problem.check_samples(w, "weight vector")?;
    Ok(sample_losses(problem, beta)?.dot(&w))
}

/// Weighted logistic loss plus the ridge term: the smooth part of the β
/// subproblem.
pub fn smooth_beta_objective<F: Scalar>(
    problem: &Problem<F>,
    beta: ArrayView1<'_, F>,
    w: ArrayView1<'_, F>,
    lambda3: F,
) -> Result<F> {
    problem.check_samples(w, "weight vector")?;
    Ok(Margins::new(problem, beta)?.smooth_value(beta, w, lambda3))
}

/// Gradient of [`smooth_beta_objective`] in β:
/// `Σᵢ Wᵢ(1 − 2yᵢ)·σ((1 − 2yᵢ)xᵢβ)·xᵢ + 2λ₃β`.
pub fn grad_smooth_beta<F: Scalar>(
    problem: &Problem<F>,
    beta: ArrayView1<'_, F>,
    w: ArrayView1<'_, F>,
    lambda3: F,
) -> Result<Array1<F>> {
    problem.check_samples(w, "weight vector")?;
    Ok(Margins::new(problem, beta)?.smooth_gradient(problem, beta, w, lambda3))
}

/// Signed margins at one β together with `exp(−|m|)`, from which both the
/// softplus value and the sigmoid follow, so a line search can hand an
/// accepted point's evaluation on to the next gradient.
#[derive(Debug, Clone)]
pub(crate) struct Margins<F> {
    m: Array1<F>,
    decay: Array1<F>,
}

impl<F: Scalar> Margins<F> {
    pub(crate) fn new(problem: &Problem<F>, beta: ArrayView1<'_, F>) -> Result<Self> {
        problem.check_features(beta, "beta")?;
        let m = signed_margins(problem, beta);
        let decay = m.mapv(|v| (-v.abs()).exp());
        Ok(Margins { m, decay })
    }

    pub(crate) fn smooth_value(
        &self,
        beta: ArrayView1<'_, F>,
        w: ArrayView1<'_, F>,
        lambda3: F,
    ) -> F {
        let mut loss = F::zero();
        for ((&m, &d), &wi) in self.m.iter().zip(&self.decay).zip(w) {
            loss = loss + wi * (m.max(F::zero()) + d.ln_1p());
        }
        loss + lambda3 * beta.dot(&beta)
    }

    pub(crate) fn smooth_gradient(
        &self,
        problem: &Problem<F>,
        beta: ArrayView1<'_, F>,
        w: ArrayView1<'_, F>,
        lambda3: F,
    ) -> Array1<F> {
        let mut coef = Array1::zeros(self.m.len());
        Zip::from(&mut coef)
            .and(&self.m)
            .and(&self.decay)
            .and(&problem.y)
            .and(&w)
            .for_each(|c, &m, &d, &y, &wi| {
                let s = if m >= F::zero() {
                    F::one() / (F::one() + d)
                } else {
                    d / (F::one() + d)
                };
                *c = wi * (F::one() - (y + y)) * s;
            });
        let two = F::lit(2.0);
        problem.xt_dot(coef.view()) + &beta.mapv(|b| two * lambda3 * b)
    }
}

/// The objective split into its (already λ-scaled) addends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective<F> {
    pub logistic: F,
    pub balancing: F,
    pub weight_norm: F,
    pub ridge: F,
    pub lasso: F,
    pub weight_sum: F,
    pub total: F,
}

impl<F: Scalar> Objective<F> {
    /// The addends that depend on `W` only through fixed β.
    pub fn omega_part(&self) -> F {
        self.logistic + self.balancing + self.weight_norm + self.weight_sum
    }

    /// Sum of the addends in a fixed order.
    pub fn addend_sum(&self) -> F {
        self.logistic
            + self.balancing
            + self.weight_norm
            + self.ridge
            + self.lasso
            + self.weight_sum
    }
}

/// The `W`-dependent penalties and the balancing term, given the weights.
struct WeightTerms<F> {
    balancing: F,
    weight_norm: F,
    weight_sum: F,
}

fn weight_terms<F: Scalar>(
    problem: &Problem<F>,
    w: ArrayView1<'_, F>,
    hyper: &Hyperparams<F>,
) -> Result<WeightTerms<F>> {
    let balancing = if hyper.lambda1 > F::zero() {
        hyper.lambda1 * balancing_loss(problem, w, hyper.denom_epsilon)?.total
    } else {
        F::zero()
    };
    let residual = w.sum() - F::one();
    Ok(WeightTerms {
        balancing,
        weight_norm: hyper.lambda2 * w.dot(&w),
        weight_sum: hyper.lambda5 * residual * residual,
    })
}

/// Full objective at `(β, ω)` with `W = ω ⊙ ω`.
pub fn objective<F: Scalar>(
    problem: &Problem<F>,
    beta: ArrayView1<'_, F>,
    omega: ArrayView1<'_, F>,
    hyper: &Hyperparams<F>,
) -> Result<Objective<F>> {
    problem.check_samples(omega, "omega")?;
    let w = omega.mapv(|o| o * o);
    let logistic = weighted_logistic_loss(problem, beta, w.view())?;
    let terms = weight_terms(problem, w.view(), hyper)?;
    let ridge = hyper.lambda3 * beta.dot(&beta);
    let lasso = hyper.lambda4 * beta.mapv(F::abs).sum();
    let parts = Objective {
        logistic,
        balancing: terms.balancing,
        weight_norm: terms.weight_norm,
        ridge,
        lasso,
        weight_sum: terms.weight_sum,
        total: F::zero(),
    };
    Ok(Objective {
        total: parts.addend_sum(),
        ..parts
    })
}

/// The ω-subproblem objective for fixed β, given the per-sample losses from
/// [`sample_losses`].
pub fn omega_objective<F: Scalar>(
    problem: &Problem<F>,
    losses: ArrayView1<'_, F>,
    omega: ArrayView1<'_, F>,
    hyper: &Hyperparams<F>,
) -> Result<F> {
    problem.check_samples(omega, "omega")?;
    problem.check_samples(losses, "sample losses")?;
    let w = omega.mapv(|o| o * o);
    let terms = weight_terms(problem, w.view(), hyper)?;
    Ok(losses.dot(&w) + terms.balancing + terms.weight_norm + terms.weight_sum)
}

/// Gradient of the ω-subproblem objective, given per-sample losses.
pub fn grad_omega_from_losses<F: Scalar>(
    problem: &Problem<F>,
    losses: ArrayView1<'_, F>,
    omega: ArrayView1<'_, F>,
    hyper: &Hyperparams<F>,
) -> Result<Array1<F>> {
    problem.check_samples(omega, "omega")?;
    problem.check_samples(losses, "sample losses")?;
    let w = omega.mapv(|o| o * o);
    let two = F::lit(2.0);

    // ∂J/∂W, then the chain rule through W = ω ⊙ ω
    let mut grad_w = losses.to_owned();
    if hyper.lambda1 > F::zero() {
        if !problem.has_balancing_features() {
            return Err(Error::EmptyBalancing);
        }
        let parts = balance_parts(problem, w.view(), hyper.denom_epsilon);
        if let Some(j) = parts
            .report
            .per_feature_loss
            .iter()
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite {
                context: "balancing term",
                feature: Some(j),
            });
        }
        let bal = balance_gradient_w(problem, &parts);
        grad_w.scaled_add(hyper.lambda1, &bal);
    }
    grad_w.scaled_add(two * hyper.lambda2, &w);
    let residual = w.sum() - F::one();
    grad_w.mapv_inplace(|g| g + two * hyper.lambda5 * residual);

    let grad = grad_w * &omega.mapv(|o| two * o);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: "omega gradient",
            feature: None,
        });
    }
    Ok(grad)
}

/// Gradient of the objective with respect to ω for fixed β:
/// `2ω⊙ℓ + λ₁·2ω⊙∂B/∂W + 4λ₂·ω⊙ω⊙ω + 4λ₅(Σₖωₖ² − 1)·ω`, with `ℓ` the per-sample
/// logistic losses and `B` the balancing total.
pub fn grad_omega<F: Scalar>(
    problem: &Problem<F>,
    beta: ArrayView1<'_, F>,
    omega: ArrayView1<'_, F>,
    hyper: &Hyperparams<F>,
) -> Result<Array1<F>> {
    let losses = sample_losses(problem, beta)?;
    grad_omega_from_losses(problem, losses.view(), omega, hyper)
}
