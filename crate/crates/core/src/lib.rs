//! Causally regularized logistic regression.
//!
//! Jointly learns a non-negative sample-weight vector that balances every
//! binary feature against all the others (global confounder balancing) and
//! an elastic-net logistic model fit under those weights. The weighted
//! coefficients lean on features whose effect on the label survives
//! reweighting, which keeps predictions stable when the test distribution is
//! selected differently from the training one.
//!
//! The numerical core is generic over the scalar type: [`Field`] covers the
//! exact rational arithmetic the balancing term needs, [`Scalar`] adds the
//! transcendental functions the logistic parts use. `f64` aliases are
//! exported at the crate root for everyday use.

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod loss;
pub mod manifest;
pub mod model_io;
pub mod scalar;
pub mod solver;
pub mod synthgen;

pub use crate::dataset::{
    binarize, indicator_from_features, load_dataset, ConfounderView, Dataset, IndicatorMatrix,
    LabelColumn, LoadedDataset,
};
pub use crate::error::{Error, Result};
pub use crate::loss::{
    balancing_loss, grad_omega, grad_smooth_beta, objective, weighted_logistic_loss, BalanceReport,
    Hyperparams, Objective, Problem,
};
pub use crate::scalar::{Field, Scalar};
pub use crate::solver::{fit, predict, predict_proba, FitResult, ModelState, SolverConfig};

pub type Problem64 = Problem<f64>;
pub type Hyperparams64 = Hyperparams<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type ModelState64 = ModelState<f64>;
pub type FitResult64 = FitResult<f64>;
pub type BalanceReport64 = BalanceReport<f64>;

pub type Problem32 = Problem<f32>;
pub type Hyperparams32 = Hyperparams<f32>;
pub type FitResult32 = FitResult<f32>;
