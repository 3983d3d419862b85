//! Plain-text model files.
//!
//! ```text
//! crlr-model 1
//! p 3
//! intercept false
//! lambda1 1.0000000000000000e0
//! ...
//! coef 4.2500000000000000e-1 smoking
//! ```
//!
//! One `key value` pair per line. Reals carry 17 significant digits, so a
//! write/read cycle reproduces every coefficient bit for bit. Coefficient
//! lines come last, in column order, with the feature name as the rest of
//! the line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::loss::Hyperparams;
use crate::solver::SolverConfig;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "crlr-model";

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub feature_names: Vec<String>,
    /// The last coefficient belongs to an appended constant column.
    pub intercept: bool,
    pub beta: Array1<f64>,
    pub hyper: Hyperparams<f64>,
    pub solver: SolverConfig<f64>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl SavedModel {
    pub fn n_features(&self) -> usize {
        self.beta.len()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let h = &self.hyper;
        let c = &self.solver;
        // writing to a String cannot fail
        let _ = (|| -> std::fmt::Result {
            writeln!(s, "{MAGIC} {FORMAT_VERSION}")?;
            writeln!(s, "p {}", self.beta.len())?;
            writeln!(s, "intercept {}", self.intercept)?;
            for (k, v) in [
                ("lambda1", h.lambda1),
                ("lambda2", h.lambda2),
                ("lambda3", h.lambda3),
                ("lambda4", h.lambda4),
                ("lambda5", h.lambda5),
                ("denom_epsilon", h.denom_epsilon),
                ("rel_tol", c.rel_tol),
                ("armijo_shrink", c.armijo_shrink),
                ("armijo_slope", c.armijo_slope),
                ("initial_step", c.initial_step),
            ] {
                writeln!(s, "{k} {}", real(v))?;
            }
            writeln!(s, "max_outer_iters {}", c.max_outer_iters)?;
            writeln!(s, "inner_beta_iters {}", c.inner_beta_iters)?;
            writeln!(s, "inner_omega_iters {}", c.inner_omega_iters)?;
            writeln!(s, "seed {}", c.seed)?;
            writeln!(s, "freeze_weights {}", c.freeze_weights)?;
            writeln!(s, "converged {}", self.converged)?;
            writeln!(s, "iterations_used {}", self.iterations_used)?;
            for (b, name) in self.beta.iter().zip(&self.feature_names) {
                writeln!(s, "coef {} {name}", real(*b))?;
            }
            Ok(())
        })();
        s
    }

    pub fn from_text(text: &str) -> Result<SavedModel> {
        let bad = |msg: String| Error::ModelFormat(msg);
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let version = first
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| bad("not a model file".into()))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(bad(format!("unsupported format version {version:?}")));
        }

        let mut p: Option<usize> = None;
        let mut intercept = None;
        let mut hyper = Hyperparams::default();
        let mut solver = SolverConfig::default();
        let mut converged = false;
        let mut iterations_used = 0;
        let mut names = Vec::new();
        let mut beta = Vec::new();

        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            let (key, rest) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("line {lineno}: expected `key value`")))?;
            let num = |v: &str| -> Result<f64> {
                v.trim()
                    .parse()
                    .map_err(|_| bad(format!("line {lineno}: bad number {v:?}")))
            };
            let int = |v: &str| -> Result<usize> {
                v.trim()
                    .parse()
                    .map_err(|_| bad(format!("line {lineno}: bad integer {v:?}")))
            };
            let flag = |v: &str| -> Result<bool> {
                v.trim()
                    .parse()
                    .map_err(|_| bad(format!("line {lineno}: bad boolean {v:?}")))
            };
            match key {
                "p" => p = Some(int(rest)?),
                "intercept" => intercept = Some(flag(rest)?),
                "lambda1" => hyper.lambda1 = num(rest)?,
                "lambda2" => hyper.lambda2 = num(rest)?,
                "lambda3" => hyper.lambda3 = num(rest)?,
                "lambda4" => hyper.lambda4 = num(rest)?,
                "lambda5" => hyper.lambda5 = num(rest)?,
                "denom_epsilon" => hyper.denom_epsilon = num(rest)?,
                "rel_tol" => solver.rel_tol = num(rest)?,
                "armijo_shrink" => solver.armijo_shrink = num(rest)?,
                "armijo_slope" => solver.armijo_slope = num(rest)?,
                "initial_step" => solver.initial_step = num(rest)?,
                "max_outer_iters" => solver.max_outer_iters = int(rest)?,
                "inner_beta_iters" => solver.inner_beta_iters = int(rest)?,
                "inner_omega_iters" => solver.inner_omega_iters = int(rest)?,
                "seed" => {
                    solver.seed = rest
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("line {lineno}: bad seed {rest:?}")))?
                }
                "freeze_weights" => solver.freeze_weights = flag(rest)?,
                "converged" => converged = flag(rest)?,
                "iterations_used" => iterations_used = int(rest)?,
                "coef" => {
                    let (value, name) = rest.split_once(' ').ok_or_else(|| {
                        bad(format!("line {lineno}: coef needs a value and a name"))
                    })?;
                    beta.push(num(value)?);
                    names.push(name.to_string());
                }
                other => return Err(bad(format!("line {lineno}: unknown key {other:?}"))),
            }
        }

        let p = p.ok_or_else(|| bad("missing `p`".into()))?;
        if beta.len() != p {
            return Err(bad(format!(
                "p is {p} but {} coefficients follow",
                beta.len()
            )));
        }
        if let Some(b) = beta.iter().find(|b| !b.is_finite()) {
            return Err(bad(format!("non-finite coefficient {b}")));
        }
        Ok(SavedModel {
            feature_names: names,
            intercept: intercept.ok_or_else(|| bad("missing `intercept`".into()))?,
            beta: Array1::from(beta),
            hyper,
            solver,
            converged,
            iterations_used,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<SavedModel> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SavedModel::from_text(&text)
    }
}

/// 17 significant digits in scientific notation.
fn real(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SavedModel {
        SavedModel {
            feature_names: vec!["a".into(), "two words".into(), "intercept".into()],
            intercept: true,
            beta: Array1::from(vec![0.1 + 0.2, -1.0 / 3.0, 5e-300]),
            hyper: Hyperparams::default(),
            solver: SolverConfig {
                seed: u64::MAX,
                ..SolverConfig::default()
            },
            converged: true,
            iterations_used: 17,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let back = SavedModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.beta.iter().zip(m.beta.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn seventeen_digits_are_written() {
        let text = sample().to_text();
        assert!(text.contains("coef 3.0000000000000004e-1 a\n"));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(SavedModel::from_text("").is_err());
        assert!(SavedModel::from_text("crlr-model 2\np 0\nintercept false\n").is_err());
        let mut t = sample().to_text();
        t.push_str("coef 1.0 extra\n");
        assert!(SavedModel::from_text(&t).is_err());
        let t = sample().to_text().replace("lambda1", "gamma");
        assert!(SavedModel::from_text(&t).is_err());
    }
}
