//! Synthetic data with a controllable selection bias.
//!
//! Features are i.i.d. standard normal draws binarized at zero and split into
//! a causal block `C` and a noisy block `V`. The label is
//! `1[g(C) + N(0, ε²) >= 0]` with `g(C) = (C − ½)·a`, so it depends on `C`
//! only. A pool sample is then kept with probability `r` when the designated
//! noisy feature equals the label and `1 − r` otherwise: `r > 0.5` makes that
//! feature spuriously predictive, `r < 0.5` reverses the correlation, and
//! `r = 0.5` leaves it independent of the label.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{binarize_value, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Pool size. With `target_n` set, the maximum number of draws.
    pub n_pool: usize,
    /// Keep drawing until this many samples are selected.
    pub target_n: Option<usize>,
    pub p_causal: usize,
    pub p_noise: usize,
    pub bias_rate: f64,
    /// Standard deviation of the label noise.
    pub noise_scale: f64,
    pub causal_coefficients: Vec<f64>,
    /// Index into the noisy block of the feature the selection looks at.
    pub bias_feature_index: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::with_target(2000, 10, 10, 0.85, 0)
    }
}

impl SynthConfig {
    /// Draws until `n` samples are selected, with a pool cap large enough
    /// for any bias rate in practice.
    pub fn with_target(
        n: usize,
        p_causal: usize,
        p_noise: usize,
        bias_rate: f64,
        seed: u64,
    ) -> Self {
        SynthConfig {
            n_pool: n.saturating_mul(20).max(1000),
            target_n: Some(n),
            p_causal,
            p_noise,
            bias_rate,
            noise_scale: 0.1,
            causal_coefficients: vec![1.0; p_causal],
            bias_feature_index: 0,
            seed,
        }
    }

    pub fn n_features(&self) -> usize {
        self.p_causal + self.p_noise
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.bias_rate > 0.0 && self.bias_rate < 1.0) {
            return bad(format!(
                "bias rate must be in (0, 1), got {}",
                self.bias_rate
            ));
        }
        if self.p_causal < 1 || self.p_noise < 1 {
            return bad("need at least one causal and one noisy feature".into());
        }
        if self.n_pool == 0 {
            return bad("n_pool must be positive".into());
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!(
                "noise scale must be >= 0, got {}",
                self.noise_scale
            ));
        }
        if self.causal_coefficients.len() != self.p_causal {
            return bad(format!(
                "{} causal coefficients for {} causal features",
                self.causal_coefficients.len(),
                self.p_causal
            ));
        }
        if self.bias_feature_index >= self.p_noise {
            return bad(format!(
                "bias feature index {} outside the noisy block of size {}",
                self.bias_feature_index, self.p_noise
            ));
        }
        if self.target_n.is_some_and(|n| n < 2) {
            return bad("target_n must be at least 2".into());
        }
        Ok(())
    }

    /// Column of the selection feature in the full feature matrix.
    pub fn bias_column(&self) -> usize {
        self.p_causal + self.bias_feature_index
    }
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub dataset: Dataset,
    pub causal: Vec<usize>,
    pub noisy: Vec<usize>,
    pub pool_features: Array2<u8>,
    pub pool_labels: Array1<u8>,
    /// Selection outcome for every pool sample.
    pub selected: Vec<bool>,
    pub config: SynthConfig,
}

impl SynthDataset {
    pub fn pool_size(&self) -> usize {
        self.selected.len()
    }

    /// Sidecar `key=value` description of the generation.
    pub fn metadata(&self) -> String {
        let c = &self.config;
        let join = |v: &[usize]| {
            v.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let coefs = c
            .causal_coefficients
            .iter()
            .map(|a| format!("{a:?}"))
            .collect::<Vec<_>>()
            .join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("seed", c.seed.to_string());
        kv("bias_rate", format!("{:?}", c.bias_rate));
        kv("noise_scale", format!("{:?}", c.noise_scale));
        kv("p_causal", c.p_causal.to_string());
        kv("p_noise", c.p_noise.to_string());
        kv("n_pool", c.n_pool.to_string());
        kv(
            "target_n",
            c.target_n.map_or_else(String::new, |n| n.to_string()),
        );
        kv("causal_coefficients", coefs);
        kv("bias_feature_index", c.bias_feature_index.to_string());
        kv("bias_column", c.bias_column().to_string());
        kv("causal_columns", join(&self.causal));
        kv("noisy_columns", join(&self.noisy));
        kv("pool_size", self.pool_size().to_string());
        kv("selected", self.dataset.n_samples().to_string());
        out
    }
}

/// Writes [`SynthDataset::metadata`] to `path`.
pub fn write_metadata(synth: &SynthDataset, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, synth.metadata()).map_err(|e| Error::io(path, e))
}

/// Column names: `c0..` for the causal block, `v0..` for the noisy block.
pub fn feature_names(config: &SynthConfig) -> Vec<String> {
    (0..config.p_causal)
        .map(|k| format!("c{k}"))
        .chain((0..config.p_noise).map(|k| format!("v{k}")))
        .collect()
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let p = config.n_features();
    let bias_col = config.bias_column();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut pool = Vec::new();
    let mut pool_labels = Vec::new();
    let mut selected = Vec::new();
    let mut n_selected = 0usize;
    let mut row = vec![0u8; p];

    while selected.len() < config.n_pool {
        if config.target_n.is_some_and(|n| n_selected >= n) {
            break;
        }
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = binarize_value(z);
        }
        let signal: f64 = row[..config.p_causal]
            .iter()
            .zip(&config.causal_coefficients)
            .map(|(&c, &a)| a * (f64::from(c) - 0.5))
            .sum();
        let noise: f64 = rng.sample::<f64, _>(StandardNormal) * config.noise_scale;
        let y = binarize_value(signal + noise);
        let keep_prob = if row[bias_col] == y {
            config.bias_rate
        } else {
            1.0 - config.bias_rate
        };
        let keep = rng.random::<f64>() < keep_prob;
        pool.extend_from_slice(&row);
        pool_labels.push(y);
        selected.push(keep);
        n_selected += usize::from(keep);
    }

    if let Some(n) = config.target_n {
        if n_selected < n {
            return Err(Error::InvalidParameter(format!(
                "only {n_selected} of {n} requested samples selected from a pool of {}; increase n_pool",
                selected.len()
            )));
        }
    }
    if n_selected == 0 {
        return Err(Error::EmptySelection {
            pool: selected.len(),
        });
    }

    let pool_features = Array2::from_shape_vec((selected.len(), p), pool)
        .expect("pool buffer has n_pool * p entries");
    let pool_labels = Array1::from(pool_labels);
    let rows: Vec<usize> = selected
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| i)
        .collect();
    let features = pool_features.select(ndarray::Axis(0), &rows);
    let labels = pool_labels.select(ndarray::Axis(0), &rows);
    let dataset = Dataset::new(features, labels, Some(feature_names(config)))?;
    Ok(SynthDataset {
        dataset,
        causal: (0..config.p_causal).collect(),
        noisy: (config.p_causal..p).collect(),
        pool_features,
        pool_labels,
        selected,
        config: config.clone(),
    })
}

/// SplitMix64 finalizer over `(seed, stream)`; distinct streams give
/// unrelated seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One dataset per bias rate, same generation law, seeds derived from
/// `(config.seed, index)`.
pub fn resample_test_grid(config: &SynthConfig, r_values: &[f64]) -> Result<Vec<SynthDataset>> {
    r_values
        .iter()
        .enumerate()
        .map(|(idx, &r)| {
            let cfg = SynthConfig {
                bias_rate: r,
                seed: derive_seed(config.seed, idx as u64),
                ..config.clone()
            };
            generate(&cfg)
        })
        .collect()
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("bad grid {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // rounded to 12 decimals so 0.1:0.9:0.1 yields 0.3, not 0.30000000000000004
        return Ok((0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}
