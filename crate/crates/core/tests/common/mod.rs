#![allow(dead_code)]

use crlr::{Hyperparams, Problem};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_binary(rng: &mut ChaCha8Rng, n: usize, p: usize, density: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| {
        f64::from(u8::from(rng.random::<f64>() < density))
    })
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| f64::from(u8::from(rng.random::<bool>())))
}

/// Random binary problem whose indicator is the feature matrix itself.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Problem<f64> {
    let density = rng.random_range(0.2..0.8);
    let x = random_binary(rng, n, p, density);
    let y = random_labels(rng, n);
    Problem::new(x.clone(), y, x).unwrap()
}

pub fn random_hyper(rng: &mut ChaCha8Rng) -> Hyperparams<f64> {
    Hyperparams {
        lambda1: rng.random(),
        lambda2: rng.random(),
        lambda3: rng.random(),
        lambda4: rng.random(),
        lambda5: rng.random(),
        denom_epsilon: 1e-12,
    }
}

pub fn random_vector(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| rng.random_range(lo..hi))
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(&Array1<f64>) -> f64, x: &Array1<f64>, h: f64) -> Array1<f64> {
    let mut g = Array1::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// `max |a − b| / max(max |b|, 1e-12)`.
pub fn scaled_max_error(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let err = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
    err / scale
}

/// Per-feature balancing loss by explicit loops, straight from the
/// definition: for treatment `j`, the squared gap between the weighted
/// treated and control means of every other feature.
pub fn balancing_by_loops(x: &Array2<f64>, w: &Array1<f64>, eps: f64) -> (Vec<f64>, Vec<bool>) {
    let (n, p) = x.dim();
    let mut losses = vec![0.0; p];
    let mut skipped = vec![false; p];
    for j in 0..p {
        let treated: Vec<usize> = (0..n).filter(|&i| x[[i, j]] == 1.0).collect();
        let control: Vec<usize> = (0..n).filter(|&i| x[[i, j]] == 0.0).collect();
        if treated.is_empty() || control.is_empty() {
            skipped[j] = true;
            continue;
        }
        let t: f64 = treated.iter().map(|&i| w[i]).sum::<f64>().max(eps);
        let c: f64 = control.iter().map(|&i| w[i]).sum::<f64>().max(eps);
        for k in (0..p).filter(|&k| k != j) {
            let mt: f64 = treated.iter().map(|&i| w[i] * x[[i, k]]).sum::<f64>() / t;
            let mc: f64 = control.iter().map(|&i| w[i] * x[[i, k]]).sum::<f64>() / c;
            losses[j] += (mt - mc) * (mt - mc);
        }
    }
    (losses, skipped)
}

/// Every row of the 2^p full factorial design, repeated `copies` times. Any
/// feature taken as treatment leaves the others identically distributed in
/// both arms, so uniform weights balance it exactly.
pub fn full_factorial(p: usize, copies: usize) -> Array2<f64> {
    let rows = 1usize << p;
    Array2::from_shape_fn((rows * copies, p), |(i, k)| {
        f64::from(u8::from((i % rows) >> k & 1 == 1))
    })
}

/// Elastic-net weighted logistic regression by accelerated proximal
/// gradient (FISTA) with a fixed step from a global Lipschitz bound,
/// written without the library's loss code:
/// `min Σ wᵢ log(1 + exp(−sᵢ xᵢβ)) + l2‖β‖² + l1‖β‖₁`, `sᵢ = 2yᵢ − 1`.
pub fn elastic_net_oracle(
    x: &Array2<f64>,
    y: &Array1<f64>,
    w: &Array1<f64>,
    l1: f64,
    l2: f64,
    iters: usize,
) -> Array1<f64> {
    let (n, p) = x.dim();
    let row_sq: f64 = (0..n)
        .map(|i| w[i] * x.row(i).iter().map(|v| v * v).sum::<f64>())
        .sum();
    let step = 1.0 / (0.25 * row_sq + 2.0 * l2);
    let grad = |b: &Array1<f64>| -> Array1<f64> {
        let mut g = b * (2.0 * l2);
        for i in 0..n {
            let s = 2.0 * y[i] - 1.0;
            let m = s * x.row(i).dot(b);
            // d/dm log(1 + e^{-m}) = -1 / (1 + e^{m})
            let d = -1.0 / (1.0 + m.exp());
            g.scaled_add(w[i] * d * s, &x.row(i));
        }
        g
    };
    let prox = |v: f64| {
        let t = step * l1;
        if v > t {
            v - t
        } else if v < -t {
            v + t
        } else {
            0.0
        }
    };
    let mut beta = Array1::<f64>::zeros(p);
    let mut z = beta.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let g = grad(&z);
        let next: Array1<f64> = (&z - &(g * step)).mapv(prox);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &next + &((&next - &beta) * ((t - 1.0) / t_next));
        beta = next;
        t = t_next;
    }
    beta
}

pub fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
