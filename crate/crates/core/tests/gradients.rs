mod common;

use approx::assert_relative_eq;
use common::*;
use crlr::loss::{omega_objective, sample_losses, smooth_beta_objective};
use crlr::{balancing_loss, grad_omega, grad_smooth_beta, objective, Hyperparams, Problem};
use ndarray::{Array1, Array2};
use num_rational::Ratio;

#[test]
fn omega_gradient_matches_finite_differences() {
    let mut r = rng(11);
    for _ in 0..25 {
        let problem = random_problem(&mut r, 30, 8);
        let hyper = random_hyper(&mut r);
        let beta = random_vector(&mut r, 8, -1.0, 1.0);
        let omega = random_vector(&mut r, 30, 0.05, 0.4);
        let g = grad_omega(&problem, beta.view(), omega.view(), &hyper).unwrap();
        let fd = central_difference(
            |o| {
                objective(&problem, beta.view(), o.view(), &hyper)
                    .unwrap()
                    .total
            },
            &omega,
            1e-5,
        );
        assert!(scaled_max_error(&g, &fd) < 1e-6, "{g} vs {fd}");
    }
}

#[test]
fn omega_gradient_agrees_with_subproblem_objective() {
    let mut r = rng(12);
    let problem = random_problem(&mut r, 20, 5);
    let hyper = random_hyper(&mut r);
    let beta = random_vector(&mut r, 5, -2.0, 2.0);
    let omega = random_vector(&mut r, 20, 0.1, 0.5);
    let losses = sample_losses(&problem, beta.view()).unwrap();
    let g = grad_omega(&problem, beta.view(), omega.view(), &hyper).unwrap();
    let fd = central_difference(
        |o| omega_objective(&problem, losses.view(), o.view(), &hyper).unwrap(),
        &omega,
        1e-5,
    );
    assert!(scaled_max_error(&g, &fd) < 1e-6);
}

#[test]
fn beta_gradient_matches_finite_differences() {
    let mut r = rng(13);
    for _ in 0..25 {
        let problem = random_problem(&mut r, 30, 8);
        let lambda3: f64 = rand::Rng::random(&mut r);
        let beta = random_vector(&mut r, 8, -1.0, 1.0);
        let w = random_vector(&mut r, 30, 0.0, 0.1);
        let g = grad_smooth_beta(&problem, beta.view(), w.view(), lambda3).unwrap();
        let fd = central_difference(
            |b| smooth_beta_objective(&problem, b.view(), w.view(), lambda3).unwrap(),
            &beta,
            1e-5,
        );
        assert!(scaled_max_error(&g, &fd) < 1e-6);
    }
}

#[test]
fn balancing_matches_explicit_loops() {
    let mut r = rng(14);
    for _ in 0..50 {
        let n = 12 + (rand::Rng::random::<u32>(&mut r) % 20) as usize;
        let problem = random_problem(&mut r, n, 6);
        let w = random_vector(&mut r, n, 0.0, 2.0);
        let report = balancing_loss(&problem, w.view(), 1e-12).unwrap();
        let (losses, skipped) = balancing_by_loops(&problem.x().to_owned(), &w, 1e-12);
        assert_eq!(report.skipped, skipped);
        for (a, b) in report.per_feature_loss.iter().zip(&losses) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12, max_relative = 1e-10);
        }
        assert_relative_eq!(
            report.total,
            losses.iter().sum::<f64>(),
            max_relative = 1e-10
        );
    }
}

#[test]
fn balancing_with_separate_indicator() {
    // features and treatment indicator need not coincide
    let mut r = rng(15);
    let x = random_binary(&mut r, 16, 4, 0.5);
    let mut ind = x.clone();
    ind.column_mut(0).assign(&Array1::from_shape_fn(16, |i| {
        f64::from(u8::from(i % 2 == 0))
    }));
    let problem = Problem::new(x.clone(), random_labels(&mut r, 16), ind.clone()).unwrap();
    let w = random_vector(&mut r, 16, 0.1, 1.0);
    let report = balancing_loss(&problem, w.view(), 1e-12).unwrap();
    // treatment 0 now splits rows by parity
    let t: f64 = (0..16).filter(|i| i % 2 == 0).map(|i| w[i]).sum();
    let c: f64 = (0..16).filter(|i| i % 2 == 1).map(|i| w[i]).sum();
    let expect: f64 = (1..4)
        .map(|k| {
            let mt: f64 = (0..16)
                .filter(|i| i % 2 == 0)
                .map(|i| w[i] * x[[i, k]])
                .sum::<f64>()
                / t;
            let mc: f64 = (0..16)
                .filter(|i| i % 2 == 1)
                .map(|i| w[i] * x[[i, k]])
                .sum::<f64>()
                / c;
            (mt - mc).powi(2)
        })
        .sum();
    assert_relative_eq!(report.per_feature_loss[0], expect, max_relative = 1e-12);
}

type Q = Ratio<i128>;

fn rational_problem(x: &Array2<f64>) -> Problem<Q> {
    let xq = x.mapv(|v| Q::from_integer(v as i128));
    let y = Array1::from_elem(x.nrows(), Q::from_integer(0));
    Problem::new(xq.clone(), y, xq).unwrap()
}

#[test]
fn exact_scale_invariance_in_rationals() {
    let mut r = rng(16);
    let x = random_binary(&mut r, 10, 4, 0.5);
    let problem = rational_problem(&x);
    let w: Array1<Q> = (0..10).map(|i| Q::new(i as i128 + 1, 7)).collect();
    let w3 = w.mapv(|v| v * Q::from_integer(3));
    let eps = Q::from_integer(0);
    let a = balancing_loss(&problem, w.view(), eps).unwrap();
    let b = balancing_loss(&problem, w3.view(), eps).unwrap();
    assert_eq!(a, b);
    assert!(a.total >= Q::from_integer(0));
}

#[test]
fn exact_zero_on_full_factorial_in_rationals() {
    let x = full_factorial(4, 2);
    let problem = rational_problem(&x);
    let w = Array1::from_elem(x.nrows(), Q::new(1, 32));
    let report = balancing_loss(&problem, w.view(), Q::from_integer(0)).unwrap();
    assert_eq!(report.total, Q::from_integer(0));
    assert!(report
        .per_feature_loss
        .iter()
        .all(|v| *v == Q::from_integer(0)));
}

#[test]
fn floating_balancing_agrees_with_exact_value() {
    let mut r = rng(17);
    let x = random_binary(&mut r, 12, 5, 0.45);
    let problem_q = rational_problem(&x);
    let w_q: Array1<Q> = (0..12)
        .map(|i| Q::new((i * 7 % 5 + 1) as i128, 3))
        .collect();
    let exact = balancing_loss(&problem_q, w_q.view(), Q::from_integer(0)).unwrap();
    let problem = Problem::new(x.clone(), Array1::zeros(12), x).unwrap();
    let w = w_q.mapv(|v| *v.numer() as f64 / *v.denom() as f64);
    let approx = balancing_loss(&problem, w.view(), 0.0).unwrap();
    let exact_total = *exact.total.numer() as f64 / *exact.total.denom() as f64;
    assert_relative_eq!(approx.total, exact_total, max_relative = 1e-13);
}

#[test]
fn f32_gradient_is_close_to_f64() {
    let mut r = rng(18);
    let problem = random_problem(&mut r, 20, 5);
    let hyper = random_hyper(&mut r);
    let beta = random_vector(&mut r, 5, -1.0, 1.0);
    let omega = random_vector(&mut r, 20, 0.1, 0.4);
    let g64 = grad_omega(&problem, beta.view(), omega.view(), &hyper).unwrap();

    let p32 = Problem::new(
        problem.x().mapv(|v| v as f32),
        problem.y().mapv(|v| v as f32),
        problem.indicator().mapv(|v| v as f32),
    )
    .unwrap();
    let h32 = Hyperparams {
        lambda1: hyper.lambda1 as f32,
        lambda2: hyper.lambda2 as f32,
        lambda3: hyper.lambda3 as f32,
        lambda4: hyper.lambda4 as f32,
        lambda5: hyper.lambda5 as f32,
        denom_epsilon: 1e-12,
    };
    let g32 = grad_omega(
        &p32,
        beta.mapv(|v| v as f32).view(),
        omega.mapv(|v| v as f32).view(),
        &h32,
    )
    .unwrap();
    assert!(scaled_max_error(&g32.mapv(f64::from), &g64) < 1e-4);
}
