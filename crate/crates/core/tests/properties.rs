use crlr::dataset::binarize;
use crlr::eval::sig6;
use crlr::loss::{sigmoid, softplus};
use crlr::model_io::SavedModel;
use crlr::solver::{soft_threshold, update_beta, update_omega};
use crlr::synthgen::parse_grid;
use crlr::{balancing_loss, Hyperparams, Problem, SolverConfig};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

/// Binary matrix of shape (n, p) with n in [4, 24], p in [2, 6].
fn binary_matrix() -> impl Strategy<Value = Array2<f64>> {
    (4usize..24, 2usize..6).prop_flat_map(|(n, p)| {
        prop::collection::vec(any::<bool>(), n * p).prop_map(move |v| {
            Array2::from_shape_vec((n, p), v.into_iter().map(f64::from).collect()).unwrap()
        })
    })
}

fn instance() -> impl Strategy<Value = (Array2<f64>, Array1<f64>, Array1<f64>)> {
    binary_matrix().prop_flat_map(|x| {
        let n = x.nrows();
        (
            Just(x),
            prop::collection::vec(any::<bool>(), n)
                .prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(0.0f64..3.0, n).prop_map(Array1::from),
        )
    })
}

fn problem(x: &Array2<f64>, y: &Array1<f64>) -> Problem<f64> {
    Problem::new(x.clone(), y.clone(), x.clone()).unwrap()
}

proptest! {
    #[test]
    fn balancing_is_nonnegative_and_scale_free((x, y, w) in instance(), scale in 0.01f64..100.0) {
        let pr = problem(&x, &y);
        prop_assume!(pr.has_balancing_features());
        prop_assume!(w.sum() > 0.0);
        let a = balancing_loss(&pr, w.view(), 1e-12).unwrap();
        let b = balancing_loss(&pr, (&w * scale).view(), 1e-12).unwrap();
        prop_assert!(a.total >= 0.0);
        prop_assert!(a.per_feature_loss.iter().all(|v| *v >= 0.0));
        // the floor only bites when an arm carries no weight at all
        let exact_arms = (0..x.ncols()).all(|j| {
            let t: f64 = (0..x.nrows()).filter(|&i| x[[i, j]] == 1.0).map(|i| w[i]).sum();
            let c: f64 = w.sum() - t;
            a.skipped[j] || (t > 1e-6 && c > 1e-6)
        });
        if exact_arms {
            prop_assert!((a.total - b.total).abs() <= 1e-10 * a.total.max(1e-300));
        }
    }

    #[test]
    fn degenerate_columns_are_flagged((x, y, w) in instance()) {
        let pr = problem(&x, &y);
        prop_assume!(pr.has_balancing_features());
        let r = balancing_loss(&pr, w.view(), 1e-12).unwrap();
        for j in 0..x.ncols() {
            let ones = x.column(j).sum();
            let degenerate = ones == 0.0 || ones == x.nrows() as f64;
            prop_assert_eq!(r.skipped[j], degenerate);
            if degenerate {
                prop_assert_eq!(r.per_feature_loss[j], 0.0);
            }
        }
    }

    #[test]
    fn soft_threshold_is_a_shrinkage(v in -1e3f64..1e3, t in 0.0f64..10.0) {
        let s = soft_threshold(v, t);
        prop_assert!(s.abs() <= v.abs());
        prop_assert!(s == 0.0 || s.signum() == v.signum());
        prop_assert!((v - s).abs() <= t + 1e-12);
    }

    #[test]
    fn link_functions_are_well_behaved(z in -800.0f64..800.0) {
        let s = sigmoid(z);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((sigmoid(-z) - (1.0 - s)).abs() < 1e-12);
        let sp = softplus(z);
        prop_assert!(sp.is_finite());
        prop_assert!(sp >= z.max(0.0));
        prop_assert!(sp - z.max(0.0) <= std::f64::consts::LN_2 + 1e-12);
    }

    #[test]
    fn binarize_output_is_binary(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let n = v.len();
        let m = Array2::from_shape_vec((n, 1), v.clone()).unwrap();
        let b = binarize(m.view()).unwrap();
        prop_assert!(b.iter().all(|&e| e <= 1));
        let all_binary = v.iter().all(|&e| e == 0.0 || e == 1.0);
        for (e, &raw) in b.iter().zip(&v) {
            let expect = if all_binary { raw as u8 } else { u8::from(raw >= 0.0) };
            prop_assert_eq!(*e, expect);
        }
    }

    #[test]
    fn model_text_round_trips(beta in prop::collection::vec(-1e6f64..1e6, 1..12), intercept: bool) {
        let names = (0..beta.len()).map(|i| format!("f {i}")).collect();
        let m = SavedModel {
            feature_names: names,
            intercept,
            beta: Array1::from(beta),
            hyper: Hyperparams::default(),
            solver: SolverConfig::default(),
            converged: false,
            iterations_used: 3,
        };
        let back = SavedModel::from_text(&m.to_text()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn sig6_keeps_six_digits(x in -1e9f64..1e9) {
        prop_assume!(x != 0.0);
        let parsed: f64 = sig6(x).parse().unwrap();
        prop_assert!(((parsed - x) / x).abs() <= 5e-6);
    }

    #[test]
    fn grid_steps_are_ordered(a in 1u32..40, len in 1u32..30) {
        let start = f64::from(a) / 100.0;
        let stop = f64::from(a + len) / 100.0;
        let g = parse_grid(&format!("{start}:{stop}:0.01")).unwrap();
        prop_assert_eq!(g.len() as u32, len + 1);
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn inner_passes_never_increase((x, y, w) in instance(), l1 in 0.0f64..1.0, l4 in 0.0f64..0.1) {
        let pr = problem(&x, &y);
        prop_assume!(pr.has_balancing_features());
        let hyper = Hyperparams { lambda1: l1, lambda4: l4, ..Hyperparams::default() };
        let cfg = SolverConfig { inner_beta_iters: 20, inner_omega_iters: 20, ..SolverConfig::default() };
        let beta = Array1::zeros(x.ncols());
        let b = update_beta(&pr, beta.view(), w.view(), &hyper, &cfg).unwrap();
        prop_assert!(b.values.windows(2).all(|v| v[1] <= v[0] + 1e-10));
        let omega = w.mapv(f64::sqrt) / (x.nrows() as f64).sqrt();
        let o = update_omega(&pr, b.beta.view(), omega.view(), &hyper, &cfg).unwrap();
        prop_assert!(o.values.windows(2).all(|v| v[1] <= v[0] + 1e-10));
    }
}
