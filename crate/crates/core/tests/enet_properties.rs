use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use faultloc::enet::{
    self, center, coordinate_descent, kkt_violation, lambda_max, lambda_path, objective, standardize, CdOptions,
    EnetConfig, Penalty, Standardized,
};
use faultloc::model::{validate_dataset, CoverageMatrix, Dataset, Outcome, OutcomeVector};

fn binary_instance(seed: u64, m: usize, n: usize) -> (Standardized<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Array2::from_shape_fn((m, n), |_| f64::from(rng.gen_bool(0.4) as u8));
    let y: Vec<f64> = (0..m)
        .map(|i| f64::from((raw[[i, 0]] == 1.0 && !rng.gen_bool(0.1)) as u8))
        .collect();
    let (_, yc) = center(&y);
    (standardize(raw.view()), yc)
}

fn dataset(seed: u64, m: usize, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<u8>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_bool(0.4) as u8).collect())
        .collect();
    let mut labels: Vec<Outcome> = rows
        .iter()
        .map(|r| {
            if r[1] == 1 && !rng.gen_bool(0.1) {
                Outcome::Fail
            } else {
                Outcome::Pass
            }
        })
        .collect();
    labels[0] = Outcome::Fail;
    labels[1] = Outcome::Pass;
    let runs: Vec<String> = (0..m).map(|i| format!("r{i}")).collect();
    let preds: Vec<String> = (0..n).map(|j| format!("p{j}")).collect();
    let matrix = CoverageMatrix::from_rows(runs.clone(), preds, &rows).unwrap();
    validate_dataset(matrix, OutcomeVector::new(runs, labels).unwrap()).unwrap()
}

#[test]
fn optimal_objective_grows_with_lambda() {
    let (x, y) = binary_instance(1, 60, 25);
    let v = vec![1.0; 25];
    let opts = CdOptions::default();
    for alpha in [0.0, 0.3, 1.0] {
        let path = lambda_path(&x, &y, alpha, &v, 30, 1e-3).unwrap();
        let mut warm = vec![0.0; 25];
        let mut prev = f64::INFINITY;
        for &lambda in &path {
            let pen = Penalty {
                lambda,
                alpha,
                factors: &v,
            };
            let out = coordinate_descent(&x, &y, &pen, &warm, &opts);
            let f = objective(&x, &y, &out.beta, &pen);
            assert!(f <= prev + 1e-10, "alpha {alpha}: {f} after {prev}");
            prev = f;
            warm = out.beta;
        }
    }
}

#[test]
fn warm_and_cold_starts_agree() {
    let (x, y) = binary_instance(2, 50, 30);
    let v: Vec<f64> = (0..30).map(|j| 0.5 + (j % 3) as f64 * 0.25).collect();
    let opts = CdOptions::default();
    let path = lambda_path(&x, &y, 0.5, &v, 20, 1e-2).unwrap();
    let mut warm = vec![0.0; 30];
    for &lambda in &path {
        let pen = Penalty {
            lambda,
            alpha: 0.5,
            factors: &v,
        };
        let hot = coordinate_descent(&x, &y, &pen, &warm, &opts);
        let cold = coordinate_descent(&x, &y, &pen, &vec![0.0; 30], &opts);
        for (a, b) in hot.beta.iter().zip(&cold.beta) {
            assert!((a - b).abs() <= 1e-6, "lambda {lambda}: {a} vs {b}");
        }
        warm = hot.beta;
    }
}

#[test]
fn first_path_point_is_the_empty_model() {
    let (x, y) = binary_instance(3, 40, 12);
    let v = vec![1.0; 12];
    for alpha in [0.2, 1.0] {
        let top = lambda_max(&x, &y, alpha, &v).unwrap();
        let pen = Penalty {
            lambda: top,
            alpha,
            factors: &v,
        };
        let out = coordinate_descent(&x, &y, &pen, &[0.0; 12], &CdOptions::default());
        assert!(out.beta.iter().all(|&b| b == 0.0));
    }
}

#[test]
fn wide_problem_converges_with_small_kkt_residual() {
    let (x, y) = binary_instance(4, 25, 400);
    let v = vec![1.0; 400];
    for alpha in [0.0f64, 0.05, 0.9] {
        let lambda = 0.01 * lambda_max(&x, &y, alpha.max(1e-3), &v).unwrap();
        let pen = Penalty {
            lambda,
            alpha,
            factors: &v,
        };
        let out = coordinate_descent(&x, &y, &pen, &[0.0; 400], &CdOptions::default());
        assert!(out.converged);
        assert!(kkt_violation(&x, &y, &out.beta, &pen) <= 1e-6);
    }
}

#[test]
fn single_precision_fit_tracks_double_precision() {
    let ds = dataset(5, 40, 8);
    let config = EnetConfig {
        alpha_grid: vec![0.5],
        n_lambda: 20,
        tol: 1e-5,
        ..EnetConfig::default()
    };
    let wide = enet::fit_at::<f64>(&ds, &[1.0; 8], 0.02, 0.5, &config).unwrap();
    let narrow = enet::fit_at::<f32>(&ds, &[1.0; 8], 0.02, 0.5, &config).unwrap();
    for (a, b) in wide.coefficients.iter().zip(&narrow.coefficients) {
        assert!((a - f64::from(*b)).abs() <= 1e-3, "{a} vs {b}");
    }
}

#[test]
fn cross_validated_fit_is_seed_deterministic() {
    let ds = dataset(6, 60, 15);
    let config = EnetConfig {
        alpha_grid: vec![0.2, 0.8],
        n_lambda: 15,
        seed: 9,
        ..EnetConfig::default()
    };
    let a = enet::fit::<f64>(&ds, &[1.0; 15], &config).unwrap();
    let b = enet::fit::<f64>(&ds, &[1.0; 15], &config).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert!(a.coefficients[1] > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solutions_satisfy_the_optimality_conditions(
        seed in 0u64..10_000,
        n in 1usize..12,
        alpha in prop::sample::select(vec![0.0f64, 0.25, 0.5, 1.0]),
        scale in 0.01f64..1.0,
    ) {
        let (x, y) = binary_instance(seed, 30, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let top = lambda_max(&x, &y, alpha.max(1e-3), &v).unwrap();
        let pen = Penalty { lambda: scale * top, alpha, factors: &v };
        let out = coordinate_descent(&x, &y, &pen, &vec![0.0; n], &CdOptions::default());
        prop_assert!(out.converged);
        prop_assert!(kkt_violation(&x, &y, &out.beta, &pen) <= 1e-6);
    }

    #[test]
    fn scaling_all_factors_rescales_lambda_max(seed in 0u64..10_000, c in 0.1f64..10.0) {
        let (x, y) = binary_instance(seed, 30, 6);
        prop_assume!(y.iter().any(|&v| v != 0.0));
        let Ok(base) = lambda_max(&x, &y, 1.0, &[1.0; 6]) else {
            return Ok(());
        };
        let scaled = lambda_max(&x, &y, 1.0, &[c; 6]).unwrap();
        prop_assert!((scaled * c - base).abs() <= 1e-9 * base.max(1.0));
    }
}
