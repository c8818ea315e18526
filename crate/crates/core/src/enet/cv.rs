use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::descent::Solver;
use super::path::check_factors;
use super::{center, lambda_path, standardize, CdOptions, EnetConfig, EnetError, Penalty};
use crate::scalar::Scalar;

const FOLD_ATTEMPTS: usize = 10;

/// Cross-validated misclassification rate along one alpha's lambda path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve<F> {
    pub alpha: F,
    pub lambdas: Vec<F>,
    pub errors: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome<F> {
    pub lambda: F,
    pub alpha: F,
    pub error: F,
    pub folds: usize,
    /// seed that produced the accepted fold split
    pub fold_seed: u64,
    pub surface: Vec<CvCurve<F>>,
}

/// 10 folds with at least 100 runs, otherwise 5, unless configured.
pub fn fold_count(m: usize, config: &EnetConfig) -> usize {
    config.folds.unwrap_or(if m >= 100 { 10 } else { 5 })
}

/// Deals each class, shuffled, round-robin into folds, carrying the
/// position over between classes.
fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fail: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut pass: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    fail.shuffle(&mut rng);
    pass.shuffle(&mut rng);
    let mut assignment = vec![0; labels.len()];
    for (pos, &i) in fail.iter().chain(pass.iter()).enumerate() {
        assignment[i] = pos % folds;
    }
    assignment
}

fn folds_usable(labels: &[bool], assignment: &[usize], folds: usize) -> bool {
    (0..folds).all(|f| {
        let mut test = 0;
        let (mut fail, mut pass) = (0, 0);
        for (i, &a) in assignment.iter().enumerate() {
            if a == f {
                test += 1;
            } else if labels[i] {
                fail += 1;
            } else {
                pass += 1;
            }
        }
        test > 0 && fail > 0 && pass > 0
    })
}

pub(crate) fn make_folds(labels: &[bool], folds: usize, seed: u64) -> Result<(Vec<usize>, u64), EnetError> {
    if labels.len() < folds {
        return Err(EnetError::TooFewRunsForFolds {
            runs: labels.len(),
            folds,
        });
    }
    for attempt in 0..FOLD_ATTEMPTS as u64 {
        let s = seed.wrapping_add(attempt);
        let assignment = stratified_folds(labels, folds, s);
        if folds_usable(labels, &assignment, folds) {
            return Ok((assignment, s));
        }
    }
    Err(EnetError::SingleClassFold {
        attempts: FOLD_ATTEMPTS,
    })
}

/// Lambda path per alpha on the full data; all-zero factors or constant
/// predicates are reported as errors, a zero `lambda_max` yields `[0]`.
pub(crate) fn alpha_paths<F: Scalar>(
    x: &Array2<F>,
    y: &[F],
    factors: &[F],
    config: &EnetConfig,
) -> Result<Vec<(F, Vec<F>)>, EnetError> {
    let std = standardize(x.view());
    check_factors(&std, factors)?;
    let (_, yc) = center(y);
    config
        .alpha_grid
        .iter()
        .map(|&a| {
            let alpha = F::of(a);
            let path = lambda_path(
                &std,
                &yc,
                alpha,
                factors,
                config.n_lambda,
                F::of(config.lambda_min_ratio),
            )?;
            Ok((alpha, path))
        })
        .collect()
}

/// Selects `(lambda, alpha)` by stratified k-fold cross-validation.
///
/// Every fold refits the whole grid with training-fold standardization and
/// warm starts along each path. The pair with the lowest mean error wins;
/// ties go to the larger lambda, then the smaller alpha.
pub fn cross_validate<F: Scalar>(
    x: &Array2<F>,
    labels: &[bool],
    factors: &[F],
    config: &EnetConfig,
) -> Result<CvOutcome<F>, EnetError> {
    config.validate()?;
    let m = x.nrows();
    if m < 2 {
        return Err(EnetError::TooFewRuns(m));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(EnetError::SingleClass);
    }
    let y: Vec<F> = labels.iter().map(|&l| if l { F::one() } else { F::zero() }).collect();
    let paths = alpha_paths(x, &y, factors, config)?;
    let folds = fold_count(m, config);
    let (assignment, fold_seed) = make_folds(labels, folds, config.seed)?;
    let opts = CdOptions {
        tol: F::of(config.tol),
        max_iter: config.max_iter,
    };

    let mut sums: Vec<Vec<F>> = paths.iter().map(|(_, p)| vec![F::zero(); p.len()]).collect();
    for f in 0..folds {
        let train: Vec<usize> = (0..m).filter(|&i| assignment[i] != f).collect();
        let test: Vec<usize> = (0..m).filter(|&i| assignment[i] == f).collect();
        let std = standardize(x.select(Axis(0), &train).view());
        let (y_mean, yc) = center(&train.iter().map(|&i| y[i]).collect::<Vec<_>>());
        let test_x = x.select(Axis(0), &test);
        let test_fail: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
        let threshold = F::of(0.5);

        let gram = Solver::gram_for(&std);
        for ((alpha, path), sum) in paths.iter().zip(sums.iter_mut()) {
            let mut solver = match &gram {
                Some(g) => Solver::with_shared_gram(&std, &yc, g),
                None => Solver::new(&std, &yc),
            };
            for (k, &lambda) in path.iter().enumerate() {
                let pen = Penalty {
                    lambda,
                    alpha: *alpha,
                    factors,
                };
                solver.solve(&pen, &opts);
                let nz: Vec<(usize, F)> = solver
                    .beta()
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| **b != F::zero())
                    .map(|(j, &b)| (j, b))
                    .collect();
                let mut wrong = 0usize;
                for (row, &fail) in test_x.rows().into_iter().zip(&test_fail) {
                    let mut pred = y_mean;
                    for &(j, b) in &nz {
                        pred += b * std.transform_value(j, row[j]);
                    }
                    if (pred >= threshold) != fail {
                        wrong += 1;
                    }
                }
                sum[k] += F::of_usize(wrong) / F::of_usize(test.len());
            }
        }
    }

    let kf = F::of_usize(folds);
    let surface: Vec<CvCurve<F>> = paths
        .into_iter()
        .zip(sums)
        .map(|((alpha, lambdas), s)| CvCurve {
            alpha,
            lambdas,
            errors: s.into_iter().map(|e| e / kf).collect(),
        })
        .collect();

    let eps = F::of(1e-12);
    let mut best: Option<(F, F, F)> = None;
    for curve in &surface {
        for (&lambda, &err) in curve.lambdas.iter().zip(&curve.errors) {
            let better = match best {
                None => true,
                Some((be, bl, ba)) => {
                    err < be - eps || ((err - be).abs() <= eps && (lambda > bl || (lambda == bl && curve.alpha < ba)))
                }
            };
            if better {
                best = Some((err, lambda, curve.alpha));
            }
        }
    }
    let (error, lambda, alpha) = best.expect("alpha grid and paths are non-empty");
    Ok(CvOutcome {
        lambda,
        alpha,
        error,
        folds,
        fold_seed,
        surface,
    })
}
