use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::descent::Solver;
use super::path::check_factors;
use super::{
    center, cross_validate, kkt_violation, lambda_path, standardize, CdOptions, CvOutcome, EnetConfig, EnetError,
    Penalty, Standardized,
};
use crate::linalg::cholesky_solve;
use crate::model::{read_to_string, write_string, DataError, Dataset};
use crate::scalar::{dot, Scalar};

/// Centering and scaling used for the fit, with the coefficients in
/// standardized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization<F> {
    pub means: Vec<F>,
    pub scales: Vec<F>,
    pub active: Vec<bool>,
    pub y_mean: F,
    pub beta: Vec<F>,
}

impl<F: Scalar> Standardization<F> {
    pub fn predict(&self, row: &[F]) -> F {
        let mut acc = self.y_mean;
        for (j, &r) in row.iter().enumerate() {
            if self.active[j] && self.beta[j] != F::zero() {
                acc += self.beta[j] * (r - self.means[j]) / self.scales[j];
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<F> {
    pub sweeps: usize,
    pub converged: bool,
    /// largest optimality-condition violation in standardized coordinates
    pub kkt_violation: F,
    /// whether the exact solve on the nonzero set replaced the iterate
    pub polished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<F> {
    pub predicate_ids: Vec<String>,
    pub intercept: F,
    /// original (unstandardized) scale, one per predicate
    pub coefficients: Vec<F>,
    pub lambda: F,
    pub alpha: F,
    pub penalty_factors: Vec<F>,
    /// absent when `(lambda, alpha)` was given rather than cross-validated
    pub cv: Option<CvOutcome<F>>,
    /// `y - (intercept + X b)` per run, with FAIL as 1
    pub residuals: Vec<F>,
    pub diagnostics: Diagnostics<F>,
    pub standardization: Standardization<F>,
}

impl<F: Scalar> FitResult<F> {
    /// `intercept + x.b` for a raw coverage row.
    pub fn predict(&self, row: &[F]) -> F {
        self.intercept + dot(&self.coefficients, row)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        write_string(path.as_ref(), &self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::from_json(&read_to_string(path.as_ref())?)
    }
}

/// Cross-validates `(lambda, alpha)` and refits on all runs.
pub fn fit<F: Scalar>(dataset: &Dataset, factors: &[F], config: &EnetConfig) -> Result<FitResult<F>, EnetError> {
    let x: Array2<F> = dataset.matrix().to_float();
    let labels: Vec<bool> = dataset.outcomes().labels().iter().map(|o| o.is_fail()).collect();
    let cv = cross_validate(&x, &labels, factors, config)?;
    let mut result = solve_full(dataset, &x, factors, cv.lambda, cv.alpha, config)?;
    result.cv = Some(cv);
    Ok(result)
}

/// Fits at a given `(lambda, alpha)` without cross-validation.
pub fn fit_at<F: Scalar>(
    dataset: &Dataset,
    factors: &[F],
    lambda: F,
    alpha: F,
    config: &EnetConfig,
) -> Result<FitResult<F>, EnetError> {
    config.validate()?;
    let x: Array2<F> = dataset.matrix().to_float();
    solve_full(dataset, &x, factors, lambda, alpha, config)
}

fn solve_full<F: Scalar>(
    dataset: &Dataset,
    x: &Array2<F>,
    factors: &[F],
    lambda: F,
    alpha: F,
    config: &EnetConfig,
) -> Result<FitResult<F>, EnetError> {
    let m = x.nrows();
    if m < 2 {
        return Err(EnetError::TooFewRuns(m));
    }
    let y: Vec<F> = dataset.response();
    let std = standardize(x.view());
    check_factors(&std, factors)?;
    let (y_mean, yc) = center(&y);
    let opts = CdOptions {
        tol: F::of(config.tol),
        max_iter: config.max_iter,
    };
    let pen = Penalty { lambda, alpha, factors };

    // warm start down the path to the requested lambda
    let warm: Vec<F> = match lambda_path(
        &std,
        &yc,
        alpha,
        factors,
        config.n_lambda,
        F::of(config.lambda_min_ratio),
    ) {
        Ok(path) => path.into_iter().filter(|&l| l > lambda).collect(),
        Err(EnetError::AllPenaltiesZero) | Err(EnetError::NoVariablePredicates) => Vec::new(),
        Err(e) => return Err(e),
    };
    let mut solver = Solver::new(&std, &yc);
    let mut sweeps = 0;
    for l in warm {
        sweeps += solver.solve(&Penalty { lambda: l, ..pen }, &opts).0;
    }
    let (s, converged, _) = solver.solve(&pen, &opts);
    sweeps += s;
    let mut beta = solver.beta().to_vec();
    let mut kkt = kkt_violation(&std, &yc, &beta, &pen);
    let mut polished = false;
    if let Some(b) = polish(&std, &yc, &beta, &pen) {
        let k = kkt_violation(&std, &yc, &b, &pen);
        if k <= kkt {
            beta = b;
            kkt = k;
            polished = true;
        }
    }

    let n = beta.len();
    let coefficients: Vec<F> = (0..n)
        .map(|j| {
            if std.active[j] {
                beta[j] / std.scales[j]
            } else {
                F::zero()
            }
        })
        .collect();
    let intercept = y_mean - dot(&coefficients, &std.means);
    let mut result = FitResult {
        predicate_ids: dataset.matrix().predicate_ids().to_vec(),
        intercept,
        coefficients,
        lambda,
        alpha,
        penalty_factors: factors.to_vec(),
        cv: None,
        residuals: Vec::with_capacity(m),
        diagnostics: Diagnostics {
            sweeps,
            converged,
            kkt_violation: kkt,
            polished,
        },
        standardization: Standardization {
            means: std.means.clone(),
            scales: std.scales.clone(),
            active: std.active.clone(),
            y_mean,
            beta,
        },
    };
    result.residuals = x
        .rows()
        .into_iter()
        .zip(&y)
        .map(|(row, &yi)| yi - result.predict(&row.to_vec()))
        .collect();
    Ok(result)
}

/// Solves the optimality conditions exactly on the nonzero set with its
/// signs held fixed:
/// `(X_A'X_A/m + lambda (1 - alpha) V_A) b = X_A'y/m - lambda alpha V_A s`.
/// Returns `None` when the system is singular or a sign flips.
fn polish<F: Scalar>(x: &Standardized<F>, y: &[F], beta: &[F], pen: &Penalty<'_, F>) -> Option<Vec<F>> {
    const MAX_SET: usize = 2000;
    let set: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != F::zero()).collect();
    if set.is_empty() || set.len() > MAX_SET || (set.len() > x.n_runs() && pen.alpha == F::one()) {
        return None;
    }
    let inv_m = F::one() / F::of_usize(y.len());
    let k = set.len();
    let mut a = Array2::zeros((k, k));
    let mut rhs = Vec::with_capacity(k);
    for (p, &j) in set.iter().enumerate() {
        for (q, &l) in set.iter().enumerate().skip(p) {
            let g = dot(x.col(j), x.col(l)) * inv_m;
            a[[p, q]] = g;
            a[[q, p]] = g;
        }
        let v = pen.factors[j];
        a[[p, p]] += pen.lambda * (F::one() - pen.alpha) * v;
        rhs.push(dot(x.col(j), y) * inv_m - pen.lambda * pen.alpha * v * beta[j].signum());
    }
    let sol = cholesky_solve(&a, &rhs)?;
    let mut out = vec![F::zero(); beta.len()];
    for (&j, &b) in set.iter().zip(&sol) {
        if !b.is_finite() || b == F::zero() || b.signum() != beta[j].signum() {
            return None;
        }
        out[j] = b;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_dataset, CoverageMatrix, Outcome, OutcomeVector};

    pub(crate) fn dataset(rows: &[Vec<u8>], fail: &[bool]) -> Dataset {
        let runs: Vec<String> = (0..rows.len()).map(|i| format!("r{i}")).collect();
        let preds: Vec<String> = (0..rows[0].len()).map(|j| format!("p{j}")).collect();
        let matrix = CoverageMatrix::from_rows(runs.clone(), preds, rows).unwrap();
        let labels = fail
            .iter()
            .map(|&f| if f { Outcome::Fail } else { Outcome::Pass })
            .collect();
        validate_dataset(matrix, OutcomeVector::new(runs, labels).unwrap()).unwrap()
    }

    #[test]
    fn single_predicate_closed_form() {
        let d = dataset(&[vec![0], vec![0], vec![1], vec![1]], &[false, false, true, true]);
        let cfg = EnetConfig::default();
        let f = fit_at(&d, &[1.0f64], 0.1, 1.0, &cfg).unwrap();
        assert!((f.standardization.beta[0] - 0.4).abs() < 1e-12);
        // back on the 0/1 scale: slope 0.8, intercept 0.1
        assert!((f.coefficients[0] - 0.8).abs() < 1e-12);
        assert!((f.intercept - 0.1).abs() < 1e-12);
        let f = fit_at(&d, &[1.0], 0.6, 1.0, &cfg).unwrap();
        assert_eq!(f.coefficients[0], 0.0);
        assert_eq!(f.intercept, 0.5);
    }

    #[test]
    fn residuals_and_prediction_agree() {
        let rows = vec![
            vec![1, 0, 1],
            vec![0, 1, 1],
            vec![1, 1, 0],
            vec![0, 0, 1],
            vec![1, 1, 1],
            vec![0, 0, 0],
        ];
        let d = dataset(&rows, &[true, false, true, false, true, false]);
        let f = fit_at(&d, &[1.0, 0.5, 1.0], 0.01, 0.5, &EnetConfig::default()).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let raw: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            let y = if i % 2 == 0 { 1.0 } else { 0.0 };
            assert!((f.residuals[i] - (y - f.predict(&raw))).abs() < 1e-15);
            assert!((f.predict(&raw) - f.standardization.predict(&raw)).abs() < 1e-10);
        }
        assert!(f.diagnostics.kkt_violation <= 1e-6);
        let back = FitResult::<f64>::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }
}
