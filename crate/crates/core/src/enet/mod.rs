//! Elastic net with per-coefficient penalty factors.
//!
//! Minimizes, over standardized predicates and a centered 0/1 response,
//!
//! ```text
//! (1/2m) |y - X b|^2 + lambda * sum_j v_j [ (1 - alpha) b_j^2 / 2 + alpha |b_j| ]
//! ```
//!
//! by cyclic coordinate descent along a warm-started, log-spaced lambda path.
//! `(lambda, alpha)` is chosen by stratified k-fold cross-validation of the
//! misclassification rate of the rule `b0 + x.b >= 0.5 => FAIL`.

mod cv;
mod descent;
mod fit;
mod path;
mod standardize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cv::{cross_validate, fold_count, CvCurve, CvOutcome};
pub use descent::{coordinate_descent, kkt_violation, objective, soft_threshold, CdOptions, CdOutput, Penalty};
pub use fit::{fit, fit_at, Diagnostics, FitResult, Standardization};
pub use path::{lambda_max, lambda_path, RIDGE_ALPHA_FLOOR};
pub use standardize::{center, standardize, Standardized};

#[derive(Debug, Error, PartialEq)]
pub enum EnetError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("every penalty factor is zero")]
    AllPenaltiesZero,
    #[error("no predicate varies across runs")]
    NoVariablePredicates,
    #[error("{runs} runs cannot be split into {folds} folds")]
    TooFewRunsForFolds { runs: usize, folds: usize },
    #[error("could not build folds with both classes in every training split after {attempts} attempts")]
    SingleClassFold { attempts: usize },
    #[error("both PASS and FAIL runs are required")]
    SingleClass,
    #[error("expected {expected} penalty factors, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("need at least 2 runs, got {0}")]
    TooFewRuns(usize),
}

/// The mixing values swept by cross-validation: 0, 0.001, then 0.05 to 0.95
/// in steps of 0.05.
pub fn default_alpha_grid() -> Vec<f64> {
    let mut grid = vec![0.0, 0.001];
    grid.extend((1..=19).map(|k| k as f64 * 0.05));
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnetConfig {
    pub alpha_grid: Vec<f64>,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// stop when a full sweep moves no coefficient by more than this
    pub tol: f64,
    /// maximum coordinate sweeps per fit
    pub max_iter: usize,
    /// 5 or 10; `None` picks 10 when there are at least 100 runs, else 5
    pub folds: Option<usize>,
    pub seed: u64,
}

impl Default for EnetConfig {
    fn default() -> Self {
        EnetConfig {
            alpha_grid: default_alpha_grid(),
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            tol: 1e-7,
            max_iter: 100_000,
            folds: None,
            seed: 0,
        }
    }
}

impl EnetConfig {
    pub fn validate(&self) -> Result<(), EnetError> {
        let bad = |m: String| Err(EnetError::InvalidConfig(m));
        if self.alpha_grid.is_empty() {
            return bad("alpha_grid is empty".into());
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return bad(format!("alpha {a} outside [0, 1]"));
        }
        if self.n_lambda == 0 {
            return bad("n_lambda must be at least 1".into());
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio <= 1.0) {
            return bad(format!("lambda_min_ratio {} outside (0, 1]", self.lambda_min_ratio));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol {} must be positive", self.tol));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if let Some(f) = self.folds {
            if f != 5 && f != 10 {
                return bad(format!("folds must be 5 or 10, got {f}"));
            }
        }
        Ok(())
    }
}
