use super::{EnetError, Standardized};
use crate::scalar::{dot, Scalar};

/// Mixing value used in place of `alpha = 0` when computing `lambda_max`,
/// where the pure ridge limit would be infinite.
pub const RIDGE_ALPHA_FLOOR: f64 = 0.001;

/// Smallest `lambda` at which every penalized coefficient is zero:
/// `max_{j: v_j > 0} |x_j.y / m| / (alpha v_j)`.
///
/// The value is nudged up by a few ulps so that rounding in the coordinate
/// update cannot leave a coefficient at ±1 ulp.
pub fn lambda_max<F: Scalar>(x: &Standardized<F>, y_centered: &[F], alpha: F, factors: &[F]) -> Result<F, EnetError> {
    check_factors(x, factors)?;
    let alpha = if alpha == F::zero() {
        F::of(RIDGE_ALPHA_FLOOR)
    } else {
        alpha
    };
    let inv_m = F::one() / F::of_usize(y_centered.len());
    let mut any_active = false;
    let mut any_penalized = false;
    let mut best = F::zero();
    for (j, &v) in factors.iter().enumerate() {
        if !x.active[j] {
            continue;
        }
        any_active = true;
        if v > F::zero() {
            any_penalized = true;
            let z = (dot(x.col(j), y_centered) * inv_m).abs();
            best = best.max(z / (alpha * v));
        }
    }
    if !any_active {
        return Err(EnetError::NoVariablePredicates);
    }
    if !any_penalized {
        return Err(EnetError::AllPenaltiesZero);
    }
    Ok(best * (F::one() + F::of(8.0) * F::epsilon()))
}

/// `n_lambda` values from `lambda_max` down to `lambda_max * min_ratio`,
/// evenly spaced in log scale. A zero `lambda_max` gives the single path `[0]`.
pub fn lambda_path<F: Scalar>(
    x: &Standardized<F>,
    y_centered: &[F],
    alpha: F,
    factors: &[F],
    n_lambda: usize,
    min_ratio: F,
) -> Result<Vec<F>, EnetError> {
    let top = lambda_max(x, y_centered, alpha, factors)?;
    if top == F::zero() || n_lambda <= 1 {
        return Ok(vec![top]);
    }
    let step = min_ratio.ln() / F::of_usize(n_lambda - 1);
    Ok((0..n_lambda)
        .map(|k| {
            if k == 0 {
                top
            } else {
                top * (step * F::of_usize(k)).exp()
            }
        })
        .collect())
}

pub(crate) fn check_factors<F: Scalar>(x: &Standardized<F>, factors: &[F]) -> Result<(), EnetError> {
    if factors.len() != x.n_predicates() {
        return Err(EnetError::LengthMismatch {
            expected: x.n_predicates(),
            found: factors.len(),
        });
    }
    Ok(())
}
