use std::borrow::Cow;

use super::Standardized;
use crate::linalg::cholesky_solve_in_place;
use crate::scalar::{axpy, dot, Scalar};

/// `sign(z) * max(|z| - gamma, 0)`
pub fn soft_threshold<F: Scalar>(z: F, gamma: F) -> F {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        F::zero()
    }
}

/// Penalty strength, mixing and per-coefficient factors for one fit.
#[derive(Debug, Clone, Copy)]
pub struct Penalty<'a, F> {
    pub lambda: F,
    pub alpha: F,
    pub factors: &'a [F],
}

#[derive(Debug, Clone, Copy)]
pub struct CdOptions<F> {
    pub tol: F,
    pub max_iter: usize,
}

impl<F: Scalar> Default for CdOptions<F> {
    fn default() -> Self {
        CdOptions {
            tol: F::of(1e-7),
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdOutput<F> {
    pub beta: Vec<F>,
    pub sweeps: usize,
    /// false when `max_iter` sweeps ran out first; `beta` is still the last iterate
    pub converged: bool,
    /// largest coefficient change in the final sweep
    pub max_delta: F,
}

/// Above this many predicates the solver tracks the residual vector instead
/// of caching the Gram matrix, which would need O(n^2) memory.
const GRAM_LIMIT: usize = 2048;

/// The Gram matrix is also skipped when predicates outnumber runs by more
/// than this factor, since a moving coefficient then costs far more through
/// a Gram column than through the residual.
const GRAM_RATIO: usize = 4;

/// Largest nonzero set handed to the sign-fixed Newton step.
const NEWTON_LIMIT: usize = 600;

/// Nonzero-set sweeps before the first Newton attempt, and between later ones.
const NEWTON_AFTER: usize = 5;
const NEWTON_EVERY: usize = 4;

/// `X'X/m` of a standardized matrix, zero in the rows and columns of
/// inactive predicates.
#[derive(Debug, Clone)]
pub(crate) struct Gram<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Scalar> Gram<F> {
    pub(crate) fn new(x: &Standardized<F>) -> Self {
        let n = x.n_predicates();
        let inv_m = F::one() / F::of_usize(x.n_runs());
        let mut data = vec![F::zero(); n * n];
        for j in (0..n).filter(|&j| x.active[j]) {
            for k in (j..n).filter(|&k| x.active[k]) {
                let g = dot(x.col(j), x.col(k)) * inv_m;
                data[j * n + k] = g;
                data[k * n + j] = g;
            }
        }
        Gram { n, data }
    }

    fn col(&self, j: usize) -> &[F] {
        &self.data[j * self.n..(j + 1) * self.n]
    }
}

/// Coordinate-descent state that can be re-solved along a lambda path.
///
/// With at most [`GRAM_LIMIT`] predicates, and not more than [`GRAM_RATIO`]
/// times as many predicates as runs, it keeps the gradient
/// `g = X'(y - Xb)/m` and updates it from columns of `X'X/m`, so a
/// coordinate that does not move costs O(1). Otherwise it keeps the
/// residual and recomputes each inner product.
pub(crate) struct Solver<'a, F: Scalar> {
    x: &'a Standardized<F>,
    inv_m: F,
    col_sq: Vec<F>,
    /// `X'y/m`
    xty: Vec<F>,
    beta: Vec<F>,
    mode: Mode<'a, F>,
}

enum Mode<'a, F: Scalar> {
    Gram { grad: Vec<F>, gram: Cow<'a, Gram<F>> },
    Residual { resid: Vec<F> },
}

impl<'a, F: Scalar> Solver<'a, F> {
    pub(crate) fn new(x: &'a Standardized<F>, y_centered: &[F]) -> Self {
        Self::with_gram(x, y_centered, Self::wants_gram(x))
    }

    fn wants_gram(x: &Standardized<F>) -> bool {
        let n = x.n_predicates();
        n <= GRAM_LIMIT && n <= GRAM_RATIO * x.n_runs()
    }

    fn with_gram(x: &'a Standardized<F>, y_centered: &[F], gram: bool) -> Self {
        let gram = gram.then(|| Cow::Owned(Gram::new(x)));
        Self::build(x, y_centered, gram)
    }

    /// Reuses a Gram matrix computed from the same `x`, e.g. across the
    /// alpha values of one cross-validation fold.
    pub(crate) fn with_shared_gram(x: &'a Standardized<F>, y_centered: &[F], gram: &'a Gram<F>) -> Self {
        Self::build(x, y_centered, Some(Cow::Borrowed(gram)))
    }

    /// Builds a Gram matrix when [`Solver::new`] would use one.
    pub(crate) fn gram_for(x: &Standardized<F>) -> Option<Gram<F>> {
        Self::wants_gram(x).then(|| Gram::new(x))
    }

    fn build(x: &'a Standardized<F>, y_centered: &[F], gram: Option<Cow<'a, Gram<F>>>) -> Self {
        let (m, n) = x.x.dim();
        debug_assert_eq!(y_centered.len(), m);
        let inv_m = F::one() / F::of_usize(m);
        let col_sq = (0..n)
            .map(|j| {
                if x.active[j] {
                    dot(x.col(j), x.col(j)) * inv_m
                } else {
                    F::zero()
                }
            })
            .collect();
        let xty: Vec<F> = (0..n)
            .map(|j| {
                if x.active[j] {
                    dot(x.col(j), y_centered) * inv_m
                } else {
                    F::zero()
                }
            })
            .collect();
        let mode = match gram {
            Some(gram) => Mode::Gram {
                grad: xty.clone(),
                gram,
            },
            None => Mode::Residual {
                resid: y_centered.to_vec(),
            },
        };
        Solver {
            x,
            inv_m,
            col_sq,
            xty,
            beta: vec![F::zero(); n],
            mode,
        }
    }

    pub(crate) fn beta(&self) -> &[F] {
        &self.beta
    }

    pub(crate) fn set_beta(&mut self, target: &[F]) {
        for (j, &t) in target.iter().enumerate() {
            let t = if self.x.active[j] { t } else { F::zero() };
            let old = self.beta[j];
            if t != old {
                self.shift(j, t - old);
                self.beta[j] = t;
            }
        }
    }

    fn shift(&mut self, j: usize, delta: F) {
        match &mut self.mode {
            Mode::Gram { grad, gram } => axpy(-delta, gram.col(j), grad),
            Mode::Residual { resid } => axpy(-delta, self.x.col(j), resid),
        }
    }

    fn update(&mut self, j: usize, pen: &Penalty<'_, F>) -> F {
        if !self.x.active[j] {
            return F::zero();
        }
        let old = self.beta[j];
        let g = match &self.mode {
            Mode::Gram { grad, .. } => grad[j],
            Mode::Residual { resid } => dot(self.x.col(j), resid) * self.inv_m,
        };
        let z = g + self.col_sq[j] * old;
        let v = pen.factors[j];
        let gamma = pen.lambda * pen.alpha * v;
        let denom = self.col_sq[j] + pen.lambda * (F::one() - pen.alpha) * v;
        let new = soft_threshold(z, gamma) / denom;
        if new != old {
            self.shift(j, new - old);
            self.beta[j] = new;
        }
        (new - old).abs()
    }

    fn sweep(&mut self, idx: impl Iterator<Item = usize>, pen: &Penalty<'_, F>) -> F {
        let mut max_delta = F::zero();
        for j in idx {
            max_delta = max_delta.max(self.update(j, pen));
        }
        max_delta
    }

    /// Moves toward the minimizer of the objective over the current nonzero
    /// set with every penalized sign held fixed.
    ///
    /// When the minimizer would flip a sign, the step stops where the first
    /// coefficient reaches zero, that coefficient leaves the set and the
    /// solve repeats. Along each step the objective cannot increase, so
    /// coordinate-descent progress is never undone. Returns whether `beta`
    /// changed.
    fn newton(&mut self, pen: &Penalty<'_, F>) -> bool {
        const ROUNDS: usize = 8;
        let gram = match &self.mode {
            Mode::Gram { gram, .. } => Some(gram.as_ref()),
            Mode::Residual { .. } => None,
        };
        let mut set: Vec<usize> = (0..self.beta.len()).filter(|&j| self.beta[j] != F::zero()).collect();
        if set.is_empty() {
            return false;
        }
        let ridge = pen.lambda * (F::one() - pen.alpha);
        let rhs_of = |j: usize| self.xty[j] - pen.lambda * pen.alpha * pen.factors[j] * self.beta[j].signum();
        let mut rhs: Vec<F> = set.iter().map(|&j| rhs_of(j)).collect();
        let mut cur: Vec<F> = set.iter().map(|&j| self.beta[j]).collect();
        let mut moved = false;
        for _ in 0..ROUNDS {
            let k = set.len();
            if k == 0 {
                break;
            }
            let diag: Vec<F> = set.iter().map(|&j| ridge * pen.factors[j]).collect();
            let Some(sol) = face_solve(self.x, gram, &set, &diag, &rhs) else {
                break;
            };
            // largest step in [0, 1] that keeps every fixed sign
            let mut step = F::one();
            let mut hit = None;
            for p in 0..k {
                let fixed = pen.alpha * pen.factors[set[p]] > F::zero();
                if fixed && (sol[p] == F::zero() || sol[p].signum() != cur[p].signum()) {
                    let t = cur[p] / (cur[p] - sol[p]);
                    if t < step {
                        step = t;
                        hit = Some(p);
                    }
                }
            }
            for p in 0..k {
                cur[p] = cur[p] + step * (sol[p] - cur[p]);
            }
            moved = true;
            match hit {
                None => break,
                Some(p) => {
                    cur[p] = F::zero();
                    let keep: Vec<usize> = (0..k).filter(|&q| cur[q] != F::zero()).collect();
                    set = keep.iter().map(|&q| set[q]).collect();
                    rhs = keep.iter().map(|&q| rhs[q]).collect();
                    cur = keep.iter().map(|&q| cur[q]).collect();
                }
            }
        }
        if !moved {
            return false;
        }
        let mut target = vec![F::zero(); self.beta.len()];
        for (&j, &b) in set.iter().zip(&cur) {
            target[j] = b;
        }
        self.set_beta(&target);
        true
    }

    /// Runs full sweeps, each followed by sweeps over the nonzero set until
    /// it settles, until a full sweep moves nothing by more than `tol`.
    ///
    /// When the nonzero-set sweeps are slow to settle, a sign-fixed Newton
    /// step on that set is tried; the stopping test is always a full
    /// cyclic sweep.
    pub(crate) fn solve(&mut self, pen: &Penalty<'_, F>, opts: &CdOptions<F>) -> (usize, bool, F) {
        debug_assert_eq!(pen.factors.len(), self.beta.len());
        let n = self.beta.len();
        let mut sweeps = 0;
        loop {
            let max_delta = self.sweep(0..n, pen);
            sweeps += 1;
            if max_delta <= opts.tol {
                return (sweeps, true, max_delta);
            }
            if sweeps >= opts.max_iter {
                return (sweeps, false, max_delta);
            }
            let nonzero: Vec<usize> = (0..n).filter(|&j| self.beta[j] != F::zero()).collect();
            let mut inner = 0usize;
            loop {
                let d = self.sweep(nonzero.iter().copied(), pen);
                sweeps += 1;
                inner += 1;
                if d <= opts.tol {
                    break;
                }
                if sweeps >= opts.max_iter {
                    return (sweeps, false, d);
                }
                if inner >= NEWTON_AFTER && (inner - NEWTON_AFTER).is_multiple_of(NEWTON_EVERY) {
                    self.newton(pen);
                }
            }
        }
    }
}

/// Solves `(X_S'X_S/m + diag(d)) b = rhs` over the predicates in `set`.
///
/// A set larger than the number of runs with a positive ridge term on every
/// member goes through the equivalent `m x m` system
/// `(m I + X_S D^-1 X_S') w = X_S D^-1 rhs`, `b = D^-1 (rhs - X_S' w)`;
/// otherwise the `k x k` system is factored directly, up to
/// [`NEWTON_LIMIT`] members.
fn face_solve<F: Scalar>(
    x: &Standardized<F>,
    gram: Option<&Gram<F>>,
    set: &[usize],
    diag: &[F],
    rhs: &[F],
) -> Option<Vec<F>> {
    let k = set.len();
    let m = x.n_runs();
    let sol = if k > m && diag.iter().all(|&d| d > F::zero()) {
        let u: Vec<F> = rhs.iter().zip(diag).map(|(&r, &d)| r / d).collect();
        let mut w = vec![F::zero(); m];
        let mut a = vec![F::zero(); m * m];
        for (p, &j) in set.iter().enumerate() {
            let col = x.col(j);
            for (i, &c) in col.iter().enumerate() {
                w[i] += u[p] * c;
                let ci = c / diag[p];
                if ci != F::zero() {
                    for (l, &cl) in col[..=i].iter().enumerate() {
                        a[i * m + l] += ci * cl;
                    }
                }
            }
        }
        let m_f = F::of_usize(m);
        for i in 0..m {
            a[i * m + i] += m_f;
        }
        if !cholesky_solve_in_place(&mut a, &mut w) {
            return None;
        }
        set.iter()
            .enumerate()
            .map(|(p, &j)| u[p] - dot(x.col(j), &w) / diag[p])
            .collect()
    } else if k <= NEWTON_LIMIT {
        let mut a = vec![F::zero(); k * k];
        let inv_m = F::one() / F::of_usize(m);
        for (p, &j) in set.iter().enumerate() {
            for (q, &l) in set.iter().enumerate().take(p + 1) {
                a[p * k + q] = match gram {
                    Some(g) => g.col(j)[l],
                    None => dot(x.col(j), x.col(l)) * inv_m,
                };
            }
            a[p * k + p] += diag[p];
        }
        let mut sol = rhs.to_vec();
        if !cholesky_solve_in_place(&mut a, &mut sol) {
            return None;
        }
        sol
    } else {
        return None;
    };
    sol.iter().all(|b| b.is_finite()).then_some(sol)
}

/// Cyclic coordinate descent for the penalized least-squares objective.
///
/// Each update is `b_j <- S(z_j, lambda alpha v_j) / (1 + lambda (1 - alpha) v_j)`
/// with `z_j = x_j.(r + x_j b_j) / m`. A full sweep over all predicates is
/// followed by sweeps over the current nonzero set until it settles; the fit
/// stops once a full sweep changes no coefficient by more than `tol`.
pub fn coordinate_descent<F: Scalar>(
    x: &Standardized<F>,
    y_centered: &[F],
    penalty: &Penalty<'_, F>,
    warm_start: &[F],
    opts: &CdOptions<F>,
) -> CdOutput<F> {
    debug_assert_eq!(warm_start.len(), x.n_predicates());
    let mut solver = Solver::new(x, y_centered);
    solver.set_beta(warm_start);
    let (sweeps, converged, max_delta) = solver.solve(penalty, opts);
    CdOutput {
        beta: solver.beta,
        sweeps,
        converged,
        max_delta,
    }
}

fn residual<F: Scalar>(x: &Standardized<F>, y: &[F], beta: &[F]) -> Vec<F> {
    let mut r = y.to_vec();
    for (j, &b) in beta.iter().enumerate() {
        if b != F::zero() && x.active[j] {
            axpy(-b, x.col(j), &mut r);
        }
    }
    r
}

/// `(1/2m)|y - X b|^2 + lambda sum_j v_j [(1 - alpha) b_j^2 / 2 + alpha |b_j|]`
pub fn objective<F: Scalar>(x: &Standardized<F>, y: &[F], beta: &[F], penalty: &Penalty<'_, F>) -> F {
    let r = residual(x, y, beta);
    let m = F::of_usize(y.len());
    let half = F::of(0.5);
    let loss = dot(&r, &r) / (m + m);
    let pen: F = beta
        .iter()
        .zip(penalty.factors)
        .map(|(&b, &v)| v * ((F::one() - penalty.alpha) * half * b * b + penalty.alpha * b.abs()))
        .sum();
    loss + penalty.lambda * pen
}

/// Largest violation of the optimality conditions over active predicates:
/// `|g_j| <= lambda alpha v_j` where `b_j = 0`, and
/// `g_j = lambda v_j (alpha sign(b_j) + (1 - alpha) b_j)` elsewhere, with
/// `g_j = x_j.r / m`.
pub fn kkt_violation<F: Scalar>(x: &Standardized<F>, y: &[F], beta: &[F], penalty: &Penalty<'_, F>) -> F {
    let r = residual(x, y, beta);
    let inv_m = F::one() / F::of_usize(y.len());
    let (lam, alpha) = (penalty.lambda, penalty.alpha);
    let mut worst = F::zero();
    for (j, &b) in beta.iter().enumerate() {
        if !x.active[j] {
            continue;
        }
        let g = dot(x.col(j), &r) * inv_m;
        let v = penalty.factors[j];
        let viol = if b == F::zero() {
            (g.abs() - lam * alpha * v).max(F::zero())
        } else {
            (g - lam * v * (alpha * b.signum() + (F::one() - alpha) * b)).abs()
        };
        worst = worst.max(viol);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::super::standardize;
    use super::*;
    use ndarray::arr2;

    fn one_column() -> (Standardized<f64>, Vec<f64>) {
        let x = standardize(arr2(&[[0.0], [0.0], [1.0], [1.0]]).view());
        (x, vec![-0.5, -0.5, 0.5, 0.5])
    }

    fn brute_1d(lambda: f64) -> f64 {
        // f(b) = (1/8) sum (y_i - x_i b)^2 + lambda |b| on a fine grid
        let xs = [-1.0, -1.0, 1.0, 1.0];
        let ys = [-0.5, -0.5, 0.5, 0.5];
        let f = |b: f64| xs.iter().zip(&ys).map(|(x, y)| (y - x * b).powi(2)).sum::<f64>() / 8.0 + lambda * b.abs();
        let mut best = (f(0.0), 0.0);
        for k in -200_000..=200_000 {
            let b = k as f64 * 1e-5;
            let v = f(b);
            if v < best.0 {
                best = (v, b);
            }
        }
        best.1
    }

    #[test]
    fn single_feature_lasso() {
        let (x, y) = one_column();
        let opts = CdOptions::default();
        let pen = Penalty {
            lambda: 0.1,
            alpha: 1.0,
            factors: &[1.0],
        };
        let out = coordinate_descent(&x, &y, &pen, &[0.0], &opts);
        assert!((out.beta[0] - 0.4).abs() < 1e-15);
        assert!((brute_1d(0.1) - 0.4).abs() < 1e-5);

        let pen = Penalty {
            lambda: 0.6,
            alpha: 1.0,
            factors: &[1.0],
        };
        let out = coordinate_descent(&x, &y, &pen, &[0.0], &opts);
        assert_eq!(out.beta[0], 0.0);
        assert_eq!(brute_1d(0.6), 0.0);
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(0.5, 0.1), 0.4);
        assert_eq!(soft_threshold(-0.5, 0.1), -0.4);
        assert_eq!(soft_threshold(0.05, 0.1), 0.0);
    }

    #[test]
    fn max_iter_reports_nonconvergence() {
        let x = standardize(arr2(&[[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).view());
        let y = vec![-0.6, 0.4, 0.4, -0.6, 0.4];
        let pen = Penalty {
            lambda: 0.0,
            alpha: 1.0,
            factors: &[1.0, 1.0],
        };
        let out = coordinate_descent(
            &x,
            &y,
            &pen,
            &[0.0, 0.0],
            &CdOptions {
                tol: 1e-15,
                max_iter: 1,
            },
        );
        assert!(!out.converged);
        assert_eq!(out.sweeps, 1);
    }

    #[test]
    fn gram_and_residual_modes_agree() {
        let x = standardize(
            arr2(&[
                [0.0f64, 0.0, 1.0],
                [1.0, 1.0, 1.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 1.0],
                [1.0, 1.0, 0.0],
                [0.0, 0.0, 0.0],
            ])
            .view(),
        );
        let y = vec![-0.5, 0.5, 0.5, -0.5, 0.5, -0.5];
        let v = [1.0, 0.7, 0.2];
        let pen = Penalty {
            lambda: 0.02,
            alpha: 0.4,
            factors: &v,
        };
        let opts = CdOptions {
            tol: 1e-12,
            max_iter: 100_000,
        };
        let mut a = Solver::with_gram(&x, &y, true);
        let mut b = Solver::with_gram(&x, &y, false);
        a.solve(&pen, &opts);
        b.solve(&pen, &opts);
        for (p, q) in a.beta().iter().zip(b.beta()) {
            assert!((p - q).abs() < 1e-10);
        }
        assert!(kkt_violation(&x, &y, a.beta(), &pen) < 1e-10);
    }

    #[test]
    fn newton_steps_reach_the_plain_descent_solution() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (m, n) = (30, 80);
        let raw = ndarray::Array2::from_shape_fn((m, n), |_| if rng.gen_bool(0.3) { 1.0f64 } else { 0.0 });
        let x = standardize(raw.view());
        let y: Vec<f64> = (0..m)
            .map(|i| if raw[[i, 0]] == 1.0 || i % 7 == 0 { 0.5 } else { -0.5 })
            .collect();
        let v: Vec<f64> = (0..n).map(|j| 0.2 + 0.8 * ((j * 37) % 11) as f64 / 10.0).collect();
        let opts = CdOptions {
            tol: 1e-10,
            max_iter: 1_000_000,
        };
        for alpha in [0.05, 0.5, 0.95] {
            let mut a = Solver::with_gram(&x, &y, true);
            let mut b = Solver::with_gram(&x, &y, false);
            for lambda in [0.1, 0.03, 0.01, 0.003] {
                let pen = Penalty {
                    lambda,
                    alpha,
                    factors: &v,
                };
                assert!(a.solve(&pen, &opts).1);
                assert!(b.solve(&pen, &opts).1);
                for (p, q) in a.beta().iter().zip(b.beta()) {
                    assert!((p - q).abs() < 1e-6, "alpha {alpha} lambda {lambda}: {p} vs {q}");
                }
                assert!(kkt_violation(&x, &y, a.beta(), &pen) < 1e-9);
            }
        }
    }
}
