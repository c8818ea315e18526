use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::linalg::cholesky_solve;
use crate::scalar::{sigmoid, Scalar};

/// Ridge weight `c` in the maximized objective `loglik(w, b) - c * |w|^2`.
/// Keeps separable training sets from driving the weights to infinity.
pub const LOGISTIC_STABILIZER: f64 = 1e-6;

const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit<F> {
    pub weights: Vec<F>,
    pub intercept: F,
    pub iterations: usize,
    /// Euclidean norm of the objective gradient at the returned parameters
    pub gradient_norm: F,
}

impl<F: Scalar> LogisticFit<F> {
    pub fn predict(&self, x: &[F]) -> F {
        let t = self.intercept + x.iter().zip(&self.weights).map(|(a, b)| *a * *b).sum::<F>();
        sigmoid(t)
    }
}

fn softplus<F: Scalar>(t: F) -> F {
    t.max(F::zero()) + (-t.abs()).exp().ln_1p()
}

struct Problem<'a, F> {
    x: &'a Array2<F>,
    y: Vec<F>,
    c: F,
}

impl<F: Scalar> Problem<'_, F> {
    fn linear(&self, theta: &[F]) -> Vec<F> {
        let d = self.x.ncols();
        self.x
            .rows()
            .into_iter()
            .map(|row| theta[d] + row.iter().zip(theta).map(|(a, b)| *a * *b).sum::<F>())
            .collect()
    }

    fn objective(&self, theta: &[F]) -> F {
        let d = self.x.ncols();
        let ll: F = self
            .linear(theta)
            .into_iter()
            .zip(&self.y)
            .map(|(t, &y)| -(y * softplus(-t) + (F::one() - y) * softplus(t)))
            .sum();
        let w2: F = theta[..d].iter().map(|w| *w * *w).sum();
        ll - self.c * w2
    }

    fn gradient_and_hessian(&self, theta: &[F]) -> (Vec<F>, Array2<F>) {
        let d = self.x.ncols();
        let mut g = vec![F::zero(); d + 1];
        let mut h = Array2::<F>::zeros((d + 1, d + 1));
        for (i, t) in self.linear(theta).into_iter().enumerate() {
            let p = sigmoid(t);
            let resid = self.y[i] - p;
            let w = p * (F::one() - p);
            let row = self.x.row(i);
            for a in 0..=d {
                let xa = if a < d { row[a] } else { F::one() };
                g[a] += resid * xa;
                for b in 0..=a {
                    let xb = if b < d { row[b] } else { F::one() };
                    h[[a, b]] += w * xa * xb;
                }
            }
        }
        let two_c = self.c + self.c;
        for a in 0..d {
            g[a] -= two_c * theta[a];
            h[[a, a]] += two_c;
        }
        for a in 0..=d {
            for b in 0..a {
                h[[b, a]] = h[[a, b]];
            }
        }
        (g, h)
    }
}

fn norm<F: Scalar>(v: &[F]) -> F {
    v.iter().map(|x| *x * *x).sum::<F>().sqrt()
}

/// Logistic regression by damped Newton iterations (IRLS) on the
/// stabilized log-likelihood, run until the gradient norm is at most `1e-8`
/// or 100 iterations.
///
/// `x` is modules × domain metrics; `labels[i]` marks module `i` faulty.
pub fn fit_logistic<F: Scalar>(x: &Array2<F>, labels: &[bool]) -> Result<LogisticFit<F>, MetricsError> {
    if x.nrows() != labels.len() {
        return Err(MetricsError::LengthMismatch(x.nrows(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(MetricsError::SingleClassInput);
    }
    let d = x.ncols();
    let problem = Problem {
        x,
        y: labels.iter().map(|&l| if l { F::one() } else { F::zero() }).collect(),
        c: F::of(LOGISTIC_STABILIZER),
    };
    let mut theta = vec![F::zero(); d + 1];
    let mut value = problem.objective(&theta);
    let tol = F::of(GRADIENT_TOL);
    let mut iterations = 0;
    let (mut g, mut h) = problem.gradient_and_hessian(&theta);

    while iterations < MAX_ITERATIONS && norm(&g) > tol {
        iterations += 1;
        let mut damping = F::zero();
        let step = loop {
            let mut hd = h.clone();
            for a in 0..=d {
                hd[[a, a]] += damping;
            }
            if let Some(s) = cholesky_solve(&hd, &g) {
                break s;
            }
            damping = if damping == F::zero() {
                F::of(1e-10)
            } else {
                damping * F::of(10.0)
            };
        };
        let mut t = F::one();
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<F> = theta.iter().zip(&step).map(|(a, s)| *a + t * *s).collect();
            let v = problem.objective(&cand);
            if v >= value {
                accepted = Some((cand, v));
                break;
            }
            t *= F::of(0.5);
        }
        let Some((next, v)) = accepted else {
            break;
        };
        let moved = next.iter().zip(&theta).any(|(a, b)| a != b);
        theta = next;
        value = v;
        (g, h) = problem.gradient_and_hessian(&theta);
        if !moved {
            break;
        }
    }
    Ok(LogisticFit {
        weights: theta[..d].to_vec(),
        intercept: theta[d],
        iterations,
        gradient_norm: norm(&g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn separable_one_dimensional() {
        let fit = fit_logistic(&arr2(&[[0.0], [1.0]]), &[false, true]).unwrap();
        assert!(fit.predict(&[1.0]) > 0.5);
        assert!(fit.predict(&[0.0]) < 0.5);
        assert!(fit.gradient_norm <= 1e-8, "{}", fit.gradient_norm);
        // brute-force grid over the stabilized objective: maximize
        // log s(b + w) + log(1 - s(b)) - 1e-6 w^2
        let obj = |w: f64, b: f64| {
            let s = |t: f64| 1.0 / (1.0 + (-t).exp());
            s(b + w).ln() + (1.0 - s(b)).ln() - 1e-6 * w * w
        };
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..=400 {
            for j in 0..=400 {
                let w = i as f64 * 0.1;
                let b = -(j as f64) * 0.1;
                let v = obj(w, b);
                if v > best.0 {
                    best = (v, w, b);
                }
            }
        }
        assert!(
            (fit.weights[0] - best.1).abs() < 0.2,
            "{} vs {}",
            fit.weights[0],
            best.1
        );
        assert!((fit.intercept - best.2).abs() < 0.2);
    }

    #[test]
    fn no_signal_gives_half() {
        let x = arr2(&[[3.0f64], [3.0], [3.0], [3.0]]);
        let fit = fit_logistic(&x, &[true, false, true, false]).unwrap();
        for row in x.rows() {
            assert!((fit.predict(row.as_slice().unwrap()) - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn permutation_invariant() {
        let x = arr2(&[
            [0.1f64, 1.0],
            [0.4, -0.5],
            [1.2, 0.3],
            [-0.7, 0.8],
            [0.9, -1.1],
            [0.2, 0.2],
        ]);
        let y = [false, true, true, false, true, false];
        let a = fit_logistic(&x, &y).unwrap();
        let order = [5, 3, 1, 0, 4, 2];
        let xp = arr2(&order.map(|i| [x[[i, 0]], x[[i, 1]]]));
        let yp = order.map(|i| y[i]);
        let b = fit_logistic(&xp, &yp).unwrap();
        for (p, q) in a.weights.iter().zip(&b.weights) {
            assert!((p - q).abs() < 1e-10);
        }
        assert!((a.intercept - b.intercept).abs() < 1e-10);
        assert!(a.gradient_norm <= 1e-8);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            fit_logistic(&arr2(&[[0.0], [1.0]]), &[true, true]),
            Err(MetricsError::SingleClassInput)
        ));
    }
}
