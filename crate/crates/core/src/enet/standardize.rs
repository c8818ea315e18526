use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::scalar::Scalar;

/// Column-standardized design matrix.
///
/// Non-constant columns have mean 0 and population standard deviation 1.
/// Constant columns are zeroed and flagged inactive; their coefficients stay 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized<F> {
    /// m × n, column-major
    pub x: Array2<F>,
    pub means: Vec<F>,
    pub scales: Vec<F>,
    pub active: Vec<bool>,
}

impl<F: Scalar> Standardized<F> {
    pub fn n_runs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_predicates(&self) -> usize {
        self.x.ncols()
    }

    pub(crate) fn col(&self, j: usize) -> &[F] {
        self.x
            .column(j)
            .to_slice()
            .expect("standardized matrix is column-major")
    }

    /// Maps a raw row into standardized coordinates.
    pub fn transform_value(&self, j: usize, raw: F) -> F {
        if self.active[j] {
            (raw - self.means[j]) / self.scales[j]
        } else {
            F::zero()
        }
    }
}

pub fn standardize<F: Scalar>(x: ArrayView2<'_, F>) -> Standardized<F> {
    let (m, n) = x.dim();
    let mf = F::of_usize(m.max(1));
    let mut out = Array2::from_elem((m, n).f(), F::zero());
    let mut means = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    let mut active = Vec::with_capacity(n);
    for j in 0..n {
        let col = x.column(j);
        let mean = col.iter().copied().sum::<F>() / mf;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / mf;
        let sd = var.sqrt();
        let constant = !(sd > F::epsilon() * F::of(64.0) * mean.abs().max(F::one()));
        means.push(mean);
        if constant {
            scales.push(F::one());
            active.push(false);
        } else {
            scales.push(sd);
            active.push(true);
            for (o, &v) in out.column_mut(j).iter_mut().zip(col.iter()) {
                *o = (v - mean) / sd;
            }
        }
    }
    Standardized {
        x: out,
        means,
        scales,
        active,
    }
}

/// Returns the mean and the centered copy of `y`.
pub fn center<F: Scalar>(y: &[F]) -> (F, Vec<F>) {
    let mean = y.iter().copied().sum::<F>() / F::of_usize(y.len().max(1));
    (mean, y.iter().map(|&v| v - mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn binary_column() {
        let x = arr2(&[[0.0], [0.0], [1.0], [1.0]]);
        let s = standardize(x.view());
        assert_eq!(s.means[0], 0.5);
        assert_eq!(s.scales[0], 0.5);
        assert_eq!(s.x.column(0).to_vec(), vec![-1.0, -1.0, 1.0, 1.0]);
        assert!(s.active[0]);
    }

    #[test]
    fn constant_column_is_flagged() {
        let x = arr2(&[[1.0, 0.0], [1.0, 1.0], [1.0, 0.0]]);
        let s = standardize(x.view());
        assert_eq!(s.active, vec![false, true]);
        assert!(s.x.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn idempotent() {
        let x = arr2(&[[0.0f64, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0], [1.0, 1.0]]);
        let once = standardize(x.view());
        let twice = standardize(once.x.view());
        for (a, b) in once.x.iter().zip(twice.x.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        for j in 0..2 {
            assert!(twice.means[j].abs() < 1e-15);
            assert!((twice.scales[j] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn centering() {
        let (mean, c) = center(&[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(mean, 0.5);
        assert_eq!(c, vec![-0.5, -0.5, 0.5, 0.5]);
    }
}
