use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::linalg::symmetric_eigen;
use crate::scalar::Scalar;

/// Components whose correlation-matrix eigenvalue exceeds this are kept.
pub const EIGENVALUE_THRESHOLD: f64 = 0.9;

/// Principal components of the sample correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca<F> {
    /// per input column
    pub means: Vec<F>,
    /// per input column, sample standard deviation (n - 1)
    pub stddevs: Vec<F>,
    /// input columns that are not constant, in order
    pub kept_columns: Vec<usize>,
    /// `kept_columns.len()` rows, one column per retained component
    pub loadings: Vec<Vec<F>>,
    /// retained eigenvalues, descending
    pub eigenvalues: Vec<F>,
    /// every eigenvalue of the correlation matrix, descending
    pub all_eigenvalues: Vec<F>,
}

impl<F: Scalar> Pca<F> {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// z-scores of the kept columns of `row`.
    pub fn standardize(&self, row: &[F]) -> Vec<F> {
        self.kept_columns
            .iter()
            .map(|&c| (row[c] - self.means[c]) / self.stddevs[c])
            .collect()
    }

    /// Component scores (domain metrics) of a raw row.
    pub fn scores(&self, row: &[F]) -> Vec<F> {
        let z = self.standardize(row);
        (0..self.n_components())
            .map(|k| z.iter().zip(&self.loadings).map(|(zi, l)| *zi * l[k]).sum())
            .collect()
    }
}

fn is_constant<F: Scalar>(sd: F, mean: F) -> bool {
    sd <= F::epsilon() * F::of(64.0) * mean.abs().max(F::one())
}

/// Fits PCA on a modules × metrics matrix of raw values.
///
/// Columns are standardized (constant ones dropped), the sample correlation
/// matrix is eigendecomposed, and exactly the components with eigenvalue
/// greater than [`EIGENVALUE_THRESHOLD`] are retained. Each loading column
/// has unit norm with its largest-magnitude entry positive.
pub fn fit_pca<F: Scalar>(data: &Array2<F>) -> Result<Pca<F>, MetricsError> {
    let (rows, cols) = data.dim();
    if rows < 2 {
        return Err(MetricsError::TooFewModules(rows));
    }
    let n = F::of_usize(rows);
    let mut means = Vec::with_capacity(cols);
    let mut stddevs = Vec::with_capacity(cols);
    let mut kept = Vec::new();
    for c in 0..cols {
        let col = data.column(c);
        let mean = col.iter().copied().sum::<F>() / n;
        let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<F>() / (n - F::one());
        let sd = var.sqrt();
        if is_constant(sd, mean) {
            stddevs.push(F::zero());
        } else {
            stddevs.push(sd);
            kept.push(c);
        }
        means.push(mean);
    }
    if kept.is_empty() {
        return Err(MetricsError::NoVariance);
    }
    let p = kept.len();
    let mut z = Array2::<F>::zeros((rows, p));
    for (k, &c) in kept.iter().enumerate() {
        for r in 0..rows {
            z[[r, k]] = (data[[r, c]] - means[c]) / stddevs[c];
        }
    }
    let corr = z.t().dot(&z) / (n - F::one());
    let (values, vectors) = symmetric_eigen(&corr);
    let threshold = F::of(EIGENVALUE_THRESHOLD);
    let retained: Vec<usize> = (0..p).filter(|&k| values[k] > threshold).collect();

    let mut loadings = vec![Vec::with_capacity(retained.len()); p];
    for &k in &retained {
        let col = vectors.column(k);
        let mut pivot = 0;
        for i in 1..p {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < F::zero() { -F::one() } else { F::one() };
        for (i, row) in loadings.iter_mut().enumerate() {
            row.push(sign * col[i]);
        }
    }
    Ok(Pca {
        means,
        stddevs,
        kept_columns: kept,
        loadings,
        eigenvalues: retained.iter().map(|&k| values[k]).collect(),
        all_eigenvalues: values,
    })
}
