use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    derive_halstead, fit_logistic, fit_pca, penalty::check_thetas, MetricsError, ModuleMetricsRecord,
    DEFAULT_THETA_HIGH, DEFAULT_THETA_LOW, METRIC_NAMES,
};
use crate::model::DataError;
use crate::scalar::{sigmoid, Scalar};

/// Standardization, PCA loadings and logistic weights for predicting the
/// fault-proneness of a module from its static metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultPronenessModel<F> {
    pub metric_names: Vec<String>,
    pub means: Vec<F>,
    pub stddevs: Vec<F>,
    pub kept_metrics: Vec<usize>,
    /// kept metrics × domain metrics
    pub loadings: Vec<Vec<F>>,
    pub eigenvalues: Vec<F>,
    pub weights: Vec<F>,
    pub intercept: F,
    pub theta_low: F,
    pub theta_high: F,
}

fn metric_matrix<F: Scalar>(records: &[&ModuleMetricsRecord]) -> Array2<F> {
    let mut data = Array2::zeros((records.len(), METRIC_NAMES.len()));
    for (r, rec) in records.iter().enumerate() {
        for (c, v) in derive_halstead::<F>(rec).to_array().into_iter().enumerate() {
            data[[r, c]] = v;
        }
    }
    data
}

/// Trains on the records that have a label; unlabeled records are ignored.
pub fn fit_fault_proneness<F: Scalar>(
    records: &[ModuleMetricsRecord],
    labels: &BTreeMap<String, bool>,
    theta_low: F,
    theta_high: F,
) -> Result<FaultPronenessModel<F>, MetricsError> {
    check_thetas(theta_low, theta_high)?;
    let training: Vec<&ModuleMetricsRecord> = records.iter().filter(|r| labels.contains_key(&r.module_id)).collect();
    if let Some(missing) = labels.keys().find(|m| !records.iter().any(|r| &r.module_id == *m)) {
        return Err(MetricsError::UnknownModule(missing.clone()));
    }
    let y: Vec<bool> = training.iter().map(|r| labels[&r.module_id]).collect();
    let data = metric_matrix::<F>(&training);
    let pca = fit_pca(&data)?;
    let scores = Array2::from_shape_fn((training.len(), pca.n_components()), |(r, k)| {
        pca.scores(data.row(r).as_slice().expect("row-major"))[k]
    });
    let logit = fit_logistic(&scores, &y)?;
    Ok(FaultPronenessModel {
        metric_names: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
        means: pca.means,
        stddevs: pca.stddevs,
        kept_metrics: pca.kept_columns,
        loadings: pca.loadings,
        eigenvalues: pca.eigenvalues,
        weights: logit.weights,
        intercept: logit.intercept,
        theta_low,
        theta_high,
    })
}

impl<F: Scalar> FaultPronenessModel<F> {
    /// Model with no metric signal: every module gets FP = 0.5.
    pub fn uninformative() -> Self {
        FaultPronenessModel {
            metric_names: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
            means: vec![F::zero(); METRIC_NAMES.len()],
            stddevs: vec![F::one(); METRIC_NAMES.len()],
            kept_metrics: Vec::new(),
            loadings: Vec::new(),
            eigenvalues: Vec::new(),
            weights: Vec::new(),
            intercept: F::zero(),
            theta_low: F::of(DEFAULT_THETA_LOW),
            theta_high: F::of(DEFAULT_THETA_HIGH),
        }
    }

    /// Domain-metric scores of one record.
    pub fn domain_metrics(&self, rec: &ModuleMetricsRecord) -> Vec<F> {
        let raw = derive_halstead::<F>(rec).to_array();
        let z: Vec<F> = self
            .kept_metrics
            .iter()
            .map(|&c| (raw[c] - self.means[c]) / self.stddevs[c])
            .collect();
        (0..self.weights.len())
            .map(|k| z.iter().zip(&self.loadings).map(|(zi, l)| *zi * l[k]).sum())
            .collect()
    }

    /// `logistic(intercept + w . scores)`, kept strictly inside (0, 1).
    pub fn predict_fp(&self, rec: &ModuleMetricsRecord) -> F {
        let s = self.domain_metrics(rec);
        let t = self.intercept + s.iter().zip(&self.weights).map(|(a, b)| *a * *b).sum::<F>();
        let eps = F::epsilon();
        sigmoid(t).max(eps).min(F::one() - eps)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        let model: Self = serde_json::from_str(text).map_err(DataError::from)?;
        check_thetas(model.theta_low, model.theta_high)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        crate::model::write_string(path.as_ref(), &(self.to_json() + "\n"))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, scale: u64, k: u64) -> ModuleMetricsRecord {
        ModuleMetricsRecord {
            module_id: id.into(),
            loc: 10 + 3 * k + scale * 4,
            n1: 4 + scale * 2 + k % 3,
            n2: 5 + scale * 3 + k % 4,
            total_operators: 12 + scale * 10 + k,
            total_operands: 14 + scale * 12 + 2 * k,
            cyclomatic: 1 + scale + k % 2,
        }
    }

    fn corpus() -> (Vec<ModuleMetricsRecord>, BTreeMap<String, bool>) {
        let mut recs = Vec::new();
        let mut labels = BTreeMap::new();
        for k in 0..24u64 {
            let faulty = k % 3 == 0;
            let id = format!("m{k}");
            recs.push(rec(&id, if faulty { 6 } else { 1 }, k));
            labels.insert(id, faulty);
        }
        (recs, labels)
    }

    #[test]
    fn complex_modules_are_more_fault_prone() {
        let (recs, labels) = corpus();
        let model = fit_fault_proneness::<f64>(&recs, &labels, 3.5, 0.25).unwrap();
        assert!(model.eigenvalues.iter().all(|&e| e > 0.9));
        let high = model.predict_fp(&rec("x", 6, 5));
        let low = model.predict_fp(&rec("y", 1, 5));
        assert!(high > 0.5 && low < 0.5, "{high} {low}");
    }

    #[test]
    fn prediction_is_deterministic_and_in_range() {
        let (recs, labels) = corpus();
        let model = fit_fault_proneness::<f64>(&recs, &labels, 3.5, 0.25).unwrap();
        let again = model.predict_fp(&recs[4]);
        assert_eq!(model.predict_fp(&recs[4]), again);
        let huge = ModuleMetricsRecord {
            module_id: "big".into(),
            loc: 1 << 40,
            n1: 1 << 30,
            n2: 1 << 30,
            total_operators: 1 << 40,
            total_operands: 1 << 40,
            cyclomatic: 1 << 30,
        };
        let fp = model.predict_fp(&huge);
        assert!(fp > 0.0 && fp < 1.0);
    }

    #[test]
    fn uninformative_model_is_half() {
        let m = FaultPronenessModel::<f64>::uninformative();
        assert_eq!(m.predict_fp(&rec("a", 1, 1)), 0.5);
    }

    #[test]
    fn json_round_trip() {
        let (recs, labels) = corpus();
        let model = fit_fault_proneness::<f64>(&recs, &labels, 3.2, 0.3).unwrap();
        let back = FaultPronenessModel::<f64>::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert!(fit_fault_proneness::<f64>(&recs, &labels, 5.0, 0.25).is_err());
    }
}
