//! Static-metric fault-proneness.
//!
//! Source text is scanned into per-function [`ModuleMetricsRecord`]s, expanded
//! to the eleven derived metrics, reduced by PCA and fed to a logistic model
//! whose output drives the per-predicate elastic-net penalty factors.

mod extract;
mod logistic;
mod model;
mod pca;
mod penalty;

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::DataError;
use crate::scalar::Scalar;

pub use extract::{extract_metrics, find_functions, FunctionSpan};
pub use logistic::{fit_logistic, LogisticFit, LOGISTIC_STABILIZER};
pub use model::{fit_fault_proneness, FaultPronenessModel};
pub use pca::{fit_pca, Pca, EIGENVALUE_THRESHOLD};
pub(crate) use penalty::check_thetas;
pub use penalty::{
    penalty_factor, penalty_factors, predicate_fault_proneness, PenaltyFactors, DEFAULT_THETA_HIGH, DEFAULT_THETA_LOW,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("line {line}: unbalanced braces")]
    UnbalancedBraces { line: usize },
    #[error("line {line}: function {name:?} has an empty body")]
    EmptyModule { name: String, line: usize },
    #[error("need at least 2 modules, got {0}")]
    TooFewModules(usize),
    #[error("every metric column is constant")]
    NoVariance,
    #[error("fault labels contain a single class")]
    SingleClassInput,
    #[error("fault-proneness {0} outside [0, 1]")]
    FpOutOfRange(f64),
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    ThetaOutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("module {0:?} has no metrics record")]
    UnknownModule(String),
    #[error("predicate {0:?} has no entry in the predicate map")]
    UnmappedPredicate(String),
    #[error("{0} rows of features but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("record {module}: {message}")]
    InvalidRecord { module: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Primitive counts for one function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleMetricsRecord {
    pub module_id: String,
    pub loc: u64,
    /// distinct operators
    pub n1: u64,
    /// distinct operands
    pub n2: u64,
    /// total operators
    #[serde(rename = "N1")]
    pub total_operators: u64,
    /// total operands
    #[serde(rename = "N2")]
    pub total_operands: u64,
    pub cyclomatic: u64,
}

impl ModuleMetricsRecord {
    pub fn check(&self) -> Result<(), MetricsError> {
        let bad = |message: &str| MetricsError::InvalidRecord {
            module: self.module_id.clone(),
            message: message.to_owned(),
        };
        if self.n1 > self.total_operators {
            return Err(bad("n1 exceeds N1"));
        }
        if self.n2 > self.total_operands {
            return Err(bad("n2 exceeds N2"));
        }
        Ok(())
    }
}

pub const METRIC_NAMES: [&str; 11] = [
    "loc",
    "length",
    "vocabulary",
    "volume",
    "difficulty",
    "level",
    "effort",
    "time",
    "bugs",
    "content",
    "cyclomatic",
];

/// LOC, the nine Halstead measures and cyclomatic complexity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedMetrics<F> {
    pub loc: F,
    pub length: F,
    pub vocabulary: F,
    pub volume: F,
    pub difficulty: F,
    pub level: F,
    pub effort: F,
    pub time: F,
    pub bugs: F,
    pub content: F,
    pub cyclomatic: F,
}

impl<F: Scalar> DerivedMetrics<F> {
    /// Values in [`METRIC_NAMES`] order.
    pub fn to_array(&self) -> [F; 11] {
        [
            self.loc,
            self.length,
            self.vocabulary,
            self.volume,
            self.difficulty,
            self.level,
            self.effort,
            self.time,
            self.bugs,
            self.content,
            self.cyclomatic,
        ]
    }
}

/// Halstead's definitions:
/// `N = N1 + N2`, `n = n1 + n2`, `V = N log2 n`, `D = (n1 / 2)(N2 / n2)`,
/// `L = 1 / D`, `E = D V`, `T = E / 18`, `B = V / 3000`, `I = L V`.
///
/// Records with `n < 2` or `n2 = 0` get zero for V, D, L, E, T, B and I.
/// A zero difficulty likewise gives a zero level.
pub fn derive_halstead<F: Scalar>(rec: &ModuleMetricsRecord) -> DerivedMetrics<F> {
    let c = |v: u64| F::from_u64(v).expect("count representable");
    let length = c(rec.total_operators + rec.total_operands);
    let vocab_count = rec.n1 + rec.n2;
    let vocabulary = c(vocab_count);
    let zero = F::zero();
    let (volume, difficulty) = if vocab_count < 2 || rec.n2 == 0 {
        (zero, zero)
    } else {
        let volume = length * vocabulary.log2();
        let difficulty = c(rec.n1) / F::of(2.0) * (c(rec.total_operands) / c(rec.n2));
        (volume, difficulty)
    };
    let level = if difficulty > zero { F::one() / difficulty } else { zero };
    let effort = difficulty * volume;
    DerivedMetrics {
        loc: c(rec.loc),
        length,
        vocabulary,
        volume,
        difficulty,
        level,
        effort,
        time: effort / F::of(18.0),
        bugs: volume / F::of(3000.0),
        content: level * volume,
        cyclomatic: c(rec.cyclomatic),
    }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Reads `module_id,loc,n1,n2,N1,N2,cyclomatic`.
pub fn read_metrics_csv<R: Read>(reader: R) -> Result<Vec<ModuleMetricsRecord>, MetricsError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in csv_reader(reader).deserialize() {
        let rec: ModuleMetricsRecord = rec.map_err(DataError::from)?;
        rec.check()?;
        if !seen.insert(rec.module_id.clone()) {
            return Err(MetricsError::InvalidRecord {
                module: rec.module_id,
                message: "duplicate module id".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_metrics_csv<W: Write>(records: &[ModuleMetricsRecord], writer: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["module_id", "loc", "n1", "n2", "N1", "N2", "cyclomatic"])
        .map_err(DataError::from)?;
    for r in records {
        w.write_record([
            r.module_id.clone(),
            r.loc.to_string(),
            r.n1.to_string(),
            r.n2.to_string(),
            r.total_operators.to_string(),
            r.total_operands.to_string(),
            r.cyclomatic.to_string(),
        ])
        .map_err(DataError::from)?;
    }
    w.flush().map_err(|e| DataError::from(csv::Error::from(e)))?;
    Ok(())
}

pub fn load_metrics(path: impl AsRef<Path>) -> Result<Vec<ModuleMetricsRecord>, MetricsError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_metrics_csv(std::io::BufReader::new(file))
}

pub fn write_metrics(records: &[ModuleMetricsRecord], path: impl AsRef<Path>) -> Result<(), MetricsError> {
    let mut buf = Vec::new();
    write_metrics_csv(records, &mut buf)?;
    crate::model::write_string(path.as_ref(), std::str::from_utf8(&buf).expect("utf8"))?;
    Ok(())
}

#[derive(Deserialize)]
struct LabelRow {
    module_id: String,
    faulty: String,
}

/// Reads `module_id,faulty` where faulty is `0`/`1`/`true`/`false`.
pub fn read_fault_labels<R: Read>(reader: R) -> Result<BTreeMap<String, bool>, MetricsError> {
    let mut out = BTreeMap::new();
    for row in csv_reader(reader).deserialize() {
        let row: LabelRow = row.map_err(DataError::from)?;
        let label = match row.faulty.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => true,
            "0" | "false" | "no" => false,
            other => {
                return Err(MetricsError::InvalidRecord {
                    module: row.module_id,
                    message: format!("faulty must be 0/1, found {other:?}"),
                })
            }
        };
        if out.insert(row.module_id.clone(), label).is_some() {
            return Err(MetricsError::InvalidRecord {
                module: row.module_id,
                message: "duplicate module id".into(),
            });
        }
    }
    Ok(out)
}

pub fn write_fault_labels<W: Write>(labels: &BTreeMap<String, bool>, writer: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["module_id", "faulty"]).map_err(DataError::from)?;
    for (m, &f) in labels {
        w.write_record([m.as_str(), if f { "1" } else { "0" }])
            .map_err(DataError::from)?;
    }
    w.flush().map_err(|e| DataError::from(csv::Error::from(e)))?;
    Ok(())
}

pub fn load_fault_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, bool>, MetricsError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_fault_labels(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(n1: u64, n2: u64, total_operators: u64, total_operands: u64) -> ModuleMetricsRecord {
        ModuleMetricsRecord {
            module_id: "m".into(),
            loc: 3,
            n1,
            n2,
            total_operators,
            total_operands,
            cyclomatic: 1,
        }
    }

    #[test]
    fn halstead_small_example() {
        let d = derive_halstead::<f64>(&rec(2, 3, 2, 3));
        // independent values: 5 * ln 5 / ln 2
        let volume = 5.0 * 5f64.ln() / 2f64.ln();
        assert_eq!(d.length, 5.0);
        assert_eq!(d.vocabulary, 5.0);
        assert!((d.volume - 11.609_640_474_436_812).abs() < 1e-12);
        assert!((d.volume - volume).abs() < 1e-12);
        assert_eq!(d.difficulty, 1.0);
        assert_eq!(d.level, 1.0);
        assert!((d.effort - volume).abs() < 1e-12);
        assert!((d.time - volume / 18.0).abs() < 1e-12);
        assert!((d.bugs - volume / 3000.0).abs() < 1e-12);
        assert!((d.content - volume).abs() < 1e-12);
    }

    #[test]
    fn degenerate_records_are_zero() {
        let empty = ModuleMetricsRecord {
            loc: 0,
            cyclomatic: 0,
            ..rec(0, 0, 0, 0)
        };
        let d = derive_halstead::<f64>(&empty);
        assert!(d.to_array().iter().all(|&v| v == 0.0));
        let no_operands = derive_halstead::<f64>(&rec(3, 0, 5, 0));
        assert_eq!(no_operands.volume, 0.0);
        assert_eq!(no_operands.level, 0.0);
    }

    #[test]
    fn level_times_difficulty_is_one() {
        for (n1, n2, t1, t2) in [(3, 4, 9, 11), (10, 2, 40, 7), (1, 1, 1, 5)] {
            let d = derive_halstead::<f64>(&rec(n1, n2, t1, t2));
            assert!(d.difficulty > 0.0);
            assert!((d.level * d.difficulty - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_csv_round_trip() {
        let text = "module_id,loc,n1,n2,N1,N2,cyclomatic\nmain,10,4,5,9,12,3\n";
        let recs = read_metrics_csv(text.as_bytes()).unwrap();
        assert_eq!(recs[0].total_operands, 12);
        let mut out = Vec::new();
        write_metrics_csv(&recs, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);

        let bad = "module_id,loc,n1,n2,N1,N2,cyclomatic\nf,1,5,1,2,1,1\n";
        assert!(matches!(
            read_metrics_csv(bad.as_bytes()),
            Err(MetricsError::InvalidRecord { .. })
        ));
    }

    #[test]
    fn fault_labels_parse() {
        let labels = read_fault_labels("module_id,faulty\na,1\nb,false\n".as_bytes()).unwrap();
        assert!(labels["a"]);
        assert!(!labels["b"]);
        assert!(read_fault_labels("module_id,faulty\na,maybe\n".as_bytes()).is_err());
    }
}
