//! Coverage matrices, outcomes, predicate maps, dependence graphs and ground
//! truth, together with their CSV/JSON file formats.
//!
//! File formats:
//!
//! * coverage CSV: `run_id,<pred_id>,...`, one row per run; any nonzero
//!   numeric cell is stored as `1`
//! * outcomes CSV: `run_id,outcome` with `pass`/`fail` (case-insensitive);
//!   the header line is optional
//! * predicate map CSV: `predicate_id,module_id,node_id,line`
//! * PDG JSON: `{"nodes":[..],"edges":[{"from":..,"to":..,"kind":"control"|"data"}]}`
//! * ground truth JSON: `{"faulty_nodes":[..],"fault_predicates":[..]}`

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Identifier of a statement node in a program dependence graph.
pub type NodeId = u64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("line {line}: non-numeric cell {value:?} in column {column}")]
    NonNumericCell { line: u64, column: String, value: String },
    #[error("line {line}: unknown outcome token {token:?} (expected pass or fail)")]
    UnknownOutcomeToken { line: u64, token: String },
    #[error("duplicate run id {0:?}")]
    DuplicateRunId(String),
    #[error("duplicate predicate id {0:?}")]
    DuplicatePredicateId(String),
    #[error("matrix shape {rows}x{cols} does not match {runs} runs and {predicates} predicates")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        runs: usize,
        predicates: usize,
    },
    #[error("cell ({row}, {col}) is {value}, expected 0 or 1")]
    NonBinaryCell { row: usize, col: usize, value: u8 },
    #[error("run sets differ: missing from outcomes {missing_from_outcomes:?}, missing from coverage {missing_from_coverage:?}")]
    RunSetMismatch {
        missing_from_outcomes: Vec<String>,
        missing_from_coverage: Vec<String>,
    },
    #[error("no failing runs: localization needs at least one failure")]
    NoFailingRuns,
    #[error("predicate {0:?} has no entry in the predicate map")]
    MissingPredicate(String),
    #[error("predicate {0:?} is not a column of the coverage matrix")]
    UnknownPredicate(String),
    #[error("node {0} is not in the dependence graph")]
    UnknownNode(NodeId),
    #[error("ground truth has no {0}")]
    EmptyGroundTruth(&'static str),
    #[error("line {line}: {message}")]
    BadField { line: u64, message: String },
}

pub type Result<T> = std::result::Result<T, DataError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(None)
        .from_reader(r)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

/// Pass/fail status of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn parse(token: &str) -> Option<Outcome> {
        if token.eq_ignore_ascii_case("pass") {
            Some(Outcome::Pass)
        } else if token.eq_ignore_ascii_case("fail") {
            Some(Outcome::Fail)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
        }
    }

    pub fn is_fail(self) -> bool {
        self == Outcome::Fail
    }
}

fn check_unique(ids: &[String], dup: impl Fn(String) -> DataError) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(dup(id.clone()));
        }
    }
    Ok(())
}

/// Binary runs × predicates coverage matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMatrix {
    run_ids: Vec<String>,
    predicate_ids: Vec<String>,
    cells: Array2<u8>,
}

impl CoverageMatrix {
    pub fn new(run_ids: Vec<String>, predicate_ids: Vec<String>, cells: Array2<u8>) -> Result<Self> {
        let (rows, cols) = cells.dim();
        if rows != run_ids.len() || cols != predicate_ids.len() {
            return Err(DataError::ShapeMismatch {
                rows,
                cols,
                runs: run_ids.len(),
                predicates: predicate_ids.len(),
            });
        }
        if let Some(((row, col), &value)) = cells.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(DataError::NonBinaryCell { row, col, value });
        }
        check_unique(&run_ids, DataError::DuplicateRunId)?;
        check_unique(&predicate_ids, DataError::DuplicatePredicateId)?;
        Ok(CoverageMatrix {
            run_ids,
            predicate_ids,
            cells,
        })
    }

    /// Builds a matrix from row vectors, binarizing nonzero entries.
    pub fn from_rows(run_ids: Vec<String>, predicate_ids: Vec<String>, rows: &[Vec<u8>]) -> Result<Self> {
        let n = predicate_ids.len();
        let mut cells = Array2::zeros((rows.len(), n));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(DataError::RaggedRow {
                    line: i as u64 + 2,
                    expected: n + 1,
                    found: row.len() + 1,
                });
            }
            for (j, &v) in row.iter().enumerate() {
                cells[[i, j]] = u8::from(v != 0);
            }
        }
        Self::new(run_ids, predicate_ids, cells)
    }

    pub fn run_ids(&self) -> &[String] {
        &self.run_ids
    }

    pub fn predicate_ids(&self) -> &[String] {
        &self.predicate_ids
    }

    pub fn cells(&self) -> &Array2<u8> {
        &self.cells
    }

    pub fn n_runs(&self) -> usize {
        self.run_ids.len()
    }

    pub fn n_predicates(&self) -> usize {
        self.predicate_ids.len()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, u8> {
        self.cells.row(i)
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, u8> {
        self.cells.column(j)
    }

    pub fn predicate_index(&self, id: &str) -> Option<usize> {
        self.predicate_ids.iter().position(|p| p == id)
    }

    /// Dense column-major copy in the requested scalar type.
    pub fn to_float<F: Scalar>(&self) -> Array2<F> {
        let (m, n) = self.cells.dim();
        let mut out = Array2::from_elem(ndarray::ShapeBuilder::f((m, n)), F::zero());
        for ((i, j), &v) in self.cells.indexed_iter() {
            if v != 0 {
                out[[i, j]] = F::one();
            }
        }
        out
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(h) => h?,
            None => return Err(DataError::MalformedHeader("empty file".into())),
        };
        if header.get(0) != Some("run_id") {
            return Err(DataError::MalformedHeader(format!(
                "first column must be run_id, found {:?}",
                header.get(0).unwrap_or("")
            )));
        }
        let predicate_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        if predicate_ids.is_empty() {
            return Err(DataError::MalformedHeader("no predicate columns".into()));
        }
        if predicate_ids.iter().any(String::is_empty) {
            return Err(DataError::MalformedHeader("empty predicate id".into()));
        }
        check_unique(&predicate_ids, DataError::DuplicatePredicateId)?;

        let n = predicate_ids.len();
        let mut run_ids = Vec::new();
        let mut data = Vec::new();
        for rec in records {
            let rec = rec?;
            let line = line_of(&rec);
            if rec.len() == 1 && rec.get(0) == Some("") {
                continue;
            }
            if rec.len() != n + 1 {
                return Err(DataError::RaggedRow {
                    line,
                    expected: n + 1,
                    found: rec.len(),
                });
            }
            run_ids.push(rec[0].to_owned());
            for (j, field) in rec.iter().skip(1).enumerate() {
                let value: f64 =
                    field
                        .parse()
                        .ok()
                        .filter(|v: &f64| v.is_finite())
                        .ok_or_else(|| DataError::NonNumericCell {
                            line,
                            column: predicate_ids[j].clone(),
                            value: field.to_owned(),
                        })?;
                data.push(u8::from(value != 0.0));
            }
        }
        let cells = Array2::from_shape_vec((run_ids.len(), n), data).expect("row lengths checked while parsing");
        Self::new(run_ids, predicate_ids, cells)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(self.n_predicates() + 1);
        header.push("run_id");
        header.extend(self.predicate_ids.iter().map(String::as_str));
        w.write_record(&header)?;
        for (i, run) in self.run_ids.iter().enumerate() {
            let mut rec = Vec::with_capacity(self.n_predicates() + 1);
            rec.push(run.clone());
            rec.extend(self.cells.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn load_coverage(path: impl AsRef<Path>) -> Result<CoverageMatrix> {
    CoverageMatrix::read_csv(open(path.as_ref())?)
}

pub fn write_coverage(matrix: &CoverageMatrix, path: impl AsRef<Path>) -> Result<()> {
    matrix.write_csv(create(path.as_ref())?)
}

/// Per-run pass/fail labels, in file order until aligned by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeVector {
    run_ids: Vec<String>,
    labels: Vec<Outcome>,
}

impl OutcomeVector {
    pub fn new(run_ids: Vec<String>, labels: Vec<Outcome>) -> Result<Self> {
        if run_ids.len() != labels.len() {
            return Err(DataError::ShapeMismatch {
                rows: labels.len(),
                cols: 1,
                runs: run_ids.len(),
                predicates: 1,
            });
        }
        check_unique(&run_ids, DataError::DuplicateRunId)?;
        Ok(OutcomeVector { run_ids, labels })
    }

    pub fn run_ids(&self) -> &[String] {
        &self.run_ids
    }

    pub fn labels(&self) -> &[Outcome] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_fail(&self) -> usize {
        self.labels.iter().filter(|o| o.is_fail()).count()
    }

    pub fn n_pass(&self) -> usize {
        self.len() - self.n_fail()
    }

    pub fn get(&self, run_id: &str) -> Option<Outcome> {
        self.run_ids.iter().position(|r| r == run_id).map(|i| self.labels[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Outcome)> {
        self.run_ids.iter().map(String::as_str).zip(self.labels.iter().copied())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut run_ids = Vec::new();
        let mut labels = Vec::new();
        for (k, rec) in csv_reader(reader).records().enumerate() {
            let rec = rec?;
            let line = line_of(&rec);
            if rec.len() == 1 && rec.get(0) == Some("") {
                continue;
            }
            if rec.len() != 2 {
                return Err(DataError::RaggedRow {
                    line,
                    expected: 2,
                    found: rec.len(),
                });
            }
            if k == 0 && rec[0].eq_ignore_ascii_case("run_id") && rec[1].eq_ignore_ascii_case("outcome") {
                continue;
            }
            let label = Outcome::parse(&rec[1]).ok_or_else(|| DataError::UnknownOutcomeToken {
                line,
                token: rec[1].to_owned(),
            })?;
            run_ids.push(rec[0].to_owned());
            labels.push(label);
        }
        Self::new(run_ids, labels)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["run_id", "outcome"])?;
        for (run, label) in self.iter() {
            w.write_record([run, label.as_str()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn load_outcomes(path: impl AsRef<Path>) -> Result<OutcomeVector> {
    OutcomeVector::read_csv(open(path.as_ref())?)
}

pub fn write_outcomes(outcomes: &OutcomeVector, path: impl AsRef<Path>) -> Result<()> {
    outcomes.write_csv(create(path.as_ref())?)
}

/// A coverage matrix with outcomes aligned row for row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    matrix: CoverageMatrix,
    outcomes: OutcomeVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub m: usize,
    pub n: usize,
    pub n_fail: usize,
    pub n_pass: usize,
}

/// Aligns `outcomes` to the run order of `matrix`.
pub fn validate_dataset(matrix: CoverageMatrix, outcomes: OutcomeVector) -> Result<Dataset> {
    let index: HashMap<&str, Outcome> = outcomes.iter().collect();
    let in_matrix: HashSet<&str> = matrix.run_ids().iter().map(String::as_str).collect();
    let missing_from_outcomes: Vec<String> = matrix
        .run_ids()
        .iter()
        .filter(|r| !index.contains_key(r.as_str()))
        .cloned()
        .collect();
    let missing_from_coverage: Vec<String> = outcomes
        .run_ids()
        .iter()
        .filter(|r| !in_matrix.contains(r.as_str()))
        .cloned()
        .collect();
    if !missing_from_outcomes.is_empty() || !missing_from_coverage.is_empty() {
        return Err(DataError::RunSetMismatch {
            missing_from_outcomes,
            missing_from_coverage,
        });
    }
    let labels = matrix.run_ids().iter().map(|r| index[r.as_str()]).collect();
    let aligned = OutcomeVector {
        run_ids: matrix.run_ids().to_vec(),
        labels,
    };
    if aligned.n_fail() == 0 {
        return Err(DataError::NoFailingRuns);
    }
    Ok(Dataset {
        matrix,
        outcomes: aligned,
    })
}

impl Dataset {
    pub fn matrix(&self) -> &CoverageMatrix {
        &self.matrix
    }

    pub fn outcomes(&self) -> &OutcomeVector {
        &self.outcomes
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            m: self.matrix.n_runs(),
            n: self.matrix.n_predicates(),
            n_fail: self.outcomes.n_fail(),
            n_pass: self.outcomes.n_pass(),
        }
    }

    /// Response vector: 1 for FAIL, 0 for PASS.
    pub fn response<F: Scalar>(&self) -> Vec<F> {
        self.outcomes
            .labels()
            .iter()
            .map(|o| if o.is_fail() { F::one() } else { F::zero() })
            .collect()
    }

    /// Replaces the labels (e.g. after relabeling), re-validating alignment.
    pub fn with_outcomes(self, outcomes: OutcomeVector) -> Result<Dataset> {
        validate_dataset(self.matrix, outcomes)
    }

    pub fn into_parts(self) -> (CoverageMatrix, OutcomeVector) {
        (self.matrix, self.outcomes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateLocation {
    pub module_id: String,
    pub node_id: NodeId,
    pub line: u64,
}

/// predicate id → (module, PDG node, source line)
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredicateMap {
    entries: BTreeMap<String, PredicateLocation>,
}

impl PredicateMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, predicate_id: impl Into<String>, loc: PredicateLocation) -> Result<()> {
        let id = predicate_id.into();
        if self.entries.contains_key(&id) {
            return Err(DataError::DuplicatePredicateId(id));
        }
        self.entries.insert(id, loc);
        Ok(())
    }

    pub fn get(&self, predicate_id: &str) -> Option<&PredicateLocation> {
        self.entries.get(predicate_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &PredicateLocation)> {
        self.entries.iter()
    }

    /// Every coverage column must be mapped; every map entry must name a
    /// coverage column and, when a PDG is given, an existing node.
    pub fn check(&self, matrix: &CoverageMatrix, pdg: Option<&ProgramDependenceGraph>) -> Result<()> {
        for p in matrix.predicate_ids() {
            if !self.entries.contains_key(p) {
                return Err(DataError::MissingPredicate(p.clone()));
            }
        }
        let columns: HashSet<&str> = matrix.predicate_ids().iter().map(String::as_str).collect();
        for (p, loc) in &self.entries {
            if !columns.contains(p.as_str()) {
                return Err(DataError::UnknownPredicate(p.clone()));
            }
            if let Some(g) = pdg {
                if !g.contains(loc.node_id) {
                    return Err(DataError::UnknownNode(loc.node_id));
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut map = PredicateMap::new();
        for (k, rec) in csv_reader(reader).records().enumerate() {
            let rec = rec?;
            let line = line_of(&rec);
            if rec.len() == 1 && rec.get(0) == Some("") {
                continue;
            }
            if rec.len() != 4 {
                return Err(DataError::RaggedRow {
                    line,
                    expected: 4,
                    found: rec.len(),
                });
            }
            if k == 0 && rec[0].eq_ignore_ascii_case("predicate_id") {
                continue;
            }
            let parse_int = |field: &str, what: &str| {
                field.parse::<u64>().map_err(|_| DataError::BadField {
                    line,
                    message: format!("{what} must be a non-negative integer, found {field:?}"),
                })
            };
            let loc = PredicateLocation {
                module_id: rec[1].to_owned(),
                node_id: parse_int(&rec[2], "node_id")?,
                line: parse_int(&rec[3], "line")?,
            };
            map.insert(&rec[0], loc)?;
        }
        Ok(map)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["predicate_id", "module_id", "node_id", "line"])?;
        for (p, loc) in &self.entries {
            w.write_record([
                p.as_str(),
                loc.module_id.as_str(),
                &loc.node_id.to_string(),
                &loc.line.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn load_predicate_map(path: impl AsRef<Path>) -> Result<PredicateMap> {
    PredicateMap::read_csv(open(path.as_ref())?)
}

pub fn write_predicate_map(map: &PredicateMap, path: impl AsRef<Path>) -> Result<()> {
    map.write_csv(create(path.as_ref())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Control,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
}

#[derive(Serialize, Deserialize)]
struct PdgFile {
    nodes: Vec<NodeId>,
    #[serde(default)]
    edges: Vec<Edge>,
}

/// Statement-level dependence graph. Nodes and edges are kept sorted and
/// deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProgramDependenceGraph {
    nodes: BTreeSet<NodeId>,
    edges: BTreeSet<Edge>,
}

impl ProgramDependenceGraph {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        for e in &edges {
            for end in [e.from, e.to] {
                if !nodes.contains(&end) {
                    return Err(DataError::UnknownNode(end));
                }
            }
        }
        Ok(ProgramDependenceGraph { nodes, edges })
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    /// Undirected adjacency, edge kinds ignored, neighbor lists sorted.
    pub fn undirected_adjacency(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> = self.nodes.iter().map(|&n| (n, BTreeSet::new())).collect();
        for e in &self.edges {
            adj.get_mut(&e.from).expect("endpoint checked").insert(e.to);
            adj.get_mut(&e.to).expect("endpoint checked").insert(e.from);
        }
        adj.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: PdgFile = serde_json::from_str(text)?;
        Self::new(raw.nodes, raw.edges)
    }

    pub fn to_json(&self) -> String {
        let raw = PdgFile {
            nodes: self.nodes.iter().copied().collect(),
            edges: self.edges.iter().copied().collect(),
        };
        serde_json::to_string_pretty(&raw).expect("serializable")
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_string(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
}

pub fn load_pdg(path: impl AsRef<Path>) -> Result<ProgramDependenceGraph> {
    ProgramDependenceGraph::from_json(&read_to_string(path.as_ref())?)
}

pub fn write_pdg(pdg: &ProgramDependenceGraph, path: impl AsRef<Path>) -> Result<()> {
    write_string(path.as_ref(), &(pdg.to_json() + "\n"))
}

/// Known fault locations for one faulty program version.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub faulty_nodes: BTreeSet<NodeId>,
    pub fault_predicates: BTreeSet<String>,
}

impl GroundTruth {
    pub fn check(&self, pdg: &ProgramDependenceGraph, matrix: &CoverageMatrix) -> Result<()> {
        if self.faulty_nodes.is_empty() {
            return Err(DataError::EmptyGroundTruth("faulty nodes"));
        }
        if self.fault_predicates.is_empty() {
            return Err(DataError::EmptyGroundTruth("fault predicates"));
        }
        if let Some(&n) = self.faulty_nodes.iter().find(|n| !pdg.contains(**n)) {
            return Err(DataError::UnknownNode(n));
        }
        if let Some(p) = self
            .fault_predicates
            .iter()
            .find(|p| matrix.predicate_index(p).is_none())
        {
            return Err(DataError::UnknownPredicate(p.clone()));
        }
        Ok(())
    }
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    Ok(serde_json::from_str(&read_to_string(path.as_ref())?)?)
}

pub fn write_ground_truth(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(truth).expect("serializable");
    write_string(path.as_ref(), &(text + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn parses_small_binary_matrix() {
        let m = CoverageMatrix::read_csv("run_id,p1,p2\nr1,0,1\nr2,1,1\n".as_bytes()).unwrap();
        assert_eq!(m.run_ids(), ["r1", "r2"]);
        assert_eq!(m.predicate_ids(), ["p1", "p2"]);
        assert_eq!(m.cells(), &ndarray::arr2(&[[0u8, 1], [1, 1]]));
    }

    #[test]
    fn counts_are_binarized() {
        let m = CoverageMatrix::read_csv("run_id,p1\nr1,7\nr2,0.0\n".as_bytes()).unwrap();
        assert_eq!(m.cells()[[0, 0]], 1);
        assert_eq!(m.cells()[[1, 0]], 0);
    }

    #[test]
    fn coverage_errors() {
        let ragged = CoverageMatrix::read_csv("run_id,p1,p2\nr1,0,1,1\n".as_bytes());
        assert!(matches!(
            ragged,
            Err(DataError::RaggedRow {
                line: 2,
                expected: 3,
                found: 4
            })
        ));

        let header = CoverageMatrix::read_csv("run,p1\nr1,0\n".as_bytes());
        assert!(matches!(header, Err(DataError::MalformedHeader(_))));
        assert!(matches!(
            CoverageMatrix::read_csv("".as_bytes()),
            Err(DataError::MalformedHeader(_))
        ));

        let cell = CoverageMatrix::read_csv("run_id,p1\nr1,x\n".as_bytes());
        assert!(matches!(cell, Err(DataError::NonNumericCell { .. })));

        let dup_run = CoverageMatrix::read_csv("run_id,p1\nr1,0\nr1,1\n".as_bytes());
        assert!(matches!(dup_run, Err(DataError::DuplicateRunId(r)) if r == "r1"));

        let dup_pred = CoverageMatrix::read_csv("run_id,p1,p1\nr1,0,1\n".as_bytes());
        assert!(matches!(dup_pred, Err(DataError::DuplicatePredicateId(_))));
    }

    #[test]
    fn canonical_coverage_round_trips_byte_for_byte() {
        let text = "run_id,p1,p2,p3\nr1,0,1,0\nr2,1,1,0\nr3,0,0,1\n";
        let m = CoverageMatrix::read_csv(text.as_bytes()).unwrap();
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn outcomes_parse_case_insensitively() {
        let o = OutcomeVector::read_csv("r1,pass\nr2,fail\n".as_bytes()).unwrap();
        assert_eq!(o.labels(), [Outcome::Pass, Outcome::Fail]);
        let o = OutcomeVector::read_csv("run_id,outcome\nr1,FAIL\n".as_bytes()).unwrap();
        assert_eq!(o.labels(), [Outcome::Fail]);
        assert!(matches!(
            OutcomeVector::read_csv("r1,crash\n".as_bytes()),
            Err(DataError::UnknownOutcomeToken { token, .. }) if token == "crash"
        ));
        assert!(matches!(
            OutcomeVector::read_csv("r1,pass\nr1,fail\n".as_bytes()),
            Err(DataError::DuplicateRunId(_))
        ));
    }

    fn three_runs() -> CoverageMatrix {
        CoverageMatrix::read_csv("run_id,p1\nr1,0\nr2,1\nr3,1\n".as_bytes()).unwrap()
    }

    #[test]
    fn validate_aligns_to_matrix_order() {
        let o = OutcomeVector::read_csv("r3,fail\nr1,pass\nr2,pass\n".as_bytes()).unwrap();
        let d = validate_dataset(three_runs(), o).unwrap();
        assert_eq!(d.outcomes().run_ids(), ["r1", "r2", "r3"]);
        assert_eq!(d.outcomes().labels(), [Outcome::Pass, Outcome::Pass, Outcome::Fail]);
        assert_eq!(
            d.summary(),
            DatasetSummary {
                m: 3,
                n: 1,
                n_fail: 1,
                n_pass: 2
            }
        );
        assert_eq!(d.response::<f64>(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn validate_rejects_mismatch_and_all_pass() {
        let missing = OutcomeVector::read_csv("r1,pass\nr3,fail\n".as_bytes()).unwrap();
        match validate_dataset(three_runs(), missing) {
            Err(DataError::RunSetMismatch {
                missing_from_outcomes,
                missing_from_coverage,
            }) => {
                assert_eq!(missing_from_outcomes, ["r2"]);
                assert!(missing_from_coverage.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
        let all_pass = OutcomeVector::read_csv("r1,pass\nr2,pass\nr3,pass\n".as_bytes()).unwrap();
        assert!(matches!(
            validate_dataset(three_runs(), all_pass),
            Err(DataError::NoFailingRuns)
        ));
    }

    #[test]
    fn predicate_map_and_pdg_checks() {
        let m = CoverageMatrix::read_csv("run_id,p1,p2\nr1,0,1\n".as_bytes()).unwrap();
        let map =
            PredicateMap::read_csv("predicate_id,module_id,node_id,line\np1,main,1,10\np2,main,2,12\n".as_bytes())
                .unwrap();
        let pdg = ProgramDependenceGraph::from_json(
            r#"{"nodes":[1,2,3],"edges":[{"from":1,"to":2,"kind":"control"},{"from":1,"to":2,"kind":"control"}]}"#,
        )
        .unwrap();
        assert_eq!(pdg.edges().len(), 1);
        map.check(&m, Some(&pdg)).unwrap();

        let small = ProgramDependenceGraph::from_json(r#"{"nodes":[1],"edges":[]}"#).unwrap();
        assert!(matches!(map.check(&m, Some(&small)), Err(DataError::UnknownNode(2))));

        let partial = PredicateMap::read_csv("p1,main,1,10\n".as_bytes()).unwrap();
        assert!(matches!(partial.check(&m, None), Err(DataError::MissingPredicate(p)) if p == "p2"));

        assert!(matches!(
            PredicateMap::read_csv("p1,main,1,10\np1,main,2,11\n".as_bytes()),
            Err(DataError::DuplicatePredicateId(_))
        ));
        assert!(matches!(
            ProgramDependenceGraph::from_json(r#"{"nodes":[1],"edges":[{"from":1,"to":9,"kind":"data"}]}"#),
            Err(DataError::UnknownNode(9))
        ));
    }

    #[test]
    fn ground_truth_json_shape() {
        let gt: GroundTruth = serde_json::from_str(r#"{"faulty_nodes":[3],"fault_predicates":["p2"]}"#).unwrap();
        assert!(gt.faulty_nodes.contains(&3));
        let m = CoverageMatrix::read_csv("run_id,p1,p2\nr1,0,1\n".as_bytes()).unwrap();
        let pdg = ProgramDependenceGraph::new([1, 2, 3], []).unwrap();
        gt.check(&pdg, &m).unwrap();
        let empty = GroundTruth::default();
        assert!(matches!(empty.check(&pdg, &m), Err(DataError::EmptyGroundTruth(_))));
    }

    proptest! {
        #[test]
        fn binarization_is_idempotent(
            rows in proptest::collection::vec(proptest::collection::vec(0u32..5, 4), 1..8)
        ) {
            let m = rows.len();
            let counts: String = rows.iter().enumerate().map(|(i, r)| {
                let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
                format!("r{},{}\n", i, cells.join(","))
            }).collect();
            let binary: String = rows.iter().enumerate().map(|(i, r)| {
                let cells: Vec<String> = r.iter().map(|&v| u8::from(v != 0).to_string()).collect();
                format!("r{},{}\n", i, cells.join(","))
            }).collect();
            let header = format!("run_id,{}\n", ids("p", 4).join(","));
            let a = CoverageMatrix::read_csv(format!("{header}{counts}").as_bytes()).unwrap();
            let b = CoverageMatrix::read_csv(format!("{header}{binary}").as_bytes()).unwrap();
            prop_assert_eq!(a.n_runs(), m);
            prop_assert_eq!(a, b);
        }
    }
}
