//! Predicate ranking, predictor groups, and localization scores.
//!
//! T-score is the percentage of dependence-graph nodes a breadth-first
//! search from the reported statements dequeues before reaching a faulty
//! one. P-score is the 1-based position of the first fault predicate in the
//! ranked list as a percentage of the list length.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enet::FitResult;
use crate::model::{CoverageMatrix, NodeId, PredicateMap, ProgramDependenceGraph};
use crate::scalar::Scalar;

pub const DEFAULT_GROUP_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("node {0} is not in the dependence graph")]
    UnknownNode(NodeId),
    #[error("the {0} node set is empty")]
    EmptyNodeSet(&'static str),
    #[error("predicate {0:?} has no entry in the predicate map")]
    UnmappedPredicate(String),
    #[error("predicate {0:?} is not a column of the coverage matrix")]
    UnknownPredicate(String),
    #[error("top_k must be positive")]
    ZeroTopK,
    #[error("group threshold {0} outside [0, 1]")]
    BadThreshold(f64),
}

/// Conditions worth reporting that do not stop evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// every coefficient is zero
    EmptyModel,
    /// P-score of an empty list
    EmptyRankedList,
    /// no fault predicate in the ranked list
    NotInList,
    /// BFS never reached a faulty node
    Unreachable,
    /// the solver hit its sweep limit
    NonConvergence,
    /// cleaning would have left too few passing runs to fit, so the original
    /// labels were kept
    CleaningDiscarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub predicate_id: String,
    pub coefficient: f64,
    /// `|coefficient|`
    pub score: f64,
}

/// Predicates with nonzero coefficients, most suspicious first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.predicate_id.as_str())
    }

    /// 1-based position of `id`.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids().position(|p| p == id).map(|i| i + 1)
    }
}

/// Sorts nonzero coefficients by magnitude, descending, ties by id.
pub fn rank_coefficients<F: Scalar>(predicate_ids: &[String], coefficients: &[F]) -> RankedList {
    let mut entries: Vec<RankedEntry> = predicate_ids
        .iter()
        .zip(coefficients)
        .filter(|(_, c)| **c != F::zero())
        .map(|(id, &c)| RankedEntry {
            predicate_id: id.clone(),
            coefficient: c.as_f64(),
            score: c.abs().as_f64(),
        })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.predicate_id.cmp(&b.predicate_id))
    });
    RankedList { entries }
}

/// Ranking of a fitted model; an all-zero model gives an empty list and
/// [`Flag::EmptyModel`].
pub fn rank_predicates<F: Scalar>(fit: &FitResult<F>) -> (RankedList, Option<Flag>) {
    let ranked = rank_coefficients(&fit.predicate_ids, &fit.coefficients);
    if ranked.is_empty() {
        log::warn!("every coefficient is zero; the ranked list is empty");
        (ranked, Some(Flag::EmptyModel))
    } else {
        (ranked, None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorGroups {
    pub threshold: f64,
    /// each group in rank order; groups ordered by their best member
    pub groups: Vec<Vec<String>>,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Union-find over ranked predicates whose columns have
/// `|Pearson correlation| >= threshold`; membership is transitive.
pub fn group_predictors(
    ranked: &RankedList,
    matrix: &CoverageMatrix,
    threshold: f64,
) -> Result<PredictorGroups, EvalError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(EvalError::BadThreshold(threshold));
    }
    let cols: Vec<Vec<f64>> = ranked
        .ids()
        .map(|id| {
            let j = matrix
                .predicate_index(id)
                .ok_or_else(|| EvalError::UnknownPredicate(id.to_string()))?;
            Ok(matrix.column(j).iter().map(|&v| v as f64).collect())
        })
        .collect::<Result<_, EvalError>>()?;
    let k = cols.len();
    let mut parent: Vec<usize> = (0..k).collect();
    for a in 0..k {
        for b in a + 1..k {
            // a tiny slack so identical columns join at threshold 1
            if pearson(&cols[a], &cols[b]).abs() >= threshold - 1e-12 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, e) in ranked.entries.iter().enumerate() {
        let r = find(&mut parent, i);
        by_root.entry(r).or_default().push(e.predicate_id.clone());
    }
    // the root of each group is its best-ranked member
    Ok(PredictorGroups {
        threshold,
        groups: by_root.into_values().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TScoreResult {
    pub n_examined: usize,
    pub n_total: usize,
    pub score: f64,
    pub unreachable: bool,
}

/// Multi-source BFS over the undirected graph from `suspicious`, dequeuing
/// in (depth, node id) order and stopping at the first node of `origin`.
pub fn t_score(
    pdg: &ProgramDependenceGraph,
    suspicious: &BTreeSet<NodeId>,
    origin: &BTreeSet<NodeId>,
) -> Result<TScoreResult, EvalError> {
    if suspicious.is_empty() {
        return Err(EvalError::EmptyNodeSet("suspicious"));
    }
    if origin.is_empty() {
        return Err(EvalError::EmptyNodeSet("origin"));
    }
    if let Some(&n) = suspicious.iter().chain(origin).find(|n| !pdg.contains(**n)) {
        return Err(EvalError::UnknownNode(n));
    }
    let n_total = pdg.n_nodes();
    let adj = pdg.undirected_adjacency();
    let mut seen: BTreeSet<NodeId> = suspicious.clone();
    let mut level: BTreeSet<NodeId> = suspicious.clone();
    let mut examined = 0;
    while !level.is_empty() {
        let mut next = BTreeSet::new();
        for &node in &level {
            examined += 1;
            if origin.contains(&node) {
                return Ok(TScoreResult {
                    n_examined: examined,
                    n_total,
                    score: 100.0 * examined as f64 / n_total as f64,
                    unreachable: false,
                });
            }
            for &nb in adj.get(&node).map(Vec::as_slice).unwrap_or_default() {
                if seen.insert(nb) {
                    next.insert(nb);
                }
            }
        }
        level = next;
    }
    Ok(TScoreResult {
        n_examined: n_total,
        n_total,
        score: 100.0,
        unreachable: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PScoreResult {
    /// 1-based position of the first fault predicate, if listed
    pub pred_index: Option<usize>,
    pub list_len: usize,
    pub score: f64,
    pub flag: Option<Flag>,
}

/// `100 * pred_index / |L|`; 100 with a flag when the list is empty or
/// holds no fault predicate.
pub fn p_score(ranked: &RankedList, fault_predicates: &BTreeSet<String>) -> PScoreResult {
    let list_len = ranked.len();
    if list_len == 0 {
        return PScoreResult {
            pred_index: None,
            list_len,
            score: 100.0,
            flag: Some(Flag::EmptyRankedList),
        };
    }
    match ranked.ids().position(|id| fault_predicates.contains(id)) {
        Some(i) => PScoreResult {
            pred_index: Some(i + 1),
            list_len,
            score: 100.0 * (i + 1) as f64 / list_len as f64,
            flag: None,
        },
        None => PScoreResult {
            pred_index: None,
            list_len,
            score: 100.0,
            flag: Some(Flag::NotInList),
        },
    }
}

/// Statement nodes of the `top_k` best-ranked predicates, deduplicated.
pub fn suspicious_nodes_from_ranking(
    ranked: &RankedList,
    pmap: &PredicateMap,
    top_k: usize,
) -> Result<BTreeSet<NodeId>, EvalError> {
    if top_k == 0 {
        return Err(EvalError::ZeroTopK);
    }
    ranked
        .ids()
        .take(top_k)
        .map(|id| {
            pmap.get(id)
                .map(|loc| loc.node_id)
                .ok_or_else(|| EvalError::UnmappedPredicate(id.to_string()))
        })
        .collect()
}

/// Size of the top-ranked predictor group, or 1 without groups.
pub fn default_top_k(groups: &PredictorGroups) -> usize {
    groups.groups.first().map_or(1, Vec::len)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub group_threshold: f64,
    /// `None` uses every member of the top predictor group
    pub top_k: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            group_threshold: DEFAULT_GROUP_THRESHOLD,
            top_k: None,
        }
    }
}

/// Everything the `evaluate` stage reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub ranking: Vec<RankedEntry>,
    pub groups: Vec<Vec<String>>,
    pub group_threshold: f64,
    pub top_k: usize,
    pub suspicious_nodes: Vec<NodeId>,
    /// absent when nothing was ranked
    pub t_score: Option<TScoreResult>,
    pub p_score: PScoreResult,
    pub flags: Vec<Flag>,
}

impl EvaluationReport {
    /// T-score percentage, 100 when nothing was ranked.
    pub fn t_percent(&self) -> f64 {
        self.t_score.as_ref().map_or(100.0, |t| t.score)
    }
}

/// Ranks, groups, maps the top predicates to statements and scores them
/// against the known faults.
pub fn evaluate<F: Scalar>(
    fit: &FitResult<F>,
    matrix: &CoverageMatrix,
    pmap: &PredicateMap,
    pdg: &ProgramDependenceGraph,
    faulty_nodes: &BTreeSet<NodeId>,
    fault_predicates: &BTreeSet<String>,
    config: &EvalConfig,
) -> Result<EvaluationReport, EvalError> {
    let mut flags = Vec::new();
    if !fit.diagnostics.converged {
        flags.push(Flag::NonConvergence);
    }
    let (ranked, empty) = rank_predicates(fit);
    flags.extend(empty);
    let groups = group_predictors(&ranked, matrix, config.group_threshold)?;
    let top_k = config.top_k.unwrap_or_else(|| default_top_k(&groups));
    let suspicious = if ranked.is_empty() {
        BTreeSet::new()
    } else {
        suspicious_nodes_from_ranking(&ranked, pmap, top_k)?
    };
    let t = if suspicious.is_empty() {
        None
    } else {
        let t = t_score(pdg, &suspicious, faulty_nodes)?;
        if t.unreachable {
            flags.push(Flag::Unreachable);
        }
        Some(t)
    };
    let p = p_score(&ranked, fault_predicates);
    flags.extend(p.flag);
    flags.sort();
    flags.dedup();
    Ok(EvaluationReport {
        ranking: ranked.entries,
        groups: groups.groups,
        group_threshold: config.group_threshold,
        top_k,
        suspicious_nodes: suspicious.into_iter().collect(),
        t_score: t,
        p_score: p,
        flags,
    })
}
