//! Synthetic localization instances with known faults, and A/B experiments
//! over them.
//!
//! Runs cover predicates independently. When a failure context is
//! configured, a fraction of runs follow the fault's neighborhood: they
//! always reach the fault predicates and cover the nearby predicates with
//! high probability, while other runs rarely touch that neighborhood. A run
//! that covers a fault predicate fails with probability `1 - cc_rate`; a run
//! that does not fails with probability `noise_fail_rate`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enet::EnetConfig;
use crate::error::Result;
use crate::eval::EvalConfig;
use crate::metrics::{
    fit_fault_proneness, write_fault_labels, write_metrics, FaultPronenessModel, ModuleMetricsRecord,
    DEFAULT_THETA_HIGH, DEFAULT_THETA_LOW,
};
use crate::model::{
    validate_dataset, write_coverage, write_ground_truth, write_outcomes, write_pdg, write_predicate_map,
    CoverageMatrix, DataError, Dataset, Edge, EdgeKind, GroundTruth, NodeId, Outcome, OutcomeVector, PredicateLocation,
    PredicateMap, ProgramDependenceGraph,
};
use crate::pipeline::{
    create_dir, localize, to_json_line, write_json, CleaningSettings, Context, FaultPronenessSettings, InputPaths,
    Options, PipelineConfig, VERSION,
};

const REGENERATE_ATTEMPTS: u64 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("every generated instance had a single outcome class ({attempts} attempts)")]
    DegenerateInstance { attempts: u64 },
}

/// Runs that follow the fault's neighborhood in the dependence graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureContext {
    /// predicates in the neighborhood, fault predicates included
    pub size: usize,
    /// fraction of runs that follow the neighborhood
    pub run_rate: f64,
    /// coverage of neighborhood predicates by those runs
    pub density: f64,
    /// coverage of neighborhood predicates by all other runs
    pub stray_density: f64,
}

impl Default for FailureContext {
    fn default() -> Self {
        FailureContext {
            size: 10,
            run_rate: 0.3,
            density: 0.9,
            stray_density: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_predicates: usize,
    pub m_runs: usize,
    pub n_faults: usize,
    /// probability that a run covering a fault predicate still passes
    pub cc_rate: f64,
    /// probability that a run not covering any fault predicate fails
    pub noise_fail_rate: f64,
    /// base coverage probability of each predicate
    pub density: f64,
    /// sizes of predicate groups whose columns are forced identical
    pub duplicate_groups: Vec<usize>,
    /// `None` gives plain independent coverage for every predicate
    pub context: Option<FailureContext>,
    /// statement nodes that host no predicate
    pub extra_nodes: usize,
    pub n_modules: usize,
    /// scale the Halstead counts of fault-hosting modules
    pub inflate_metrics: bool,
    pub inflation: f64,
    /// size of the labeled corpus used to train the fault-proneness model
    pub training_modules: usize,
    pub training_fault_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_predicates: 200,
            m_runs: 100,
            n_faults: 1,
            cc_rate: 0.3,
            noise_fail_rate: 0.0,
            density: 0.3,
            duplicate_groups: Vec::new(),
            context: Some(FailureContext::default()),
            extra_nodes: 100,
            n_modules: 20,
            inflate_metrics: true,
            inflation: 2.5,
            training_modules: 200,
            training_fault_rate: 0.3,
            seed: 0,
        }
    }
}

fn rate_ok(v: f64, lo_open: bool, hi_open: bool) -> bool {
    let lo = if lo_open { v > 0.0 } else { v >= 0.0 };
    let hi = if hi_open { v < 1.0 } else { v <= 1.0 };
    lo && hi
}

impl SynthConfig {
    pub fn validate(&self) -> std::result::Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.n_predicates == 0 || self.m_runs < 2 {
            return bad("need at least one predicate and two runs".into());
        }
        if self.n_faults == 0 || self.n_faults > self.n_predicates {
            return bad(format!("n_faults {} outside [1, n_predicates]", self.n_faults));
        }
        if !rate_ok(self.cc_rate, false, true) {
            return bad(format!("cc_rate {} outside [0, 1)", self.cc_rate));
        }
        if !rate_ok(self.noise_fail_rate, false, true) {
            return bad(format!("noise_fail_rate {} outside [0, 1)", self.noise_fail_rate));
        }
        if !rate_ok(self.density, true, true) {
            return bad(format!("density {} outside (0, 1)", self.density));
        }
        if self.duplicate_groups.iter().any(|&g| g < 2) {
            return bad("duplicate groups need at least 2 members".into());
        }
        let dup_total: usize = self.duplicate_groups.iter().sum();
        if dup_total + self.n_faults > self.n_predicates {
            return bad("duplicate groups and faults exceed n_predicates".into());
        }
        if let Some(c) = &self.context {
            if c.size < self.n_faults || c.size > self.n_predicates {
                return bad(format!("context size {} outside [n_faults, n_predicates]", c.size));
            }
            for (name, v) in [
                ("run_rate", c.run_rate),
                ("density", c.density),
                ("stray_density", c.stray_density),
            ] {
                if !rate_ok(v, false, false) {
                    return bad(format!("context {name} {v} outside [0, 1]"));
                }
            }
        }
        if self.n_modules == 0 {
            return bad("n_modules must be positive".into());
        }
        if !(self.inflation >= 1.0) {
            return bad(format!("inflation {} below 1", self.inflation));
        }
        if !rate_ok(self.training_fault_rate, true, true) {
            return bad(format!(
                "training_fault_rate {} outside (0, 1)",
                self.training_fault_rate
            ));
        }
        Ok(())
    }
}

/// A generated instance with everything the pipeline reads plus the truth.
#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    pub pdg: ProgramDependenceGraph,
    pub pmap: PredicateMap,
    pub metrics: Vec<ModuleMetricsRecord>,
    pub training_metrics: Vec<ModuleMetricsRecord>,
    pub training_labels: BTreeMap<String, bool>,
    /// passing runs that covered a fault predicate
    pub cc_runs: BTreeSet<String>,
    /// seed that produced this instance (after any regeneration)
    pub seed: u64,
}

fn random_pdg(rng: &mut ChaCha8Rng, n_nodes: u64) -> ProgramDependenceGraph {
    let kind = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.5) {
            EdgeKind::Control
        } else {
            EdgeKind::Data
        }
    };
    let mut edges = Vec::new();
    // a spanning tree with local parents keeps nearby ids nearby in the graph
    for k in 2..=n_nodes {
        let lo = k.saturating_sub(4).max(1);
        let parent = rng.gen_range(lo..k);
        edges.push(Edge {
            from: parent,
            to: k,
            kind: kind(rng),
        });
    }
    for _ in 0..n_nodes / 5 {
        let a = rng.gen_range(1..=n_nodes);
        let b = (a + rng.gen_range(2..=10)).min(n_nodes);
        if a != b {
            edges.push(Edge {
                from: a,
                to: b,
                kind: kind(rng),
            });
        }
    }
    ProgramDependenceGraph::new(1..=n_nodes, edges).expect("endpoints are in range")
}

/// Predicates in BFS order from the fault nodes, faults first.
fn neighborhood(pdg: &ProgramDependenceGraph, node_of: &[NodeId], faults: &[usize], size: usize) -> BTreeSet<usize> {
    let pred_at: BTreeMap<NodeId, usize> = node_of.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let adj = pdg.undirected_adjacency();
    let mut block: BTreeSet<usize> = faults.iter().copied().collect();
    let mut seen: BTreeSet<NodeId> = faults.iter().map(|&f| node_of[f]).collect();
    let mut level = seen.clone();
    while block.len() < size && !level.is_empty() {
        let mut next = BTreeSet::new();
        for node in &level {
            if let Some(&p) = pred_at.get(node) {
                if block.len() < size {
                    block.insert(p);
                }
            }
            for &nb in adj.get(node).map(Vec::as_slice).unwrap_or_default() {
                if seen.insert(nb) {
                    next.insert(nb);
                }
            }
        }
        level = next;
    }
    block
}

fn module_record(rng: &mut ChaCha8Rng, id: String, inflate: Option<f64>) -> ModuleMetricsRecord {
    let n1: u64 = rng.gen_range(5..=20);
    let n2: u64 = rng.gen_range(5..=30);
    let total1 = (n1 as f64 * rng.gen_range(2.0..6.0)).round() as u64;
    let total2 = (n2 as f64 * rng.gen_range(2.0..6.0)).round() as u64;
    let scale = |v: u64| match inflate {
        Some(f) => (v as f64 * f).round() as u64,
        None => v,
    };
    ModuleMetricsRecord {
        module_id: id,
        loc: rng.gen_range(20..=120),
        n1: scale(n1),
        n2: scale(n2),
        total_operators: scale(total1),
        total_operands: scale(total2),
        cyclomatic: rng.gen_range(1..=12),
    }
}

fn generate_once(cfg: &SynthConfig, seed: u64) -> Option<SynthInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_predicates;
    let m = cfg.m_runs;
    let n_nodes = (n + cfg.extra_nodes) as u64;

    let pdg = random_pdg(&mut rng, n_nodes);
    let mut node_of: Vec<NodeId> = sample(&mut rng, n_nodes as usize, n)
        .into_iter()
        .map(|i| i as NodeId + 1)
        .collect();
    node_of.sort_unstable();
    let mut faults: Vec<usize> = sample(&mut rng, n, cfg.n_faults).into_vec();
    faults.sort_unstable();
    let is_fault: Vec<bool> = (0..n).map(|j| faults.contains(&j)).collect();
    let block = cfg
        .context
        .as_ref()
        .map(|c| neighborhood(&pdg, &node_of, &faults, c.size))
        .unwrap_or_default();

    let mut free: Vec<usize> = (0..n).filter(|&j| !is_fault[j]).collect();
    let mut groups = Vec::new();
    for &size in &cfg.duplicate_groups {
        let picks: Vec<usize> = sample(&mut rng, free.len(), size)
            .into_iter()
            .map(|i| free[i])
            .collect();
        free.retain(|j| !picks.contains(j));
        groups.push(picks);
    }

    let mut rows = vec![vec![0u8; n]; m];
    for row in rows.iter_mut() {
        let in_context = cfg.context.as_ref().is_some_and(|c| rng.gen_bool(c.run_rate));
        for (j, cell) in row.iter_mut().enumerate() {
            let p = match &cfg.context {
                Some(c) if block.contains(&j) => {
                    if !in_context {
                        c.stray_density
                    } else if is_fault[j] {
                        1.0
                    } else {
                        c.density
                    }
                }
                _ => cfg.density,
            };
            *cell = rng.gen_bool(p) as u8;
        }
        for g in &groups {
            let v = row[g[0]];
            for &j in &g[1..] {
                row[j] = v;
            }
        }
    }

    let mut labels = Vec::with_capacity(m);
    let mut cc_runs = BTreeSet::new();
    let run_ids: Vec<String> = (0..m).map(|i| format!("t{i:04}")).collect();
    for (i, row) in rows.iter().enumerate() {
        let covers = faults.iter().any(|&f| row[f] == 1);
        let fail = if covers {
            !rng.gen_bool(cfg.cc_rate)
        } else {
            rng.gen_bool(cfg.noise_fail_rate)
        };
        if covers && !fail {
            cc_runs.insert(run_ids[i].clone());
        }
        labels.push(if fail { Outcome::Fail } else { Outcome::Pass });
    }
    let n_fail = labels.iter().filter(|l| l.is_fail()).count();
    if n_fail == 0 || n_fail == m {
        return None;
    }

    let width = n.to_string().len().max(3);
    let pred_ids: Vec<String> = (0..n).map(|j| format!("p{j:0width$}")).collect();
    let matrix = CoverageMatrix::from_rows(run_ids.clone(), pred_ids.clone(), &rows).expect("binary rows");
    let dataset = validate_dataset(matrix, OutcomeVector::new(run_ids, labels).expect("unique run ids")).ok()?;

    let module_of = |node: NodeId| ((node - 1) as usize * cfg.n_modules) / n_nodes as usize;
    let module_name = |k: usize| format!("f{k:02}");
    let mut pmap = PredicateMap::new();
    for (j, id) in pred_ids.iter().enumerate() {
        let node = node_of[j];
        pmap.insert(
            id.clone(),
            PredicateLocation {
                module_id: module_name(module_of(node)),
                node_id: node,
                line: node,
            },
        )
        .expect("unique predicate ids");
    }
    let faulty_modules: BTreeSet<usize> = faults.iter().map(|&f| module_of(node_of[f])).collect();
    let inflation = cfg.inflate_metrics.then_some(cfg.inflation);
    let metrics = (0..cfg.n_modules)
        .map(|k| {
            module_record(
                &mut rng,
                module_name(k),
                inflation.filter(|_| faulty_modules.contains(&k)),
            )
        })
        .collect();
    let mut training_metrics = Vec::with_capacity(cfg.training_modules);
    let mut training_labels = BTreeMap::new();
    for k in 0..cfg.training_modules {
        let id = format!("train{k:04}");
        let faulty = rng.gen_bool(cfg.training_fault_rate);
        training_metrics.push(module_record(&mut rng, id.clone(), inflation.filter(|_| faulty)));
        training_labels.insert(id, faulty);
    }

    let truth = GroundTruth {
        faulty_nodes: faults.iter().map(|&f| node_of[f]).collect(),
        fault_predicates: faults.iter().map(|&f| pred_ids[f].clone()).collect(),
    };
    Some(SynthInstance {
        dataset,
        truth,
        pdg,
        pmap,
        metrics,
        training_metrics,
        training_labels,
        cc_runs,
        seed,
    })
}

/// Generates an instance from `cfg.seed`, moving to the next seed when the
/// outcomes come out single-class.
pub fn generate_instance(cfg: &SynthConfig) -> std::result::Result<SynthInstance, SynthError> {
    cfg.validate()?;
    (0..REGENERATE_ATTEMPTS)
        .find_map(|a| generate_once(cfg, cfg.seed.wrapping_add(a)))
        .ok_or(SynthError::DegenerateInstance {
            attempts: REGENERATE_ATTEMPTS,
        })
}

/// Writes the instance in the standard file formats plus a `pipeline.json`
/// that runs the full pipeline on it; returns the config path.
pub fn write_instance(inst: &SynthInstance, dir: &Path) -> Result<PathBuf> {
    create_dir(dir)?;
    let (matrix, outcomes) = (inst.dataset.matrix(), inst.dataset.outcomes());
    write_coverage(matrix, dir.join("coverage.csv"))?;
    write_outcomes(outcomes, dir.join("outcomes.csv"))?;
    write_predicate_map(&inst.pmap, dir.join("predicate_map.csv"))?;
    write_pdg(&inst.pdg, dir.join("pdg.json"))?;
    write_ground_truth(&inst.truth, dir.join("ground_truth.json"))?;
    write_metrics(&inst.metrics, dir.join("metrics.csv"))?;
    write_metrics(&inst.training_metrics, dir.join("training_metrics.csv"))?;
    let labels = std::fs::File::create(dir.join("fault_labels.csv")).map_err(|source| DataError::Io {
        path: dir.join("fault_labels.csv"),
        source,
    })?;
    write_fault_labels(&inst.training_labels, labels)?;
    write_json(&dir.join("cc_runs.json"), &inst.cc_runs)?;

    let config = PipelineConfig {
        inputs: InputPaths {
            coverage: "coverage.csv".into(),
            outcomes: "outcomes.csv".into(),
            predicate_map: Some("predicate_map.csv".into()),
            pdg: Some("pdg.json".into()),
            metrics: Some("metrics.csv".into()),
            ground_truth: Some("ground_truth.json".into()),
        },
        cleaning: CleaningSettings {
            seed: inst.seed,
            ..Default::default()
        },
        fault_proneness: FaultPronenessSettings {
            training_metrics: Some("training_metrics.csv".into()),
            training_labels: Some("fault_labels.csv".into()),
            ..Default::default()
        },
        enet: EnetConfig {
            seed: inst.seed,
            ..Default::default()
        },
        evaluation: EvalConfig::default(),
        output_dir: "out".into(),
    };
    let path = dir.join("pipeline.json");
    crate::model::write_string(&path, &to_json_line(&config))?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toggles {
    pub cleaning: bool,
    pub penalty_factors: bool,
}

impl Toggles {
    /// All four on/off combinations.
    pub fn all() -> Vec<Toggles> {
        [(false, false), (true, false), (false, true), (true, true)]
            .map(|(cleaning, penalty_factors)| Toggles {
                cleaning,
                penalty_factors,
            })
            .to_vec()
    }
}

/// Stage settings shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub cleaning_k: Option<usize>,
    pub theta_low: f64,
    pub theta_high: f64,
    pub enet: EnetConfig,
    pub evaluation: EvalConfig,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            cleaning_k: None,
            theta_low: DEFAULT_THETA_LOW,
            theta_high: DEFAULT_THETA_HIGH,
            enet: EnetConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub p_score: f64,
    pub t_score: f64,
    /// 1-based rank of the first fault predicate, if listed
    pub fault_rank: Option<usize>,
    pub list_len: usize,
    pub true_cc: usize,
    pub identified_cc: usize,
    pub correctly_identified_cc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub p_mean: f64,
    pub p_median: f64,
    pub t_mean: f64,
    pub t_median: f64,
    /// pooled over seeds; `None` when nothing was identified
    pub cc_precision: Option<f64>,
    /// pooled over seeds; `None` when no run was coincidentally correct
    pub cc_recall: Option<f64>,
    pub mean_fault_rank: Option<f64>,
    pub fault_not_listed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationReport {
    pub toggles: Toggles,
    pub summary: Summary,
    pub runs: Vec<SeedOutcome>,
}

/// `experiment_report.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub synth: SynthConfig,
    pub settings: ExperimentSettings,
    pub repetitions: usize,
    pub combinations: Vec<CombinationReport>,
}

impl ExperimentReport {
    pub fn combination(&self, toggles: Toggles) -> Option<&CombinationReport> {
        self.combinations.iter().find(|c| c.toggles == toggles)
    }

    pub fn to_json(&self) -> String {
        to_json_line(self)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn summarize(runs: &[SeedOutcome]) -> Summary {
    let p: Vec<f64> = runs.iter().map(|r| r.p_score).collect();
    let t: Vec<f64> = runs.iter().map(|r| r.t_score).collect();
    let ranks: Vec<f64> = runs.iter().filter_map(|r| r.fault_rank.map(|k| k as f64)).collect();
    let hits: usize = runs.iter().map(|r| r.correctly_identified_cc).sum();
    let identified: usize = runs.iter().map(|r| r.identified_cc).sum();
    let truth: usize = runs.iter().map(|r| r.true_cc).sum();
    Summary {
        p_mean: mean(&p),
        p_median: median(&p),
        t_mean: mean(&t),
        t_median: median(&t),
        cc_precision: (identified > 0).then(|| hits as f64 / identified as f64),
        cc_recall: (truth > 0).then(|| hits as f64 / truth as f64),
        mean_fault_rank: (!ranks.is_empty()).then(|| mean(&ranks)),
        fault_not_listed: runs.len() - ranks.len(),
    }
}

/// Runs every toggle combination on `repetitions` instances seeded
/// `cfg.seed, cfg.seed + 1, ...`. Within a seed all combinations share the
/// clustering and fold seeds, so differences come from the toggles alone.
pub fn run_experiment(
    cfg: &SynthConfig,
    repetitions: usize,
    toggles: &[Toggles],
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    if repetitions == 0 {
        return Err(SynthError::Config("repetitions must be at least 1".into()).into());
    }
    let mut runs: Vec<Vec<SeedOutcome>> = vec![Vec::with_capacity(repetitions); toggles.len()];
    for r in 0..repetitions {
        let seed = cfg.seed.wrapping_add(r as u64);
        let inst = generate_instance(&SynthConfig { seed, ..cfg.clone() })?;
        let fp_model: Option<FaultPronenessModel<f64>> = if toggles.iter().any(|t| t.penalty_factors) {
            Some(fit_fault_proneness(
                &inst.training_metrics,
                &inst.training_labels,
                settings.theta_low,
                settings.theta_high,
            )?)
        } else {
            None
        };
        let cleaning = CleaningSettings {
            enabled: true,
            k: settings.cleaning_k,
            seed,
        };
        let enet = EnetConfig {
            seed,
            ..settings.enet.clone()
        };
        let ctx = Context {
            pmap: Some(&inst.pmap),
            pdg: Some(&inst.pdg),
            metrics: Some(&inst.metrics),
            truth: Some(&inst.truth),
        };
        for (t, out) in toggles.iter().zip(runs.iter_mut()) {
            let opts = Options {
                cleaning: t.cleaning.then_some(&cleaning),
                fp_model: if t.penalty_factors { fp_model.as_ref() } else { None },
                theta_low: settings.theta_low,
                theta_high: settings.theta_high,
                enet: &enet,
                evaluation: &settings.evaluation,
            };
            let loc = localize(&inst.dataset, &ctx, &opts)?;
            let ev = loc.evaluation.expect("ground truth is supplied");
            let identified: BTreeSet<&String> = loc.cleaning.iter().flat_map(|c| c.cc_runs.iter()).collect();
            out.push(SeedOutcome {
                seed: inst.seed,
                p_score: ev.p_score.score,
                t_score: ev.t_percent(),
                fault_rank: ev.p_score.pred_index,
                list_len: ev.p_score.list_len,
                true_cc: inst.cc_runs.len(),
                identified_cc: identified.len(),
                correctly_identified_cc: inst.cc_runs.iter().filter(|r| identified.contains(r)).count(),
            });
        }
    }
    Ok(ExperimentReport {
        version: VERSION.to_string(),
        synth: cfg.clone(),
        settings: settings.clone(),
        repetitions,
        combinations: toggles
            .iter()
            .zip(runs)
            .map(|(&toggles, runs)| CombinationReport {
                toggles,
                summary: summarize(&runs),
                runs,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_predicates: 30,
            m_runs: 60,
            extra_nodes: 10,
            n_modules: 5,
            training_modules: 40,
            ..Default::default()
        }
    }

    #[test]
    fn config_bounds() {
        assert!(SynthConfig::default().validate().is_ok());
        let bad = [
            SynthConfig {
                cc_rate: 1.0,
                ..small()
            },
            SynthConfig {
                n_faults: 31,
                ..small()
            },
            SynthConfig {
                density: 0.0,
                ..small()
            },
            SynthConfig {
                duplicate_groups: vec![1],
                ..small()
            },
        ];
        for c in bad {
            assert!(matches!(generate_instance(&c), Err(SynthError::Config(_))));
        }
    }

    #[test]
    fn fails_iff_fault_covered_without_cc_or_noise() {
        for seed in 0..5 {
            let cfg = SynthConfig {
                cc_rate: 0.0,
                noise_fail_rate: 0.0,
                seed,
                ..small()
            };
            let inst = generate_instance(&cfg).unwrap();
            let m = inst.dataset.matrix();
            let faults: Vec<usize> = inst
                .truth
                .fault_predicates
                .iter()
                .map(|p| m.predicate_index(p).unwrap())
                .collect();
            for (i, label) in inst.dataset.outcomes().labels().iter().enumerate() {
                let covers = faults.iter().any(|&f| m.cells()[[i, f]] == 1);
                assert_eq!(covers, label.is_fail());
            }
            assert!(inst.cc_runs.is_empty());
        }
    }

    #[test]
    fn duplicate_groups_are_identical() {
        let cfg = SynthConfig {
            duplicate_groups: vec![3, 2],
            ..small()
        };
        let inst = generate_instance(&cfg).unwrap();
        let m = inst.dataset.matrix();
        let mut identical_pairs = 0;
        for a in 0..m.n_predicates() {
            for b in a + 1..m.n_predicates() {
                if m.column(a) == m.column(b) {
                    identical_pairs += 1;
                }
            }
        }
        // 3 pairs in the triple, 1 in the pair, plus any chance coincidences
        assert!(identical_pairs >= 4);
    }

    #[test]
    fn deterministic() {
        let a = generate_instance(&small()).unwrap();
        let b = generate_instance(&small()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.pdg, b.pdg);
        assert_eq!(a.metrics, b.metrics);
        let c = generate_instance(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn pdg_is_connected() {
        let inst = generate_instance(&small()).unwrap();
        let adj = inst.pdg.undirected_adjacency();
        let mut seen = BTreeSet::from([1u64]);
        let mut stack = vec![1u64];
        while let Some(u) = stack.pop() {
            for &v in adj.get(&u).map(Vec::as_slice).unwrap_or_default() {
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        assert_eq!(seen.len(), inst.pdg.n_nodes());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
