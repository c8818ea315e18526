//! End-to-end localization: clean, estimate fault-proneness, derive penalty
//! factors, fit, rank and evaluate.
//!
//! [`localize`] works on in-memory inputs; [`run_pipeline`] reads the files
//! named by a [`PipelineConfig`] and writes `fit.json`, `ranking.json`,
//! `evaluation.json` and `pipeline_report.json` to its output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cleaning::{clean, CleaningReport};
use crate::enet::{self, EnetConfig, FitResult};
use crate::error::{Error, Result};
use crate::eval::{self, group_predictors, rank_predicates, EvalConfig, EvaluationReport, Flag, RankedEntry};
use crate::metrics::{
    check_thetas, fit_fault_proneness, load_fault_labels, load_metrics, penalty_factors, predicate_fault_proneness,
    FaultPronenessModel, ModuleMetricsRecord, PenaltyFactors, DEFAULT_THETA_HIGH, DEFAULT_THETA_LOW,
};
use crate::model::{
    load_coverage, load_ground_truth, load_outcomes, load_pdg, load_predicate_map, validate_dataset, write_outcomes,
    write_string, Dataset, DatasetSummary, GroundTruth, OutcomeVector, PredicateMap, ProgramDependenceGraph,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub coverage: PathBuf,
    pub outcomes: PathBuf,
    #[serde(default)]
    pub predicate_map: Option<PathBuf>,
    #[serde(default)]
    pub pdg: Option<PathBuf>,
    #[serde(default)]
    pub metrics: Option<PathBuf>,
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningSettings {
    pub enabled: bool,
    /// `None` uses `max(2, round(sqrt(m / 2)))`
    pub k: Option<usize>,
    pub seed: u64,
}

impl Default for CleaningSettings {
    fn default() -> Self {
        CleaningSettings {
            enabled: true,
            k: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultPronenessSettings {
    pub enabled: bool,
    /// a saved model; takes precedence over training inputs
    pub model: Option<PathBuf>,
    /// metrics of the training modules; defaults to `inputs.metrics`
    pub training_metrics: Option<PathBuf>,
    pub training_labels: Option<PathBuf>,
    pub theta_low: f64,
    pub theta_high: f64,
}

impl Default for FaultPronenessSettings {
    fn default() -> Self {
        FaultPronenessSettings {
            enabled: true,
            model: None,
            training_metrics: None,
            training_labels: None,
            theta_low: DEFAULT_THETA_LOW,
            theta_high: DEFAULT_THETA_HIGH,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One JSON document describing a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    #[serde(default)]
    pub cleaning: CleaningSettings,
    #[serde(default)]
    pub fault_proneness: FaultPronenessSettings,
    #[serde(default)]
    pub enet: EnetConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl PipelineConfig {
    /// Parses and validates; relative paths are resolved against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        fix(&mut i.coverage);
        fix(&mut i.outcomes);
        for p in [&mut i.predicate_map, &mut i.pdg, &mut i.metrics, &mut i.ground_truth]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        let f = &mut self.fault_proneness;
        for p in [&mut f.model, &mut f.training_metrics, &mut f.training_labels]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    /// Sets both the clustering and the fold-split seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.cleaning.seed = seed;
        self.enet.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.enet.validate().map_err(|e| config_err(e.to_string()))?;
        let fp = &self.fault_proneness;
        check_thetas(fp.theta_low, fp.theta_high).map_err(|e| config_err(e.to_string()))?;
        if self.cleaning.k == Some(0) {
            return Err(config_err("cleaning.k must be positive"));
        }
        let th = self.evaluation.group_threshold;
        if !(0.0..=1.0).contains(&th) {
            return Err(config_err(format!("evaluation.group_threshold {th} outside [0, 1]")));
        }
        if self.evaluation.top_k == Some(0) {
            return Err(config_err("evaluation.top_k must be positive"));
        }
        if fp.enabled {
            if self.inputs.predicate_map.is_none() || self.inputs.metrics.is_none() {
                return Err(config_err(
                    "fault_proneness needs inputs.predicate_map and inputs.metrics",
                ));
            }
            if fp.model.is_none() && fp.training_labels.is_none() {
                return Err(config_err(
                    "fault_proneness needs a model or training_labels (or set enabled = false)",
                ));
            }
        }
        if self.inputs.ground_truth.is_some() && (self.inputs.pdg.is_none() || self.inputs.predicate_map.is_none()) {
            return Err(config_err(
                "evaluation against ground_truth needs inputs.pdg and inputs.predicate_map",
            ));
        }
        Ok(())
    }
}

/// Everything [`localize`] needs besides the dataset.
#[derive(Debug, Clone, Default)]
pub struct Context<'a> {
    pub pmap: Option<&'a PredicateMap>,
    pub pdg: Option<&'a ProgramDependenceGraph>,
    pub metrics: Option<&'a [ModuleMetricsRecord]>,
    pub truth: Option<&'a GroundTruth>,
}

#[derive(Debug, Clone)]
pub struct Options<'a> {
    /// `None` skips cleaning
    pub cleaning: Option<&'a CleaningSettings>,
    /// `None` uses uniform penalty factors
    pub fp_model: Option<&'a FaultPronenessModel<f64>>,
    pub theta_low: f64,
    pub theta_high: f64,
    pub enet: &'a EnetConfig,
    pub evaluation: &'a EvalConfig,
}

/// Ranked predicates and predictor groups, written as `ranking.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub ranking: Vec<RankedEntry>,
    pub groups: Vec<Vec<String>>,
    pub group_threshold: f64,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone)]
pub struct Localization {
    pub cleaning: Option<CleaningReport>,
    pub outcomes: OutcomeVector,
    pub fault_proneness: Option<Vec<f64>>,
    pub penalty: PenaltyFactors<f64>,
    pub fit: FitResult<f64>,
    pub ranking: RankingReport,
    pub evaluation: Option<EvaluationReport>,
}

/// Cleaning that leaves fewer passing runs than this is discarded: stratified
/// cross-validation needs a passing run in every training split.
pub const MIN_PASSING_AFTER_CLEANING: usize = 2;

/// Runs every stage on in-memory inputs.
pub fn localize(dataset: &Dataset, ctx: &Context<'_>, opts: &Options<'_>) -> Result<Localization> {
    let matrix = dataset.matrix();
    let mut discarded = false;
    let (cleaned, cleaning) = match opts.cleaning {
        Some(c) => {
            let (outcomes, report) = clean(matrix, dataset.outcomes(), c.k, c.seed)?;
            if outcomes.n_pass() < MIN_PASSING_AFTER_CLEANING {
                log::warn!(
                    "cleaning left {} passing runs; keeping the original labels",
                    outcomes.n_pass()
                );
                discarded = true;
                (dataset.clone(), Some(report))
            } else {
                (validate_dataset(matrix.clone(), outcomes)?, Some(report))
            }
        }
        None => (dataset.clone(), None),
    };

    let n = matrix.n_predicates();
    let (fault_proneness, penalty) = match opts.fp_model {
        Some(model) => {
            let (pmap, records) = ctx
                .pmap
                .zip(ctx.metrics)
                .ok_or_else(|| config_err("penalty factors need a predicate map and module metrics"))?;
            let fp = predicate_fault_proneness(model, records, pmap, matrix.predicate_ids())?;
            let v = penalty_factors(&fp, opts.theta_low, opts.theta_high)?;
            (Some(fp), v)
        }
        None => (None, PenaltyFactors::uniform(n)),
    };

    let fit: FitResult<f64> = enet::fit(&cleaned, &penalty.values, opts.enet)?;

    let (ranked, empty) = rank_predicates(&fit);
    let groups = group_predictors(&ranked, matrix, opts.evaluation.group_threshold)?;
    let mut flags: Vec<Flag> = empty.into_iter().collect();
    if !fit.diagnostics.converged {
        flags.push(Flag::NonConvergence);
    }
    if discarded {
        flags.push(Flag::CleaningDiscarded);
    }
    flags.sort();
    let ranking = RankingReport {
        ranking: ranked.entries,
        groups: groups.groups,
        group_threshold: groups.threshold,
        flags,
    };

    let evaluation = match (ctx.truth, ctx.pdg, ctx.pmap) {
        (Some(truth), Some(pdg), Some(pmap)) => Some(eval::evaluate(
            &fit,
            matrix,
            pmap,
            pdg,
            &truth.faulty_nodes,
            &truth.fault_predicates,
            opts.evaluation,
        )?),
        _ => None,
    };

    Ok(Localization {
        cleaning,
        outcomes: cleaned.outcomes().clone(),
        fault_proneness,
        penalty,
        fit,
        ranking,
        evaluation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningSummary {
    pub enabled: bool,
    pub k: Option<usize>,
    pub seed: u64,
    pub relabeled_runs: usize,
    pub cc_runs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub lambda: f64,
    pub alpha: f64,
    pub cv_error: Option<f64>,
    pub folds: Option<usize>,
    pub nonzero: usize,
    pub sweeps: usize,
    pub converged: bool,
    pub kkt_violation: f64,
}

/// `pipeline_report.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub version: String,
    pub config: PipelineConfig,
    pub dataset: DatasetSummary,
    pub cleaning: CleaningSummary,
    /// `"model"`, `"trained"` or `"uniform"`
    pub penalty_source: String,
    pub fit: FitSummary,
    pub t_score: Option<f64>,
    pub p_score: Option<f64>,
    pub flags: Vec<Flag>,
    pub outputs: BTreeMap<String, PathBuf>,
}

pub(crate) fn to_json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    Ok(write_string(path, &to_json_line(value))?)
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| {
        Error::Data(crate::model::DataError::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

/// Loads the configured fault-proneness model, training it if needed.
pub fn resolve_fp_model(cfg: &PipelineConfig) -> Result<Option<(FaultPronenessModel<f64>, &'static str)>> {
    let fp = &cfg.fault_proneness;
    if !fp.enabled {
        return Ok(None);
    }
    if let Some(path) = &fp.model {
        return Ok(Some((FaultPronenessModel::load(path)?, "model")));
    }
    let labels_path = fp
        .training_labels
        .as_ref()
        .ok_or_else(|| config_err("fault_proneness needs a model or training_labels"))?;
    let metrics_path = fp
        .training_metrics
        .as_ref()
        .or(cfg.inputs.metrics.as_ref())
        .ok_or_else(|| config_err("fault_proneness training needs metrics"))?;
    let records = load_metrics(metrics_path)?;
    let labels = load_fault_labels(labels_path)?;
    Ok(Some((
        fit_fault_proneness(&records, &labels, fp.theta_low, fp.theta_high)?,
        "trained",
    )))
}

/// Reads the configured inputs, runs [`localize`] and writes the reports.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let inputs = &cfg.inputs;
    let dataset = validate_dataset(load_coverage(&inputs.coverage)?, load_outcomes(&inputs.outcomes)?)?;
    let pmap = inputs.predicate_map.as_ref().map(load_predicate_map).transpose()?;
    let pdg = inputs.pdg.as_ref().map(load_pdg).transpose()?;
    let metrics = inputs.metrics.as_ref().map(load_metrics).transpose()?;
    let truth = inputs.ground_truth.as_ref().map(load_ground_truth).transpose()?;
    if let Some(pmap) = &pmap {
        pmap.check(dataset.matrix(), pdg.as_ref())?;
    }
    if let (Some(t), Some(g)) = (&truth, &pdg) {
        t.check(g, dataset.matrix())?;
    }
    let fp_model = resolve_fp_model(cfg)?;

    let ctx = Context {
        pmap: pmap.as_ref(),
        pdg: pdg.as_ref(),
        metrics: metrics.as_deref(),
        truth: truth.as_ref(),
    };
    let opts = Options {
        cleaning: cfg.cleaning.enabled.then_some(&cfg.cleaning),
        fp_model: fp_model.as_ref().map(|(m, _)| m),
        theta_low: cfg.fault_proneness.theta_low,
        theta_high: cfg.fault_proneness.theta_high,
        enet: &cfg.enet,
        evaluation: &cfg.evaluation,
    };
    let loc = localize(&dataset, &ctx, &opts)?;

    let out = &cfg.output_dir;
    create_dir(out)?;
    let mut outputs = BTreeMap::new();
    let mut put = |name: &str| {
        let p = out.join(name);
        outputs.insert(name.to_string(), p.clone());
        p
    };
    if let Some(report) = &loc.cleaning {
        write_outcomes(&loc.outcomes, put("cleaned_outcomes.csv"))?;
        write_json(&put("cleaning.json"), report)?;
    }
    loc.fit.save(put("fit.json"))?;
    write_json(&put("ranking.json"), &loc.ranking)?;
    if let Some(ev) = &loc.evaluation {
        write_json(&put("evaluation.json"), ev)?;
    }
    let report_path = put("pipeline_report.json");

    let mut flags = loc.ranking.flags.clone();
    if let Some(ev) = &loc.evaluation {
        flags.extend(ev.flags.iter().copied());
    }
    flags.sort();
    flags.dedup();
    let cv = loc.fit.cv.as_ref();
    let report = PipelineReport {
        version: VERSION.to_string(),
        config: cfg.clone(),
        dataset: dataset.summary(),
        cleaning: CleaningSummary {
            enabled: cfg.cleaning.enabled,
            k: loc.cleaning.as_ref().map(|c| c.k),
            seed: cfg.cleaning.seed,
            relabeled_runs: loc.outcomes.n_fail() - dataset.outcomes().n_fail(),
            cc_runs: loc.cleaning.as_ref().map(|c| c.cc_runs.clone()).unwrap_or_default(),
        },
        penalty_source: fp_model.as_ref().map_or("uniform", |(_, s)| *s).to_string(),
        fit: FitSummary {
            lambda: loc.fit.lambda,
            alpha: loc.fit.alpha,
            cv_error: cv.map(|c| c.error),
            folds: cv.map(|c| c.folds),
            nonzero: loc.fit.coefficients.iter().filter(|c| **c != 0.0).count(),
            sweeps: loc.fit.diagnostics.sweeps,
            converged: loc.fit.diagnostics.converged,
            kkt_violation: loc.fit.diagnostics.kkt_violation,
        },
        t_score: loc.evaluation.as_ref().map(|e| e.t_percent()),
        p_score: loc.evaluation.as_ref().map(|e| e.p_score.score),
        flags,
        outputs,
    };
    write_json(&report_path, &report)?;
    Ok(report)
}
