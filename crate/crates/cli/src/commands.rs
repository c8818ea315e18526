use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use faultloc::cleaning::clean as clean_runs;
use faultloc::enet::{self, EnetConfig, EnetError};
use faultloc::eval::{self, EvalConfig, DEFAULT_GROUP_THRESHOLD};
use faultloc::metrics::{
    extract_metrics, fit_fault_proneness, load_fault_labels, load_metrics, penalty_factors, predicate_fault_proneness,
    write_metrics_csv, FaultPronenessModel, PenaltyFactors, DEFAULT_THETA_HIGH, DEFAULT_THETA_LOW,
};
use faultloc::model::{
    load_coverage, load_ground_truth, load_outcomes, load_pdg, load_predicate_map, validate_dataset, write_outcomes,
};
use faultloc::pipeline::{run_pipeline, PipelineConfig, RankingReport};
use faultloc::synth::{
    generate_instance, run_experiment, write_instance, ExperimentSettings, SynthConfig, SynthError, Toggles,
};
use faultloc::{Error, FitResult64};

/// A problem with command-line values or config files (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

/// Config problems exit with 2, bad input data with 3, model fitting
/// failures with 4, anything else with 1.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::Synth(SynthError::Config(_)) => 2,
                Error::Enet(EnetError::InvalidConfig(_)) => 2,
                Error::Data(_) | Error::Metrics(_) | Error::Clean(_) | Error::Eval(_) => 3,
                Error::Enet(_) | Error::Synth(_) => 4,
            };
        }
        if cause.downcast_ref::<faultloc::model::DataError>().is_some()
            || cause.downcast_ref::<faultloc::metrics::MetricsError>().is_some()
            || cause.downcast_ref::<faultloc::cleaning::CleanError>().is_some()
            || cause.downcast_ref::<faultloc::eval::EvalError>().is_some()
        {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<EnetError>() {
            return if matches!(e, EnetError::InvalidConfig(_)) { 2 } else { 4 };
        }
        if let Some(e) = cause.downcast_ref::<SynthError>() {
            return if matches!(e, SynthError::Config(_)) { 2 } else { 4 };
        }
    }
    1
}

fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

pub fn metrics(sources: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for path in sources {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let recs = extract_metrics(&text).with_context(|| format!("{}", path.display()))?;
        for r in recs {
            if !seen.insert(r.module_id.clone()) {
                bail!(faultloc::metrics::MetricsError::InvalidRecord {
                    module: r.module_id,
                    message: format!("defined again in {}", path.display()),
                });
            }
            records.push(r);
        }
    }
    let mut buf = Vec::new();
    write_metrics_csv(&records, &mut buf)?;
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            fs::write(dir.join("metrics.csv"), &buf).context("writing metrics.csv")?;
        }
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

/// `penalty_factors.json`
#[derive(Debug, Serialize, Deserialize)]
pub struct PenaltyFile {
    pub predicate_ids: Vec<String>,
    pub fault_proneness: Vec<f64>,
    pub factors: PenaltyFactors<f64>,
}

#[derive(Args, Debug)]
pub struct FaultPronenessArgs {
    /// metrics CSV of the training modules
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// module_id,faulty CSV
    #[arg(long)]
    labels: Option<PathBuf>,
    /// load a saved model instead of training
    #[arg(long, conflicts_with = "labels")]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THETA_LOW)]
    theta_low: f64,
    #[arg(long, default_value_t = DEFAULT_THETA_HIGH)]
    theta_high: f64,
    /// with --coverage, also write per-predicate penalty factors
    #[arg(long, requires = "coverage")]
    predicate_map: Option<PathBuf>,
    #[arg(long, requires = "predicate_map")]
    coverage: Option<PathBuf>,
    /// metrics of the modules under analysis (defaults to --metrics)
    #[arg(long)]
    instance_metrics: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn fault_proneness(args: &FaultPronenessArgs) -> Result<()> {
    let model: FaultPronenessModel<f64> = match (&args.model, &args.labels) {
        (Some(path), _) => FaultPronenessModel::load(path)?,
        (None, Some(labels)) => {
            let Some(metrics) = &args.metrics else {
                return Err(UsageError("--labels needs --metrics".into()).into());
            };
            fit_fault_proneness(
                &load_metrics(metrics)?,
                &load_fault_labels(labels)?,
                args.theta_low,
                args.theta_high,
            )?
        }
        (None, None) => return Err(UsageError("give --model or --metrics with --labels".into()).into()),
    };
    ensure_dir(&args.out)?;
    model.save(args.out.join("fp_model.json"))?;
    if let (Some(pmap), Some(coverage)) = (&args.predicate_map, &args.coverage) {
        let Some(instance) = args.instance_metrics.as_ref().or(args.metrics.as_ref()) else {
            return Err(UsageError("penalty factors need --instance-metrics or --metrics".into()).into());
        };
        let matrix = load_coverage(coverage)?;
        let pmap = load_predicate_map(pmap)?;
        pmap.check(&matrix, None)?;
        let records = load_metrics(instance)?;
        let fp = predicate_fault_proneness(&model, &records, &pmap, matrix.predicate_ids())?;
        let factors = penalty_factors(&fp, args.theta_low, args.theta_high)?;
        let file = PenaltyFile {
            predicate_ids: matrix.predicate_ids().to_vec(),
            fault_proneness: fp,
            factors,
        };
        write_file(&args.out.join("penalty_factors.json"), &json_line(&file))?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct CleanArgs {
    #[arg(long)]
    coverage: PathBuf,
    #[arg(long)]
    outcomes: PathBuf,
    /// cluster count; defaults to max(2, round(sqrt(m / 2)))
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn clean(args: &CleanArgs) -> Result<()> {
    let dataset = validate_dataset(load_coverage(&args.coverage)?, load_outcomes(&args.outcomes)?)?;
    let (relabeled, report) = clean_runs(dataset.matrix(), dataset.outcomes(), args.k, args.seed)?;
    ensure_dir(&args.out)?;
    write_outcomes(&relabeled, args.out.join("cleaned_outcomes.csv"))?;
    write_file(&args.out.join("cleaning.json"), &json_line(&report))?;
    println!(
        "relabeled {} coincidentally correct runs (k = {})",
        report.cc_runs.len(),
        report.k
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    #[arg(long)]
    coverage: PathBuf,
    #[arg(long)]
    outcomes: PathBuf,
    /// penalty_factors.json from `fault-proneness`; uniform when absent
    #[arg(long)]
    penalty_factors: Option<PathBuf>,
    /// solver settings as JSON (alpha_grid, n_lambda, folds, ...)
    #[arg(long)]
    config: Option<PathBuf>,
    /// overrides the fold-split seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_GROUP_THRESHOLD)]
    group_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

pub fn localize(args: &LocalizeArgs) -> Result<()> {
    let mut config: EnetConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => EnetConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    let dataset = validate_dataset(load_coverage(&args.coverage)?, load_outcomes(&args.outcomes)?)?;
    let ids = dataset.matrix().predicate_ids();
    let factors = match &args.penalty_factors {
        Some(path) => {
            let file: PenaltyFile = read_config(path)?;
            if file.predicate_ids != ids {
                bail!(faultloc::model::DataError::BadField {
                    line: 0,
                    message: format!("{} lists different predicates than the coverage matrix", path.display()),
                });
            }
            file.factors
        }
        None => PenaltyFactors::uniform(ids.len()),
    };
    let fit: FitResult64 = enet::fit(&dataset, &factors.values, &config)?;
    let (ranked, empty) = eval::rank_predicates(&fit);
    let groups = eval::group_predictors(&ranked, dataset.matrix(), args.group_threshold)?;
    let mut flags: Vec<eval::Flag> = empty.into_iter().collect();
    if !fit.diagnostics.converged {
        flags.push(eval::Flag::NonConvergence);
    }
    flags.sort();
    ensure_dir(&args.out)?;
    fit.save(args.out.join("fit.json"))?;
    let report = RankingReport {
        ranking: ranked.entries,
        groups: groups.groups,
        group_threshold: groups.threshold,
        flags,
    };
    write_file(&args.out.join("ranking.json"), &json_line(&report))?;
    for (i, e) in report.ranking.iter().take(10).enumerate() {
        println!("{:>3}  {:<16} {:+.6}", i + 1, e.predicate_id, e.coefficient);
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// fit.json from `localize` or `pipeline`
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    coverage: PathBuf,
    #[arg(long)]
    predicate_map: PathBuf,
    #[arg(long)]
    pdg: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    /// statements taken from the top of the ranking; defaults to the top group
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_GROUP_THRESHOLD)]
    group_threshold: f64,
    /// directory for evaluation.json
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    if args.top_k == Some(0) {
        return Err(UsageError("--top-k must be positive".into()).into());
    }
    let fit = FitResult64::load(&args.fit)?;
    let matrix = load_coverage(&args.coverage)?;
    let pmap = load_predicate_map(&args.predicate_map)?;
    let pdg = load_pdg(&args.pdg)?;
    let truth = load_ground_truth(&args.ground_truth)?;
    pmap.check(&matrix, Some(&pdg))?;
    truth.check(&pdg, &matrix)?;
    if fit.predicate_ids != matrix.predicate_ids() {
        bail!(faultloc::model::DataError::BadField {
            line: 0,
            message: "fit and coverage matrix list different predicates".into(),
        });
    }
    let config = EvalConfig {
        group_threshold: args.group_threshold,
        top_k: args.top_k,
    };
    let report = eval::evaluate(
        &fit,
        &matrix,
        &pmap,
        &pdg,
        &truth.faulty_nodes,
        &truth.fault_predicates,
        &config,
    )?;
    match &report.t_score {
        Some(t) => println!("T-score: {:.4}% ({} of {} nodes)", t.score, t.n_examined, t.n_total),
        None => println!("T-score: 100.0000% (nothing ranked)"),
    }
    let p = &report.p_score;
    match p.pred_index {
        Some(i) => println!("P-score: {:.4}% (position {} of {})", p.score, i, p.list_len),
        None => println!("P-score: {:.4}% (fault predicate not ranked)", p.score),
    }
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_file(&dir.join("evaluation.json"), &json_line(&report))?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// generator settings as JSON
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// run the A/B experiment over this many seeds instead of writing one instance
    #[arg(long)]
    repetitions: Option<usize>,
    /// experiment stage settings as JSON
    #[arg(long, requires = "repetitions")]
    settings: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(Error::from)?;
    ensure_dir(&args.out)?;
    match args.repetitions {
        Some(reps) => {
            let settings: ExperimentSettings = match &args.settings {
                Some(p) => read_config(p)?,
                None => ExperimentSettings::default(),
            };
            let report = run_experiment(&cfg, reps, &Toggles::all(), &settings)?;
            write_file(&args.out.join("experiment_report.json"), &report.to_json())?;
            for c in &report.combinations {
                println!(
                    "cleaning={:<5} penalty={:<5} P mean {:.2} median {:.2}  T mean {:.2} median {:.2}",
                    c.toggles.cleaning,
                    c.toggles.penalty_factors,
                    c.summary.p_mean,
                    c.summary.p_median,
                    c.summary.t_mean,
                    c.summary.t_median
                );
            }
        }
        None => {
            let inst = generate_instance(&cfg).map_err(Error::from)?;
            let config = write_instance(&inst, &args.out)?;
            println!("wrote instance (seed {}) and {}", inst.seed, config.display());
        }
    }
    Ok(())
}

pub fn pipeline(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = PipelineConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    let report = run_pipeline(&cfg)?;
    println!(
        "lambda {:.6e} alpha {} nonzero {}",
        report.fit.lambda, report.fit.alpha, report.fit.nonzero
    );
    if let (Some(t), Some(p)) = (report.t_score, report.p_score) {
        println!("T-score: {t:.4}%");
        println!("P-score: {p:.4}%");
    }
    if !report.flags.is_empty() {
        println!("flags: {:?}", report.flags);
    }
    Ok(())
}
