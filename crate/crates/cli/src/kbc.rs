//! `kbc run | calibrate | eval | annotate`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use kbc_core::backend::{
    mock_ed_backend, mock_qa_backend, HealthStatus, HttpBackend, HttpBackendConfig, BACKEND_URL_ENV,
};
use kbc_core::corpus::load_corpus_file;
use kbc_core::eval::{
    aggregate, calibrate_alpha, evaluate, f1_score, restrict_to_gold, sample_for_annotation, write_annotation_csv,
    AggregateMode, AggregateRow, CalibrationResult, PrfTriple,
};
use kbc_core::ingest::{build_name_index, load_snapshot_shards};
use kbc_core::jsonl::{read_jsonl_file, write_jsonl_file};
use kbc_core::malt::MaltRecord;
use kbc_core::pipeline::{
    execute, filter_threshold, work_items, CorroboratedFact, ItemFailure, KbContext, PipelineConfig, QaPromptGenerator,
    DEFAULT_K,
};
use kbc_core::prompt::RelationRegistry;
use kbc_core::{DataError, Execution, GroundFact};
use serde::{Deserialize, Serialize};

use crate::{create_dir, execution, load_registry, read_json, usage, write_json, write_text};

#[derive(Debug, Parser)]
#[command(name = "kbc", version, about = "Two-stage knowledge base completion")]
pub struct KbcCli {
    #[command(subcommand)]
    pub command: KbcCommand,
}

#[derive(Debug, Subcommand)]
pub enum KbcCommand {
    /// Generate and corroborate candidate facts for every dataset record.
    Run(RunArgs),
    /// Choose the fused-score threshold on the validation split.
    Calibrate(CalibrateArgs),
    /// Score thresholded facts against gold records, or replay precomputed rows.
    Eval(EvalArgs),
    /// Sample novel facts per relation for manual judgement.
    Annotate(AnnotateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub snapshot: Vec<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub relations: Option<PathBuf>,
    /// Inference server base URL.
    #[arg(long, env = BACKEND_URL_ENV)]
    pub backend: Option<String>,
    /// Use the deterministic mock backends with this gazetteer (JSON object
    /// of surface to score) instead of a server.
    #[arg(long)]
    pub mock_gazetteer: Option<PathBuf>,
    /// Ground facts (JSON lines) the mock disambiguator treats as true;
    /// defaults to every snapshot fact.
    #[arg(long, requires = "mock_gazetteer")]
    pub mock_truth: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Sentences per query context.
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub max_in_flight: usize,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120)]
    pub timeout: u64,
    /// Largest tolerated share of failed work items, in percent.
    #[arg(long, default_value_t = 10.0)]
    pub failure_tolerance: f64,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub facts: PathBuf,
    #[arg(long)]
    pub validation: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
    pub facts: Option<PathBuf>,
    #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
    pub gold: Option<PathBuf>,
    /// Threshold; read from a calibration file when omitted.
    #[arg(long, conflicts_with = "calibration")]
    pub alpha: Option<f64>,
    /// Calibration artifact; defaults to `<out>/calibration.json`.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// JSON array of precomputed per-relation rows to aggregate.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub relations: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub facts: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Facts per relation.
    #[arg(long, default_value_t = 25)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only consider facts at or above this threshold.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: KbcCli) -> anyhow::Result<()> {
    match cli.command {
        KbcCommand::Run(args) => run_pipeline(&args),
        KbcCommand::Calibrate(args) => calibrate(&args),
        KbcCommand::Eval(args) => eval(&args),
        KbcCommand::Annotate(args) => annotate(&args),
    }
}

fn check_alpha(alpha: f64) -> anyhow::Result<f64> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(alpha)
    } else {
        Err(usage(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

/// What a run used, recorded so it can be replayed.
#[derive(Debug, Serialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub snapshot: Vec<PathBuf>,
    pub corpus: PathBuf,
    pub relations: Option<PathBuf>,
    pub backend: String,
    pub k: usize,
    pub window: usize,
    pub max_in_flight: usize,
    pub failure_tolerance_pct: f64,
    pub execution: Execution,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub config: RunConfig,
    pub health: Option<HealthStatus>,
    pub items: usize,
    pub candidates: usize,
    pub facts: usize,
    pub failed_items: usize,
    pub failure_pct: f64,
    pub timings_ms: BTreeMap<&'static str, u128>,
    pub failures: Vec<ItemFailure>,
}

fn millis(d: Duration) -> u128 {
    d.as_millis()
}

pub fn run_pipeline(args: &RunArgs) -> anyhow::Result<()> {
    if args.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    if args.window == 0 {
        return Err(usage("--window must be at least 1"));
    }
    if !(0.0..=100.0).contains(&args.failure_tolerance) {
        return Err(usage("--failure-tolerance must lie in [0, 100]"));
    }
    let backend_label = match (&args.mock_gazetteer, &args.backend) {
        (Some(g), _) => format!("mock:{}", g.display()),
        (None, Some(url)) => url.clone(),
        (None, None) => return Err(usage(format!("--backend or {BACKEND_URL_ENV} is required"))),
    };
    let exec = execution(args.sequential);
    let started = Instant::now();
    let registry = load_registry(args.relations.as_deref())?;
    let snapshot = load_snapshot_shards(&args.snapshot, exec).context("loading snapshot")?;
    let corpus = load_corpus_file(&args.corpus).context("loading corpus")?;
    let records: Vec<MaltRecord> = read_jsonl_file(&args.dataset).context("loading dataset")?;
    for r in &records {
        registry.require(&r.pid)?;
        snapshot.require(&r.subject)?;
    }
    let index = build_name_index(&snapshot);
    let load_time = started.elapsed();

    let kb = KbContext {
        snapshot: &snapshot,
        index: &index,
        corpus: &corpus,
        registry: &registry,
    };
    let config = PipelineConfig {
        k: args.k,
        window: args.window,
        failure_tolerance_pct: args.failure_tolerance,
        execution: exec,
    };
    let items = work_items(&records);

    let run_started = Instant::now();
    let (output, health) = match &args.mock_gazetteer {
        Some(gazetteer_path) => {
            let gazetteer: BTreeMap<String, f64> = read_json(gazetteer_path)?;
            let truth: Vec<GroundFact> = match &args.mock_truth {
                Some(p) => read_jsonl_file(p).context("loading mock truth")?,
                None => snapshot.ground_facts().collect(),
            };
            let generator = QaPromptGenerator::new(mock_qa_backend(gazetteer));
            let ed = mock_ed_backend(&snapshot, truth).with_registry(registry.clone());
            (execute(&items, kb, &generator, &ed, &config), None)
        }
        None => {
            let url = args.backend.clone().expect("checked above");
            let mut http_config = HttpBackendConfig::new(url);
            http_config.max_in_flight = args.max_in_flight;
            http_config.retries = args.retries;
            http_config.timeout = Duration::from_secs(args.timeout);
            let backend = HttpBackend::new(http_config);
            let health = backend.check_health().context("backend health check")?;
            log::info!("backend healthy: {:?}", health.models);
            let generator = QaPromptGenerator::new(&backend);
            (execute(&items, kb, &generator, &backend, &config), Some(health))
        }
    };
    let run_time = run_started.elapsed();

    create_dir(&args.out)?;
    write_jsonl_file(&args.out.join("facts.jsonl"), &output.facts)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        config: RunConfig {
            dataset: args.dataset.clone(),
            snapshot: args.snapshot.clone(),
            corpus: args.corpus.clone(),
            relations: args.relations.clone(),
            backend: backend_label,
            k: args.k,
            window: args.window,
            max_in_flight: args.max_in_flight,
            failure_tolerance_pct: args.failure_tolerance,
            execution: exec,
        },
        health,
        items: output.items,
        candidates: output.candidates,
        facts: output.facts.len(),
        failed_items: output.failures.len(),
        failure_pct: output.failure_pct(),
        timings_ms: [("load", millis(load_time)), ("run", millis(run_time))].into(),
        failures: output.failures.clone(),
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    log::info!(
        "{} items, {} candidates, {} facts, {} failed items",
        output.items,
        output.candidates,
        output.facts.len(),
        output.failures.len()
    );
    output.check_tolerance(args.failure_tolerance)?;
    Ok(())
}

fn load_facts(path: &Path) -> anyhow::Result<Vec<CorroboratedFact>> {
    read_jsonl_file(path).with_context(|| format!("loading facts from {}", path.display()))
}

fn load_gold(path: &Path) -> anyhow::Result<Vec<MaltRecord>> {
    read_jsonl_file(path).with_context(|| format!("loading gold records from {}", path.display()))
}

/// Facts for pairs outside the gold set are dropped (they belong to another
/// split), with a log line saying how many.
fn restrict(facts: &[CorroboratedFact], gold: &[MaltRecord]) -> Vec<CorroboratedFact> {
    let kept = restrict_to_gold(facts, gold);
    if kept.len() < facts.len() {
        log::info!(
            "ignoring {} facts for pairs outside the gold set",
            facts.len() - kept.len()
        );
    }
    kept
}

pub fn calibrate(args: &CalibrateArgs) -> anyhow::Result<()> {
    let facts = load_facts(&args.facts)?;
    let validation = load_gold(&args.validation)?;
    let facts = restrict(&facts, &validation);
    let result = calibrate_alpha(&facts, &validation, execution(args.sequential))?;
    create_dir(&args.out)?;
    write_json(&args.out.join("calibration.json"), &result)?;
    println!("alpha = {}  (validation F1 = {:.4})", result.alpha, result.best_f1);
    Ok(())
}

fn relation_names(registry: &RelationRegistry) -> BTreeMap<String, String> {
    registry.iter().map(|s| (s.pid.clone(), s.name.clone())).collect()
}

pub fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let registry = load_registry(args.relations.as_deref())?;
    if let Some(replay_path) = &args.replay {
        return replay(replay_path, &registry, &args.out);
    }
    let alpha = match (args.alpha, &args.calibration) {
        (Some(a), _) => check_alpha(a)?,
        (None, Some(p)) => read_json::<CalibrationResult>(p)?.alpha,
        (None, None) => {
            let default = args.out.join("calibration.json");
            if !default.exists() {
                return Err(usage("give --alpha or --calibration (no calibration.json in --out)"));
            }
            read_json::<CalibrationResult>(&default)?.alpha
        }
    };
    let facts = load_facts(args.facts.as_deref().expect("clap requires --facts"))?;
    let gold = load_gold(args.gold.as_deref().expect("clap requires --gold"))?;
    let kept = filter_threshold(&restrict(&facts, &gold), alpha)?;
    let report = evaluate(&kept, &gold, Some(alpha));
    let text = report.to_text_named(&relation_names(&registry));
    create_dir(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    write_text(&args.out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

/// A precomputed per-relation result, in percent or as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub pid: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold triples behind the row; enables the weighted aggregate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_gold: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub rows: Vec<ReplayRow>,
    pub aggregate_unweighted: PrfTriple,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate_weighted: Option<PrfTriple>,
    /// Largest gap between a row's F1 and the harmonic mean of its P and R.
    pub max_f1_deviation: f64,
}

pub fn replay_rows(rows: Vec<ReplayRow>) -> anyhow::Result<ReplayReport> {
    let agg_rows: Vec<AggregateRow> = rows
        .iter()
        .map(|r| AggregateRow {
            values: [r.precision, r.recall, r.f1],
            weight: r.n_gold.unwrap_or(0) as f64,
        })
        .collect();
    let unweighted = aggregate(&agg_rows, AggregateMode::Unweighted)?;
    let weighted = if rows.iter().all(|r| r.n_gold.is_some()) {
        Some(aggregate(&agg_rows, AggregateMode::Weighted)?.into())
    } else {
        None
    };
    let max_f1_deviation = rows
        .iter()
        .map(|r| (f1_score(r.precision, r.recall) - r.f1).abs())
        .fold(0.0, f64::max);
    Ok(ReplayReport {
        rows,
        aggregate_unweighted: unweighted.into(),
        aggregate_weighted: weighted,
        max_f1_deviation,
    })
}

fn replay_text(report: &ReplayReport, names: &BTreeMap<String, String>) -> String {
    let mut lines = vec![format!(
        "{:<16} {:<6} {:>8} {:>8} {:>8}",
        "relation", "pid", "P", "R", "F1"
    )];
    for r in &report.rows {
        let name = names.get(&r.pid).map(String::as_str).unwrap_or("");
        lines.push(format!(
            "{name:<16} {:<6} {:>8.2} {:>8.2} {:>8.2}",
            r.pid, r.precision, r.recall, r.f1
        ));
    }
    let a = report.aggregate_unweighted;
    lines.push(format!(
        "{:<16} {:<6} {:>8.2} {:>8.2} {:>8.2}",
        "mean", "-", a.precision, a.recall, a.f1
    ));
    if let Some(w) = report.aggregate_weighted {
        lines.push(format!(
            "{:<16} {:<6} {:>8.2} {:>8.2} {:>8.2}",
            "weighted mean", "-", w.precision, w.recall, w.f1
        ));
    }
    lines.join("\n") + "\n"
}

fn replay(path: &Path, registry: &RelationRegistry, out: &Path) -> anyhow::Result<()> {
    let rows: Vec<ReplayRow> = read_json(path)?;
    if rows.is_empty() {
        return Err(DataError::Invalid(format!("{} contains no rows", path.display())).into());
    }
    let report = replay_rows(rows)?;
    let text = replay_text(&report, &relation_names(registry));
    create_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn annotate(args: &AnnotateArgs) -> anyhow::Result<()> {
    if args.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let mut facts = load_facts(&args.facts)?;
    if let Some(alpha) = args.alpha {
        facts = filter_threshold(&facts, check_alpha(alpha)?)?;
    }
    let gold = load_gold(&args.gold)?;
    let rows = sample_for_annotation(&facts, &gold, args.n, args.seed);
    create_dir(&args.out)?;
    let path = args.out.join("annotation.csv");
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_annotation_csv(BufWriter::new(file), &rows).with_context(|| format!("writing {}", path.display()))?;
    let mut per_pid: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        *per_pid.entry(r.pid.as_str()).or_default() += 1;
    }
    for (pid, n) in per_pid {
        println!("{pid}\t{n}");
    }
    Ok(())
}
