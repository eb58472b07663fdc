//! `malt build`: sample the benchmark from a snapshot and split it.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use kbc_core::ingest::{build_name_index, load_snapshot_shards};
use kbc_core::jsonl::write_jsonl_file;
use kbc_core::malt::{build_dataset, dataset_stats, split_dataset, SubjectSample};
use serde::Serialize;

use crate::{create_dir, execution, load_registry, usage, write_json, write_text};

#[derive(Debug, Parser)]
#[command(name = "malt", version, about = "Build the long-tail benchmark from a KB snapshot")]
pub struct MaltCli {
    #[command(subcommand)]
    pub command: MaltCommand,
}

#[derive(Debug, Subcommand)]
pub enum MaltCommand {
    /// Sample subjects per relation, compute flags and statistics, split off
    /// a validation set.
    Build(BuildArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildArgs {
    /// Snapshot file; repeat or list several for shards.
    #[arg(long, required = true, num_args = 1..)]
    pub snapshot: Vec<PathBuf>,
    /// Relation registry JSON; the eight benchmark relations when omitted.
    #[arg(long)]
    pub relations: Option<PathBuf>,
    /// Subjects per relation, or "all".
    #[arg(long, default_value = "all")]
    pub sample: SubjectSample,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Disable data parallelism.
    #[arg(long)]
    #[serde(skip)]
    pub sequential: bool,
}

#[derive(Debug, Serialize)]
struct BuildManifest<'a> {
    args: &'a BuildArgs,
    records: usize,
    triples: usize,
    evaluation_records: usize,
    validation_records: usize,
}

pub fn run(cli: MaltCli) -> anyhow::Result<()> {
    match cli.command {
        MaltCommand::Build(args) => build(&args),
    }
}

pub fn build(args: &BuildArgs) -> anyhow::Result<()> {
    if !(args.validation_fraction > 0.0 && args.validation_fraction < 1.0) {
        return Err(usage(format!(
            "--validation-fraction must lie in (0, 1), got {}",
            args.validation_fraction
        )));
    }
    let exec = execution(args.sequential);
    let registry = load_registry(args.relations.as_deref())?;
    let snapshot = load_snapshot_shards(&args.snapshot, exec).context("loading snapshot")?;
    let index = build_name_index(&snapshot);
    log::info!("loaded {} entities, {} facts", snapshot.len(), snapshot.fact_count());

    let dataset = build_dataset(&snapshot, &index, &registry, args.sample, args.seed, exec)?;
    let (evaluation, validation) = split_dataset(&dataset, args.validation_fraction, args.seed)?;
    let stats = dataset_stats(&dataset, &registry);

    create_dir(&args.out)?;
    write_jsonl_file(&args.out.join("dataset.jsonl"), &dataset)?;
    write_jsonl_file(&args.out.join("evaluation.jsonl"), &evaluation)?;
    write_jsonl_file(&args.out.join("validation.jsonl"), &validation)?;
    write_json(&args.out.join("stats.json"), &stats)?;
    write_text(&args.out.join("stats.txt"), &stats.to_text())?;
    write_json(
        &args.out.join("manifest.json"),
        &BuildManifest {
            args,
            records: dataset.len(),
            triples: dataset.iter().map(|r| r.triple_count()).sum(),
            evaluation_records: evaluation.len(),
            validation_records: validation.len(),
        },
    )?;
    print!("{}", stats.to_text());
    log::info!(
        "wrote {} records ({} evaluation, {} validation) to {}",
        dataset.len(),
        evaluation.len(),
        validation.len(),
        args.out.display()
    );
    Ok(())
}
