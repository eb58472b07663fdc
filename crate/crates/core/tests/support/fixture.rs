//! The mock-backed run over the bundled planted-fact world, writing the same
//! artifacts the command-line tools produce.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use kbc_core::backend::{mock_ed_backend, mock_qa_backend};
use kbc_core::corpus::load_corpus_file;
use kbc_core::eval::{calibrate_alpha, evaluate, restrict_to_gold, EvalReport};
use kbc_core::ingest::{build_name_index, load_snapshot_file, KbSnapshot};
use kbc_core::jsonl::write_jsonl_file;
use kbc_core::malt::{build_dataset, split_dataset, SubjectSample};
use kbc_core::pipeline::{
    filter_threshold, run_pipeline, work_items, CorroboratedFact, KbContext, PipelineConfig, QaPromptGenerator,
};
use kbc_core::prompt::RelationRegistry;
use kbc_core::{Execution, GroundFact};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/world")
        .join(name)
}

pub struct Outcome {
    pub snapshot: KbSnapshot,
    pub facts: Vec<CorroboratedFact>,
    pub alpha: f64,
    pub report: EvalReport,
    pub truth: Vec<GroundFact>,
}

impl Outcome {
    /// Facts at or above the calibrated cutoff, as sorted triples.
    pub fn accepted(&self) -> Vec<GroundFact> {
        let mut out: Vec<GroundFact> = filter_threshold(&self.facts, self.alpha)
            .unwrap()
            .into_iter()
            .map(|f| GroundFact {
                subject: f.subject,
                pid: f.pid,
                object: f.object,
            })
            .collect();
        out.sort();
        out
    }

    pub fn is_truth(&self, f: &CorroboratedFact) -> bool {
        self.truth.contains(&GroundFact {
            subject: f.subject.clone(),
            pid: f.pid.clone(),
            object: f.object.clone(),
        })
    }
}

/// Builds the dataset, runs both stages, calibrates on the validation split
/// and evaluates on the evaluation split. Writes `facts.jsonl`,
/// `calibration.json`, `report.json` and `report.txt` into `out`.
pub fn run(execution: Execution, out: &Path) -> Outcome {
    let snapshot = load_snapshot_file(&fixture("snapshot.jsonl")).unwrap();
    let corpus = load_corpus_file(&fixture("corpus.jsonl")).unwrap();
    let gazetteer = serde_json::from_str(&std::fs::read_to_string(fixture("gazetteer.json")).unwrap()).unwrap();
    let registry = RelationRegistry::benchmark();
    let index = build_name_index(&snapshot);
    let truth: Vec<GroundFact> = snapshot.ground_facts().collect();

    let dataset = build_dataset(&snapshot, &index, &registry, SubjectSample::All, 7, execution).unwrap();
    let (evaluation, validation) = split_dataset(&dataset, 0.2, 7).unwrap();
    let kb = KbContext {
        snapshot: &snapshot,
        index: &index,
        corpus: &corpus,
        registry: &registry,
    };
    let generator = QaPromptGenerator::new(mock_qa_backend(gazetteer));
    let ed = mock_ed_backend(&snapshot, truth.clone());
    let config = PipelineConfig {
        execution,
        ..PipelineConfig::default()
    };
    let output = run_pipeline(&work_items(&dataset), kb, &generator, &ed, &config).unwrap();
    assert!(output.failures.is_empty());

    let calibration = calibrate_alpha(&restrict_to_gold(&output.facts, &validation), &validation, execution).unwrap();
    let eval_facts = filter_threshold(&restrict_to_gold(&output.facts, &evaluation), calibration.alpha).unwrap();
    let report = evaluate(&eval_facts, &evaluation, Some(calibration.alpha));

    std::fs::create_dir_all(out).unwrap();
    write_jsonl_file(&out.join("facts.jsonl"), &output.facts).unwrap();
    std::fs::write(
        out.join("calibration.json"),
        serde_json::to_string_pretty(&calibration).unwrap(),
    )
    .unwrap();
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report).unwrap()).unwrap();
    std::fs::write(out.join("report.txt"), report.to_text()).unwrap();

    Outcome {
        snapshot,
        facts: output.facts,
        alpha: calibration.alpha,
        report,
        truth,
    }
}

pub const ARTIFACTS: [&str; 4] = ["facts.jsonl", "calibration.json", "report.json", "report.txt"];

/// Names of artifacts whose bytes differ between two output directories.
pub fn differing_artifacts(a: &Path, b: &Path) -> Vec<&'static str> {
    ARTIFACTS
        .into_iter()
        .filter(|name| std::fs::read(a.join(name)).unwrap() != std::fs::read(b.join(name)).unwrap())
        .collect()
}
