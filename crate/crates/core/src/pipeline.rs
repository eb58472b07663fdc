//! The two-stage completion pipeline.
//!
//! For every (subject, relation) work item:
//!
//! 1. a [`CandidateGenerator`] produces scored surface strings from the
//!    subject's context sentences; duplicates (equal after normalization) are
//!    merged by averaging their scores;
//! 2. each candidate is sent to the disambiguation backend with the
//!    `[ENT]`-marked statement and its best evidence sentence; the first
//!    generated entity (in model rank order) whose KB names match the
//!    candidate surface canonicalizes it, otherwise the candidate is pruned;
//! 3. kept facts score `(gen_score + ed_score) / 2` and are deduplicated per
//!    (subject, relation, object) on the maximum.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::backend::{ed_generate, qa_extract, EdBackend, EdRequest, QaBackend, QaRequest};
use crate::corpus::{sentences, windows, ArticleStore, ContextSentence};
use crate::error::{BackendError, DataError, PipelineError};
use crate::ingest::{KbSnapshot, NameIndex};
use crate::malt::MaltRecord;
use crate::model::{normalize, strip_qualifier, EntityId, EntityRecord, RelationSpec};
use crate::par::Execution;
use crate::prompt::{render_corroboration_prompt, render_generation_prompt, RelationRegistry};

pub const DEFAULT_K: usize = 20;

/// One stage-1 answer instance behind a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub sentence_index: usize,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub subject: EntityId,
    pub pid: String,
    pub surface: String,
    pub evidence: Vec<Evidence>,
    /// Mean score over the merged instances.
    pub gen_score: f64,
}

impl Candidate {
    /// Highest-scoring instance, earliest sentence on ties.
    pub fn top_evidence(&self) -> Option<&Evidence> {
        self.evidence.iter().min_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.sentence_index.cmp(&b.sentence_index))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub index: usize,
    pub text: String,
}

/// A kept, canonicalized fact. One line of the facts file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorroboratedFact {
    pub subject: EntityId,
    pub subject_label: String,
    pub pid: String,
    pub object: EntityId,
    pub object_label: String,
    #[serde(default)]
    pub object_aliases: Vec<String>,
    pub surface: String,
    pub gen_score: f64,
    pub ed_score: f64,
    pub fused_score: f64,
    pub evidence: EvidenceRef,
}

pub fn fuse_scores(gen_score: f64, ed_score: f64) -> f64 {
    (gen_score + ed_score) / 2.0
}

/// Stage-1 strategy. Implementations other than [`QaPromptGenerator`] (cloze
/// prompting, entailment over NER spans, ...) plug in here.
pub trait CandidateGenerator: Send + Sync {
    fn generate(
        &self,
        subject: &EntityRecord,
        spec: &RelationSpec,
        sentences: &[ContextSentence],
        k: usize,
    ) -> Result<Vec<Candidate>, PipelineError>;
}

/// Asks the relation's question of every sentence with an extractive QA
/// backend.
#[derive(Debug, Clone)]
pub struct QaPromptGenerator<B> {
    backend: B,
}

impl<B: QaBackend> QaPromptGenerator<B> {
    pub fn new(backend: B) -> Self {
        QaPromptGenerator { backend }
    }
}

impl<B: QaBackend> CandidateGenerator for QaPromptGenerator<B> {
    fn generate(
        &self,
        subject: &EntityRecord,
        spec: &RelationSpec,
        sentences: &[ContextSentence],
        k: usize,
    ) -> Result<Vec<Candidate>, PipelineError> {
        generate_candidates(subject, spec, sentences, &self.backend, k)
    }
}

pub fn generate_candidates<B: QaBackend + ?Sized>(
    subject: &EntityRecord,
    spec: &RelationSpec,
    sentences: &[ContextSentence],
    qa_backend: &B,
    k: usize,
) -> Result<Vec<Candidate>, PipelineError> {
    if k == 0 {
        return Err(PipelineError::InvalidArgument("k must be at least 1".into()));
    }
    let question = render_generation_prompt(spec, &subject.id, &subject.label).text;
    let mut instances = Vec::new();
    for sentence in sentences {
        let request = QaRequest {
            question: question.clone(),
            context: sentence.text.clone(),
            k,
        };
        let answers = qa_extract(qa_backend, &request).map_err(|source| PipelineError::Backend {
            subject: subject.id.to_string(),
            pid: spec.pid.clone(),
            sentence: sentence.index,
            source,
        })?;
        instances.extend(answers.into_iter().map(|a| {
            (
                a.text,
                Evidence {
                    sentence_index: sentence.index,
                    text: sentence.text.clone(),
                    score: a.score,
                },
            )
        }));
    }
    Ok(merge_candidates(&subject.id, &spec.pid, instances, k))
}

/// Pools answer instances by normalized surface, averaging their scores, and
/// keeps the top `k` by (score desc, surface asc). The group's surface is its
/// lexicographically smallest raw spelling.
pub fn merge_candidates(
    subject: &EntityId,
    pid: &str,
    instances: impl IntoIterator<Item = (String, Evidence)>,
    k: usize,
) -> Vec<Candidate> {
    let mut groups: BTreeMap<String, (BTreeSet<String>, Vec<Evidence>)> = BTreeMap::new();
    for (surface, evidence) in instances {
        let key = normalize(&surface);
        if key.is_empty() {
            continue;
        }
        let group = groups.entry(key.as_str().to_string()).or_default();
        group.0.insert(surface);
        group.1.push(evidence);
    }
    let mut out: Vec<Candidate> = groups
        .into_values()
        .map(|(surfaces, mut evidence)| {
            evidence.sort_by(|a, b| {
                a.sentence_index
                    .cmp(&b.sentence_index)
                    .then(a.score.total_cmp(&b.score))
            });
            let gen_score = evidence.iter().map(|e| e.score).sum::<f64>() / evidence.len() as f64;
            Candidate {
                subject: subject.clone(),
                pid: pid.to_string(),
                surface: surfaces.into_iter().next().unwrap_or_default(),
                evidence,
                gen_score,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.gen_score
            .total_cmp(&a.gen_score)
            .then_with(|| a.surface.cmp(&b.surface))
    });
    out.truncate(k);
    out
}

/// True when `surface` equals one of the entity's names, or a name with its
/// trailing parenthetical qualifier removed, after normalization.
pub fn match_names(surface: &str, entity: &EntityRecord) -> bool {
    let key = normalize(surface);
    if key.is_empty() {
        return false;
    }
    entity
        .names()
        .any(|n| normalize(n) == key || normalize(strip_qualifier(n)) == key)
}

/// Entities a generated name refers to: exact normalized lookup, falling
/// back to the qualifier-stripped name.
fn resolve_guess<'a>(index: &'a NameIndex, name: &str) -> Option<&'a BTreeSet<EntityId>> {
    index.lookup(name).or_else(|| index.lookup(strip_qualifier(name)))
}

/// Stage 2 for one candidate. `Ok(None)` means the candidate was pruned.
pub fn corroborate<B: EdBackend + ?Sized>(
    candidate: &Candidate,
    spec: &RelationSpec,
    subject_label: &str,
    ed_backend: &B,
    index: &NameIndex,
    snapshot: &KbSnapshot,
    k: usize,
) -> Result<Option<CorroboratedFact>, BackendError> {
    let Some(evidence) = candidate.top_evidence() else {
        return Ok(None);
    };
    let prompt = render_corroboration_prompt(spec, &candidate.subject, subject_label);
    let request = EdRequest {
        prompt_with_markers: prompt.text,
        context: evidence.text.clone(),
        k,
    };
    for guess in ed_generate(ed_backend, &request)? {
        let Some(ids) = resolve_guess(index, &guess.name) else {
            log::debug!("generated entity {:?} is not in the KB; skipped", guess.name);
            continue;
        };
        let matched = ids
            .iter()
            .filter_map(|id| snapshot.entity(id))
            .find(|entity| match_names(&candidate.surface, entity));
        if let Some(entity) = matched {
            return Ok(Some(CorroboratedFact {
                subject: candidate.subject.clone(),
                subject_label: subject_label.to_string(),
                pid: candidate.pid.clone(),
                object: entity.id.clone(),
                object_label: entity.label.clone(),
                object_aliases: entity.aliases.iter().cloned().collect(),
                surface: candidate.surface.clone(),
                gen_score: candidate.gen_score,
                ed_score: guess.score,
                fused_score: fuse_scores(candidate.gen_score, guess.score),
                evidence: EvidenceRef {
                    index: evidence.sentence_index,
                    text: evidence.text.clone(),
                },
            }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorkItem {
    pub subject: EntityId,
    pub pid: String,
}

/// One work item per dataset record, in record order.
pub fn work_items(records: &[MaltRecord]) -> Vec<WorkItem> {
    records
        .iter()
        .map(|r| WorkItem {
            subject: r.subject.clone(),
            pid: r.pid.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k: usize,
    /// Sentences per context; 1 queries each sentence on its own.
    pub window: usize,
    /// Largest tolerated share of failed work items, in percent.
    pub failure_tolerance_pct: f64,
    pub execution: Execution,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: DEFAULT_K,
            window: 1,
            failure_tolerance_pct: 10.0,
            execution: Execution::default(),
        }
    }
}

/// Read-only stores shared by every work item.
#[derive(Debug, Clone, Copy)]
pub struct KbContext<'a> {
    pub snapshot: &'a KbSnapshot,
    pub index: &'a NameIndex,
    pub corpus: &'a ArticleStore,
    pub registry: &'a RelationRegistry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub subject: EntityId,
    pub pid: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub items: usize,
    pub candidates: usize,
    pub facts: Vec<CorroboratedFact>,
    pub failures: Vec<ItemFailure>,
}

impl RunOutput {
    pub fn failure_pct(&self) -> f64 {
        if self.items == 0 {
            0.0
        } else {
            100.0 * self.failures.len() as f64 / self.items as f64
        }
    }

    pub fn check_tolerance(&self, tolerance_pct: f64) -> Result<(), PipelineError> {
        if self.failure_pct() > tolerance_pct {
            return Err(PipelineError::FailureToleranceExceeded {
                failed: self.failures.len(),
                total: self.items,
                tolerance_pct,
            });
        }
        Ok(())
    }
}

fn process_item(
    item: &WorkItem,
    kb: KbContext<'_>,
    generator: &dyn CandidateGenerator,
    ed_backend: &dyn EdBackend,
    config: &PipelineConfig,
) -> Result<(usize, Vec<CorroboratedFact>), PipelineError> {
    let subject = kb.snapshot.require(&item.subject)?;
    let spec = kb.registry.require(&item.pid)?;
    let context = windows(&sentences(kb.corpus, &item.subject), config.window);
    let candidates = generator.generate(subject, spec, &context, config.k)?;
    let mut facts = Vec::new();
    for candidate in &candidates {
        let fact = corroborate(
            candidate,
            spec,
            &subject.label,
            ed_backend,
            kb.index,
            kb.snapshot,
            config.k,
        )
        .map_err(|source| PipelineError::Backend {
            subject: item.subject.to_string(),
            pid: item.pid.clone(),
            sentence: candidate.top_evidence().map_or(0, |e| e.sentence_index),
            source,
        })?;
        facts.extend(fact);
    }
    Ok((candidates.len(), facts))
}

/// Keeps the best-scoring fact per (subject, pid, object) and orders the
/// result by (pid, subject, fused score desc, object).
pub fn dedup_facts(facts: impl IntoIterator<Item = CorroboratedFact>) -> Vec<CorroboratedFact> {
    let mut best: BTreeMap<(String, EntityId, EntityId), CorroboratedFact> = BTreeMap::new();
    for fact in facts {
        let key = (fact.pid.clone(), fact.subject.clone(), fact.object.clone());
        match best.get(&key) {
            Some(kept)
                if kept
                    .fused_score
                    .total_cmp(&fact.fused_score)
                    .then_with(|| fact.surface.cmp(&kept.surface))
                    .then_with(|| fact.evidence.index.cmp(&kept.evidence.index))
                    .is_ge() => {}
            _ => {
                best.insert(key, fact);
            }
        }
    }
    let mut out: Vec<_> = best.into_values().collect();
    out.sort_by(|a, b| {
        a.pid
            .cmp(&b.pid)
            .then_with(|| a.subject.cmp(&b.subject))
            .then(b.fused_score.total_cmp(&a.fused_score))
            .then_with(|| a.object.cmp(&b.object))
    });
    out
}

/// Runs every work item and collects per-item failures instead of stopping.
pub fn execute(
    items: &[WorkItem],
    kb: KbContext<'_>,
    generator: &dyn CandidateGenerator,
    ed_backend: &dyn EdBackend,
    config: &PipelineConfig,
) -> RunOutput {
    let results = config
        .execution
        .map(items, |item| process_item(item, kb, generator, ed_backend, config));
    let mut failures = Vec::new();
    let mut candidates = 0;
    let mut facts = Vec::new();
    for (item, result) in items.iter().zip(results) {
        match result {
            Ok((n, item_facts)) => {
                candidates += n;
                facts.extend(item_facts);
            }
            Err(e) => {
                log::warn!("work item {} {} failed: {e}", item.subject, item.pid);
                failures.push(ItemFailure {
                    subject: item.subject.clone(),
                    pid: item.pid.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    RunOutput {
        items: items.len(),
        candidates,
        facts: dedup_facts(facts),
        failures,
    }
}

/// [`execute`], failing when more than the configured share of items failed.
pub fn run_pipeline(
    items: &[WorkItem],
    kb: KbContext<'_>,
    generator: &dyn CandidateGenerator,
    ed_backend: &dyn EdBackend,
    config: &PipelineConfig,
) -> Result<RunOutput, PipelineError> {
    let output = execute(items, kb, generator, ed_backend, config);
    output.check_tolerance(config.failure_tolerance_pct)?;
    Ok(output)
}

/// Facts with `fused_score >= alpha`, order preserved.
pub fn filter_threshold(facts: &[CorroboratedFact], alpha: f64) -> Result<Vec<CorroboratedFact>, DataError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DataError::Invalid(format!("threshold must lie in [0, 1], got {alpha}")));
    }
    Ok(facts.iter().filter(|f| f.fused_score >= alpha).cloned().collect())
}
