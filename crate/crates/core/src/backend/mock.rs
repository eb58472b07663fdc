//! Deterministic stand-ins for the inference server, used as test oracles and
//! for fixture runs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::error::BackendError;
use crate::ingest::{build_name_index, KbSnapshot, NameIndex};
use crate::model::{normalize, EntityId, GroundFact};
use crate::prompt::{parse_corroboration_prompt, RelationRegistry};

use super::{EdBackend, EdRequest, EntityGuess, QaBackend, QaRequest, SpanAnswer};

/// Returns every gazetteer surface found verbatim in the context, at its
/// first occurrence, with the configured score. Ignores the question.
#[derive(Debug, Clone, Default)]
pub struct MockQaBackend {
    gazetteer: BTreeMap<String, f64>,
}

pub fn mock_qa_backend(gazetteer: BTreeMap<String, f64>) -> MockQaBackend {
    MockQaBackend { gazetteer }
}

impl QaBackend for MockQaBackend {
    fn answer(&self, request: &QaRequest) -> Result<Vec<SpanAnswer>, BackendError> {
        let ctx = &request.context;
        Ok(self
            .gazetteer
            .iter()
            .filter(|(surface, _)| !surface.is_empty())
            .filter_map(|(surface, &score)| {
                let byte = ctx.find(surface.as_str())?;
                let start = ctx[..byte].chars().count();
                Some(SpanAnswer {
                    text: surface.clone(),
                    score,
                    start,
                    end: start + surface.chars().count(),
                })
            })
            .collect())
    }
}

/// Returns every KB entity named in the context (other than the subject),
/// scored 1.0 when (subject, relation, entity) is a true fact and 0.5
/// otherwise. Relation and subject are recovered from the prompt.
///
/// An entity is reported by its label, unless another entity shares that
/// label and one of its aliases is unique, in which case the alias is
/// reported (as title-style generators do with "Birmingham, Alabama").
#[derive(Debug, Clone)]
pub struct MockEdBackend {
    registry: RelationRegistry,
    index: NameIndex,
    titles: HashMap<EntityId, String>,
    truth: HashSet<GroundFact>,
    max_name_tokens: usize,
}

pub fn mock_ed_backend(snapshot: &KbSnapshot, truth_facts: impl IntoIterator<Item = GroundFact>) -> MockEdBackend {
    let index = build_name_index(snapshot);
    let max_name_tokens = index
        .iter()
        .map(|(name, _)| name.as_str().split(' ').count())
        .max()
        .unwrap_or(1);
    let unique = |name: &str| index.lookup(name).is_some_and(|ids| ids.len() == 1);
    let titles = snapshot
        .entities()
        .map(|e| {
            let title = if unique(&e.label) {
                e.label.clone()
            } else {
                e.aliases
                    .iter()
                    .find(|a| unique(a))
                    .cloned()
                    .unwrap_or_else(|| e.label.clone())
            };
            (e.id.clone(), title)
        })
        .collect();
    MockEdBackend {
        registry: RelationRegistry::benchmark(),
        index,
        titles,
        truth: truth_facts.into_iter().collect(),
        max_name_tokens,
    }
}

impl MockEdBackend {
    pub fn with_registry(mut self, registry: RelationRegistry) -> Self {
        self.registry = registry;
        self
    }

    /// Entities whose normalized name equals some contiguous run of context
    /// tokens.
    fn mentioned(&self, context: &str) -> BTreeSet<EntityId> {
        let tokens: Vec<&str> = context.split_whitespace().collect();
        let mut found = BTreeSet::new();
        for start in 0..tokens.len() {
            for len in 1..=self.max_name_tokens.min(tokens.len() - start) {
                let phrase = tokens[start..start + len].join(" ");
                if let Some(ids) = self.index.get(&normalize(&phrase)) {
                    found.extend(ids.iter().cloned());
                }
            }
        }
        found
    }
}

impl EdBackend for MockEdBackend {
    fn disambiguate(&self, request: &EdRequest) -> Result<Vec<EntityGuess>, BackendError> {
        let Some((spec, subject_label)) = parse_corroboration_prompt(&self.registry, &request.prompt_with_markers)
        else {
            return Err(BackendError::InvalidRequest(format!(
                "mock backend cannot parse prompt {:?}",
                request.prompt_with_markers
            )));
        };
        let subjects: BTreeSet<EntityId> = self.index.lookup(&subject_label).cloned().unwrap_or_default();
        Ok(self
            .mentioned(&request.context)
            .into_iter()
            .filter(|e| !subjects.contains(e))
            .map(|entity| {
                let supported = subjects.iter().any(|s| {
                    self.truth.contains(&GroundFact {
                        subject: s.clone(),
                        pid: spec.pid.clone(),
                        object: entity.clone(),
                    })
                });
                EntityGuess {
                    name: self.titles[&entity].clone(),
                    score: if supported { 1.0 } else { 0.5 },
                }
            })
            .collect())
    }
}
