//! Relation verbalizations and prompt rendering for both stages.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::model::{EntityId, RelationSpec, MENTION_MARKER, SUBJECT_PLACEHOLDER};

// (pid, name, subject type, verb phrase, object type)
pub const BENCHMARK_RELATIONS: [(&str, &str, &str, &str, &str); 8] = [
    ("P112", "founded by", "business", "is founded by", "person"),
    ("P175", "performer", "song", "is performed by", "person"),
    ("P86", "composer", "song", "is composed by", "person"),
    ("P19", "place of birth", "person", "was born in", "place"),
    ("P20", "place of death", "person", "died in", "place"),
    ("P108", "employer", "person", "worked in", "place"),
    ("P69", "educated at", "person", "graduated from", "place"),
    ("P551", "residence", "person", "lived in", "place"),
];

/// Builds the two templates from the generic verbalization
/// `the <subject type> [x] <verb> which <object type>?`.
pub fn make_generic_spec(
    pid: &str,
    name: &str,
    subject_type: &str,
    verb_phrase: &str,
    object_type: &str,
) -> Result<RelationSpec, DataError> {
    for (field, value) in [
        ("pid", pid),
        ("name", name),
        ("subject_type", subject_type),
        ("verb_phrase", verb_phrase),
        ("object_type", object_type),
    ] {
        if value.trim().is_empty() {
            return Err(DataError::Invalid(format!("relation {pid}: {field} must be non-empty")));
        }
    }
    Ok(RelationSpec {
        pid: pid.to_string(),
        name: name.to_string(),
        subject_type_label: subject_type.to_string(),
        object_type_label: object_type.to_string(),
        verb_phrase: verb_phrase.to_string(),
        qa_template: format!("the {subject_type} {SUBJECT_PLACEHOLDER} {verb_phrase} which {object_type}?"),
        ed_template: format!(
            "the {subject_type} {SUBJECT_PLACEHOLDER} {verb_phrase} {MENTION_MARKER} this {object_type} {MENTION_MARKER}"
        ),
    })
}

/// Registered relations keyed by pid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationRegistry {
    specs: BTreeMap<String, RelationSpec>,
}

impl Default for RelationRegistry {
    fn default() -> Self {
        Self::benchmark()
    }
}

impl RelationRegistry {
    /// The eight benchmark relations.
    pub fn benchmark() -> Self {
        let specs = BENCHMARK_RELATIONS
            .iter()
            .map(|(pid, name, st, verb, ot)| {
                make_generic_spec(pid, name, st, verb, ot).expect("built-in relation is well formed")
            })
            .collect::<Vec<_>>();
        Self::from_specs(specs).expect("built-in registry is valid")
    }

    pub fn from_specs(specs: impl IntoIterator<Item = RelationSpec>) -> Result<Self, DataError> {
        let mut map = BTreeMap::new();
        for spec in specs {
            spec.validate()?;
            if let Some(prev) = map.insert(spec.pid.clone(), spec) {
                return Err(DataError::Invalid(format!("relation {} registered twice", prev.pid)));
            }
        }
        Ok(RelationRegistry { specs: map })
    }

    /// Reads a JSON array of relation specs.
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let specs: Vec<RelationSpec> = serde_json::from_str(text).map_err(|e| DataError::from_json(e.line(), e))?;
        Self::from_specs(specs)
    }

    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn get(&self, pid: &str) -> Option<&RelationSpec> {
        self.specs.get(pid)
    }

    pub fn require(&self, pid: &str) -> Result<&RelationSpec, DataError> {
        self.get(pid).ok_or_else(|| DataError::UnknownRelation(pid.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelationSpec> {
        self.specs.values()
    }

    pub fn pids(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Generation,
    Corroboration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub kind: PromptKind,
    pub pid: String,
    pub subject: EntityId,
}

fn fill_subject(template: &str, subject_label: &str) -> String {
    template.replacen(SUBJECT_PLACEHOLDER, subject_label, 1)
}

/// Stage-1 question, e.g. "the song Anyone and Everyone is performed by which person?".
pub fn render_generation_prompt(spec: &RelationSpec, subject: &EntityId, subject_label: &str) -> RenderedPrompt {
    RenderedPrompt {
        text: fill_subject(&spec.qa_template, subject_label),
        kind: PromptKind::Generation,
        pid: spec.pid.clone(),
        subject: subject.clone(),
    }
}

/// Stage-2 statement with the object slot wrapped in `[ENT]` markers.
pub fn render_corroboration_prompt(spec: &RelationSpec, subject: &EntityId, subject_label: &str) -> RenderedPrompt {
    RenderedPrompt {
        text: fill_subject(&spec.ed_template, subject_label),
        kind: PromptKind::Corroboration,
        pid: spec.pid.clone(),
        subject: subject.clone(),
    }
}

/// Recovers (pid, subject label) from a rendered corroboration prompt.
pub fn parse_corroboration_prompt<'a>(
    registry: &'a RelationRegistry,
    prompt: &str,
) -> Option<(&'a RelationSpec, String)> {
    registry.iter().find_map(|spec| {
        let (head, tail) = spec.ed_template.split_once(SUBJECT_PLACEHOLDER)?;
        let label = prompt.strip_prefix(head)?.strip_suffix(tail)?;
        (!label.is_empty()).then(|| (spec, label.to_string()))
    })
}
