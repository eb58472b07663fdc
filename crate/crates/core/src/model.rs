//! Shared domain types and the name-normalization rules every matching step
//! relies on.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::DataError;

pub const SUBJECT_PLACEHOLDER: &str = "[x]";
pub const MENTION_MARKER: &str = "[ENT]";

/// Opaque entity identifier, e.g. `Q2256`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(value: impl Into<String>) -> Result<Self, DataError> {
        let value = value.into();
        if value.is_empty() {
            return Err(DataError::Invalid("entity id must be non-empty".into()));
        }
        Ok(EntityId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EntityId {
    type Error = DataError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        EntityId::new(value)
    }
}

impl From<EntityId> for String {
    fn from(id: EntityId) -> String {
        id.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One knowledge-base entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: EntityId,
    pub label: String,
    /// Never contains `label` itself.
    pub aliases: BTreeSet<String>,
    pub type_tags: BTreeSet<String>,
    /// Outgoing statements in the full source KB, not only the ones retained
    /// in a snapshot.
    pub statement_count: u64,
}

impl EntityRecord {
    pub fn new(
        id: EntityId,
        label: impl Into<String>,
        aliases: impl IntoIterator<Item = String>,
        type_tags: impl IntoIterator<Item = String>,
        statement_count: u64,
    ) -> Result<Self, DataError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(DataError::Invalid(format!("entity {id} has an empty label")));
        }
        let aliases = aliases.into_iter().filter(|a| *a != label).collect();
        Ok(EntityRecord {
            id,
            label,
            aliases,
            type_tags: type_tags.into_iter().collect(),
            statement_count,
        })
    }

    /// Label followed by aliases.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.label.as_str()).chain(self.aliases.iter().map(String::as_str))
    }
}

/// A (subject, relation, object) triple between two known entities.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroundFact {
    pub subject: EntityId,
    pub pid: String,
    pub object: EntityId,
}

/// A relation with its verbalization for both prompting stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub pid: String,
    pub name: String,
    pub subject_type_label: String,
    pub object_type_label: String,
    pub verb_phrase: String,
    /// Question with a single `[x]` placeholder for the subject.
    pub qa_template: String,
    /// Statement with a single `[x]` and a pair of `[ENT]` markers around the
    /// object mention.
    pub ed_template: String,
}

impl RelationSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.pid.is_empty() {
            return Err(DataError::Invalid("relation pid must be non-empty".into()));
        }
        let bad = |what: &str| DataError::Invalid(format!("relation {}: {what}", self.pid));
        if self.qa_template.matches(SUBJECT_PLACEHOLDER).count() != 1 {
            return Err(bad("qa_template needs exactly one [x]"));
        }
        if self.ed_template.matches(SUBJECT_PLACEHOLDER).count() != 1 {
            return Err(bad("ed_template needs exactly one [x]"));
        }
        if self.ed_template.matches(MENTION_MARKER).count() != 2 {
            return Err(bad("ed_template needs exactly two [ENT] markers"));
        }
        Ok(())
    }
}

/// A name after [`normalize`]. Only `normalize` constructs one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct NormalizedName(String);

impl NormalizedName {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for NormalizedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

// Brackets are kept so that "Bratsch (band)" normalizes to "bratsch (band)"
// rather than losing its closing parenthesis.
fn is_strippable_punct(c: char) -> bool {
    if matches!(c, '(' | ')' | '[' | ']' | '{' | '}') {
        return false;
    }
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'..='\u{201F}' | '\u{2010}'..='\u{2015}' | '«' | '»' | '¿' | '¡' | '…' | '、' | '。' | '・'
        )
}

/// Compatibility-normalize, case-fold, strip surrounding punctuation and
/// collapse internal whitespace.
pub fn normalize(raw: &str) -> NormalizedName {
    let folded: String = raw.nfkc().collect::<String>().to_lowercase().nfkc().collect();
    let trimmed = folded.trim_matches(|c: char| c.is_whitespace() || is_strippable_punct(c));
    let collapsed = trimmed.split_whitespace().collect::<Vec<_>>().join(" ");
    NormalizedName(collapsed)
}

/// Removes one trailing parenthetical group, e.g. `"Bratsch (band)"` becomes
/// `"Bratsch"`. Returns the input unchanged when there is no such group or
/// nothing would remain.
pub fn strip_qualifier(name: &str) -> &str {
    let trimmed = name.trim_end();
    if !trimmed.ends_with(')') {
        return name;
    }
    let mut depth = 0usize;
    for (pos, c) in trimmed.char_indices().rev() {
        match c {
            ')' => depth += 1,
            '(' => {
                depth -= 1;
                if depth == 0 {
                    let head = trimmed[..pos].trim_end();
                    return if head.is_empty() { name } else { head };
                }
            }
            _ => {}
        }
    }
    name
}

/// Number of whitespace-delimited tokens.
pub fn token_count(label: &str) -> usize {
    label.split_whitespace().count()
}
