//! Article store and the deterministic sentence splitter used for contexts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::model::EntityId;

const ABBREVIATIONS: [&str; 5] = ["Mr.", "Dr.", "St.", "No.", "vs."];
const MIN_SENTENCE_CHARS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleLine {
    pub id: EntityId,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArticleStore {
    articles: BTreeMap<EntityId, String>,
}

impl ArticleStore {
    pub fn insert(&mut self, id: EntityId, text: String) -> Option<String> {
        self.articles.insert(id, text)
    }

    pub fn article(&self, id: &EntityId) -> Option<&str> {
        self.articles.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, text) in &self.articles {
            serde_json::to_writer(
                &mut out,
                &ArticleLine {
                    id: id.clone(),
                    text: text.clone(),
                },
            )?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn load_corpus<R: BufRead>(reader: R) -> Result<ArticleStore, DataError> {
    let mut store = ArticleStore::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::io(format!("reading line {line_no}"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ArticleLine = serde_json::from_str(&line).map_err(|e| DataError::from_json(line_no, e))?;
        if store.insert(parsed.id.clone(), parsed.text).is_some() {
            log::warn!(
                "line {line_no}: duplicate article for {}; keeping the later one",
                parsed.id
            );
        }
    }
    Ok(store)
}

pub fn load_corpus_file(path: &Path) -> Result<ArticleStore, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path.display().to_string(), e))?;
    load_corpus(BufReader::new(file))
}

/// One sentence of a subject's article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSentence {
    pub subject: EntityId,
    pub index: usize,
    pub text: String,
}

fn suppresses_boundary(word: &str) -> bool {
    if ABBREVIATIONS.contains(&word) {
        return true;
    }
    let mut chars = word.chars();
    matches!((chars.next(), chars.next(), chars.next()), (Some(c), Some('.'), None) if c.is_alphabetic())
}

fn is_boundary(text: &str, punct_pos: usize, punct: char) -> bool {
    let after = &text[punct_pos + punct.len_utf8()..];
    if after.is_empty() {
        return true;
    }
    let rest = after.trim_start();
    if rest.len() == after.len() {
        return false;
    }
    match rest.chars().next() {
        None => true,
        Some(c) if !c.is_uppercase() => false,
        Some(_) if punct == '.' => {
            let word_start = text[..punct_pos]
                .rfind(char::is_whitespace)
                .map(|p| p + text[p..].chars().next().map_or(1, char::len_utf8))
                .unwrap_or(0);
            !suppresses_boundary(&text[word_start..=punct_pos])
        }
        Some(_) => true,
    }
}

/// Splits `text` at '.', '!' or '?' followed by whitespace and an uppercase
/// letter (or by the end of the text). Abbreviations and single-letter
/// initials do not end a sentence; fragments under three characters are
/// dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (pos, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') && is_boundary(text, pos, c) {
            out.push(&text[start..pos + c.len_utf8()]);
            start = pos + c.len_utf8();
        }
    }
    out.push(&text[start..]);
    out.into_iter()
        .map(str::trim)
        .filter(|s| s.chars().count() >= MIN_SENTENCE_CHARS)
        .collect()
}

/// Context sentences of `subject`'s article, empty when it has none.
pub fn sentences(store: &ArticleStore, subject: &EntityId) -> Vec<ContextSentence> {
    let Some(text) = store.article(subject) else {
        return Vec::new();
    };
    split_sentences(text)
        .into_iter()
        .enumerate()
        .map(|(index, s)| ContextSentence {
            subject: subject.clone(),
            index,
            text: s.to_string(),
        })
        .collect()
}

/// Groups consecutive sentences into windows of `size`, each indexed by its
/// first sentence. `size` of 1 returns the input.
pub fn windows(sentences: &[ContextSentence], size: usize) -> Vec<ContextSentence> {
    let size = size.max(1);
    if size == 1 {
        return sentences.to_vec();
    }
    if sentences.len() <= size {
        return sentences
            .first()
            .map(|first| ContextSentence {
                subject: first.subject.clone(),
                index: first.index,
                text: join_texts(sentences),
            })
            .into_iter()
            .collect();
    }
    sentences
        .windows(size)
        .map(|w| ContextSentence {
            subject: w[0].subject.clone(),
            index: w[0].index,
            text: join_texts(w),
        })
        .collect()
}

fn join_texts(sentences: &[ContextSentence]) -> String {
    sentences.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ")
}
