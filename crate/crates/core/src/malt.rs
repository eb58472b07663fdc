//! MALT-style benchmark construction: sampled subjects with all their gold
//! objects, multi-token / ambiguous / long-tail flags, per-relation
//! statistics, and the stratified evaluation/validation split.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, EvalError};
use crate::eval::{aggregate, AggregateMode, AggregateRow};
use crate::ingest::{is_ambiguous, is_long_tail, KbSnapshot, NameIndex};
use crate::model::{normalize, strip_qualifier, token_count, EntityId, NormalizedName};
use crate::par::Execution;
use crate::prompt::RelationRegistry;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactFlags {
    pub multi_token: bool,
    pub ambiguous: bool,
    pub long_tail: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldObject {
    pub id: EntityId,
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl GoldObject {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.label.as_str()).chain(self.aliases.iter().map(String::as_str))
    }

    /// Normalized names, qualifier-stripped variants included.
    pub fn match_keys(&self) -> Vec<NormalizedName> {
        let mut keys: Vec<NormalizedName> = self
            .names()
            .flat_map(|n| [normalize(n), normalize(strip_qualifier(n))])
            .filter(|k| !k.is_empty())
            .collect();
        keys.sort();
        keys.dedup();
        keys
    }
}

/// One benchmark item: a subject, a relation and every gold object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaltRecord {
    pub subject: EntityId,
    pub subject_label: String,
    pub pid: String,
    pub gold_objects: Vec<GoldObject>,
    pub flags: FactFlags,
}

impl MaltRecord {
    pub fn triple_count(&self) -> usize {
        self.gold_objects.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectSample {
    All,
    #[serde(untagged)]
    Count(usize),
}

impl std::str::FromStr for SubjectSample {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(SubjectSample::All);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected a positive integer or \"all\", got {s:?}")),
            Ok(n) => Ok(SubjectSample::Count(n)),
        }
    }
}

pub fn compute_flags(record: &MaltRecord, snapshot: &KbSnapshot, index: &NameIndex) -> Result<FactFlags, DataError> {
    let subject = snapshot.require(&record.subject)?;
    let objects = record
        .gold_objects
        .iter()
        .map(|o| snapshot.require(&o.id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FactFlags {
        multi_token: objects.iter().any(|o| token_count(&o.label) >= 2),
        ambiguous: is_ambiguous(subject, index) || objects.iter().any(|o| is_ambiguous(o, index)),
        long_tail: is_long_tail(subject),
    })
}

/// The record for (subject, pid) with every snapshot object, flags computed.
pub fn record_for(
    snapshot: &KbSnapshot,
    index: &NameIndex,
    subject: &EntityId,
    pid: &str,
) -> Result<MaltRecord, DataError> {
    let subject_rec = snapshot.require(subject)?;
    let gold_objects = snapshot
        .objects(subject, pid)
        .into_iter()
        .flatten()
        .map(|o| {
            let rec = snapshot.require(o)?;
            Ok(GoldObject {
                id: rec.id.clone(),
                label: rec.label.clone(),
                aliases: rec.aliases.iter().cloned().collect(),
            })
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    let mut record = MaltRecord {
        subject: subject.clone(),
        subject_label: subject_rec.label.clone(),
        pid: pid.to_string(),
        gold_objects,
        flags: FactFlags::default(),
    };
    record.flags = compute_flags(&record, snapshot, index)?;
    Ok(record)
}

/// Samples subjects uniformly without replacement per relation and keeps all
/// of their objects. Output is ordered by (pid, subject).
pub fn build_dataset(
    snapshot: &KbSnapshot,
    index: &NameIndex,
    registry: &RelationRegistry,
    sample: SubjectSample,
    seed: u64,
    exec: Execution,
) -> Result<Vec<MaltRecord>, DataError> {
    let pids: Vec<&str> = registry.pids().collect();
    let sections = exec.map(&pids, |pid| {
        let subjects = snapshot.subjects_with(pid);
        if subjects.is_empty() {
            log::warn!("relation {pid} has no subjects in the snapshot");
            return Ok(Vec::new());
        }
        let chosen: Vec<&EntityId> = match sample {
            SubjectSample::Count(n) if n < subjects.len() => {
                let mut rng = stream_rng(seed, pid);
                let mut picked = index::sample(&mut rng, subjects.len(), n).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|i| subjects[i]).collect()
            }
            _ => subjects,
        };
        chosen
            .into_iter()
            .map(|s| record_for(snapshot, index, s, pid))
            .collect::<Result<Vec<_>, _>>()
    });
    let mut records = Vec::new();
    for section in sections {
        records.extend(section?);
    }
    records.sort_by(|a, b| (&a.pid, &a.subject).cmp(&(&b.pid, &b.subject)));
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub pid: String,
    pub relation: String,
    pub triples: u64,
    pub multi_token_pct: f64,
    pub ambiguous_pct: f64,
    pub long_tail_pct: f64,
}

impl StatsRow {
    fn as_aggregate_row(&self) -> AggregateRow {
        AggregateRow {
            values: [self.multi_token_pct, self.ambiguous_pct, self.long_tail_pct],
            weight: self.triples as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
    /// Triple-weighted means of the row percentages; `None` for an empty table.
    pub aggregate: Option<StatsRow>,
}

impl StatsTable {
    pub fn from_rows(rows: Vec<StatsRow>) -> Self {
        let total: u64 = rows.iter().map(|r| r.triples).sum();
        let aggregate = if total == 0 {
            None
        } else {
            let weighted: Vec<_> = rows.iter().map(StatsRow::as_aggregate_row).collect();
            aggregate(&weighted, AggregateMode::Weighted)
                .ok()
                .map(|[m, a, l]| StatsRow {
                    pid: "-".into(),
                    relation: "Triple-weighted avg".into(),
                    triples: total,
                    multi_token_pct: m,
                    ambiguous_pct: a,
                    long_tail_pct: l,
                })
        };
        StatsTable { rows, aggregate }
    }

    /// Aligned plain-text table, one decimal.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let header = [
            "Relation",
            "ID",
            "Triples",
            "multi-token (%)",
            "ambiguous (%)",
            "long-tail (%)",
        ];
        let mut lines: Vec<[String; 6]> = vec![header.map(String::from)];
        for row in self.rows.iter().chain(self.aggregate.iter()) {
            lines.push([
                row.relation.clone(),
                row.pid.clone(),
                row.triples.to_string(),
                format!("{:.1}", row.multi_token_pct),
                format!("{:.1}", row.ambiguous_pct),
                format!("{:.1}", row.long_tail_pct),
            ]);
        }
        let widths: Vec<usize> = (0..6)
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        for line in &lines {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    if c < 2 {
                        format!("{cell:<w$}", w = widths[c])
                    } else {
                        format!("{cell:>w$}", w = widths[c])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Per-relation flag percentages over gold triples. A triple carries the
/// multi-token flag of its own object and the record's ambiguous and
/// long-tail flags.
pub fn dataset_stats(records: &[MaltRecord], registry: &RelationRegistry) -> StatsTable {
    #[derive(Default)]
    struct Counts {
        triples: u64,
        multi: u64,
        ambiguous: u64,
        long_tail: u64,
    }
    let mut by_pid: BTreeMap<&str, Counts> = BTreeMap::new();
    for record in records {
        let c = by_pid.entry(record.pid.as_str()).or_default();
        let n = record.gold_objects.len() as u64;
        c.triples += n;
        c.multi += record
            .gold_objects
            .iter()
            .filter(|o| token_count(&o.label) >= 2)
            .count() as u64;
        if record.flags.ambiguous {
            c.ambiguous += n;
        }
        if record.flags.long_tail {
            c.long_tail += n;
        }
    }
    let rows = by_pid
        .into_iter()
        .map(|(pid, c)| StatsRow {
            pid: pid.to_string(),
            relation: registry.get(pid).map(|s| s.name.clone()).unwrap_or_default(),
            triples: c.triples,
            multi_token_pct: pct(c.multi, c.triples),
            ambiguous_pct: pct(c.ambiguous, c.triples),
            long_tail_pct: pct(c.long_tail, c.triples),
        })
        .collect();
    StatsTable::from_rows(rows)
}

/// `round(fraction * n)` with halves rounded up.
pub fn validation_size(fraction: f64, n: usize) -> usize {
    // the nudge keeps products like 0.15 * 10 = 1.4999999999999998 on the half
    (fraction * n as f64 + 1e-9).round().max(0.0) as usize
}

/// Stratified per-relation split into (evaluation, validation). Both halves
/// are ordered by (pid, subject).
pub fn split_dataset(
    records: &[MaltRecord],
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<MaltRecord>, Vec<MaltRecord>), EvalError> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(EvalError::InvalidArgument(format!(
            "validation fraction must lie in (0, 1), got {validation_fraction}"
        )));
    }
    let mut by_pid: BTreeMap<&str, Vec<&MaltRecord>> = BTreeMap::new();
    for r in records {
        by_pid.entry(r.pid.as_str()).or_default().push(r);
    }
    let mut evaluation = Vec::new();
    let mut validation = Vec::new();
    for (pid, mut group) in by_pid {
        group.sort_by(|a, b| a.subject.cmp(&b.subject));
        let n_val = if group.len() == 1 {
            log::warn!("relation {pid} has a single record; it goes to the evaluation set");
            0
        } else {
            validation_size(validation_fraction, group.len())
        };
        let mut rng = stream_rng(seed, pid);
        group.shuffle(&mut rng);
        let (val, eval) = group.split_at(n_val);
        validation.extend(val.iter().map(|r| (*r).clone()));
        evaluation.extend(eval.iter().map(|r| (*r).clone()));
    }
    let order = |a: &MaltRecord, b: &MaltRecord| (&a.pid, &a.subject).cmp(&(&b.pid, &b.subject));
    evaluation.sort_by(order);
    validation.sort_by(order);
    Ok((evaluation, validation))
}
