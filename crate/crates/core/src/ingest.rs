//! Snapshot ingestion, the alias table, and long-tail / ambiguity tests.
//!
//! A snapshot file holds one JSON object per line:
//!
//! ```text
//! {"id":"Q2256","label":"Birmingham","aliases":[],"types":["City"],
//!  "statement_count":412,"facts":[{"pid":"P17","object":"Q145"}]}
//! ```
//!
//! `statement_count` is taken as written. A snapshot usually retains only the
//! benchmark relations, while long-tail status depends on every statement the
//! entity has in the source KB, so the count cannot be recomputed here.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::model::{normalize, EntityId, EntityRecord, GroundFact, NormalizedName};
use crate::par::Execution;

/// Entities with at most this many statements are long-tail.
pub const LONG_TAIL_MAX_STATEMENTS: u64 = 13;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactLine {
    pub pid: String,
    pub object: EntityId,
}

/// On-disk form of one snapshot record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotLine {
    pub id: EntityId,
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub types: Vec<String>,
    pub statement_count: u64,
    #[serde(default)]
    pub facts: Vec<FactLine>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KbSnapshot {
    entities: BTreeMap<EntityId, EntityRecord>,
    facts: BTreeMap<(EntityId, String), BTreeSet<EntityId>>,
}

impl KbSnapshot {
    /// Builds a snapshot from already-parsed lines; later lines with the same
    /// id replace earlier ones.
    pub fn from_lines(lines: impl IntoIterator<Item = SnapshotLine>) -> Result<Self, DataError> {
        let mut latest: BTreeMap<EntityId, SnapshotLine> = BTreeMap::new();
        for line in lines {
            if let Some(prev) = latest.insert(line.id.clone(), line) {
                log::warn!("duplicate entity id {}; keeping the later record", prev.id);
            }
        }
        Self::assemble(latest.into_values())
    }

    fn assemble(lines: impl IntoIterator<Item = SnapshotLine>) -> Result<Self, DataError> {
        let mut snapshot = KbSnapshot::default();
        for line in lines {
            let record = EntityRecord::new(
                line.id.clone(),
                line.label,
                line.aliases,
                line.types,
                line.statement_count,
            )?;
            if (line.facts.len() as u64) > record.statement_count {
                return Err(DataError::Invalid(format!(
                    "entity {} lists {} facts but statement_count is {}",
                    record.id,
                    line.facts.len(),
                    record.statement_count
                )));
            }
            for fact in line.facts {
                snapshot
                    .facts
                    .entry((line.id.clone(), fact.pid))
                    .or_default()
                    .insert(fact.object);
            }
            snapshot.entities.insert(record.id.clone(), record);
        }
        for objects in snapshot.facts.values() {
            if let Some(missing) = objects.iter().find(|o| !snapshot.entities.contains_key(*o)) {
                return Err(DataError::DanglingEntity(missing.to_string()));
            }
        }
        Ok(snapshot)
    }

    pub fn entity(&self, id: &EntityId) -> Option<&EntityRecord> {
        self.entities.get(id)
    }

    pub fn require(&self, id: &EntityId) -> Result<&EntityRecord, DataError> {
        self.entity(id).ok_or_else(|| DataError::DanglingEntity(id.to_string()))
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entities.values()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn objects(&self, subject: &EntityId, pid: &str) -> Option<&BTreeSet<EntityId>> {
        self.facts.get(&(subject.clone(), pid.to_string()))
    }

    /// Subjects with at least one `pid` fact, in id order.
    pub fn subjects_with(&self, pid: &str) -> Vec<&EntityId> {
        self.facts.keys().filter(|(_, p)| p == pid).map(|(s, _)| s).collect()
    }

    pub fn ground_facts(&self) -> impl Iterator<Item = GroundFact> + '_ {
        self.facts.iter().flat_map(|((subject, pid), objects)| {
            objects.iter().map(move |object| GroundFact {
                subject: subject.clone(),
                pid: pid.clone(),
                object: object.clone(),
            })
        })
    }

    pub fn fact_count(&self) -> usize {
        self.facts.values().map(BTreeSet::len).sum()
    }

    /// Serializes back to the line format, one entity per line in id order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for record in self.entities.values() {
            let facts = self
                .facts
                .range((record.id.clone(), String::new())..)
                .take_while(|((s, _), _)| *s == record.id)
                .flat_map(|((_, pid), objects)| {
                    objects.iter().map(move |o| FactLine {
                        pid: pid.clone(),
                        object: o.clone(),
                    })
                })
                .collect();
            let line = SnapshotLine {
                id: record.id.clone(),
                label: record.label.clone(),
                aliases: record.aliases.iter().cloned().collect(),
                types: record.type_tags.iter().cloned().collect(),
                statement_count: record.statement_count,
                facts,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn parse_lines<R: BufRead>(reader: R) -> Result<Vec<(usize, SnapshotLine)>, DataError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::io(format!("reading line {line_no}"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SnapshotLine = serde_json::from_str(&line).map_err(|e| DataError::from_json(line_no, e))?;
        out.push((line_no, parsed));
    }
    Ok(out)
}

/// Reads a snapshot stream in a single pass.
pub fn load_snapshot<R: BufRead>(reader: R) -> Result<KbSnapshot, DataError> {
    let lines = parse_lines(reader)?;
    KbSnapshot::from_lines(lines.into_iter().map(|(_, l)| l))
}

pub fn load_snapshot_file(path: &Path) -> Result<KbSnapshot, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path.display().to_string(), e))?;
    load_snapshot(BufReader::new(file))
}

/// Parses several shard files concurrently. Records are merged by
/// (shard index, line number), so the result matches reading the shards
/// back to back.
pub fn load_snapshot_shards(paths: &[PathBuf], exec: Execution) -> Result<KbSnapshot, DataError> {
    let parsed = exec.map(paths, |path| {
        let file = File::open(path).map_err(|e| DataError::io(path.display().to_string(), e))?;
        parse_lines(BufReader::new(file))
    });
    let mut keyed = BTreeMap::new();
    for (shard, lines) in parsed.into_iter().enumerate() {
        for (line_no, line) in lines? {
            keyed.insert((shard, line_no), line);
        }
    }
    KbSnapshot::from_lines(keyed.into_values())
}

/// Alias table: every normalized label or alias to the entities carrying it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameIndex {
    by_name: HashMap<NormalizedName, BTreeSet<EntityId>>,
}

impl NameIndex {
    pub fn get(&self, name: &NormalizedName) -> Option<&BTreeSet<EntityId>> {
        self.by_name.get(name)
    }

    /// Entities whose normalized names include `normalize(raw)`.
    pub fn lookup(&self, raw: &str) -> Option<&BTreeSet<EntityId>> {
        self.by_name.get(&normalize(raw))
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NormalizedName, &BTreeSet<EntityId>)> {
        self.by_name.iter()
    }
}

pub fn build_name_index(snapshot: &KbSnapshot) -> NameIndex {
    let mut by_name: HashMap<NormalizedName, BTreeSet<EntityId>> = HashMap::new();
    for entity in snapshot.entities() {
        for name in entity.names() {
            let key = normalize(name);
            if key.is_empty() {
                continue;
            }
            by_name.entry(key).or_default().insert(entity.id.clone());
        }
    }
    NameIndex { by_name }
}

pub fn is_long_tail(entity: &EntityRecord) -> bool {
    entity.statement_count <= LONG_TAIL_MAX_STATEMENTS
}

/// True when one of the entity's names is shared with another entity.
pub fn is_ambiguous(entity: &EntityRecord, index: &NameIndex) -> bool {
    entity
        .names()
        .filter_map(|n| index.get(&normalize(n)))
        .any(|ids| ids.len() >= 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    const BIRMINGHAM: &str = r#"{"id":"Q2256","label":"Birmingham","aliases":["Brum"],"types":["City"],"statement_count":400}
{"id":"Q79867","label":"Birmingham","aliases":["Birmingham, Alabama"],"types":["City"],"statement_count":300}
"#;

    #[test]
    fn loads_two_entities() {
        let snap = load_snapshot(BIRMINGHAM.as_bytes()).unwrap();
        assert_eq!(snap.len(), 2);
        assert_eq!(snap.entity(&id("Q2256")).unwrap().statement_count, 400);
        assert_eq!(snap.fact_count(), 0);
    }

    #[test]
    fn alias_equal_to_label_is_dropped() {
        let text = r#"{"id":"Q1","label":"Bratsch","aliases":["Bratsch","Bratsch band"],"statement_count":5}"#;
        let snap = load_snapshot(text.as_bytes()).unwrap();
        let rec = snap.entity(&id("Q1")).unwrap();
        assert_eq!(rec.aliases.iter().collect::<Vec<_>>(), vec!["Bratsch band"]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"id\":\"Q1\",\"label\":\"A\",\"statement_count\":1}\n{not json}\n";
        let err = load_snapshot(text.as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let text = "{\"id\":\"Q1\",\"statement_count\":1}\n";
        match load_snapshot(text.as_bytes()).unwrap_err() {
            DataError::MissingField { line, field } => {
                assert_eq!(line, 1);
                assert_eq!(field, "label");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_id_last_wins() {
        let text = "{\"id\":\"Q1\",\"label\":\"A\",\"statement_count\":1}\n{\"id\":\"Q1\",\"label\":\"B\",\"statement_count\":2}\n";
        let snap = load_snapshot(text.as_bytes()).unwrap();
        assert_eq!(snap.len(), 1);
        assert_eq!(snap.entity(&id("Q1")).unwrap().label, "B");
    }

    #[test]
    fn dangling_fact_object_rejected() {
        let text = r#"{"id":"Q1","label":"A","statement_count":1,"facts":[{"pid":"P19","object":"Q9"}]}"#;
        assert!(matches!(
            load_snapshot(text.as_bytes()).unwrap_err(),
            DataError::DanglingEntity(ref s) if s == "Q9"
        ));
    }

    #[test]
    fn fact_count_above_statement_count_rejected() {
        let text = r#"{"id":"Q1","label":"A","statement_count":0,"facts":[{"pid":"P19","object":"Q1"}]}"#;
        assert!(load_snapshot(text.as_bytes()).is_err());
    }

    #[test]
    fn unknown_fields_ignored() {
        let text = r#"{"id":"Q1","label":"A","statement_count":1,"sitelinks":{"enwiki":"A"}}"#;
        assert_eq!(load_snapshot(text.as_bytes()).unwrap().len(), 1);
    }

    #[test]
    fn birmingham_collision() {
        let snap = load_snapshot(BIRMINGHAM.as_bytes()).unwrap();
        let index = build_name_index(&snap);
        let ids: Vec<_> = index.lookup("Birmingham").unwrap().iter().map(|i| i.as_str()).collect();
        assert_eq!(ids, vec!["Q2256", "Q79867"]);
        assert!(is_ambiguous(snap.entity(&id("Q2256")).unwrap(), &index));
        assert!(is_ambiguous(snap.entity(&id("Q79867")).unwrap(), &index));
        assert_eq!(index.lookup("birmingham, alabama").unwrap().len(), 1);
    }

    #[test]
    fn unique_names_give_singleton_buckets() {
        let text = r#"{"id":"Q1","label":"Bratsch (band)","aliases":["Bratsch"],"statement_count":3}"#;
        let snap = load_snapshot(text.as_bytes()).unwrap();
        let index = build_name_index(&snap);
        assert_eq!(index.len(), 2);
        assert!(index.iter().all(|(_, ids)| ids.len() == 1));
        assert!(!is_ambiguous(snap.entity(&id("Q1")).unwrap(), &index));
    }

    #[test]
    fn long_tail_boundary() {
        let mut rec = EntityRecord::new(id("Q1"), "A", vec![], vec![], 13).unwrap();
        assert!(is_long_tail(&rec));
        rec.statement_count = 14;
        assert!(!is_long_tail(&rec));
        rec.statement_count = 0;
        assert!(is_long_tail(&rec));
    }

    #[test]
    fn round_trips_through_jsonl() {
        let text = r#"{"id":"Q1","label":"A","aliases":["a1"],"types":["Human"],"statement_count":3,"facts":[{"pid":"P19","object":"Q2"},{"pid":"P551","object":"Q2"}]}
{"id":"Q2","label":"B","statement_count":1}"#;
        let snap = load_snapshot(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        snap.write_jsonl(&mut buf).unwrap();
        assert_eq!(load_snapshot(buf.as_slice()).unwrap(), snap);
    }
}
