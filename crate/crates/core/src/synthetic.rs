//! Synthetic knowledge bases and corpora for tests, benches and fixture runs.
//!
//! A [`World`] bundles a snapshot, one article per subject and a gazetteer for
//! the mock QA backend. Every snapshot fact is stated in its subject's article
//! and every gold object is in the gazetteer at score 1.0, so a mock run over
//! a world recovers all facts at fused score 1.0. Distractor mentions score
//! at most 0.75.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{ArticleLine, ArticleStore};
use crate::error::DataError;
use crate::ingest::{FactLine, KbSnapshot, SnapshotLine};
use crate::model::{EntityId, GroundFact};
use crate::prompt::BENCHMARK_RELATIONS;
use crate::rng::stream_rng;

/// Gazetteer score for entities mentioned only as distractors.
pub const DISTRACTOR_SCORE: f64 = 0.8;
/// Gazetteer score for strings that name no KB entity.
pub const NOISE_SCORE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub entities: Vec<SnapshotLine>,
    pub articles: Vec<ArticleLine>,
    pub gazetteer: BTreeMap<String, f64>,
}

impl World {
    pub fn snapshot(&self) -> Result<KbSnapshot, DataError> {
        KbSnapshot::from_lines(self.entities.iter().cloned())
    }

    pub fn corpus(&self) -> ArticleStore {
        let mut store = ArticleStore::default();
        for a in &self.articles {
            store.insert(a.id.clone(), a.text.clone());
        }
        store
    }

    /// Every fact in the snapshot; the mock ED backend's notion of truth.
    pub fn truth(&self) -> Vec<GroundFact> {
        let mut out: Vec<GroundFact> = self
            .entities
            .iter()
            .flat_map(|e| {
                e.facts.iter().map(|f| GroundFact {
                    subject: e.id.clone(),
                    pid: f.pid.clone(),
                    object: f.object.clone(),
                })
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Writes `snapshot.jsonl`, `corpus.jsonl` and `gazetteer.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), DataError> {
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |e| DataError::io(p, e)
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        crate::jsonl::write_jsonl_file(&dir.join("snapshot.jsonl"), &self.entities)?;
        crate::jsonl::write_jsonl_file(&dir.join("corpus.jsonl"), &self.articles)?;
        let gaz = dir.join("gazetteer.json");
        let text = serde_json::to_string_pretty(&self.gazetteer).expect("map of strings serializes");
        std::fs::write(&gaz, text + "\n").map_err(io(&gaz))
    }
}

fn sentence(pid: &str, subject: &str, object: &str) -> String {
    match pid {
        "P112" => format!("{subject} was started by {object} in a small garage."),
        "P175" => format!("{subject} was performed by {object} on the debut album."),
        "P86" => format!("The music of {subject} was written by {object}."),
        "P19" => format!("{subject} was born in {object}."),
        "P20" => format!("{subject} died in {object} after a long illness."),
        "P108" => format!("{subject} took a job at {object}."),
        "P69" => format!("{subject} studied at {object}."),
        "P551" => format!("{subject} lived in {object} for many years."),
        _ => format!("{subject} is linked to {object}."),
    }
}

struct Draft {
    id: String,
    label: String,
    aliases: Vec<String>,
    kind: &'static str,
    extra_statements: u64,
    facts: Vec<(&'static str, String)>,
    distractors: Vec<String>,
    noise: Vec<String>,
}

impl Draft {
    fn new(id: impl Into<String>, label: impl Into<String>, kind: &'static str) -> Self {
        Draft {
            id: id.into(),
            label: label.into(),
            aliases: Vec::new(),
            kind,
            extra_statements: 4,
            facts: Vec::new(),
            distractors: Vec::new(),
            noise: Vec::new(),
        }
    }
}

fn assemble(drafts: Vec<Draft>) -> World {
    let labels: BTreeMap<&str, &str> = drafts.iter().map(|d| (d.id.as_str(), d.label.as_str())).collect();
    let gold_objects: BTreeSet<&str> = drafts
        .iter()
        .flat_map(|d| d.facts.iter().map(|(_, o)| o.as_str()))
        .collect();

    let mut gazetteer = BTreeMap::new();
    for d in &drafts {
        if matches!(d.kind, "person" | "place") {
            let score = if gold_objects.contains(d.id.as_str()) {
                1.0
            } else {
                DISTRACTOR_SCORE
            };
            gazetteer.insert(d.label.clone(), score);
        }
        for n in &d.noise {
            gazetteer.insert(n.clone(), NOISE_SCORE);
        }
    }

    let mut entities = Vec::new();
    let mut articles = Vec::new();
    for d in &drafts {
        if !d.facts.is_empty() {
            let mut text: Vec<String> = d
                .facts
                .iter()
                .map(|(pid, o)| sentence(pid, &d.label, labels[o.as_str()]))
                .collect();
            text.extend(
                d.distractors
                    .iter()
                    .map(|o| format!("{} was once compared with {}.", d.label, labels[o.as_str()])),
            );
            text.extend(d.noise.iter().map(|n| format!("It was later discussed by {n}.")));
            articles.push(ArticleLine {
                id: EntityId::new(&d.id).expect("non-empty id"),
                text: text.join(" "),
            });
        }
        entities.push(SnapshotLine {
            id: EntityId::new(&d.id).expect("non-empty id"),
            label: d.label.clone(),
            aliases: d.aliases.clone(),
            types: vec![d.kind.to_string()],
            statement_count: d.facts.len() as u64 + d.extra_statements,
            facts: d
                .facts
                .iter()
                .map(|(pid, o)| FactLine {
                    pid: pid.to_string(),
                    object: EntityId::new(o).expect("non-empty id"),
                })
                .collect(),
        });
    }
    World {
        entities,
        articles,
        gazetteer,
    }
}

/// The bundled fixture: 50 entities, 32 planted facts, a pair of places that
/// share the label "Birmingham", and distractor mentions in every article.
pub fn planted_world() -> World {
    let people = [
        ("Q1001", "Lhasa de Sela", &["Lhasa"][..]),
        ("Q1002", "Zoe Keating", &[]),
        ("Q1003", "Marta Oliveira", &[]),
        ("Q1004", "Ivan Petrov", &[]),
        ("Q1005", "Nadia Haddad", &[]),
        ("Q1006", "Tomas Berg", &[]),
        ("Q1007", "Grace Okafor", &[]),
        ("Q1008", "Kenji Sato", &[]),
    ];
    let places = [
        ("Q2256", "Birmingham", &[][..]),
        ("Q79867", "Birmingham", &["Birmingham, Alabama"]),
        ("Q2001", "Montreal", &[]),
        ("Q2002", "Lisbon", &[]),
        ("Q2003", "Kyoto", &[]),
        ("Q2004", "Oslo", &[]),
        ("Q2005", "Lagos", &[]),
        ("Q2006", "Porto", &[]),
        ("Q2007", "Bergen", &[]),
        ("Q2008", "Nairobi", &[]),
        ("Q2009", "University of Tartu", &["Tartu University"]),
        ("Q2010", "Kyoto University", &[]),
        ("Q2011", "Acme Robotics", &[]),
        ("Q2012", "Harbor Institute", &[]),
    ];
    let extra_people = [
        ("Q5001", "Ada Lindqvist"),
        ("Q5002", "Pedro Alves"),
        ("Q5003", "Yuki Tanaka"),
        ("Q5004", "Omar Farouk"),
        ("Q5005", "Lena Vogel"),
        ("Q5006", "Samuel Reyes"),
        ("Q5007", "Irina Volkova"),
        ("Q5008", "Felix Hart"),
    ];
    let extra_places = [
        ("Q5101", "Vienna"),
        ("Q5102", "Quebec City"),
        ("Q5103", "Sapporo"),
        ("Q5104", "Tallinn"),
        ("Q5105", "Accra"),
        ("Q5106", "Valencia"),
        ("Q5107", "Reykjavik"),
        ("Q5108", "Gdansk"),
        ("Q5109", "Munich"),
    ];
    let extra_works = [
        ("Q5201", "Silver Lines", "song"),
        ("Q5202", "Night Ferry", "song"),
        ("Q5203", "Copper Kettle Inc", "business"),
        ("Q5204", "Lantern Press", "business"),
    ];

    let mut drafts: Vec<Draft> = Vec::new();
    for (id, label, aliases) in people {
        let mut d = Draft::new(id, label, "person");
        d.aliases = aliases.iter().map(|a| a.to_string()).collect();
        drafts.push(d);
    }
    for (id, label, aliases) in places {
        let mut d = Draft::new(id, label, "place");
        d.aliases = aliases.iter().map(|a| a.to_string()).collect();
        d.extra_statements = 200;
        drafts.push(d);
    }
    for (id, label) in extra_people {
        drafts.push(Draft::new(id, label, "person"));
    }
    for (id, label) in extra_places {
        let mut d = Draft::new(id, label, "place");
        d.extra_statements = 50;
        drafts.push(d);
    }
    for (id, label, kind) in extra_works {
        drafts.push(Draft::new(id, label, kind));
    }

    type Subject = (
        &'static str,
        &'static str,
        &'static str,
        &'static [(&'static str, &'static str)],
        &'static [&'static str],
    );
    let subjects: [Subject; 7] = [
        (
            "Q3001",
            "Anyone and Everyone",
            "song",
            &[("P175", "Q1001"), ("P86", "Q1004")],
            &["Q5002", "Q5101"],
        ),
        (
            "Q3002",
            "Blue Harbor",
            "song",
            &[("P175", "Q1002"), ("P86", "Q1002")],
            &["Q5001"],
        ),
        (
            "Q3003",
            "Quiet Engines",
            "song",
            &[("P175", "Q1005"), ("P175", "Q1006"), ("P86", "Q1008")],
            &["Q5003", "Q2001"],
        ),
        (
            "Q3004",
            "Paper Lanterns",
            "song",
            &[("P175", "Q1003"), ("P86", "Q1004")],
            &["Q5004"],
        ),
        (
            "Q4001",
            "Northwind Traders",
            "business",
            &[("P112", "Q1006")],
            &["Q5005", "Q5102"],
        ),
        (
            "Q4002",
            "Kestrel Labs",
            "business",
            &[("P112", "Q1007"), ("P112", "Q1008")],
            &["Q5006"],
        ),
        (
            "Q4003",
            "Orchid Foods",
            "business",
            &[("P112", "Q1005")],
            &["Q5007", "Q1001"],
        ),
    ];
    for (id, label, kind, facts, distractors) in subjects {
        let mut d = Draft::new(id, label, kind);
        d.facts = facts.iter().map(|(p, o)| (*p, o.to_string())).collect();
        d.distractors = distractors.iter().map(|s| s.to_string()).collect();
        if id == "Q3001" {
            d.noise.push("Harbor Records".into());
        }
        drafts.push(d);
    }

    // (person, facts, distractors)
    type Planted = (
        &'static str,
        &'static [(&'static str, &'static str)],
        &'static [&'static str],
    );
    let person_facts: [Planted; 8] = [
        ("Q1001", &[("P19", "Q2001"), ("P551", "Q2002")], &["Q5002"]),
        (
            "Q1002",
            &[("P19", "Q2004"), ("P69", "Q2009"), ("P108", "Q2011")],
            &["Q5103"],
        ),
        (
            "Q1003",
            &[("P19", "Q2006"), ("P20", "Q2002"), ("P551", "Q2003")],
            &["Q5104"],
        ),
        ("Q1004", &[("P19", "Q2005"), ("P108", "Q2012")], &["Q5105", "Q5008"]),
        ("Q1005", &[("P19", "Q2008"), ("P69", "Q2010")], &["Q5106", "Q5109"]),
        ("Q1006", &[("P19", "Q2007"), ("P20", "Q2004")], &["Q5107"]),
        ("Q1007", &[("P19", "Q79867"), ("P551", "Q2001")], &["Q5108"]),
        (
            "Q1008",
            &[("P19", "Q2003"), ("P69", "Q2010"), ("P108", "Q2011")],
            &["Q5101"],
        ),
    ];
    for (id, facts, distractors) in person_facts {
        let d = drafts.iter_mut().find(|d| d.id == id).expect("person drafted above");
        d.facts = facts.iter().map(|(p, o)| (*p, o.to_string())).collect();
        d.distractors = distractors.iter().map(|s| s.to_string()).collect();
        d.extra_statements = if id == "Q1001" { 40 } else { 5 };
    }
    assemble(drafts)
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Four-letter capitalized name component; distinct for `i < 4900`.
fn component(i: usize) -> String {
    let syllables = CONSONANTS.len() * VOWELS.len();
    let syl = |j: usize| {
        let c = CONSONANTS[j / VOWELS.len()] as char;
        let v = VOWELS[j % VOWELS.len()] as char;
        format!("{c}{v}")
    };
    let i = i % (syllables * syllables);
    let mut s = syl(i / syllables) + &syl(i % syllables);
    s[..1].make_ascii_uppercase();
    s
}

/// A world with `n` people, `n` places and `n / 2` songs and businesses.
/// Every person has a birthplace; other relations are assigned at random from
/// a per-seed stream.
pub fn scaled_world(seed: u64, n: usize) -> World {
    let n = n.max(2);
    let mut rng = stream_rng(seed, "scaled-world");
    let person = |i: usize| format!("S{i}");
    let place = |i: usize| format!("L{i}");
    let mut drafts: Vec<Draft> = Vec::new();
    for i in 0..n {
        let label = format!("{} {}", component(i), component(i / 4900 + 17 * i + 3));
        drafts.push(Draft::new(person(i), label, "person"));
    }
    for i in 0..n {
        let mut d = Draft::new(place(i), format!("Port {}", component(i)), "place");
        d.extra_statements = rng.random_range(0..30);
        drafts.push(d);
    }
    let places: Vec<usize> = (0..n).collect();
    let people: Vec<usize> = (0..n).collect();
    for d in drafts.iter_mut().take(n) {
        d.extra_statements = rng.random_range(0..20);
        for (pid, p) in [("P19", 1.0), ("P20", 0.3), ("P108", 0.3), ("P69", 0.3), ("P551", 0.4)] {
            if rng.random_bool(p) {
                let o = *places.choose(&mut rng).expect("n >= 2");
                d.facts.push((pid, place(o)));
            }
        }
        let distractor = *places.choose(&mut rng).expect("n >= 2");
        if !d.facts.iter().any(|(_, o)| *o == place(distractor)) {
            d.distractors.push(place(distractor));
        }
    }
    for i in 0..n / 2 {
        let (id, label, kind, pids): (String, String, &'static str, &[&'static str]) = if i % 2 == 0 {
            (
                format!("W{i}"),
                format!("The {} Song", component(i)),
                "song",
                &["P175", "P86"],
            )
        } else {
            (
                format!("B{i}"),
                format!("{} Works", component(i)),
                "business",
                &["P112"],
            )
        };
        let mut d = Draft::new(id, label, kind);
        for pid in pids {
            let k = rng.random_range(1..=2);
            for o in people.choose_multiple(&mut rng, k) {
                d.facts.push((pid, person(*o)));
            }
        }
        drafts.push(d);
    }
    assemble(drafts)
}

const WORDS: &[&str] = &[
    "paris", "london", "river", "north", "saint", "john", "smith", "anna", "lake", "hill", "bratsch", "red", "blue",
    "city", "port", "new", "old", "green", "stone", "field", "west", "maria", "louis", "park", "bay",
];
const DECORATIONS: &[&str] = &["", " (band)", " (city)", "!", ".", "  ", "\u{ff21}"];

/// Random snapshot lines over a small vocabulary, so that names collide often
/// and differ in case, spacing, punctuation and qualifiers. Ids are `R0..Rn`.
pub fn random_snapshot_lines(seed: u64, n: usize) -> Vec<SnapshotLine> {
    let mut rng = stream_rng(seed, "random-snapshot");
    let name = |rng: &mut rand_chacha::ChaCha8Rng| {
        let words = rng.random_range(1..=3);
        let mut s: Vec<String> = (0..words)
            .map(|_| {
                let w = *WORDS.choose(rng).expect("non-empty");
                if rng.random_bool(0.3) {
                    let mut w = w.to_string();
                    w[..1].make_ascii_uppercase();
                    w
                } else {
                    w.to_string()
                }
            })
            .collect();
        s.last_mut()
            .expect("at least one word")
            .push_str(DECORATIONS.choose(rng).expect("non-empty"));
        s.join(" ")
    };
    let pids: Vec<&str> = BENCHMARK_RELATIONS.iter().map(|r| r.0).collect();
    (0..n)
        .map(|i| {
            let label = name(&mut rng);
            let aliases = (0..rng.random_range(0..=2)).map(|_| name(&mut rng)).collect();
            let statement_count = rng.random_range(0..=30u64);
            let n_facts = rng.random_range(0..=statement_count.min(3));
            let facts = (0..n_facts)
                .map(|_| FactLine {
                    pid: pids.choose(&mut rng).expect("non-empty").to_string(),
                    object: EntityId::new(format!("R{}", rng.random_range(0..n))).expect("non-empty"),
                })
                .collect();
            SnapshotLine {
                id: EntityId::new(format!("R{i}")).expect("non-empty"),
                label,
                aliases,
                types: Vec::new(),
                statement_count,
                facts,
            }
        })
        .collect()
}
