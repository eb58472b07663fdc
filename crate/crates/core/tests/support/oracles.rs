//! Test-side reimplementations of prediction crediting, per-relation metrics,
//! threshold selection and record flags.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use kbc_core::eval::{calibrate_alpha, evaluate};
use kbc_core::ingest::SnapshotLine;
use kbc_core::malt::{FactFlags, GoldObject, MaltRecord};
use kbc_core::pipeline::{CorroboratedFact, EvidenceRef};
use kbc_core::rng::stream_rng;
use kbc_core::{normalize, strip_qualifier, EntityId, Execution};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const NAMES: &[&str] = &[
    "Paris",
    "paris (city)",
    "Lyon",
    "Lyon (band)",
    "Rome",
    "Oslo",
    "Nice",
    "NICE!",
    "Bern",
];
const PIDS: &[&str] = &["P19", "P20", "P69"];

pub fn id(s: String) -> EntityId {
    EntityId::new(s).unwrap()
}

pub fn keys(name: &str) -> Vec<String> {
    [normalize(name), normalize(strip_qualifier(name))]
        .into_iter()
        .map(|k| k.as_str().to_string())
        .filter(|k| !k.is_empty())
        .collect()
}

pub fn random_gold(rng: &mut ChaCha8Rng) -> Vec<MaltRecord> {
    let mut out = Vec::new();
    for s in 0..rng.random_range(1..8) {
        for pid in PIDS {
            if !rng.random_bool(0.6) {
                continue;
            }
            let mut ids: Vec<usize> = (0..10).collect();
            ids.shuffle(rng);
            let gold_objects = ids[..rng.random_range(1..=3)]
                .iter()
                .map(|i| GoldObject {
                    id: id(format!("E{i}")),
                    label: NAMES.choose(rng).unwrap().to_string(),
                    aliases: if rng.random_bool(0.3) {
                        vec![NAMES.choose(rng).unwrap().to_string()]
                    } else {
                        Vec::new()
                    },
                })
                .collect();
            out.push(MaltRecord {
                subject: id(format!("S{s}")),
                subject_label: format!("S{s}"),
                pid: pid.to_string(),
                gold_objects,
                flags: FactFlags::default(),
            });
        }
    }
    if out.is_empty() {
        out.push(MaltRecord {
            subject: id("S0".into()),
            subject_label: "S0".into(),
            pid: "P19".into(),
            gold_objects: vec![GoldObject {
                id: id("E0".into()),
                label: "Paris".into(),
                aliases: Vec::new(),
            }],
            flags: FactFlags::default(),
        });
    }
    out
}

/// Facts for (subject, pid) pairs drawn from `gold`, plus unknown pairs when
/// `strangers` is set.
pub fn random_facts(rng: &mut ChaCha8Rng, gold: &[MaltRecord], n: usize, strangers: bool) -> Vec<CorroboratedFact> {
    (0..n)
        .map(|_| {
            let (subject, pid) = if strangers && rng.random_bool(0.1) {
                (id("S99".into()), PIDS.choose(rng).unwrap().to_string())
            } else {
                let r = gold.choose(rng).unwrap();
                (r.subject.clone(), r.pid.clone())
            };
            let score = if rng.random_bool(0.5) {
                f64::from(rng.random_range(0..=20u32)) / 20.0
            } else {
                rng.random_range(0.0..=1.0)
            };
            CorroboratedFact {
                subject_label: subject.to_string(),
                subject,
                pid,
                object: id(format!("E{}", rng.random_range(0..12))),
                object_label: NAMES.choose(rng).unwrap().to_string(),
                object_aliases: Vec::new(),
                surface: NAMES.choose(rng).unwrap().to_string(),
                gen_score: score,
                ed_score: score,
                fused_score: score,
                evidence: EvidenceRef {
                    index: 0,
                    text: String::new(),
                },
            }
        })
        .collect()
}

pub fn oracle_credit(f: &CorroboratedFact, gold: &[MaltRecord]) -> Option<(EntityId, String, usize)> {
    let rec = gold.iter().find(|r| r.subject == f.subject && r.pid == f.pid)?;
    let key = |i| Some((rec.subject.clone(), rec.pid.clone(), i));
    for (i, g) in rec.gold_objects.iter().enumerate() {
        if g.id == f.object {
            return key(i);
        }
    }
    let mut pred_keys: Vec<String> = keys(&f.object_label);
    pred_keys.extend(f.object_aliases.iter().flat_map(|a| keys(a)));
    let surface = normalize(&f.surface).as_str().to_string();
    if !surface.is_empty() {
        pred_keys.push(surface);
    }
    for (i, g) in rec.gold_objects.iter().enumerate() {
        let gold_names = std::iter::once(&g.label).chain(&g.aliases);
        for n in gold_names {
            if keys(n).iter().any(|k| pred_keys.contains(k)) {
                return key(i);
            }
        }
    }
    None
}

/// Per-relation (P, R, F1, tp, fp, n_gold).
pub fn oracle_metrics(
    facts: &[&CorroboratedFact],
    gold: &[MaltRecord],
) -> BTreeMap<String, (f64, f64, f64, usize, usize, usize)> {
    let mut pids: BTreeSet<String> = gold.iter().map(|r| r.pid.clone()).collect();
    pids.extend(facts.iter().map(|f| f.pid.clone()));
    pids.into_iter()
        .map(|pid| {
            let n_gold: usize = gold.iter().filter(|r| r.pid == pid).map(|r| r.gold_objects.len()).sum();
            let mut credited = BTreeSet::new();
            let mut fp = 0;
            for f in facts.iter().filter(|f| f.pid == pid) {
                match oracle_credit(f, gold) {
                    Some(c) => {
                        credited.insert(c);
                    }
                    None => fp += 1,
                }
            }
            let tp = credited.len();
            let p = if tp + fp == 0 {
                0.0
            } else {
                tp as f64 / (tp + fp) as f64
            };
            let r = if n_gold == 0 { 0.0 } else { tp as f64 / n_gold as f64 };
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (pid, (p, r, f1, tp, fp, n_gold))
        })
        .collect()
}

/// A fact reduced to (score, relation slot, credited gold triple).
pub type Scored = (f64, usize, Option<usize>);

pub fn oracle_scored(facts: &[CorroboratedFact], gold: &[MaltRecord]) -> (Vec<Scored>, Vec<usize>) {
    let pids: Vec<&str> = gold
        .iter()
        .map(|r| r.pid.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n_gold = pids
        .iter()
        .map(|p| gold.iter().filter(|r| r.pid == *p).map(|r| r.gold_objects.len()).sum())
        .collect();
    let mut triples: BTreeMap<(EntityId, String, usize), usize> = BTreeMap::new();
    let scored = facts
        .iter()
        .map(|f| {
            let slot = pids
                .iter()
                .position(|p| *p == f.pid)
                .expect("facts cover gold pairs only");
            let credit = oracle_credit(f, gold).map(|c| {
                let next = triples.len();
                *triples.entry(c).or_insert(next)
            });
            (f.fused_score, slot, credit)
        })
        .collect();
    (scored, n_gold)
}

/// Macro F1 at `alpha`, recounted from scratch.
pub fn oracle_macro_f1(scored: &[Scored], n_gold: &[usize], alpha: f64) -> f64 {
    let mut total = 0.0;
    for (slot, &n) in n_gold.iter().enumerate() {
        let mut credited = BTreeSet::new();
        let mut fp = 0;
        for (_, _, credit) in scored.iter().filter(|(s, p, _)| *s >= alpha && *p == slot) {
            match credit {
                Some(c) => {
                    credited.insert(*c);
                }
                None => fp += 1,
            }
        }
        let tp = credited.len();
        let p = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let r = tp as f64 / n as f64;
        total += if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    }
    total / n_gold.len() as f64
}

pub fn snapshot_names(line: &SnapshotLine) -> Vec<&str> {
    std::iter::once(line.label.as_str())
        .chain(line.aliases.iter().map(String::as_str))
        .collect()
}

pub fn words(s: &str) -> usize {
    s.split(char::is_whitespace).filter(|t| !t.is_empty()).count()
}

/// Flags for every record recomputed from the raw snapshot lines by pairwise
/// name comparison.
pub fn brute_force_flags(lines: &[SnapshotLine], records: &[MaltRecord]) -> Vec<FactFlags> {
    let by_id: BTreeMap<&EntityId, &SnapshotLine> = lines.iter().map(|l| (&l.id, l)).collect();
    let normalized: BTreeMap<&EntityId, Vec<String>> = lines
        .iter()
        .map(|l| {
            let keys = snapshot_names(l)
                .into_iter()
                .map(|n| normalize(n).as_str().to_string())
                .filter(|k| !k.is_empty())
                .collect();
            (&l.id, keys)
        })
        .collect();
    let ambiguous = |id: &EntityId| {
        normalized[id]
            .iter()
            .any(|k| normalized.iter().any(|(other, keys)| *other != id && keys.contains(k)))
    };
    records
        .iter()
        .map(|r| FactFlags {
            multi_token: r.gold_objects.iter().any(|o| words(&by_id[&o.id].label) >= 2),
            ambiguous: ambiguous(&r.subject) || r.gold_objects.iter().any(|o| ambiguous(&o.id)),
            long_tail: by_id[&r.subject].statement_count <= 13,
        })
        .collect()
}

/// Runs `cases` random calibration problems; returns the first disagreement
/// with the dense-sweep oracle.
pub fn check_calibration(cases: u64) -> Result<(), String> {
    for case in 0..cases {
        let mut rng = stream_rng(case, "calibration");
        let gold = random_gold(&mut rng);
        let n = rng.random_range(0..=200);
        let facts = random_facts(&mut rng, &gold, n, false);
        let result = calibrate_alpha(&facts, &gold, Execution::default()).map_err(|e| e.to_string())?;
        let (scored, n_gold) = oracle_scored(&facts, &gold);

        let mut candidates: Vec<f64> = std::iter::once(0.0)
            .chain(facts.iter().map(|f| f.fused_score))
            .collect();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        let mut dense = candidates.clone();
        dense.extend(candidates.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        dense.extend((0..=100).map(|i| f64::from(i) / 100.0));

        let best = dense
            .iter()
            .map(|&a| oracle_macro_f1(&scored, &n_gold, a))
            .fold(0.0, f64::max);
        if result.best_f1 != best {
            return Err(format!("case {case}: best F1 {} vs oracle {best}", result.best_f1));
        }
        if oracle_macro_f1(&scored, &n_gold, result.alpha) != best {
            return Err(format!(
                "case {case}: alpha {} does not attain the optimum",
                result.alpha
            ));
        }
        if let Some(a) = candidates
            .iter()
            .find(|&&a| a > result.alpha && oracle_macro_f1(&scored, &n_gold, a) == best)
        {
            return Err(format!("case {case}: larger cutoff {a} ties the optimum"));
        }
    }
    Ok(())
}

/// Runs `cases` random evaluation problems against the quadratic matcher.
pub fn check_metrics(cases: u64) -> Result<(), String> {
    for case in 0..cases {
        let mut rng = stream_rng(case, "metrics");
        let gold = random_gold(&mut rng);
        let n = rng.random_range(0..120);
        let facts = random_facts(&mut rng, &gold, n, true);
        compare_metrics(&facts, &gold).map_err(|e| format!("case {case}: {e}"))?;
    }
    Ok(())
}

pub fn compare_metrics(facts: &[CorroboratedFact], gold: &[MaltRecord]) -> Result<(), String> {
    let report = evaluate(facts, gold, None);
    let refs: Vec<&CorroboratedFact> = facts.iter().collect();
    let oracle = oracle_metrics(&refs, gold);
    if report.rows.len() != oracle.len() {
        return Err(format!("{} rows vs {}", report.rows.len(), oracle.len()));
    }
    for row in &report.rows {
        let (p, r, f1, tp, fp, n_gold) = oracle[&row.pid];
        if (row.tp, row.fp, row.fn_) != (tp, fp, n_gold - tp) {
            return Err(format!(
                "{}: counts {:?} vs {:?}",
                row.pid,
                (row.tp, row.fp, row.fn_),
                (tp, fp, n_gold - tp)
            ));
        }
        if row.precision != p || row.recall != r || row.f1 != f1 {
            return Err(format!("{}: metrics differ", row.pid));
        }
        if row.tp + row.fn_ != row.n_gold {
            return Err(format!("{}: tp + fn != n_gold", row.pid));
        }
        if row.f1 > row.precision.max(row.recall) + 1e-12 {
            return Err(format!("{}: F1 above max(P, R)", row.pid));
        }
    }
    Ok(())
}
