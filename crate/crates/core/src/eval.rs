//! Scoring against gold objects, threshold calibration, metric aggregation and
//! annotation sampling.
//!
//! A prediction is correct when its surface, or any name of the entity it
//! was canonicalized to, appears among a gold object's names (labels and
//! aliases, qualifier-stripped variants included).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::malt::MaltRecord;
use crate::model::{normalize, strip_qualifier, EntityId, NormalizedName};
use crate::par::Execution;
use crate::pipeline::CorroboratedFact;
use crate::rng::stream_rng;

/// What the scorer needs to know about a prediction.
pub trait Prediction {
    fn subject(&self) -> &EntityId;
    fn pid(&self) -> &str;
    fn surface(&self) -> &str;
    /// Canonical entity, when the prediction was resolved to one.
    fn object(&self) -> Option<&EntityId> {
        None
    }
    fn object_names(&self) -> Vec<&str> {
        Vec::new()
    }
}

impl Prediction for CorroboratedFact {
    fn subject(&self) -> &EntityId {
        &self.subject
    }

    fn pid(&self) -> &str {
        &self.pid
    }

    fn surface(&self) -> &str {
        &self.surface
    }

    fn object(&self) -> Option<&EntityId> {
        Some(&self.object)
    }

    fn object_names(&self) -> Vec<&str> {
        std::iter::once(self.object_label.as_str())
            .chain(self.object_aliases.iter().map(String::as_str))
            .collect()
    }
}

/// A bare surface-string prediction with no canonical entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfacePrediction {
    pub subject: EntityId,
    pub pid: String,
    pub surface: String,
}

impl Prediction for SurfacePrediction {
    fn subject(&self) -> &EntityId {
        &self.subject
    }

    fn pid(&self) -> &str {
        &self.pid
    }

    fn surface(&self) -> &str {
        &self.surface
    }
}

fn prediction_keys<P: Prediction + ?Sized>(pred: &P) -> Vec<NormalizedName> {
    std::iter::once(normalize(pred.surface()))
        .chain(
            pred.object_names()
                .into_iter()
                .flat_map(|n| [normalize(n), normalize(strip_qualifier(n))]),
        )
        .filter(|k| !k.is_empty())
        .collect()
}

/// Index of the gold object a prediction is credited to: an exact id match
/// first, otherwise the first gold object sharing a name. A prediction never
/// credits more than one gold triple.
pub fn credited_object<P: Prediction + ?Sized>(pred: &P, gold: &MaltRecord) -> Option<usize> {
    if pred.subject() != &gold.subject || pred.pid() != gold.pid {
        return None;
    }
    if let Some(obj) = pred.object() {
        if let Some(i) = gold.gold_objects.iter().position(|g| &g.id == obj) {
            return Some(i);
        }
    }
    let keys = prediction_keys(pred);
    gold.gold_objects
        .iter()
        .position(|g| g.match_keys().iter().any(|k| keys.contains(k)))
}

pub fn is_correct<P: Prediction + ?Sized>(pred: &P, gold: &MaltRecord) -> bool {
    credited_object(pred, gold).is_some()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    pub pid: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n_predictions: usize,
    pub n_gold: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl RelationMetrics {
    pub fn from_counts(pid: &str, tp: usize, fp: usize, n_predictions: usize, n_gold: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, n_gold);
        RelationMetrics {
            pid: pid.to_string(),
            precision,
            recall,
            f1: f1_score(precision, recall),
            tp,
            fp,
            fn_: n_gold - tp,
            n_predictions,
            n_gold,
        }
    }

    pub fn as_aggregate_row(&self) -> AggregateRow {
        AggregateRow {
            values: [self.precision, self.recall, self.f1],
            weight: self.n_gold as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateMode {
    /// Arithmetic mean over rows.
    Unweighted,
    /// Mean weighted by each row's weight (gold triples).
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub values: [f64; 3],
    pub weight: f64,
}

pub fn aggregate(rows: &[AggregateRow], mode: AggregateMode) -> Result<[f64; 3], EvalError> {
    if rows.is_empty() {
        return Err(EvalError::NoRows);
    }
    let weight = |r: &AggregateRow| match mode {
        AggregateMode::Unweighted => 1.0,
        AggregateMode::Weighted => r.weight,
    };
    let total: f64 = rows.iter().map(weight).sum();
    if total <= 0.0 {
        return Err(EvalError::InvalidArgument("aggregate weights sum to zero".into()));
    }
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = rows.iter().map(|r| weight(r) * r.values[c]).sum::<f64>() / total;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrfTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<[f64; 3]> for PrfTriple {
    fn from([precision, recall, f1]: [f64; 3]) -> Self {
        PrfTriple { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<RelationMetrics>,
    /// Mean of the per-relation rows.
    pub aggregate_unweighted: PrfTriple,
    /// Gold-triple-weighted mean of the per-relation rows.
    pub aggregate_weighted: PrfTriple,
    pub alpha: Option<f64>,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<RelationMetrics>, alpha: Option<f64>) -> Self {
        let agg: Vec<_> = rows.iter().map(RelationMetrics::as_aggregate_row).collect();
        EvalReport {
            aggregate_unweighted: aggregate(&agg, AggregateMode::Unweighted)
                .map(PrfTriple::from)
                .unwrap_or_default(),
            aggregate_weighted: aggregate(&agg, AggregateMode::Weighted)
                .map(PrfTriple::from)
                .unwrap_or_default(),
            rows,
            alpha,
        }
    }

    /// Aligned plain-text table (percent, one decimal).
    pub fn to_text(&self) -> String {
        self.to_text_named(&BTreeMap::new())
    }

    /// As [`EvalReport::to_text`], with relation names looked up by pid.
    pub fn to_text_named(&self, names: &BTreeMap<String, String>) -> String {
        let mut lines: Vec<[String; 5]> = vec![["Relation", "ID", "P", "R", "F1"].map(String::from)];
        let fmt = |v: f64| format!("{:.1}", 100.0 * v);
        for r in &self.rows {
            let name = names.get(&r.pid).cloned().unwrap_or_default();
            lines.push([name, r.pid.clone(), fmt(r.precision), fmt(r.recall), fmt(r.f1)]);
        }
        for (name, agg) in [
            ("Unweighted avg", self.aggregate_unweighted),
            ("Triple-weighted avg", self.aggregate_weighted),
        ] {
            lines.push([
                name.into(),
                "-".into(),
                fmt(agg.precision),
                fmt(agg.recall),
                fmt(agg.f1),
            ]);
        }
        render_table(&lines, 2, self.alpha)
    }
}

fn render_table<const N: usize>(lines: &[[String; N]], left_cols: usize, alpha: Option<f64>) -> String {
    let widths: Vec<usize> = (0..N)
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    if let Some(a) = alpha {
        let _ = writeln!(out, "alpha = {a}");
    }
    for line in lines {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c < left_cols {
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

/// Per-relation counts. Every prediction is a true positive candidate for at
/// most one gold triple; repeated hits on one triple add one tp and no fp.
pub fn evaluate<P: Prediction>(predictions: &[P], gold: &[MaltRecord], alpha: Option<f64>) -> EvalReport {
    let by_key: HashMap<(&EntityId, &str), &MaltRecord> =
        gold.iter().map(|g| ((&g.subject, g.pid.as_str()), g)).collect();
    #[derive(Default)]
    struct Acc<'a> {
        hits: HashSet<(&'a EntityId, usize)>,
        fp: usize,
        n_predictions: usize,
        n_gold: usize,
    }
    let mut per_pid: BTreeMap<&str, Acc> = BTreeMap::new();
    for g in gold {
        per_pid.entry(g.pid.as_str()).or_default().n_gold += g.gold_objects.len();
    }
    for p in predictions {
        let acc = per_pid.entry(p.pid()).or_default();
        acc.n_predictions += 1;
        match by_key.get(&(p.subject(), p.pid())) {
            None => {
                log::warn!(
                    "prediction for unknown pair ({}, {}) counted as a false positive",
                    p.subject(),
                    p.pid()
                );
                acc.fp += 1;
            }
            Some(record) => match credited_object(p, record) {
                Some(i) => {
                    acc.hits.insert((&record.subject, i));
                }
                None => acc.fp += 1,
            },
        }
    }
    let rows = per_pid
        .into_iter()
        .map(|(pid, acc)| RelationMetrics::from_counts(pid, acc.hits.len(), acc.fp, acc.n_predictions, acc.n_gold))
        .collect();
    EvalReport::from_rows(rows, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub alpha: f64,
    pub best_f1: f64,
    pub curve: Vec<CurvePoint>,
}

/// Picks the cutoff maximizing the unweighted-mean F1 over relations. The
/// candidates are 0 and every distinct fused score; ties go to the larger
/// cutoff.
pub fn calibrate_alpha(
    facts: &[CorroboratedFact],
    validation: &[MaltRecord],
    exec: Execution,
) -> Result<CalibrationResult, EvalError> {
    if validation.is_empty() {
        return Err(EvalError::EmptyValidation);
    }
    let by_key: HashMap<(&EntityId, &str), &MaltRecord> =
        validation.iter().map(|g| ((&g.subject, g.pid.as_str()), g)).collect();

    // Pre-score every fact once; each threshold then only counts.
    let mut pids: BTreeMap<&str, usize> = BTreeMap::new();
    for g in validation {
        *pids.entry(g.pid.as_str()).or_default() += g.gold_objects.len();
    }
    for f in facts {
        pids.entry(f.pid.as_str()).or_default();
    }
    let slot: HashMap<&str, usize> = pids.keys().enumerate().map(|(i, p)| (*p, i)).collect();
    // (fused score, relation slot, credited gold object)
    type Scored<'a> = (f64, usize, Option<(&'a EntityId, usize)>);
    let scored: Vec<Scored> = facts
        .iter()
        .map(|f| {
            let credit = by_key
                .get(&(&f.subject, f.pid.as_str()))
                .and_then(|rec| credited_object(f, rec).map(|i| (&rec.subject, i)));
            (f.fused_score, slot[f.pid.as_str()], credit)
        })
        .collect();
    let gold_counts: Vec<(&str, usize)> = pids.iter().map(|(p, n)| (*p, *n)).collect();

    let mut alphas: Vec<f64> = std::iter::once(0.0)
        .chain(facts.iter().map(|f| f.fused_score).filter(|s| (0.0..=1.0).contains(s)))
        .collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();

    let curve = exec.map(&alphas, |&alpha| {
        let mut hits: Vec<HashSet<(&EntityId, usize)>> = vec![HashSet::new(); gold_counts.len()];
        let mut fp = vec![0usize; gold_counts.len()];
        let mut n_pred = vec![0usize; gold_counts.len()];
        for (score, slot, credit) in &scored {
            if *score < alpha {
                continue;
            }
            n_pred[*slot] += 1;
            match credit {
                Some(c) => {
                    hits[*slot].insert(*c);
                }
                None => fp[*slot] += 1,
            }
        }
        let rows: Vec<_> = gold_counts
            .iter()
            .enumerate()
            .map(|(i, (pid, n_gold))| RelationMetrics::from_counts(pid, hits[i].len(), fp[i], n_pred[i], *n_gold))
            .collect();
        let agg = EvalReport::from_rows(rows, Some(alpha)).aggregate_unweighted;
        CurvePoint {
            alpha,
            precision: agg.precision,
            recall: agg.recall,
            f1: agg.f1,
        }
    });
    let best = curve
        .iter()
        .copied()
        .fold(None::<CurvePoint>, |best, p| match best {
            Some(b) if b.f1 > p.f1 => Some(b),
            _ => Some(p),
        })
        .expect("curve contains alpha = 0");
    Ok(CalibrationResult {
        alpha: best.alpha,
        best_f1: best.f1,
        curve,
    })
}

/// One row of the annotation sheet; `verdict` is left blank for the judge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub subject_id: String,
    pub subject_label: String,
    pub pid: String,
    pub object_id: String,
    pub object_label: String,
    pub evidence: String,
    pub verdict: String,
}

/// Draws up to `per_relation` facts per relation that the gold data does not
/// already contain.
pub fn sample_for_annotation(
    facts: &[CorroboratedFact],
    gold: &[MaltRecord],
    per_relation: usize,
    seed: u64,
) -> Vec<AnnotationRow> {
    let by_key: HashMap<(&EntityId, &str), &MaltRecord> =
        gold.iter().map(|g| ((&g.subject, g.pid.as_str()), g)).collect();
    let mut novel: BTreeMap<&str, Vec<&CorroboratedFact>> = BTreeMap::new();
    for f in facts {
        let known = by_key
            .get(&(&f.subject, f.pid.as_str()))
            .is_some_and(|rec| is_correct(f, rec));
        if !known {
            novel.entry(f.pid.as_str()).or_default().push(f);
        }
    }
    let mut rows = Vec::new();
    for (pid, mut group) in novel {
        group.sort_by(|a, b| (&a.subject, &a.object).cmp(&(&b.subject, &b.object)));
        group.dedup_by(|a, b| (&a.subject, &a.object) == (&b.subject, &b.object));
        let picked: Vec<&CorroboratedFact> = if group.len() <= per_relation {
            if group.len() < per_relation {
                log::warn!(
                    "relation {pid}: only {} novel facts, fewer than {per_relation}",
                    group.len()
                );
            }
            group
        } else {
            let mut rng = stream_rng(seed, pid);
            let mut idx = index::sample(&mut rng, group.len(), per_relation).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| group[i]).collect()
        };
        rows.extend(picked.into_iter().map(|f| AnnotationRow {
            subject_id: f.subject.to_string(),
            subject_label: f.subject_label.clone(),
            pid: f.pid.clone(),
            object_id: f.object.to_string(),
            object_label: f.object_label.clone(),
            evidence: f.evidence.text.clone(),
            verdict: String::new(),
        }));
    }
    rows
}

pub fn write_annotation_csv<W: Write>(out: W, rows: &[AnnotationRow]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    if rows.is_empty() {
        writer.write_record([
            "subject_id",
            "subject_label",
            "pid",
            "object_id",
            "object_label",
            "evidence",
            "verdict",
        ])?;
    }
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Distinct (subject, pid) pairs covered by a gold set.
pub fn gold_pairs(gold: &[MaltRecord]) -> BTreeSet<(EntityId, String)> {
    gold.iter().map(|g| (g.subject.clone(), g.pid.clone())).collect()
}

/// Facts whose (subject, pid) pair appears in the gold set, order preserved.
pub fn restrict_to_gold(facts: &[CorroboratedFact], gold: &[MaltRecord]) -> Vec<CorroboratedFact> {
    let keys: HashSet<(&EntityId, &str)> = gold.iter().map(|g| (&g.subject, g.pid.as_str())).collect();
    facts
        .iter()
        .filter(|f| keys.contains(&(&f.subject, f.pid.as_str())))
        .cloned()
        .collect()
}
