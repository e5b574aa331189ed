//! Confusion counts, precision / recall / F1, precision-recall curves and
//! the comparison report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{DomainId, LabeledExample};
use crate::error::{contract, Error, Result};
use crate::jsonl;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion_counts(predictions: &[bool], labels: &[bool]) -> Result<ConfusionCounts> {
    if predictions.len() != labels.len() {
        return Err(contract!("{} predictions for {} labels", predictions.len(), labels.len()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean with the 0/0 → 0 convention.
pub fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn prf(c: &ConfusionCounts) -> Prf {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Prf {
        precision,
        recall,
        f1: f1_of(precision, recall),
    }
}

/// Rounds a fraction to a percentage with one decimal.
pub fn percent1(x: f64) -> f64 {
    (x * 1000.0).round() / 10.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

/// Sweeps a threshold over every distinct score (predict positive when
/// `score ≥ τ`). Among points sharing a recall value only the one with the
/// highest precision is kept (the higher threshold on ties).
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve> {
    if scores.len() != labels.len() {
        return Err(contract!("{} scores for {} labels", scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(contract!("a precision-recall curve needs at least one positive"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(contract!("scores must be finite"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut raw: Vec<PrPoint> = Vec::new();
    let (mut tp, mut taken) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let tau = scores[order[i]];
        while i < order.len() && scores[order[i]] == tau {
            taken += 1;
            if labels[order[i]] {
                tp += 1;
            }
            i += 1;
        }
        raw.push(PrPoint {
            threshold: tau,
            precision: tp as f64 / taken as f64,
            recall: tp as f64 / positives as f64,
        });
    }

    let mut points: Vec<PrPoint> = Vec::with_capacity(raw.len());
    let mut start = 0;
    while start < raw.len() {
        let mut end = start;
        while end < raw.len() && raw[end].recall == raw[start].recall {
            end += 1;
        }
        let best = raw[start..end]
            .iter()
            .fold(raw[start], |best, p| if p.precision > best.precision { *p } else { best });
        points.push(best);
        start = end;
    }
    Ok(PrCurve { points })
}

/// FR decisions for a protocol evaluation set: a record is flagged when
/// it was routed away from the target and its score reaches `threshold`.
pub fn fr_decisions(examples: &[LabeledExample], scores: &[f64], target: DomainId, threshold: f64) -> Result<(Vec<bool>, Vec<bool>)> {
    if examples.len() != scores.len() {
        return Err(contract!("{} scores for {} examples", scores.len(), examples.len()));
    }
    let preds = examples
        .iter()
        .zip(scores)
        .map(|(e, &s)| e.routed_domain != target && s >= threshold)
        .collect();
    let labels = examples.iter().map(|e| e.is_fr()).collect();
    Ok((preds, labels))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Short identifier, also the curve directory name.
    pub name: String,
    /// Row label for the comparison table.
    pub model_kind: String,
    /// Percentages with one decimal.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Full-precision fractions behind the rounded percentages.
    pub exact: Prf,
    pub threshold: f64,
    pub counts: ConfusionCounts,
    /// Relative path of the curve CSV.
    pub pr_curve: String,
    #[serde(skip)]
    pub curve: PrCurve,
    /// F1 (percent) of each seed, when the row summarises several runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed_f1: Vec<f64>,
}

/// Scores and evaluates one model on a protocol set. Records routed to the
/// target cannot be flagged and are left off the curve (they are never FRs).
pub fn evaluate_detection(
    name: &str,
    label: &str,
    examples: &[LabeledExample],
    scores: &[f64],
    target: DomainId,
    threshold: f64,
) -> Result<DetectionReport> {
    let (preds, labels) = fr_decisions(examples, scores, target, threshold)?;
    let counts = confusion_counts(&preds, &labels)?;
    let exact = prf(&counts);
    let (curve_scores, curve_labels): (Vec<f64>, Vec<bool>) = examples
        .iter()
        .zip(scores)
        .filter(|(e, _)| e.routed_domain != target)
        .map(|(e, &s)| (s, e.is_fr()))
        .unzip();
    let curve = pr_curve(&curve_scores, &curve_labels)?;
    Ok(DetectionReport {
        name: name.to_string(),
        model_kind: label.to_string(),
        precision: percent1(exact.precision),
        recall: percent1(exact.recall),
        f1: percent1(exact.f1),
        exact,
        threshold,
        counts,
        pr_curve: format!("{name}/pr_curve.csv"),
        curve,
        seed_f1: Vec::new(),
    })
}

pub fn curve_csv(curve: &PrCurve) -> String {
    let mut out = String::from("threshold,precision,recall\n");
    for p in &curve.points {
        let _ = writeln!(out, "{:.6},{:.6},{:.6}", p.threshold, p.precision, p.recall);
    }
    out
}

pub fn parse_curve_csv(text: &str) -> Result<PrCurve> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| contract!("curve line {}: {e}", i + 1))?;
        if fields.len() != 3 {
            return Err(contract!("curve line {} has {} fields", i + 1, fields.len()));
        }
        points.push(PrPoint {
            threshold: fields[0],
            precision: fields[1],
            recall: fields[2],
        });
    }
    Ok(PrCurve { points })
}

pub fn comparison_table(reports: &[DetectionReport]) -> String {
    let width = reports.iter().map(|r| r.model_kind.len()).max().unwrap_or(0).max("Model".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>6}  {:>5}", "Model", "Precision", "Recall", "F1");
    let _ = writeln!(out, "{}", "-".repeat(width + 28));
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.1}  {:>6.1}  {:>5.1}",
            r.model_kind, r.precision, r.recall, r.f1
        );
    }
    out
}

/// Writes `comparison.txt`, `report.json` and one `pr_curve.csv` per model.
pub fn render_report(reports: &[DetectionReport], dir: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(contract!("nothing to report"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table = dir.join("comparison.txt");
    fs::write(&table, comparison_table(reports)).map_err(|e| Error::io(&table, e))?;
    jsonl::write_json(&dir.join("report.json"), &reports)?;
    for r in reports {
        let path = dir.join(&r.pr_curve);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, curve_csv(&r.curve)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
