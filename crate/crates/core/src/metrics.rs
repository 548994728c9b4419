//! Binary classification metrics with attack (label 1) as the positive class.
//!
//! Degenerate denominators never produce NaN: precision, recall and F-measure
//! are 0 when undefined, FNR is 0 without positives, and MCC is 0 when any
//! factor of its denominator is 0.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Conventions printed under every rendered table.
pub const FOOTER: &str = "positive class = attack (label 1); predicted attack when score >= threshold; \
precision/recall/F-measure = 0 when undefined; FNR = 0 without positives; MCC = 0 when undefined";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub fnr: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub fnr: f64,
    pub auc: f64,
    pub mcc: f64,
    pub threshold: f64,
    pub confusion: ConfusionCounts,
    pub roc: Vec<RocPoint>,
}

fn check_label(row: usize, y: u8) -> Result<()> {
    if y > 1 {
        return Err(Error::Data { row, msg: format!("label {y} is not 0 or 1") });
    }
    Ok(())
}

pub fn confusion(predictions: &[u8], truths: &[u8]) -> Result<ConfusionCounts> {
    if predictions.len() != truths.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::Contract("no records to score".into()));
    }
    let mut c = ConfusionCounts::default();
    for (row, (&p, &t)) in predictions.iter().zip(truths).enumerate() {
        check_label(row, p)?;
        check_label(row, t)?;
        match (p, t) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fp += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn scalar_metrics(c: &ConfusionCounts) -> ScalarMetrics {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    ScalarMetrics {
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        precision,
        recall,
        f_measure: ratio(2.0 * precision * recall, precision + recall),
        fnr: ratio(fn_, fn_ + tp),
        mcc: if den == 0.0 { 0.0 } else { (tp * tn - fp * fn_) / den.sqrt() },
    }
}

fn check_scores(scores: &[f64], truths: &[u8]) -> Result<()> {
    if scores.len() != truths.len() {
        return Err(Error::Contract(format!("{} scores for {} labels", scores.len(), truths.len())));
    }
    if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Data { row, msg: format!("score {} is not finite", scores[row]) });
    }
    truths.iter().enumerate().try_for_each(|(row, &y)| check_label(row, y))
}

/// ROC curve over every distinct score (descending) and its trapezoidal area.
/// Tied scores form one diagonal step, so the area equals the Mann-Whitney
/// statistic with ties counted as one half.
pub fn roc_auc(scores: &[f64], truths: &[u8]) -> Result<(Vec<RocPoint>, f64)> {
    check_scores(scores, truths)?;
    let pos = truths.iter().filter(|&&y| y == 1).count();
    let neg = truths.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined(format!(
            "ROC/AUC needs both classes, got {pos} attack and {neg} normal records"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (p, n) = (pos as f64, neg as f64);
    let mut roc = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let mut area = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]].total_cmp(&s) == Ordering::Equal {
            if truths[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *roc.last().expect("non-empty");
        let next = RocPoint { fpr: fp as f64 / n, tpr: tp as f64 / p };
        area += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
        roc.push(next);
    }
    Ok((roc, area))
}

/// Scalar metrics at `threshold` plus threshold-free ROC/AUC.
pub fn report(scores: &[f64], truths: &[u8], threshold: f64) -> Result<MetricsReport> {
    check_scores(scores, truths)?;
    let predictions: Vec<u8> = scores.iter().map(|&s| u8::from(s >= threshold)).collect();
    let confusion = confusion(&predictions, truths)?;
    let m = scalar_metrics(&confusion);
    let (roc, auc) = roc_auc(scores, truths)?;
    Ok(MetricsReport {
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f_measure: m.f_measure,
        fnr: m.fnr,
        auc,
        mcc: m.mcc,
        threshold,
        confusion,
        roc,
    })
}

impl MetricsReport {
    /// Values in table column order.
    pub fn columns(&self) -> [f64; 7] {
        [self.accuracy, self.precision, self.recall, self.f_measure, self.fnr, self.auc, self.mcc]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_roc_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["fpr", "tpr"])?;
        for p in &self.roc {
            w.write_record([p.fpr.to_string(), p.tpr.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const TABLE_COLUMNS: [&str; 8] =
    ["Model", "Accuracy", "Precision", "Recall", "F-measure", "FNR", "AUC", "MCC"];

/// Percentages with one decimal; an exact 1.0 prints as `100`.
pub fn format_percent(v: f64) -> String {
    if v == 1.0 {
        "100".to_string()
    } else {
        format!("{:.1}", 100.0 * v)
    }
}

/// Aligned text table, one row per named report, followed by the conventions.
pub fn render_table(rows: &[(&str, &MetricsReport)]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            std::iter::once(name.to_string())
                .chain(r.columns().iter().map(|&v| format_percent(v)))
                .collect()
        })
        .collect();
    let widths: Vec<usize> = (0..TABLE_COLUMNS.len())
        .map(|j| cells.iter().map(|r| r[j].len()).chain([TABLE_COLUMNS[j].len()]).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        let parts: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &TABLE_COLUMNS);
    let rule = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let _ = writeln!(out, "{}", "-".repeat(rule));
    for row in &cells {
        let refs: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut out, &refs);
    }
    let _ = writeln!(out, "({FOOTER})");
    out
}
