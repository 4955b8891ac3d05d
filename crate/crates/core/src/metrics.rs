//! Binary-classification metrics: confusion counts, per-class and
//! support-weighted precision/recall/F1, Matthews correlation, ROC and AUC.
//!
//! Class 1 (Parkinson's) is the positive class. Any ratio with a zero
//! denominator evaluates to 0 and is reported in `degenerate_flags` rather
//! than raising an error.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same predictions viewed with class 0 as the positive class.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

/// A ratio together with whether its denominator was zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64) -> Flagged {
    if den == 0 {
        Flagged {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Flagged {
            value: num as f64 / den as f64,
            degenerate: false,
        }
    }
}

pub fn confusion_matrix(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::dim(
            "confusion_matrix",
            &[y_true.len()],
            &[y_pred.len()],
        ));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 0) => cm.tn += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            _ => {
                return Err(Error::Metric(format!(
                    "labels must be 0 or 1, got ({t}, {p})"
                )))
            }
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicRates {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub degenerate: Vec<String>,
}

pub fn basic_rates(cm: &ConfusionMatrix) -> BasicRates {
    let mut degenerate = Vec::new();
    let mut take = |name: &str, f: Flagged| {
        if f.degenerate {
            degenerate.push(name.to_string());
        }
        f.value
    };
    let accuracy = take("accuracy", ratio(cm.tp + cm.tn, cm.total()));
    let sensitivity = take("sensitivity", ratio(cm.tp, cm.tp + cm.fn_));
    let specificity = take("specificity", ratio(cm.tn, cm.tn + cm.fp));
    let precision = take("precision", ratio(cm.tp, cm.tp + cm.fp));
    BasicRates {
        accuracy,
        sensitivity,
        specificity,
        precision,
        degenerate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassMetrics {
    pub class_label: u8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn f1_score(precision: f64, recall: f64) -> Flagged {
    if precision + recall == 0.0 {
        Flagged {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Flagged {
            value: 2.0 * precision * recall / (precision + recall),
            degenerate: false,
        }
    }
}

/// Metrics for class 0 and class 1 (in that order) plus degenerate flags.
pub fn per_class_metrics(cm: &ConfusionMatrix) -> (Vec<PerClassMetrics>, Vec<String>) {
    let mut flags = Vec::new();
    let mut out = Vec::with_capacity(2);
    for (label, view) in [(0u8, cm.swapped()), (1u8, *cm)] {
        let p = ratio(view.tp, view.tp + view.fp);
        let r = ratio(view.tp, view.tp + view.fn_);
        let f = f1_score(p.value, r.value);
        for (name, v) in [("precision", p), ("recall", r), ("f1", f)] {
            if v.degenerate {
                flags.push(format!("class{label}.{name}"));
            }
        }
        out.push(PerClassMetrics {
            class_label: label,
            precision: p.value,
            recall: r.value,
            f1: f.value,
            support: view.tp + view.fn_,
        });
    }
    (out, flags)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Precision,
    Recall,
    F1,
}

/// Support-weighted mean `sum(n_i * m_i) / N`.
pub fn weighted_metric(per_class: &[PerClassMetrics], kind: MetricKind) -> Result<f64> {
    let total: u64 = per_class.iter().map(|c| c.support).sum();
    if total == 0 {
        return Err(Error::Metric(
            "weighted metric needs positive total support".into(),
        ));
    }
    let sum: f64 = per_class
        .iter()
        .map(|c| {
            let m = match kind {
                MetricKind::Precision => c.precision,
                MetricKind::Recall => c.recall,
                MetricKind::F1 => c.f1,
            };
            c.support as f64 * m
        })
        .sum();
    Ok(sum / total as f64)
}

/// Matthews correlation coefficient; 0 (flagged) when any marginal is empty.
pub fn mcc(cm: &ConfusionMatrix) -> Flagged {
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0.0) {
        return Flagged {
            value: 0.0,
            degenerate: true,
        };
    }
    // Pairing the margins this way keeps the value bit-identical when the
    // class labels are swapped.
    let den = (((tp + fp) * (tn + fn_)) * ((tp + fn_) * (tn + fp))).sqrt();
    Flagged {
        value: (tp * tn - fp * fn_) / den,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve with one point per distinct score (descending), preceded by a
/// `(0, 0)` sentinel at threshold `max_score + 1`. A row is predicted
/// positive when its score is at least the threshold, so the last point is
/// `(1, 1)`. AUC is the trapezoidal area under the points.
pub fn roc_curve(y_true: &[u8], scores: &[f64]) -> Result<RocCurve> {
    if y_true.len() != scores.len() {
        return Err(Error::dim("roc_curve", &[y_true.len()], &[scores.len()]));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Metric("scores must be finite".into()));
    }
    if y_true.iter().any(|&y| y > 1) {
        return Err(Error::Metric("labels must be 0 or 1".into()));
    }
    let pos = y_true.iter().filter(|&&y| y == 1).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("ROC needs both classes in y_true".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: scores[order[0]] + 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub threshold: f64,
    pub confusion_matrix: ConfusionMatrix,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub per_class: Vec<PerClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub mcc: f64,
    pub roc: Option<RocCurve>,
    pub degenerate_flags: Vec<String>,
}

impl EvaluationReport {
    /// Label-based metrics from a confusion matrix alone; `roc` is attached
    /// when scores are available.
    pub fn from_confusion(
        model: &str,
        cm: ConfusionMatrix,
        threshold: f64,
        roc: Option<RocCurve>,
    ) -> Result<Self> {
        let rates = basic_rates(&cm);
        let (per_class, class_flags) = per_class_metrics(&cm);
        let m = mcc(&cm);
        let mut flags = rates.degenerate.clone();
        flags.extend(class_flags);
        if m.degenerate {
            flags.push("mcc".into());
        }
        Ok(EvaluationReport {
            model: model.to_string(),
            threshold,
            confusion_matrix: cm,
            accuracy: rates.accuracy,
            sensitivity: rates.sensitivity,
            specificity: rates.specificity,
            precision: rates.precision,
            weighted_precision: weighted_metric(&per_class, MetricKind::Precision)?,
            // Support-weighted recall reduces to correct / total; using the
            // integer form keeps it bit-identical to accuracy.
            weighted_recall: ratio(cm.tp + cm.tn, cm.total()).value,
            weighted_f1: weighted_metric(&per_class, MetricKind::F1)?,
            per_class,
            mcc: m.value,
            roc,
            degenerate_flags: flags,
        })
    }

    pub fn auc(&self) -> Option<f64> {
        self.roc.as_ref().map(|r| r.auc)
    }
}

pub fn threshold_labels(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

/// Thresholds the scores into labels and assembles every metric.
pub fn full_report(
    y_true: &[u8],
    scores: &[f64],
    threshold: f64,
    model: &str,
) -> Result<EvaluationReport> {
    let y_pred = threshold_labels(scores, threshold);
    let cm = confusion_matrix(y_true, &y_pred)?;
    let roc = roc_curve(y_true, scores)?;
    EvaluationReport::from_confusion(model, cm, threshold, Some(roc))
}

/// `threshold,fpr,tpr` with 6 decimals.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        let _ = writeln!(out, "{:.6},{:.6},{:.6}", p.threshold, p.fpr, p.tpr);
    }
    out
}

/// 2x2 counts with true classes as rows and predictions as columns.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    format!(
        ",pred_0,pred_1\ntrue_0,{},{}\ntrue_1,{},{}\n",
        cm.tn, cm.fp, cm.fn_, cm.tp
    )
}
