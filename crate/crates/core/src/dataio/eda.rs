use std::fmt::Write as _;

use serde::Serialize;

use crate::dataio::Dataset;
use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 20;

/// Pearson correlation between every pair of features, using population
/// moments. A constant column correlates 0 with every other column; the
/// diagonal is always 1.
pub fn pearson_correlation_matrix(data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::Usage(format!(
            "correlation needs at least 2 rows, got {n}"
        )));
    }
    let d = data.n_features();
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..n).map(|r| data.x.get2(r, j)).collect())
        .collect();
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut corr = vec![vec![0.0; d]; d];
    for i in 0..d {
        corr[i][i] = 1.0;
        for j in i + 1..d {
            let r = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = centered[i]
                    .iter()
                    .zip(&centered[j])
                    .map(|(a, b)| a * b)
                    .sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            corr[i][j] = r;
            corr[j][i] = r;
        }
    }
    Ok(corr)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub class: u8,
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub histogram: Vec<usize>,
}

/// Per-class statistics for one feature. Histogram bins are uniform over
/// the feature's range across all rows, so both classes share edges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSummary {
    pub feature: String,
    pub bin_low: f64,
    pub bin_high: f64,
    pub classes: Vec<ClassSummary>,
}

pub fn feature_summary(data: &Dataset) -> Result<Vec<FeatureSummary>> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::Usage(
            "feature_summary needs at least one row".into(),
        ));
    }
    let mut out = Vec::with_capacity(data.n_features());
    for (j, name) in data.feature_names.iter().enumerate() {
        let col: Vec<f64> = (0..n).map(|r| data.x.get2(r, j)).collect();
        let low = col.iter().copied().fold(f64::INFINITY, f64::min);
        let high = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (high - low) / HISTOGRAM_BINS as f64;
        let bin = |v: f64| -> usize {
            if width <= 0.0 {
                0
            } else {
                (((v - low) / width) as usize).min(HISTOGRAM_BINS - 1)
            }
        };
        let mut classes = Vec::new();
        for class in 0..=1u8 {
            let values: Vec<f64> = (0..n)
                .filter(|&r| data.y[r] == class)
                .map(|r| col[r])
                .collect();
            if values.is_empty() {
                continue;
            }
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
            let mut histogram = vec![0; HISTOGRAM_BINS];
            values.iter().for_each(|&v| histogram[bin(v)] += 1);
            classes.push(ClassSummary {
                class,
                count,
                min: values.iter().copied().fold(f64::INFINITY, f64::min),
                max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean,
                std: var.sqrt(),
                histogram,
            });
        }
        out.push(FeatureSummary {
            feature: name.clone(),
            bin_low: low,
            bin_high: high,
            classes,
        });
    }
    Ok(out)
}

/// `correlation.csv`: a `feature` label column followed by one column per
/// feature, values with 6 decimals.
pub fn correlation_csv(feature_names: &[String], corr: &[Vec<f64>]) -> String {
    let mut out = String::from("feature");
    for name in feature_names {
        out.push(',');
        out.push_str(&csv_field(name));
    }
    out.push('\n');
    for (name, row) in feature_names.iter().zip(corr) {
        out.push_str(&csv_field(name));
        for v in row {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

/// `summary.csv`: `feature,class,count,min,max,mean,std,bin_0..bin_19`.
pub fn summary_csv(summary: &[FeatureSummary]) -> String {
    let mut out = String::from("feature,class,count,min,max,mean,std");
    for b in 0..HISTOGRAM_BINS {
        let _ = write!(out, ",bin_{b}");
    }
    out.push('\n');
    for f in summary {
        for c in &f.classes {
            let _ = write!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6}",
                csv_field(&f.feature),
                c.class,
                c.count,
                c.min,
                c.max,
                c.mean,
                c.std
            );
            for h in &c.histogram {
                let _ = write!(out, ",{h}");
            }
            out.push('\n');
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
