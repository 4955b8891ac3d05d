use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The 22 acoustic features of the UCI Parkinson's voice dataset, in the
/// canonical column order.
pub const UCI_FEATURES: [&str; 22] = [
    "MDVP:Fo(Hz)",
    "MDVP:Fhi(Hz)",
    "MDVP:Flo(Hz)",
    "MDVP:Jitter(%)",
    "MDVP:Jitter(Abs)",
    "MDVP:RAP",
    "MDVP:PPQ",
    "Jitter:DDP",
    "MDVP:Shimmer",
    "MDVP:Shimmer(dB)",
    "Shimmer:APQ3",
    "Shimmer:APQ5",
    "MDVP:APQ",
    "Shimmer:DDA",
    "NHR",
    "HNR",
    "RPDE",
    "DFA",
    "spread1",
    "spread2",
    "D2",
    "PPE",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSchema {
    pub name_column: String,
    pub feature_columns: Vec<String>,
    pub label_column: String,
}

impl RecordSchema {
    pub fn uci() -> Self {
        RecordSchema {
            name_column: "name".to_string(),
            feature_columns: UCI_FEATURES.iter().map(|s| s.to_string()).collect(),
            label_column: "status".to_string(),
        }
    }
}

impl Default for RecordSchema {
    fn default() -> Self {
        Self::uci()
    }
}

/// Feature matrix with binary labels. `row_ids` are zero-based positions of
/// the rows in the source file; `names` holds the recording identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Vec<u8>,
    pub row_ids: Vec<usize>,
    pub names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Tensor, y: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        if x.rank() != 2 || x.rows() != y.len() || x.cols() != feature_names.len() {
            return Err(Error::dim(
                "dataset",
                x.shape(),
                &[y.len(), feature_names.len()],
            ));
        }
        if let Some(bad) = y.iter().find(|&&v| v > 1) {
            return Err(Error::Usage(format!("label {bad} is not binary")));
        }
        let n = y.len();
        Ok(Dataset {
            x,
            y,
            row_ids: (0..n).collect(),
            names: (0..n).map(|i| format!("row{i}")).collect(),
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.y.iter().map(|&v| f64::from(v)).collect()
    }

    /// `(negatives, positives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&v| v == 1).count();
        (self.y.len() - pos, pos)
    }

    /// Rows at the given positions (not row ids), in the given order.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(positions),
            y: positions.iter().map(|&i| self.y[i]).collect(),
            row_ids: positions.iter().map(|&i| self.row_ids[i]).collect(),
            names: positions.iter().map(|&i| self.names[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn with_features(&self, x: Tensor) -> Result<Dataset> {
        if x.shape() != self.x.shape() {
            return Err(Error::dim("with_features", self.x.shape(), x.shape()));
        }
        Ok(Dataset { x, ..self.clone() })
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &RecordSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema)
}

/// Parses comma-separated text with a header row. Header names are matched
/// to the schema after trimming, in any order; extra columns are ignored.
pub fn parse_csv(text: &str, schema: &RecordSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Ingestion(e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Ingestion("file is empty".into()));
    }
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let column = |name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let name_col = column(&schema.name_column)?;
    let label_col = column(&schema.label_column)?;
    let feature_cols = schema
        .feature_columns
        .iter()
        .map(|f| column(f))
        .collect::<Result<Vec<_>>>()?;

    let d = feature_cols.len();
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut names = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Ingestion(format!("row {row}: {e}")))?;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("`{raw}` is not a finite number"),
                })
        };
        for (&col, name) in feature_cols.iter().zip(&schema.feature_columns) {
            data.push(cell(col, name)?);
        }
        let label = cell(label_col, &schema.label_column)?;
        let label = match label {
            0.0 => 0,
            1.0 => 1,
            _ => {
                return Err(Error::Parse {
                    row,
                    column: schema.label_column.clone(),
                    message: format!("label {label} is not 0 or 1"),
                })
            }
        };
        y.push(label);
        names.push(record.get(name_col).unwrap_or("").to_string());
    }
    if y.is_empty() {
        return Err(Error::Ingestion("no data rows after the header".into()));
    }
    let n = y.len();
    Ok(Dataset {
        x: Tensor::new(vec![n, d], data)?,
        y,
        row_ids: (0..n).collect(),
        names,
        feature_names: schema.feature_columns.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        let mut cols = vec!["name".to_string()];
        cols.extend(UCI_FEATURES.iter().map(|s| s.to_string()));
        cols.push("status".into());
        cols.join(",")
    }

    fn row(name: &str, base: f64, status: u8) -> String {
        let mut cells = vec![name.to_string()];
        cells.extend((0..22).map(|j| format!("{}", base + j as f64)));
        cells.push(status.to_string());
        cells.join(",")
    }

    #[test]
    fn header_only_is_an_ingestion_error() {
        let err = parse_csv(&format!("{}\n", header()), &RecordSchema::uci()).unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)));
        let err = parse_csv("", &RecordSchema::uci()).unwrap_err();
        assert!(matches!(err, Error::Ingestion(_) | Error::Schema(_)));
    }

    #[test]
    fn duplicated_rows_are_kept() {
        let r = row("s1", 1.5, 1);
        let text = format!("{}\n{r}\n{r}\n{r}\n", header());
        let ds = parse_csv(&text, &RecordSchema::uci()).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.n_features(), 22);
        assert_eq!(ds.x.row(0), ds.x.row(2));
        assert_eq!(ds.row_ids, vec![0, 1, 2]);
        assert_eq!(ds.names[1], "s1");
    }

    #[test]
    fn columns_match_in_any_order_after_trimming() {
        let mut cols: Vec<String> = header().split(',').map(|c| format!(" {c} ")).collect();
        cols.reverse();
        let mut cells: Vec<String> = row("s", 0.0, 0).split(',').map(String::from).collect();
        cells.reverse();
        let text = format!("{}\n{}\n", cols.join(","), cells.join(","));
        let ds = parse_csv(&text, &RecordSchema::uci()).unwrap();
        assert_eq!(ds.x.row(0)[0], 0.0);
        assert_eq!(ds.x.row(0)[21], 21.0);
        assert_eq!(ds.y, vec![0]);
    }

    #[test]
    fn missing_column_is_named() {
        let text = header().replace(",PPE", ",PPX");
        let err = parse_csv(
            &format!("{text}\n{}\n", row("a", 0.0, 1)),
            &RecordSchema::uci(),
        )
        .unwrap_err();
        match err {
            Error::Schema(msg) => assert!(msg.contains("PPE")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let bad = row("a", 0.0, 1).replacen(",3,", ",abc,", 1);
        let text = format!("{}\n{}\n{bad}\n", header(), row("b", 0.0, 0));
        match parse_csv(&text, &RecordSchema::uci()).unwrap_err() {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "MDVP:Jitter(%)");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_binary_label_is_rejected() {
        let text = format!("{}\n{}\n", header(), row("a", 0.0, 2));
        assert!(matches!(
            parse_csv(&text, &RecordSchema::uci()),
            Err(Error::Parse { .. })
        ));
    }
}
