//! Header-bearing numeric CSV datasets and score files.

use std::io::{Read, Write};

use crate::error::{HifError, Result};
use crate::forest::ScoreTriple;
use crate::scoring::NormalizedTriple;

pub const LABEL_COLUMN: &str = "label";

/// Labels treated as the negative (normal) class; anything else non-empty is
/// an anomaly. Matching is case-insensitive.
pub const NORMAL_LABELS: [&str; 5] = ["normal", "0", "false", "benign", "negative"];

pub fn is_anomaly_label(label: &str) -> bool {
    let l = label.trim();
    !l.is_empty() && !NORMAL_LABELS.iter().any(|n| l.eq_ignore_ascii_case(n))
}

/// Numeric rows plus an optional string label column.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Self {
        Dataset {
            columns,
            rows,
            labels,
        }
    }

    /// Unlabeled dataset with columns `x0, x1, ...`.
    pub fn unlabeled(rows: Vec<Vec<f64>>) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        Dataset::new((0..dim).map(|i| format!("x{i}")).collect(), rows, None)
    }

    pub fn labeled(rows: Vec<Vec<f64>>, label: &str) -> Self {
        let n = rows.len();
        Dataset {
            labels: Some(vec![label.to_owned(); n]),
            ..Dataset::unlabeled(rows)
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn anomaly_flags(&self) -> Option<Vec<bool>> {
        self.labels
            .as_ref()
            .map(|ls| ls.iter().map(|l| is_anomaly_label(l)).collect())
    }
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    read_dataset_delimited(input, b',')
}

/// Like [`read_dataset`] with an explicit field delimiter.
pub fn read_dataset_delimited<R: Read>(input: R, delimiter: u8) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let label_at = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(LABEL_COLUMN));
    let columns: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_at)
        .map(|(_, h)| h.to_owned())
        .collect();
    if columns.is_empty() {
        return Err(HifError::Parse {
            line: 1,
            message: "no feature columns in header".into(),
        });
    }

    let mut rows = Vec::new();
    let mut labels = label_at.map(|_| Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| HifError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(columns.len());
        for (i, field) in record.iter().enumerate() {
            if Some(i) == label_at {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| HifError::Parse {
                line,
                message: format!("`{field}` in column `{}` is not a number", &headers[i]),
            })?;
            if !v.is_finite() {
                return Err(HifError::Parse {
                    line,
                    message: format!("non-finite value in column `{}`", &headers[i]),
                });
            }
            row.push(v);
        }
        if let (Some(labels), Some(at)) = (labels.as_mut(), label_at) {
            labels.push(record[at].to_owned());
        }
        rows.push(row);
    }
    Ok(Dataset {
        columns,
        rows,
        labels,
    })
}

pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = data.columns.clone();
    if data.labels.is_some() {
        header.push(LABEL_COLUMN.into());
    }
    w.write_record(&header)?;
    for (i, row) in data.rows.iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(f64::to_string).collect();
        if let Some(labels) = &data.labels {
            fields.push(labels[i].clone());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Column order of score files.
pub const SCORE_COLUMNS: [&str; 8] = [
    "score",
    "path_score",
    "centroid_score",
    "anomaly_ratio_score",
    "norm_path_score",
    "norm_centroid_score",
    "norm_anomaly_ratio_score",
    "mean_path_length",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreRow {
    pub score: f64,
    pub raw: ScoreTriple,
    pub normalized: NormalizedTriple,
}

pub fn write_scores<W: Write>(rows: &[ScoreRow], labels: Option<&[String]>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = SCORE_COLUMNS.to_vec();
    if labels.is_some() {
        header.push(LABEL_COLUMN);
    }
    w.write_record(&header)?;
    for (i, r) in rows.iter().enumerate() {
        let mut fields = vec![
            r.score.to_string(),
            r.raw.path_score.to_string(),
            r.raw.centroid_score.to_string(),
            r.raw.anomaly_ratio_score.to_string(),
            r.normalized.path.to_string(),
            r.normalized.centroid.to_string(),
            r.normalized.anomaly_ratio.to_string(),
            r.raw.mean_path_length.to_string(),
        ];
        if let Some(labels) = labels {
            fields.push(labels[i].clone());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
