//! CSV ingestion with named-dataset presets.

use super::DataError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Column layout of an input CSV. Features are every header column that
/// is neither the label nor listed in `drop`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Name of the label column.
    pub label: String,
    /// Feature columns to drop at load time.
    #[serde(default)]
    pub drop: Vec<String>,
    /// Feature columns holding symbolic categories.
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Expected feature count after drops, when known.
    #[serde(default)]
    pub expected_features: Option<usize>,
    /// Expected class count, when known.
    #[serde(default)]
    pub expected_classes: Option<usize>,
}

fn default_delimiter() -> char {
    ','
}

impl CsvSchema {
    pub fn numeric(label: &str) -> Self {
        Self {
            label: label.to_string(),
            drop: Vec::new(),
            categorical: Vec::new(),
            delimiter: ',',
            expected_features: None,
            expected_classes: None,
        }
    }
}

/// Preset schemas for the named benchmark datasets. The Bank preset
/// drops the call-duration column, which all but determines the outcome
/// and is excluded from realistic models.
pub fn preset_schema(name: &str) -> Option<CsvSchema> {
    let schema = match name {
        "bank" => CsvSchema {
            label: "y".into(),
            drop: vec!["duration".into()],
            categorical: [
                "job",
                "marital",
                "education",
                "default",
                "housing",
                "loan",
                "contact",
                "month",
                "day_of_week",
                "poutcome",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            delimiter: ';',
            expected_features: Some(19),
            expected_classes: Some(2),
        },
        "adult" => CsvSchema {
            label: "income".into(),
            // education duplicates education-num.
            drop: vec!["education".into()],
            categorical: [
                "workclass",
                "marital-status",
                "occupation",
                "relationship",
                "race",
                "sex",
                "native-country",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            delimiter: ',',
            expected_features: Some(13),
            expected_classes: Some(2),
        },
        "satellite" => CsvSchema {
            expected_features: Some(36),
            expected_classes: Some(6),
            ..CsvSchema::numeric("label")
        },
        "pendigits" => CsvSchema {
            expected_features: Some(16),
            expected_classes: Some(10),
            ..CsvSchema::numeric("label")
        },
        "grid" => CsvSchema {
            expected_features: Some(13),
            expected_classes: Some(2),
            ..CsvSchema::numeric("stabf")
        },
        _ => return None,
    };
    Some(schema)
}

/// One loaded feature column, still symbolic when categorical.
#[derive(Debug, Clone)]
pub enum RawColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl RawColumn {
    pub fn len(&self) -> usize {
        match self {
            RawColumn::Numeric(v) => v.len(),
            RawColumn::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A parsed CSV: feature columns plus integer class labels.
///
/// Class indices follow the lexicographic order of the raw label
/// strings, so loading is deterministic regardless of row order.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub columns: Vec<RawColumn>,
    pub names: Vec<String>,
    pub labels: Vec<usize>,
    /// Class names in index order.
    pub classes: Vec<String>,
}

impl RawDataset {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }
}

/// Load a CSV with a header row according to `schema`.
///
/// Malformed rows are reported with their 1-based data row index.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<RawDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim_matches('"').to_string())
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| *h == schema.label)
        .ok_or_else(|| DataError::MissingColumn(schema.label.clone()))?;
    for name in schema.drop.iter().chain(&schema.categorical) {
        if !headers.contains(name) {
            return Err(DataError::MissingColumn(name.clone()));
        }
    }

    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_idx && !schema.drop.contains(&headers[i]))
        .collect();
    let names: Vec<String> = feature_idx.iter().map(|&i| headers[i].clone()).collect();
    if let Some(expected) = schema.expected_features {
        if names.len() != expected {
            return Err(DataError::SchemaMismatch(format!(
                "expected {expected} feature columns, header provides {}",
                names.len()
            )));
        }
    }
    let kinds: Vec<ColumnKind> = names
        .iter()
        .map(|n| {
            if schema.categorical.contains(n) {
                ColumnKind::Categorical
            } else {
                ColumnKind::Numeric
            }
        })
        .collect();

    let mut columns: Vec<RawColumn> = kinds
        .iter()
        .map(|kind| match kind {
            ColumnKind::Numeric => RawColumn::Numeric(Vec::new()),
            ColumnKind::Categorical => RawColumn::Categorical(Vec::new()),
        })
        .collect();
    let mut raw_labels: Vec<String> = Vec::new();

    for (row_num, record) in reader.records().enumerate() {
        let row = row_num + 1;
        let record = record.map_err(|e| DataError::MalformedRow {
            row,
            detail: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(DataError::ArityMismatch {
                row,
                expected: headers.len(),
                found: record.len(),
            });
        }
        raw_labels.push(record[label_idx].trim_matches('"').to_string());
        for (slot, &src) in feature_idx.iter().enumerate() {
            let field = record[src].trim_matches('"');
            match &mut columns[slot] {
                RawColumn::Numeric(v) => {
                    let value: f64 = field.parse().map_err(|_| DataError::MalformedRow {
                        row,
                        detail: format!("column {:?}: not a number: {field:?}", names[slot]),
                    })?;
                    v.push(value);
                }
                RawColumn::Categorical(v) => v.push(field.to_string()),
            }
        }
    }

    let classes: Vec<String> = raw_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if let Some(expected) = schema.expected_classes {
        if classes.len() != expected {
            return Err(DataError::SchemaMismatch(format!(
                "expected {expected} classes, found {}",
                classes.len()
            )));
        }
    }
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| classes.binary_search(l).expect("labels indexed from classes"))
        .collect();

    Ok(RawDataset {
        columns,
        names,
        labels,
        classes,
    })
}
