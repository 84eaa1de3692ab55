//! Categorical feature encoding.
//!
//! Each category of a feature is mapped to its class-conditional
//! frequency on the training rows: a training row of class `m` with
//! category `v` receives `P(v | class m)`, the mean of the category
//! indicator over the class-`m` training rows. Rows outside the
//! training mask, where the class must be treated as unknown, receive
//! the prior-weighted blend over classes. Categories never seen in the
//! training rows fall back to the global training mean of the encoded
//! feature. The tables are a pure function of the training rows.

use super::{ColumnKind, DataError, Dataset, RawColumn, RawDataset};
use nalgebra::DMatrix;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
struct ColumnTable {
    /// category -> per-class conditional frequency
    per_class: BTreeMap<String, Vec<f64>>,
    /// category -> prior-weighted blend over classes
    blended: BTreeMap<String, f64>,
    /// global training mean of the encoded column
    fallback: f64,
}

/// Encoding tables fitted on the training rows of a raw dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalEncoder {
    tables: Vec<Option<ColumnTable>>,
    priors: Vec<f64>,
    k: usize,
}

impl CategoricalEncoder {
    pub fn fit(raw: &RawDataset, train_mask: &[bool]) -> Result<Self, DataError> {
        assert_eq!(train_mask.len(), raw.n_samples(), "mask length mismatch");
        let k = raw.k();
        let mut class_counts = vec![0usize; k];
        for (i, &is_train) in train_mask.iter().enumerate() {
            if is_train {
                class_counts[raw.labels[i]] += 1;
            }
        }
        for (class, &count) in class_counts.iter().enumerate() {
            if count == 0 {
                return Err(DataError::ClassMissingFromMask(class));
            }
        }
        let n_train: usize = class_counts.iter().sum();
        let priors: Vec<f64> = class_counts
            .iter()
            .map(|&c| c as f64 / n_train as f64)
            .collect();

        let tables = raw
            .columns
            .iter()
            .map(|col| match col {
                RawColumn::Numeric(_) => None,
                RawColumn::Categorical(values) => {
                    let mut counts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
                    for (i, v) in values.iter().enumerate() {
                        if train_mask[i] {
                            counts.entry(v.clone()).or_insert_with(|| vec![0; k])
                                [raw.labels[i]] += 1;
                        }
                    }
                    let per_class: BTreeMap<String, Vec<f64>> = counts
                        .iter()
                        .map(|(v, per)| {
                            let freqs = per
                                .iter()
                                .zip(&class_counts)
                                .map(|(&c, &n)| c as f64 / n as f64)
                                .collect();
                            (v.clone(), freqs)
                        })
                        .collect();
                    let blended: BTreeMap<String, f64> = per_class
                        .iter()
                        .map(|(v, freqs)| {
                            let b = freqs.iter().zip(&priors).map(|(f, p)| f * p).sum();
                            (v.clone(), b)
                        })
                        .collect();
                    let fallback = values
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| train_mask[*i])
                        .map(|(i, v)| per_class[v][raw.labels[i]])
                        .sum::<f64>()
                        / n_train as f64;
                    Some(ColumnTable {
                        per_class,
                        blended,
                        fallback,
                    })
                }
            })
            .collect();

        Ok(Self { tables, priors, k })
    }

    /// Encode one categorical value. `class` is supplied for training
    /// rows and `None` otherwise; unseen categories map to the fallback.
    pub fn value(&self, column: usize, category: &str, class: Option<usize>) -> f64 {
        let table = self.tables[column]
            .as_ref()
            .expect("column is not categorical");
        match class {
            Some(m) => table
                .per_class
                .get(category)
                .map_or(table.fallback, |freqs| freqs[m]),
            None => table
                .blended
                .get(category)
                .copied()
                .unwrap_or(table.fallback),
        }
    }

    pub fn kind(&self, column: usize) -> ColumnKind {
        if self.tables[column].is_some() {
            ColumnKind::Categorical
        } else {
            ColumnKind::Numeric
        }
    }

    pub fn apply(&self, raw: &RawDataset, train_mask: &[bool]) -> Dataset {
        let n = raw.n_samples();
        let d = raw.columns.len();
        let mut features = DMatrix::<f64>::zeros(n, d);
        for (j, col) in raw.columns.iter().enumerate() {
            match col {
                RawColumn::Numeric(values) => {
                    for (i, &v) in values.iter().enumerate() {
                        features[(i, j)] = v;
                    }
                }
                RawColumn::Categorical(values) => {
                    for (i, v) in values.iter().enumerate() {
                        let class = train_mask[i].then(|| raw.labels[i]);
                        features[(i, j)] = self.value(j, v, class);
                    }
                }
            }
        }
        Dataset::new(features, raw.labels.clone(), raw.names.clone(), self.k)
    }
}

/// Fit the encoding tables on the training rows and apply them to the
/// whole dataset.
pub fn encode_categorical(raw: &RawDataset, train_mask: &[bool]) -> Result<Dataset, DataError> {
    Ok(CategoricalEncoder::fit(raw, train_mask)?.apply(raw, train_mask))
}
