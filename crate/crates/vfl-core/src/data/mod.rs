//! Tabular dataset handling: ingestion, encoding, normalization, splits
//! and the cyclic feature windows used to assign features to the passive
//! party.

mod csvio;
mod encode;
mod synth;

pub use csvio::{load_csv, preset_schema, ColumnKind, CsvSchema, RawColumn, RawDataset};
pub use encode::{encode_categorical, CategoricalEncoder};
pub use synth::{generate_synthetic, Correlation, Marginal, SyntheticSpec};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: expected {expected} fields, found {found}")]
    ArityMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: {detail}")]
    MalformedRow { row: usize, detail: String },
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("fraction {name} must lie in (0,1), got {value}")]
    BadFraction { name: &'static str, value: f64 },
    #[error("split leaves the {0} part empty")]
    EmptySplit(&'static str),
    #[error("class {0} missing from the training split; re-seed required")]
    ClassMissingFromTrain(usize),
    #[error("window width d={d} must satisfy 1 <= d < d_t={d_t}")]
    BadWindow { d: usize, d_t: usize },
    #[error("no training rows for class {0}")]
    ClassMissingFromMask(usize),
    #[error("synthetic spec invalid: {0}")]
    BadSyntheticSpec(String),
}

/// A fully numeric dataset: one row per sample, labels as class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    k: usize,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        k: usize,
    ) -> Self {
        assert_eq!(features.nrows(), labels.len(), "row/label count mismatch");
        assert_eq!(
            features.ncols(),
            feature_names.len(),
            "column/name count mismatch"
        );
        assert!(
            labels.iter().all(|&u| u < k),
            "label out of range for k={k}"
        );
        Self {
            features,
            labels,
            feature_names,
            k,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    /// Total feature count.
    pub fn d_t(&self) -> usize {
        self.features.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// The rows named by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let features = select_rows(&self.features, idx);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Dataset {
            features,
            labels,
            feature_names: self.feature_names.clone(),
            k: self.k,
        }
    }
}

/// Rebuild a matrix from the rows named by `idx`, in that order.
pub fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

/// Rebuild a matrix from the columns named by `idx`, in that order.
pub fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

/// Min-max scale every feature into [0,1] using the minima and maxima of
/// the full dataset; constant features map to zero. Idempotent.
pub fn normalize(ds: &Dataset) -> Dataset {
    let mut features = ds.features.clone();
    for mut col in features.column_iter_mut() {
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        if span > 0.0 {
            for v in col.iter_mut() {
                *v = (*v - lo) / span;
            }
        } else {
            col.fill(0.0);
        }
    }
    Dataset {
        features,
        labels: ds.labels.clone(),
        feature_names: ds.feature_names.clone(),
        k: ds.k,
    }
}

/// How to carve a dataset into prediction, train and test parts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Share of all rows set aside for the prediction phase.
    pub prediction_fraction: f64,
    /// Share of the remaining rows used as the test set.
    pub test_fraction_of_train: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            prediction_fraction: 0.20,
            test_fraction_of_train: 0.20,
            seed: 0,
        }
    }
}

/// Disjoint row-index sets covering the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub prediction: Vec<usize>,
}

/// Seeded three-way split: `prediction_fraction` of all rows first, then
/// the remainder is split again into train and test. Every class must
/// appear in the training part.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<SplitIndices, DataError> {
    for (name, value) in [
        ("prediction_fraction", spec.prediction_fraction),
        ("test_fraction_of_train", spec.test_fraction_of_train),
    ] {
        if !(value > 0.0 && value < 1.0) {
            return Err(DataError::BadFraction { name, value });
        }
    }
    let n = ds.n_samples();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let n_pred = (n as f64 * spec.prediction_fraction).floor() as usize;
    let rest = n - n_pred;
    let n_test = (rest as f64 * spec.test_fraction_of_train).floor() as usize;
    let n_train = rest - n_test;
    for (part, size) in [("prediction", n_pred), ("test", n_test), ("train", n_train)] {
        if size == 0 {
            return Err(DataError::EmptySplit(part));
        }
    }

    let prediction = order[..n_pred].to_vec();
    let test = order[n_pred..n_pred + n_test].to_vec();
    let train = order[n_pred + n_test..].to_vec();

    for class in 0..ds.k {
        if !train.iter().any(|&i| ds.labels[i] == class) {
            return Err(DataError::ClassMissingFromTrain(class));
        }
    }
    Ok(SplitIndices {
        train,
        test,
        prediction,
    })
}

/// Which features belong to the passive party.
///
/// `passive` is a cyclic window of `d` consecutive feature indices
/// (modulo `d_t`, kept in window order); `active` is the ascending
/// complement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub passive: Vec<usize>,
    pub active: Vec<usize>,
}

impl Partition {
    /// Number of passive features.
    pub fn d(&self) -> usize {
        self.passive.len()
    }

    pub fn d_t(&self) -> usize {
        self.passive.len() + self.active.len()
    }

    pub fn passive_slice(&self, features: &DMatrix<f64>) -> DMatrix<f64> {
        select_columns(features, &self.passive)
    }

    pub fn active_slice(&self, features: &DMatrix<f64>) -> DMatrix<f64> {
        select_columns(features, &self.active)
    }
}

/// All `d_t` cyclic windows of width `d`: the i-th has passive indices
/// `{i, i+1, ..., i+d-1} mod d_t`.
pub fn window_partitions(d_t: usize, d: usize) -> Result<Vec<Partition>, DataError> {
    if d == 0 || d >= d_t {
        return Err(DataError::BadWindow { d, d_t });
    }
    Ok((0..d_t)
        .map(|start| {
            let passive: Vec<usize> = (0..d).map(|off| (start + off) % d_t).collect();
            let active: Vec<usize> = (0..d_t).filter(|i| !passive.contains(i)).collect();
            Partition { passive, active }
        })
        .collect())
}
