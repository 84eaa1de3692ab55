//! Experiment orchestration: dataset pipelines, attack and sweep grids
//! over the cyclic feature windows, and CSV emission.
//!
//! Reconstruction error is averaged two ways, following the evaluation
//! protocol of the experiments: over samples ("over time" — training
//! plus prediction rows for score-free attacks, prediction rows only
//! for the exact-score baselines, which may not query training scores)
//! and over the cyclic feature windows of a given width ("over space").
//!
//! Everything is deterministic in the configured seed: per-cell seeds
//! are derived by mixing the master seed with the grid coordinates, so
//! any emitted number can be reproduced by replaying its cell alone,
//! and results are collected in configuration order regardless of how
//! many threads run the grid.

use crate::adversary::{self, ObservedSample, RamConfig};
use crate::attack::{self, AttackError};
use crate::data::{
    self, generate_synthetic, load_csv, normalize, preset_schema, window_partitions, CsvSchema,
    DataError, Dataset, Partition, SplitIndices, SplitSpec, SyntheticSpec,
};
use crate::defense::{
    self, empirical_attack_mse, estimator_for_case, solve_case, solve_case_randomized,
    PassiveStats, PpsCase, Randomization, SolverStatus,
};
use crate::model::{
    self, accuracy, log_ratio, partition_params, softmax, LrParams, PartitionedModel,
    TrainConfig, TrainError,
};
use crate::par;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Config(String),
}

/// Mix a master seed with grid coordinates (splitmix finalizer), so
/// every cell owns an independent, replayable stream.
pub fn mix_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = master ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        state = state.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    }
    state
}

// ---------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Named dataset loaded from a CSV with its preset schema.
    Preset { name: String, path: PathBuf },
    /// Arbitrary CSV with an explicit schema.
    Csv { path: PathBuf, schema: CsvSchema },
    Synthetic(SyntheticSpec),
}

impl DataSource {
    pub fn label(&self) -> String {
        match self {
            DataSource::Preset { name, .. } => name.clone(),
            DataSource::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
            DataSource::Synthetic(_) => "synthetic".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    /// Estimate every passive feature as one half.
    Half,
    /// Least squares on exact scores (prediction rows, d < k).
    LsExact,
    /// half* on exact scores (prediction rows, d >= k).
    HalfstarExact,
    /// Score-free attack through the stand-in model.
    Am,
    /// Score-free attack through the refined stand-in model.
    Ram,
}

impl std::fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AttackMethod::Half => "half",
            AttackMethod::LsExact => "ls_exact",
            AttackMethod::HalfstarExact => "halfstar_exact",
            AttackMethod::Am => "am",
            AttackMethod::Ram => "ram",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Delivered scores arrive exactly.
    #[default]
    Exact,
    /// Only the implied class labels are available.
    Labels,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RamSettings {
    /// How many delivered prediction scores the refinement may use; the
    /// first `n_p` prediction rows under the seed's ordering.
    pub n_p: usize,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub score_mode: ScoreMode,
}

impl RamSettings {
    /// Weights resolved to the conventional defaults of the score mode.
    pub fn weights(&self) -> (f64, f64) {
        let defaults = match self.score_mode {
            ScoreMode::Exact => (1.0, 0.0),
            ScoreMode::Labels => (0.0, 1.0),
        };
        (
            self.alpha.unwrap_or(defaults.0),
            self.beta.unwrap_or(defaults.1),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpsSettings {
    /// Schemes to sweep. Empty means the natural scheme for each window
    /// shape; listing several (e.g. cases i and iv on a two-class
    /// dataset) emits their curves jointly for comparison.
    #[serde(default)]
    pub cases: Vec<PpsCase>,
    pub epsilon_grid: Vec<f64>,
    #[serde(default)]
    pub randomize: Option<Randomization>,
}

/// One JSON document drives every subcommand; unused sections are
/// ignored by the ones that do not need them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub d_values: Vec<usize>,
    #[serde(default)]
    pub methods: Vec<AttackMethod>,
    #[serde(default)]
    pub ram: Option<RamSettings>,
    #[serde(default)]
    pub pps: Option<PpsSettings>,
    /// Cap on windows per width for desk-scale runs; all windows when
    /// absent.
    #[serde(default)]
    pub max_windows: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

// ---------------------------------------------------------------------
// Dataset pipeline
// ---------------------------------------------------------------------

/// A normalized dataset together with its row splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedData {
    pub dataset: Dataset,
    pub splits: SplitIndices,
}

impl ProcessedData {
    /// Rows attacked by score-free methods: training plus prediction.
    pub fn agnostic_rows(&self) -> Vec<usize> {
        let mut rows = self.splits.train.clone();
        rows.extend(&self.splits.prediction);
        rows
    }
}

/// Load, encode, normalize and split a data source. The seed of the
/// split spec is mixed with the master seed; categorical encodings are
/// fitted on the training portion (train plus test rows).
pub fn ingest(
    source: &DataSource,
    split: &SplitSpec,
    master_seed: u64,
) -> Result<ProcessedData, HarnessError> {
    let split = SplitSpec {
        seed: mix_seed(master_seed, &[split.seed, 1]),
        ..*split
    };
    let dataset = match source {
        DataSource::Synthetic(spec) => {
            let spec = SyntheticSpec {
                seed: mix_seed(master_seed, &[spec.seed, 2]),
                ..spec.clone()
            };
            generate_synthetic(&spec)?
        }
        DataSource::Preset { name, path } => {
            let schema = preset_schema(name).ok_or_else(|| {
                HarnessError::Config(format!("unknown preset {name:?}"))
            })?;
            let raw = load_csv(path, &schema)?;
            let numeric = encode_raw(&raw, &split)?;
            return finish(numeric, &split);
        }
        DataSource::Csv { path, schema } => {
            let raw = load_csv(path, schema)?;
            let numeric = encode_raw(&raw, &split)?;
            return finish(numeric, &split);
        }
    };
    finish(dataset, &split)
}

fn encode_raw(raw: &data::RawDataset, split: &SplitSpec) -> Result<Dataset, HarnessError> {
    // a label-only stand-in dataset drives the split so encoding can see
    // its training mask
    let placeholder = Dataset::new(
        DMatrix::zeros(raw.n_samples(), 1),
        raw.labels.clone(),
        vec!["_".into()],
        raw.k(),
    );
    let splits = data::split(&placeholder, split)?;
    let mut mask = vec![false; raw.n_samples()];
    for &i in splits.train.iter().chain(&splits.test) {
        mask[i] = true;
    }
    Ok(data::encode_categorical(raw, &mask)?)
}

fn finish(dataset: Dataset, split: &SplitSpec) -> Result<ProcessedData, HarnessError> {
    let dataset = normalize(&dataset);
    let splits = data::split(&dataset, split)?;
    Ok(ProcessedData { dataset, splits })
}

/// JSON form of a processed dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessedFile {
    pub feature_names: Vec<String>,
    pub k: usize,
    /// One row per sample.
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub splits: SplitIndices,
}

impl ProcessedFile {
    pub fn pack(data: &ProcessedData) -> Self {
        let ds = &data.dataset;
        let features = (0..ds.n_samples())
            .map(|i| ds.features().row(i).iter().cloned().collect())
            .collect();
        Self {
            feature_names: ds.feature_names().to_vec(),
            k: ds.k(),
            features,
            labels: ds.labels().to_vec(),
            splits: data.splits.clone(),
        }
    }

    pub fn unpack(&self) -> ProcessedData {
        let n = self.features.len();
        let d = self.feature_names.len();
        let mut m = DMatrix::<f64>::zeros(n, d);
        for (i, row) in self.features.iter().enumerate() {
            m.row_mut(i).copy_from_slice(row);
        }
        ProcessedData {
            dataset: Dataset::new(m, self.labels.clone(), self.feature_names.clone(), self.k),
            splits: self.splits.clone(),
        }
    }
}

// ---------------------------------------------------------------------
// Scoring deployment
// ---------------------------------------------------------------------

/// The joint model as deployed: scores always flow through the true
/// parameters, while `disclosed` is what the active party gets to see.
/// Applying a distortion scheme swaps `disclosed` and nothing else, so
/// delivered scores and accuracy are bit-identical either way.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub pm: PartitionedModel,
    pub disclosed: DMatrix<f64>,
}

impl Deployment {
    pub fn undistorted(pm: PartitionedModel) -> Self {
        let disclosed = pm.w_pas.clone();
        Self { pm, disclosed }
    }

    pub fn with_disclosed(pm: PartitionedModel, disclosed: DMatrix<f64>) -> Self {
        assert_eq!(disclosed.shape(), pm.w_pas.shape());
        Self { pm, disclosed }
    }

    /// Confidence score for a full feature row; the split score path.
    pub fn score(&self, full_row: &DVector<f64>) -> DVector<f64> {
        let y = pick(full_row, &self.pm.partition.active);
        let x = pick(full_row, &self.pm.partition.passive);
        softmax(&self.pm.logits(&y, &x))
    }

    pub fn accuracy(&self, features: &DMatrix<f64>, labels: &[usize]) -> f64 {
        let hits = labels
            .iter()
            .enumerate()
            .filter(|(i, &u)| {
                let c = self.score(&row_vec(features, *i));
                let mut best = 0;
                for m in 1..c.len() {
                    if c[m] > c[best] {
                        best = m;
                    }
                }
                best == u
            })
            .count();
        hits as f64 / labels.len().max(1) as f64
    }
}

fn row_vec(m: &DMatrix<f64>, i: usize) -> DVector<f64> {
    DVector::from_row_slice(m.row(i).transpose().as_slice())
}

fn pick(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |slot, _| v[idx[slot]])
}

// ---------------------------------------------------------------------
// Attack grid
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    pub dataset: String,
    /// Window start, or `None` for the window average.
    pub window_start: Option<usize>,
    pub d: usize,
    pub method: AttackMethod,
    pub n_p: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mse: f64,
}

#[derive(Debug, Clone)]
pub struct Skip {
    pub d: usize,
    pub window_start: Option<usize>,
    pub method: AttackMethod,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct AttackGridOutput {
    pub rows: Vec<AttackRow>,
    pub skipped: Vec<Skip>,
    /// Test accuracy of the jointly trained model.
    pub vfl_test_accuracy: f64,
}

fn score_source_exact(pm: &PartitionedModel, full_row: &DVector<f64>) -> DVector<f64> {
    let y = pick(full_row, &pm.partition.active);
    let x = pick(full_row, &pm.partition.passive);
    log_ratio(&softmax(&pm.logits(&y, &x)))
}

/// Clipped per-sample attack over `rows`, using exact or stand-in
/// scores; the estimator follows the window shape (least squares below
/// k classes, half* otherwise).
fn attack_mse_over_rows(
    pm: &PartitionedModel,
    dataset: &Dataset,
    rows: &[usize],
    am: Option<&LrParams>,
) -> Result<f64, String> {
    let d = pm.d();
    let k = pm.k();
    if d < k && crate::linalg::numerical_rank(&(attack::build_j(k).unwrap().matrix() * &pm.w_pas))
        < d
    {
        return Err("attack matrix is rank deficient".into());
    }
    let errs = par::map(rows, |&i| {
        let full = row_vec(dataset.features(), i);
        let y = pick(&full, &pm.partition.active);
        let x_true = pick(&full, &pm.partition.passive);
        let c_prime = match am {
            Some(params) => adversary::estimate_score(params, &y).1,
            None => score_source_exact(pm, &full),
        };
        let sys = attack::form_system(pm, &y, &c_prime);
        let x_hat = if d < k {
            attack::ls_estimate(&sys).expect("rank checked above")
        } else {
            attack::halfstar_estimate(&sys)
        };
        (x_true - attack::clip_to_box(&x_hat)).norm_squared()
    });
    Ok(errs.iter().sum::<f64>() / (rows.len() * d) as f64)
}

fn half_mse_over_rows(partition: &Partition, dataset: &Dataset, rows: &[usize]) -> f64 {
    let d = partition.d();
    let errs = par::map(rows, |&i| {
        let full = row_vec(dataset.features(), i);
        let x = pick(&full, &partition.passive);
        x.map(|v| v - 0.5).norm_squared()
    });
    errs.iter().sum::<f64>() / (rows.len() * d) as f64
}

fn observed_prediction_scores(
    pm: &PartitionedModel,
    dataset: &Dataset,
    prediction_rows: &[usize],
    n_p: usize,
    mode: ScoreMode,
) -> Vec<ObservedSample> {
    prediction_rows
        .iter()
        .take(n_p)
        .map(|&i| {
            let full = row_vec(dataset.features(), i);
            let y = pick(&full, &pm.partition.active);
            let x = pick(&full, &pm.partition.passive);
            let c = softmax(&pm.logits(&y, &x));
            match mode {
                ScoreMode::Exact => ObservedSample {
                    y: y.iter().cloned().collect(),
                    c: Some(c.iter().cloned().collect()),
                    u: None,
                },
                ScoreMode::Labels => {
                    let mut best = 0;
                    for m in 1..c.len() {
                        if c[m] > c[best] {
                            best = m;
                        }
                    }
                    ObservedSample {
                        y: y.iter().cloned().collect(),
                        c: None,
                        u: Some(best),
                    }
                }
            }
        })
        .collect()
}

type CellOutcome = Result<(AttackMethod, f64), Skip>;

fn windows_for(cfg: &ExperimentConfig, d_t: usize, d: usize) -> Result<Vec<Partition>, DataError> {
    let mut parts = window_partitions(d_t, d)?;
    if let Some(cap) = cfg.max_windows {
        parts.truncate(cap);
    }
    Ok(parts)
}

/// Train the joint model once, then attack every (window width, window,
/// method) cell and average windows per (width, method).
pub fn run_attack_grid(
    cfg: &ExperimentConfig,
    data: &ProcessedData,
) -> Result<AttackGridOutput, HarnessError> {
    if cfg.d_values.is_empty() || cfg.methods.is_empty() {
        return Err(HarnessError::Config(
            "attack grid needs d_values and methods".into(),
        ));
    }
    let ds = &data.dataset;
    let name = "dataset".to_string(); // replaced by caller-facing label below
    let _ = name;
    let label = cfg.source.label();
    let train_rows = &data.splits.train;
    let x_train = data::select_rows(ds.features(), train_rows);
    let labels_train: Vec<usize> = train_rows.iter().map(|&i| ds.labels()[i]).collect();
    let vfl_cfg = TrainConfig {
        seed: mix_seed(cfg.seed, &[0xf1]),
        ..cfg.train
    };
    let vfl = model::train(&x_train, &labels_train, ds.k(), &vfl_cfg)?;
    let x_test = data::select_rows(ds.features(), &data.splits.test);
    let labels_test: Vec<usize> = data.splits.test.iter().map(|&i| ds.labels()[i]).collect();
    let vfl_test_accuracy = accuracy(&vfl, &x_test, &labels_test);

    let agnostic_rows = data.agnostic_rows();
    let (ram_n_p, ram_alpha, ram_beta) = match &cfg.ram {
        Some(settings) => {
            let (a, b) = settings.weights();
            (settings.n_p, a, b)
        }
        None => (0, 0.0, 0.0),
    };

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &d in &cfg.d_values {
        if d == 0 || d >= ds.d_t() {
            for &method in &cfg.methods {
                skipped.push(Skip {
                    d,
                    window_start: None,
                    method,
                    reason: format!("window width {d} out of range for d_t={}", ds.d_t()),
                });
            }
            continue;
        }
        let windows = windows_for(cfg, ds.d_t(), d)?;

        // per-window evaluation, parallel over windows
        let cells: Vec<(usize, Vec<CellOutcome>)> =
            par::map_range(windows.len(), |wi| {
                let partition = &windows[wi];
                let pm = partition_params(&vfl, partition);
                let mut out = Vec::new();
                for &method in &cfg.methods {
                    let result: Result<f64, Skip> = match method {
                        AttackMethod::Half => {
                            Ok(half_mse_over_rows(partition, ds, &agnostic_rows))
                        }
                        AttackMethod::LsExact => {
                            if d >= ds.k() {
                                Err(Skip {
                                    d,
                                    window_start: Some(wi),
                                    method,
                                    reason: format!(
                                        "least squares needs d < k (k={})",
                                        ds.k()
                                    ),
                                })
                            } else {
                                attack_mse_over_rows(&pm, ds, &data.splits.prediction, None)
                                    .map_err(|reason| Skip {
                                        d,
                                        window_start: Some(wi),
                                        method,
                                        reason,
                                    })
                            }
                        }
                        AttackMethod::HalfstarExact => {
                            if d < ds.k() {
                                Err(Skip {
                                    d,
                                    window_start: Some(wi),
                                    method,
                                    reason: format!("half* needs d >= k (k={})", ds.k()),
                                })
                            } else {
                                attack_mse_over_rows(&pm, ds, &data.splits.prediction, None)
                                    .map_err(|reason| Skip {
                                        d,
                                        window_start: Some(wi),
                                        method,
                                        reason,
                                    })
                            }
                        }
                        AttackMethod::Am | AttackMethod::Ram => {
                            let active_train = partition.active_slice(&x_train);
                            let cell_seed =
                                mix_seed(cfg.seed, &[d as u64, wi as u64, method as u64]);
                            let base = TrainConfig {
                                seed: cell_seed,
                                ..cfg.train
                            };
                            let trained = if method == AttackMethod::Am {
                                adversary::train_am(&active_train, &labels_train, ds.k(), &base)
                            } else if cfg.ram.is_none() {
                                out.push(Err(Skip {
                                    d,
                                    window_start: Some(wi),
                                    method,
                                    reason: "ram requested without ram settings".into(),
                                }));
                                continue;
                            } else {
                                let settings = cfg.ram.as_ref().unwrap();
                                let observed = observed_prediction_scores(
                                    &pm,
                                    ds,
                                    &data.splits.prediction,
                                    settings.n_p,
                                    settings.score_mode,
                                );
                                adversary::train_ram(
                                    &RamConfig {
                                        alpha: ram_alpha,
                                        beta: ram_beta,
                                        observed,
                                        base,
                                    },
                                    &active_train,
                                    &labels_train,
                                    ds.k(),
                                )
                            };
                            match trained {
                                Ok(am) => {
                                    attack_mse_over_rows(&pm, ds, &agnostic_rows, Some(&am))
                                        .map_err(|reason| Skip {
                                            d,
                                            window_start: Some(wi),
                                            method,
                                            reason,
                                        })
                                }
                                Err(e) => Err(Skip {
                                    d,
                                    window_start: Some(wi),
                                    method,
                                    reason: format!("training failed: {e}"),
                                }),
                            }
                        }
                    };
                    out.push(result.map(|mse| (method, mse)));
                }
                (wi, out)
            });

        // flatten in window order, then window-average per method
        let mut sums: Vec<(AttackMethod, f64, usize)> =
            cfg.methods.iter().map(|&m| (m, 0.0, 0)).collect();
        for (wi, cell) in cells {
            for item in cell {
                match item {
                    Ok((method, mse)) => {
                        rows.push(AttackRow {
                            dataset: label.clone(),
                            window_start: Some(windows[wi].passive[0]),
                            d,
                            method,
                            n_p: if method == AttackMethod::Ram { ram_n_p } else { 0 },
                            alpha: if method == AttackMethod::Ram { ram_alpha } else { 0.0 },
                            beta: if method == AttackMethod::Ram { ram_beta } else { 0.0 },
                            mse,
                        });
                        let slot = sums.iter_mut().find(|(m, _, _)| *m == method).unwrap();
                        slot.1 += mse;
                        slot.2 += 1;
                    }
                    Err(skip) => skipped.push(skip),
                }
            }
        }
        for (method, total, count) in sums {
            if count > 0 {
                rows.push(AttackRow {
                    dataset: label.clone(),
                    window_start: None,
                    d,
                    method,
                    n_p: if method == AttackMethod::Ram { ram_n_p } else { 0 },
                    alpha: if method == AttackMethod::Ram { ram_alpha } else { 0.0 },
                    beta: if method == AttackMethod::Ram { ram_beta } else { 0.0 },
                    mse: total / count as f64,
                });
            }
        }
    }

    Ok(AttackGridOutput {
        rows,
        skipped,
        vfl_test_accuracy,
    })
}

pub fn attack_csv(rows: &[AttackRow]) -> String {
    let mut out = String::from("dataset,window_start,d,method,n_p,alpha,beta,mse\n");
    for r in rows {
        let window = r
            .window_start
            .map_or_else(|| "avg".to_string(), |w| w.to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.dataset, window, r.d, r.method, r.n_p, r.alpha, r.beta, r.mse
        ));
    }
    out
}

// ---------------------------------------------------------------------
// Privacy / interpretability grid
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PiCsvRow {
    pub dataset: String,
    pub case: PpsCase,
    pub d: usize,
    pub epsilon: f64,
    pub g_achieved: f64,
    pub mse_predicted: f64,
    pub mse_empirical: f64,
    pub status: SolverStatus,
}

#[derive(Debug, Clone)]
pub struct PiGridOutput {
    pub rows: Vec<PiCsvRow>,
    pub skipped: Vec<Skip>,
}

fn case_applies(case: PpsCase, d: usize, k: usize) -> bool {
    match case {
        PpsCase::I => d >= k,
        PpsCase::II => d > 1 && d < k,
        PpsCase::III => d == 1,
        PpsCase::IV => k == 2 && d > 1,
    }
}

/// Distortion sweep per window width and window: solve each level,
/// validate the model against the simulated unclipped attack on the
/// training and prediction rows.
pub fn run_pi_grid(
    cfg: &ExperimentConfig,
    data: &ProcessedData,
) -> Result<PiGridOutput, HarnessError> {
    let settings = cfg
        .pps
        .as_ref()
        .ok_or_else(|| HarnessError::Config("pi grid needs pps settings".into()))?;
    if cfg.d_values.is_empty() || settings.epsilon_grid.is_empty() {
        return Err(HarnessError::Config(
            "pi grid needs d_values and a nonempty epsilon_grid".into(),
        ));
    }
    let ds = &data.dataset;
    let label = cfg.source.label();
    let train_rows = &data.splits.train;
    let x_train = data::select_rows(ds.features(), train_rows);
    let labels_train: Vec<usize> = train_rows.iter().map(|&i| ds.labels()[i]).collect();
    let vfl_cfg = TrainConfig {
        seed: mix_seed(cfg.seed, &[0xf1]),
        ..cfg.train
    };
    let vfl = model::train(&x_train, &labels_train, ds.k(), &vfl_cfg)?;
    let agnostic_rows = data.agnostic_rows();

    let mut eps_grid = settings.epsilon_grid.clone();
    eps_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &d in &cfg.d_values {
        if d == 0 || d >= ds.d_t() {
            skipped.push(Skip {
                d,
                window_start: None,
                method: AttackMethod::Half,
                reason: format!("window width {d} out of range for d_t={}", ds.d_t()),
            });
            continue;
        }
        let requested: Vec<PpsCase> = if settings.cases.is_empty() {
            vec![PpsCase::for_shape(d, ds.k())]
        } else {
            settings.cases.clone()
        };
        let mut cases = Vec::new();
        for case in requested {
            if case_applies(case, d, ds.k()) {
                cases.push(case);
            } else {
                skipped.push(Skip {
                    d,
                    window_start: None,
                    method: AttackMethod::Half,
                    reason: format!("case {case} does not apply at d={d}, k={}", ds.k()),
                });
            }
        }
        if cases.is_empty() {
            continue;
        }
        let windows = windows_for(cfg, ds.d_t(), d)?;
        let window_rows: Vec<Vec<PiCsvRow>> = par::map_range(windows.len(), |wi| {
            let partition = &windows[wi];
            let pm = partition_params(&vfl, partition);
            let stats = PassiveStats::from_samples(&partition.passive_slice(&x_train));
            let attack_samples = data::select_rows(ds.features(), &agnostic_rows);
            let passive_samples = partition.passive_slice(&attack_samples);
            let mut out = Vec::new();
            for &case in &cases {
                let estimator = estimator_for_case(case);
                for &epsilon in &eps_grid {
                    let seed = mix_seed(
                        cfg.seed,
                        &[case as u64, d as u64, wi as u64, epsilon.to_bits()],
                    );
                    let outcome = match settings.randomize {
                        None => solve_case(case, &pm.w_pas, &stats, epsilon, seed),
                        Some(mode) => {
                            solve_case_randomized(case, &pm.w_pas, &stats, epsilon, mode, seed)
                        }
                    };
                    let mse_empirical = empirical_attack_mse(
                        &pm.w_pas,
                        &outcome.w_n,
                        &passive_samples,
                        estimator,
                    );
                    out.push(PiCsvRow {
                        dataset: label.clone(),
                        case,
                        d,
                        epsilon,
                        g_achieved: outcome.g_achieved,
                        mse_predicted: outcome.mse_predicted,
                        mse_empirical,
                        status: outcome.status,
                    });
                }
            }
            out
        });
        rows.extend(window_rows.into_iter().flatten());
    }
    Ok(PiGridOutput { rows, skipped })
}

pub fn pi_csv(rows: &[PiCsvRow]) -> String {
    let mut out =
        String::from("dataset,case,d,epsilon,g_achieved,mse_predicted,mse_empirical,solver_status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.dataset,
            r.case,
            r.d,
            r.epsilon,
            r.g_achieved,
            r.mse_predicted,
            r.mse_empirical,
            r.status
        ));
    }
    out
}

// ---------------------------------------------------------------------
// Covariance heat map and stand-in accuracy grids
// ---------------------------------------------------------------------

/// Centered feature covariance `E[(X - mu)(X - mu)^T]` over all rows.
pub fn covariance_matrix(ds: &Dataset) -> DMatrix<f64> {
    let n = ds.n_samples() as f64;
    let d = ds.d_t();
    let mu = DVector::from_fn(d, |j, _| ds.features().column(j).sum() / n);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for i in 0..ds.n_samples() {
        let c = row_vec(ds.features(), i) - &mu;
        cov += &c * c.transpose();
    }
    cov / n
}

/// Row-major CSV of a matrix, no header.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let cells: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmAccuracyRow {
    pub dataset: String,
    /// Active feature count `d_t - d`.
    pub n_active: usize,
    pub d: usize,
    /// Window-averaged stand-in test accuracy.
    pub accuracy: f64,
}

/// Stand-in model accuracy against the number of active features.
pub fn run_am_accuracy(
    cfg: &ExperimentConfig,
    data: &ProcessedData,
) -> Result<Vec<AmAccuracyRow>, HarnessError> {
    if cfg.d_values.is_empty() {
        return Err(HarnessError::Config("am accuracy grid needs d_values".into()));
    }
    let ds = &data.dataset;
    let label = cfg.source.label();
    let x_train = data::select_rows(ds.features(), &data.splits.train);
    let labels_train: Vec<usize> = data.splits.train.iter().map(|&i| ds.labels()[i]).collect();
    let x_test = data::select_rows(ds.features(), &data.splits.test);
    let labels_test: Vec<usize> = data.splits.test.iter().map(|&i| ds.labels()[i]).collect();

    let mut rows = Vec::new();
    for &d in &cfg.d_values {
        if d == 0 || d >= ds.d_t() {
            continue;
        }
        let windows = windows_for(cfg, ds.d_t(), d)?;
        let accs = par::map_range(windows.len(), |wi| {
            let partition = &windows[wi];
            let base = TrainConfig {
                seed: mix_seed(cfg.seed, &[d as u64, wi as u64, 0xacc]),
                ..cfg.train
            };
            let am = adversary::train_am(
                &partition.active_slice(&x_train),
                &labels_train,
                ds.k(),
                &base,
            )?;
            Ok::<f64, TrainError>(accuracy(
                &am,
                &partition.active_slice(&x_test),
                &labels_test,
            ))
        });
        let mut total = 0.0;
        let mut count = 0usize;
        for acc in accs {
            total += acc?;
            count += 1;
        }
        rows.push(AmAccuracyRow {
            dataset: label.clone(),
            n_active: ds.d_t() - d,
            d,
            accuracy: total / count as f64,
        });
    }
    Ok(rows)
}

pub fn am_accuracy_csv(rows: &[AmAccuracyRow]) -> String {
    let mut out = String::from("dataset,n_active,d,accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.dataset, r.n_active, r.d, r.accuracy
        ));
    }
    out
}

/// Apply a distortion scheme to a deployment: scores stay on the true
/// path, only the disclosed block changes.
pub fn apply_pps(
    deployment: &Deployment,
    stats: &PassiveStats,
    case: PpsCase,
    epsilon: f64,
    seed: u64,
) -> (Deployment, defense::PpsOutcome) {
    let outcome = solve_case(case, &deployment.pm.w_pas, stats, epsilon, seed);
    (
        Deployment::with_disclosed(deployment.pm.clone(), outcome.w_n.clone()),
        outcome,
    )
}
