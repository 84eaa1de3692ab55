//! Softmax regression: training, scoring and parameter partitioning.
//!
//! The trainer is shared with the adversary module: the refined
//! stand-in model adds score-matching and extra label terms to the same
//! cross-entropy objective, so both go through [`fit_softmax`].

use crate::data::Partition;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probabilities are clamped to `[PROB_FLOOR, 1]` before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("need at least two classes present in the training slice")]
    TooFewClasses,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Weights and bias of a softmax-regression model over `d_f` features.
#[derive(Debug, Clone, PartialEq)]
pub struct LrParams {
    /// k x d_f weight matrix.
    pub w: DMatrix<f64>,
    /// Length-k bias.
    pub b: DVector<f64>,
}

impl LrParams {
    pub fn zeros(k: usize, d_f: usize) -> Self {
        Self {
            w: DMatrix::zeros(k, d_f),
            b: DVector::zeros(k),
        }
    }

    pub fn k(&self) -> usize {
        self.w.nrows()
    }

    pub fn d_f(&self) -> usize {
        self.w.ncols()
    }

    pub fn logits(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w * x + &self.b
    }
}

/// Hyperparameters for first-order training with adaptive moments.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs of no validation improvement tolerated before stopping.
    pub patience: usize,
    /// Share of training rows held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            max_epochs: 2000,
            patience: 10,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Numerically safe softmax (max-subtraction).
pub fn softmax(z: &DVector<f64>) -> DVector<f64> {
    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e = z.map(|v| (v - zmax).exp());
    let sum = e.sum();
    e /= sum;
    e
}

/// Confidence scores `softmax(Wx + b)` for one sample.
pub fn confidence(params: &LrParams, x: &DVector<f64>) -> DVector<f64> {
    softmax(&params.logits(x))
}

/// Length k-1 vector of `ln(c_{m+1}/c_m)`; inputs are clamped away from
/// zero first.
pub fn log_ratio(c: &DVector<f64>) -> DVector<f64> {
    let k = c.len();
    DVector::from_fn(k - 1, |m, _| {
        let hi = c[m + 1].clamp(PROB_FLOOR, 1.0);
        let lo = c[m].clamp(PROB_FLOOR, 1.0);
        (hi / lo).ln()
    })
}

/// Class prediction: argmax score, ties broken toward the lowest index.
pub fn predict(params: &LrParams, x: &DVector<f64>) -> usize {
    let z = params.logits(x);
    let mut best = 0;
    for m in 1..z.len() {
        if z[m] > z[best] {
            best = m;
        }
    }
    best
}

/// Fraction of rows whose predicted class matches the label.
pub fn accuracy(params: &LrParams, features: &DMatrix<f64>, labels: &[usize]) -> f64 {
    assert_eq!(features.nrows(), labels.len());
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(i, &u)| {
            let x = DVector::from_row_slice(features.row(*i).transpose().as_slice());
            predict(params, &x) == u
        })
        .count();
    hits as f64 / labels.len().max(1) as f64
}

/// Jointly trained parameters split into the two parties' blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedModel {
    /// k x (d_t - d): columns of W at the active indices, ascending.
    pub w_act: DMatrix<f64>,
    /// k x d: columns of W at the passive indices, in window order.
    pub w_pas: DMatrix<f64>,
    pub b: DVector<f64>,
    pub partition: Partition,
}

impl PartitionedModel {
    pub fn k(&self) -> usize {
        self.b.len()
    }

    pub fn d(&self) -> usize {
        self.w_pas.ncols()
    }

    /// Scores computed through the split path; this is the only scoring
    /// path the deployment uses, so disclosing distorted parameters can
    /// never change it.
    pub fn logits(&self, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        &self.w_act * y + &self.w_pas * x + &self.b
    }

    pub fn confidence(&self, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        softmax(&self.logits(y, x))
    }

    /// Put the columns back at their original indices.
    pub fn reassemble_w(&self) -> DMatrix<f64> {
        let d_t = self.partition.d_t();
        let mut w = DMatrix::zeros(self.k(), d_t);
        for (slot, &j) in self.partition.active.iter().enumerate() {
            w.set_column(j, &self.w_act.column(slot));
        }
        for (slot, &j) in self.partition.passive.iter().enumerate() {
            w.set_column(j, &self.w_pas.column(slot));
        }
        w
    }
}

/// Route the columns of a jointly trained model by partition membership.
pub fn partition_params(params: &LrParams, partition: &Partition) -> PartitionedModel {
    assert_eq!(params.d_f(), partition.d_t(), "partition does not fit model");
    let pick = |idx: &[usize]| {
        DMatrix::from_fn(params.k(), idx.len(), |r, c| params.w[(r, idx[c])])
    };
    PartitionedModel {
        w_act: pick(&partition.active),
        w_pas: pick(&partition.passive),
        b: params.b.clone(),
        partition: partition.clone(),
    }
}

/// Extra data terms for the refined stand-in model: feature rows whose
/// delivered score and/or class label is known.
#[derive(Debug, Clone, Default)]
pub(crate) struct ScoredBatch {
    /// n_p x d_f rows.
    pub y: DMatrix<f64>,
    pub scores: Vec<Option<DVector<f64>>>,
    pub labels: Vec<Option<usize>>,
}

impl ScoredBatch {
    pub fn len(&self) -> usize {
        self.scores.len()
    }
}

pub(crate) struct FitProblem<'a> {
    pub x: &'a DMatrix<f64>,
    pub labels: &'a [usize],
    pub k: usize,
    pub observed: Option<&'a ScoredBatch>,
    pub alpha: f64,
    pub beta: f64,
}

impl FitProblem<'_> {
    fn n_p(&self) -> usize {
        self.observed.map_or(0, ScoredBatch::len)
    }
}

fn row_vec(m: &DMatrix<f64>, i: usize) -> DVector<f64> {
    DVector::from_row_slice(m.row(i).transpose().as_slice())
}

/// Objective and gradient over the rows named by `rows` plus all
/// observed terms. The loss is
/// `(1/(n+n_p)) (sum_t H + beta sum_p H) + (alpha/n_p) sum_p S`
/// with `S(c, c_ref) = sum_m ln^2(c_m / c_ref_m)` and no regularizer.
pub(crate) fn objective_and_grad(
    problem: &FitProblem,
    params: &LrParams,
    rows: &[usize],
) -> (f64, DMatrix<f64>, DVector<f64>) {
    let k = problem.k;
    let d = params.d_f();
    let n_p = problem.n_p();
    let denom = (rows.len() + n_p) as f64;
    let mut loss = 0.0;
    let mut gw = DMatrix::<f64>::zeros(k, d);
    let mut gb = DVector::<f64>::zeros(k);

    fn add_ce(
        params: &LrParams,
        x: &DVector<f64>,
        u: usize,
        weight: f64,
        loss: &mut f64,
        gw: &mut DMatrix<f64>,
        gb: &mut DVector<f64>,
    ) {
        let c = softmax(&params.logits(x));
        *loss += -weight * c[u].ln();
        let mut gz = c;
        gz[u] -= 1.0;
        gz *= weight;
        *gw += &gz * x.transpose();
        *gb += gz;
    }

    for &i in rows {
        add_ce(
            params,
            &row_vec(problem.x, i),
            problem.labels[i],
            1.0 / denom,
            &mut loss,
            &mut gw,
            &mut gb,
        );
    }

    if let Some(obs) = problem.observed {
        for j in 0..obs.len() {
            let y = row_vec(&obs.y, j);
            if problem.beta != 0.0 {
                if let Some(u) = obs.labels[j] {
                    add_ce(
                        params,
                        &y,
                        u,
                        problem.beta / denom,
                        &mut loss,
                        &mut gw,
                        &mut gb,
                    );
                }
            }
            if problem.alpha != 0.0 {
                if let Some(c_ref) = &obs.scores[j] {
                    let weight = problem.alpha / n_p as f64;
                    let f = softmax(&params.logits(&y));
                    // r_m = ln(f_m / c_m), both clamped away from zero
                    let r = DVector::from_fn(k, |m, _| {
                        (f[m].clamp(PROB_FLOOR, 1.0) / c_ref[m].clamp(PROB_FLOOR, 1.0)).ln()
                    });
                    loss += weight * r.iter().map(|v| v * v).sum::<f64>();
                    let rsum = r.sum();
                    let gz = DVector::from_fn(k, |m, _| 2.0 * weight * (r[m] - f[m] * rsum));
                    gw += &gz * y.transpose();
                    gb += gz;
                }
            }
        }
    }

    (loss, gw, gb)
}

fn adam_step(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: usize,
    lr: f64,
) {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let bc1 = 1.0 - BETA1.powi(t as i32);
    let bc2 = 1.0 - BETA2.powi(t as i32);
    for i in 0..param.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        param[i] -= lr * mh / (vh.sqrt() + EPS);
    }
}

/// Full-batch first-order fit with adaptive moments and early stopping
/// on a held-out validation slice of the training rows. Returns the
/// parameters with the best validation loss seen.
pub(crate) fn fit_softmax(problem: &FitProblem, cfg: &TrainConfig) -> Result<LrParams, TrainError> {
    assert!(
        cfg.learning_rate > 0.0 && cfg.max_epochs >= 1 && cfg.patience >= 1,
        "training hyperparameters must be positive"
    );
    assert!(
        (0.0..1.0).contains(&cfg.validation_fraction),
        "validation fraction must lie in [0, 1); zero disables early stopping"
    );
    let n = problem.x.nrows();
    if n != problem.labels.len() {
        return Err(TrainError::Shape(format!(
            "{n} feature rows vs {} labels",
            problem.labels.len()
        )));
    }
    if let Some(obs) = problem.observed {
        if obs.len() > 0 && obs.y.ncols() != problem.x.ncols() {
            return Err(TrainError::Shape(
                "observed rows have a different feature count".into(),
            ));
        }
    }
    {
        let mut seen = vec![false; problem.k];
        for &u in problem.labels {
            seen[u] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(TrainError::TooFewClasses);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    order.shuffle(&mut rng);
    let n_val = (n as f64 * cfg.validation_fraction).floor() as usize;
    let (val_rows, train_rows) = order.split_at(n_val);
    let early_stopping = !val_rows.is_empty();

    let d = problem.x.ncols();
    let mut params = LrParams::zeros(problem.k, d);
    let mut mw = vec![0.0; problem.k * d];
    let mut vw = vec![0.0; problem.k * d];
    let mut mb = vec![0.0; problem.k];
    let mut vb = vec![0.0; problem.k];

    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut wait = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let (loss, gw, gb) = objective_and_grad(problem, &params, train_rows);
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        adam_step(
            params.w.as_mut_slice(),
            gw.as_slice(),
            &mut mw,
            &mut vw,
            epoch,
            cfg.learning_rate,
        );
        adam_step(
            params.b.as_mut_slice(),
            gb.as_slice(),
            &mut mb,
            &mut vb,
            epoch,
            cfg.learning_rate,
        );

        if early_stopping {
            let (val, _, _) = objective_and_grad(problem, &params, val_rows);
            if !val.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            if val < best_val {
                best_val = val;
                best = params.clone();
                wait = 0;
            } else {
                wait += 1;
                if wait >= cfg.patience {
                    return Ok(best);
                }
            }
        }
    }

    Ok(if early_stopping { best } else { params })
}

/// Train softmax regression on `features`/`labels` with `k` classes.
pub fn train(
    features: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    cfg: &TrainConfig,
) -> Result<LrParams, TrainError> {
    fit_softmax(
        &FitProblem {
            x: features,
            labels,
            k,
            observed: None,
            alpha: 0.0,
            beta: 0.0,
        },
        cfg,
    )
}

/// On-disk model format: weights row major plus the dataset column
/// indices the model was trained on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub k: usize,
    pub d_f: usize,
    /// Row-major k x d_f weights.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub feature_indices: Vec<usize>,
}

impl ModelFile {
    pub fn pack(params: &LrParams, feature_indices: Vec<usize>) -> Self {
        let mut w = Vec::with_capacity(params.k() * params.d_f());
        for r in 0..params.k() {
            for c in 0..params.d_f() {
                w.push(params.w[(r, c)]);
            }
        }
        Self {
            k: params.k(),
            d_f: params.d_f(),
            w,
            b: params.b.iter().cloned().collect(),
            feature_indices,
        }
    }

    pub fn unpack(&self) -> (LrParams, Vec<usize>) {
        let params = LrParams {
            w: DMatrix::from_row_slice(self.k, self.d_f, &self.w),
            b: DVector::from_row_slice(&self.b),
        };
        (params, self.feature_indices.clone())
    }
}
