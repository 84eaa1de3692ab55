//! Synthetic tabular data with controllable feature dependence.
//!
//! Features are drawn through a Gaussian copula — correlated normals
//! pushed through their CDF — so marginals stay on [0,1] while the
//! dependence strength is set by a single correlation parameter (or a
//! full matrix). Labels come from a seeded random softmax-regression
//! teacher over all features, optionally flipped with a small noise
//! rate.

use super::{DataError, Dataset};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::erf::erfc;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    /// Every off-diagonal correlation equals `rho`.
    Equicorrelated { rho: f64 },
    /// Full correlation matrix, row major.
    Matrix { rows: Vec<Vec<f64>> },
}

impl Default for Correlation {
    fn default() -> Self {
        Correlation::Equicorrelated { rho: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    Uniform,
    Beta { alpha: f64, beta: f64 },
}

impl Marginal {
    fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::Uniform => u,
            Marginal::Beta { alpha, beta } => Beta::new(*alpha, *beta)
                .expect("validated at spec check")
                .inverse_cdf(u),
        }
    }

    fn mean(&self) -> f64 {
        match self {
            Marginal::Uniform => 0.5,
            Marginal::Beta { alpha, beta } => alpha / (alpha + beta),
        }
    }
}

/// JSON-loadable description of a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    #[serde(default = "default_features")]
    pub n_features: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub correlation: Correlation,
    /// One entry per feature; empty means uniform everywhere.
    #[serde(default)]
    pub marginals: Vec<Marginal>,
    #[serde(default = "default_teacher_scale")]
    pub teacher_weight_scale: f64,
    /// Probability of replacing a teacher label with a random other class.
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_features() -> usize {
    8
}

fn default_classes() -> usize {
    2
}

fn default_teacher_scale() -> f64 {
    3.0
}

impl SyntheticSpec {
    /// Equicorrelated uniform features with the default teacher.
    pub fn equicorrelated(n_samples: usize, n_features: usize, rho: f64, seed: u64) -> Self {
        Self {
            n_samples,
            n_features,
            classes: 2,
            correlation: Correlation::Equicorrelated { rho },
            marginals: Vec::new(),
            teacher_weight_scale: default_teacher_scale(),
            label_noise: 0.0,
            seed,
        }
    }
}

fn correlation_matrix(spec: &SyntheticSpec) -> Result<DMatrix<f64>, DataError> {
    let d = spec.n_features;
    match &spec.correlation {
        Correlation::Equicorrelated { rho } => {
            let lo = if d > 1 { -1.0 / (d as f64 - 1.0) } else { -1.0 };
            if !(*rho > lo && *rho < 1.0) && *rho != 0.0 {
                return Err(DataError::BadSyntheticSpec(format!(
                    "equicorrelation rho={rho} outside ({lo}, 1) for d={d}"
                )));
            }
            Ok(DMatrix::from_fn(
                d,
                d,
                |i, j| if i == j { 1.0 } else { *rho },
            ))
        }
        Correlation::Matrix { rows } => {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(DataError::BadSyntheticSpec(format!(
                    "correlation matrix must be {d}x{d}"
                )));
            }
            let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
            Ok(DMatrix::from_row_slice(d, d, &flat))
        }
    }
}

fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Generate the dataset described by `spec`. Deterministic in the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, DataError> {
    let d = spec.n_features;
    let k = spec.classes;
    if spec.n_samples == 0 || d == 0 {
        return Err(DataError::BadSyntheticSpec(
            "n_samples and n_features must be positive".into(),
        ));
    }
    if k < 2 {
        return Err(DataError::BadSyntheticSpec("need at least 2 classes".into()));
    }
    if !(0.0..1.0).contains(&spec.label_noise) {
        return Err(DataError::BadSyntheticSpec(
            "label_noise must lie in [0,1)".into(),
        ));
    }
    let marginals: Vec<Marginal> = if spec.marginals.is_empty() {
        vec![Marginal::Uniform; d]
    } else if spec.marginals.len() == d {
        spec.marginals.clone()
    } else {
        return Err(DataError::BadSyntheticSpec(format!(
            "expected {d} marginals, got {}",
            spec.marginals.len()
        )));
    };
    for m in &marginals {
        if let Marginal::Beta { alpha, beta } = m {
            if !(*alpha > 0.0 && *beta > 0.0) {
                return Err(DataError::BadSyntheticSpec(
                    "beta marginal needs positive shapes".into(),
                ));
            }
        }
    }
    let sigma = correlation_matrix(spec)?;
    let chol = sigma.cholesky().ok_or_else(|| {
        DataError::BadSyntheticSpec("correlation matrix is not positive definite".into())
    })?;
    let l = chol.l();

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    // Teacher drawn before the samples so the decision rule is fixed by
    // the seed alone.
    let w_teacher = DMatrix::from_fn(k, d, |_, _| {
        spec.teacher_weight_scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    let means = DVector::from_iterator(d, marginals.iter().map(|m| m.mean()));
    let b_teacher = -&w_teacher * &means;

    let mut features = DMatrix::<f64>::zeros(spec.n_samples, d);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let eta = DVector::from_fn(d, |_, _| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let z = &l * eta;
        let x = DVector::from_fn(d, |j, _| marginals[j].quantile(standard_normal_cdf(z[j])));
        let logits = &w_teacher * &x + &b_teacher;
        let mut label = 0;
        for m in 1..k {
            if logits[m] > logits[label] {
                label = m;
            }
        }
        if spec.label_noise > 0.0 && rng.random::<f64>() < spec.label_noise {
            label = (label + 1 + rng.random_range(0..k - 1)) % k;
        }
        features.row_mut(i).copy_from_slice(x.as_slice());
        labels.push(label);
    }

    for class in 0..k {
        if !labels.contains(&class) {
            return Err(DataError::BadSyntheticSpec(format!(
                "class {class} absent from generated labels; try another seed"
            )));
        }
    }

    let names = (0..d).map(|j| format!("f{j}")).collect();
    Ok(Dataset::new(features, labels, names, k))
}
