//! Feature-inference attacks and parameter-distortion defenses for
//! vertical federated logistic regression.
//!
//! Two parties jointly score samples with a logistic-regression model:
//! the *active* party holds the labels and one slice of the features,
//! the *passive* party contributes the remaining feature slice. When the
//! active party knows the passive parameter block it can reconstruct the
//! passive features of a sample from the model's confidence score — or,
//! lacking the score, from an estimate produced by its own stand-in
//! classifier. This crate implements that reconstruction pipeline end to
//! end together with the defenses that distort the disclosed passive
//! parameters at a chosen interpretability cost.
//!
//! Module map:
//!
//! - [`data`] — CSV ingestion, categorical encoding, normalization,
//!   train/test/prediction splits, cyclic feature windows, synthetic
//!   generators.
//! - [`model`] — softmax regression training, confidence scores,
//!   log-ratio vectors, parameter partitioning.
//! - [`adversary`] — the active party's stand-in model (AM) and its
//!   score-refined variant (RAM).
//! - [`attack`] — the linear reconstruction system, least-squares and
//!   half* estimators, empirical and analytic reconstruction error.
//! - [`stiefel`] — first-order minimization under orthogonality
//!   constraints.
//! - [`defense`] — the four parameter-distortion schemes and the
//!   privacy/interpretability sweep.
//! - [`harness`] — experiment grids, seeding, CSV emission.
//!
//! Batch loops (per-sample attacks, window grids, Monte-Carlo
//! validation) run on rayon when the default `parallel` feature is
//! enabled and fall back to sequential iteration without it; outputs are
//! byte-identical either way.

pub mod adversary;
pub mod attack;
pub mod data;
pub mod defense;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod stiefel;

mod par;
