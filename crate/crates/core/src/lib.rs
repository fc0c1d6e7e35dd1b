//! Batch active learning and active surveying on Gaussian random fields.
//!
//! A Gaussian random field (GRF) over a weighted graph uses the (regularized)
//! graph Laplacian as its precision matrix. Conditioning on a labeled set
//! yields the harmonic predictor and a posterior covariance that only depends
//! on *which* nodes were labeled, which makes query selection a set-function
//! optimization problem:
//!
//! * V-optimality minimizes the trace of the posterior covariance
//!   (classification risk),
//! * Σ-optimality minimizes its grand sum (survey risk).
//!
//! Both risk reductions are monotone submodular on GRFs, so a cost-aware
//! greedy selector is near-optimal. This crate provides the greedy engine with
//! rank-one covariance downdates, a spectral first-query solver for singular
//! Laplacians, MIG and random baselines, randomized property checks for the
//! underlying theory, and an experiment harness.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod graph;
pub mod grf;
pub mod harness;
mod linalg;
pub mod scalar;
pub mod selection;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type WeightedGraph = graph::WeightedGraph<f64>;
pub type Laplacian = graph::Laplacian<f64>;
pub type LaplacianMode = graph::LaplacianMode<f64>;
pub type ConditionReport = graph::ConditionReport<f64>;
pub type GrfModel = grf::GrfModel<f64>;
pub type LabeledSet = grf::LabeledSet<f64>;
pub type GrfPosterior = grf::GrfPosterior<f64>;
pub type Budget = selection::Budget<f64>;
pub type Covariance = selection::Covariance<f64>;
pub type SelectionState = selection::SelectionState<f64>;
pub type SelectionTrace = selection::SelectionTrace<f64>;
pub type SpectralDecomposition = selection::SpectralDecomposition<f64>;
