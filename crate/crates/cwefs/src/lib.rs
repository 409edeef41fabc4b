//! Channel-wise multi-label feature selection.
//!
//! The toolkit factorizes every channel's feature block and the label matrix
//! over one shared non-negative latent space, balancing channels with
//! simplex weights learned in closed form and tying the latent space to the
//! data manifold through feature-space and label-space neighborhood graphs.
//! An l2,1 penalty makes coefficient rows sparse, so row norms rank
//! features. Selected feature subsets are scored downstream by an ML-KNN
//! classifier under six multi-label metrics, over seeded repeated trials.
//!
//! Modules:
//! - [`dataset`]: multi-channel data model, manifest/CSV ingestion, and
//!   synthetic data with planted relevant features.
//! - [`graph`]: heat-kernel q-nearest-neighbor affinity graphs and their
//!   Laplacians.
//! - [`solver`]: the alternating multiplicative optimizer and feature
//!   ranking.
//! - [`mlknn`]: the evaluation classifier.
//! - [`metrics`]: six multi-label metrics and the Friedman statistic.
//! - [`pipeline`]: configuration, multi-trial experiment orchestration, and
//!   report files.
//!
//! Numeric code is generic over [`float::Float`] (`f32` or `f64`); the
//! aliases below pin the common types to a concrete precision. Everything
//! seeded is deterministic: a fixed seed reproduces factor matrices,
//! rankings, and report files bit for bit, independent of thread count.

pub mod dataset;
pub mod float;
pub mod graph;
pub mod metrics;
pub mod mlknn;
pub mod pipeline;
pub mod solver;

pub use float::Float;

pub type Dataset32 = dataset::MultiChannelDataset<f32>;
pub type Dataset64 = dataset::MultiChannelDataset<f64>;
pub type GraphSet32 = graph::GraphSet<f32>;
pub type GraphSet64 = graph::GraphSet<f64>;
pub type HyperParams32 = solver::HyperParams<f32>;
pub type HyperParams64 = solver::HyperParams<f64>;
pub type SolverState32 = solver::SolverState<f32>;
pub type SolverState64 = solver::SolverState<f64>;
pub type FeatureRanking32 = solver::FeatureRanking<f32>;
pub type FeatureRanking64 = solver::FeatureRanking<f64>;
pub type MlknnModel32 = mlknn::MlknnModel<f32>;
pub type MlknnModel64 = mlknn::MlknnModel<f64>;
pub type ExperimentConfig32 = pipeline::ExperimentConfig<f32>;
pub type ExperimentConfig64 = pipeline::ExperimentConfig<f64>;
