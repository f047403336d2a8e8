//! Doubly stochastic neighbor embedding on spheres.
//!
//! Stochastic neighbor embedding variants normalize an input similarity
//! matrix matrix-wise, which lets high-degree nodes soak up probability
//! mass and collapse at the center of the layout. This crate instead
//! projects the similarities onto the doubly stochastic polytope — every
//! row and column summing to 1 — before running the embedding, and
//! optionally constrains the embedding itself to a centered sphere, where
//! doubly stochastic targets are naturally at home.
//!
//! The pieces:
//!
//! - [`matrix`]: sparse symmetric and rectangular nonnegative matrices,
//!   plus the certified doubly stochastic wrapper.
//! - [`normalize`]: Sinkhorn-Knopp balancing and the closed-form two-step
//!   random-walk construction.
//! - [`sne`]: Gaussian and Cauchy kernels, the KL objective and gradients,
//!   sphere projection, and the momentum optimizer.
//! - [`diagnostics`]: per-row distance-sum bounds, the equal-norm
//!   implication check, sphericity and crowding metrics.
//! - [`ingest`]: loaders (edge list, bipartite triplets, vector CSV), kNN
//!   affinity construction with perplexity calibration, exporters, and the
//!   SVG snapshot renderer.
//! - [`pipeline`]: the end-to-end driver used by the `dosnes` binary and
//!   the synthetic uniform-vs-doubly-stochastic comparison experiment.

pub mod diagnostics;
pub mod ingest;
pub mod matrix;
pub mod normalize;
pub mod pipeline;
pub mod sne;

pub use matrix::{MatrixError, RectNonnegMatrix, SparseSymMatrix, StochasticAffinity};
pub use normalize::{
    check_doubly_stochastic, random_walk_ds, sinkhorn_knopp, NormalizationReport, NormalizeError,
    SinkhornConfig,
};
pub use sne::{
    compute_q, gradient, initialize, kl_objective, project_to_sphere, run, Embedding, KernelKind,
    OptimizerConfig, RunTrace, SneError, TargetDistribution,
};
