//! Local approximate Gaussian process regression.
//!
//! Each prediction location gets its own small GP, fitted on a sub-design
//! chosen greedily from the nearest neighbours of that location by the
//! reduction-in-variance (ALC) criterion. Local fits are independent, so a
//! global emulation is a parallel map over locations.
//!
//! - [`gp`]: correlation, exact fitting, prediction, likelihood, lengthscale MLE,
//!   and O(j²) extension of a fitted state.
//! - [`alc`]: serial and batched candidate scoring.
//! - [`local`]: the greedy design loop and the multi-stage local fit.
//! - [`emulate`]: deterministic fan-out over a worker pool.
//! - [`synth`]: borehole function, Latin hypercube designs, GP sample paths.
//! - [`bench`]: the borehole accuracy and timing benchmark.

pub mod alc;
pub mod bench;
pub mod emulate;
pub mod error;
pub mod gp;
pub mod knn;
pub mod linalg;
pub mod local;
pub mod synth;

pub use alc::{
    alc_scores_batch, alc_scores_batch_with, alc_scores_serial, fused_dual_reduce, select_next,
    AlcBackend, AlcScores, BatchConfig, BatchStats, CandidateSet,
};
pub use emulate::{emulate, fidelity_schedule, EmulationJob, EmulationResult, LocationFit};
pub use error::{LagpError, Result};
pub use gp::{
    build_gp, correlation, log_marginal_likelihood, mle_theta, predict, update_gp, Design,
    Hyperparameters, LocalState, MleFit, Prediction,
};
pub use knn::{nearest_neighbors, KdTree};
pub use local::{local_design, local_fit, LocalDesignParams, LocalFit, Method};
