//! Parameter estimation for real multi-component chirp signals whose
//! components share one chirp rate:
//!
//! ```text
//! y(n) = sum_k [ A_k cos(alpha_k n + beta n^2) + B_k sin(alpha_k n + beta n^2) ] + X(n),  n = 1..N
//! ```
//!
//! Three estimators are provided (full least squares, sequential combined,
//! sequential plugin), together with their closed-form asymptotic
//! covariances and a seeded Monte-Carlo harness that compares the two.

pub mod asymptotics;
pub mod error;
pub mod estimators;
pub mod model;
pub mod montecarlo;
pub mod noise;
pub mod optimize;
pub mod varpro;

pub use error::{Error, Result};
pub use estimators::{
    estimate, estimate_lse, estimate_sequential_combined, estimate_sequential_plugin,
    EstimationResult, EstimatorOptions, InitBox, Inits, Method,
};
pub use model::{ChirpParams, Component, NonlinearParams, ParameterBounds, Signal};
pub use noise::NoiseModel;
