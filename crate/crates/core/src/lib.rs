//! LASSO-penalized hidden Markov models for binary time series with
//! covariates.
//!
//! The model is a Markov-switching logistic regression: a latent chain
//! selects one of N state-specific intercepts while the covariate slopes are
//! shared. Slopes are estimated by maximizing a smoothed-L1 penalized
//! likelihood along a tuning-parameter path, selected by AIC/BIC, and
//! optionally refitted without penalty on the selected support.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common case.

pub mod data;
pub mod error;
pub mod fit;
pub mod inference;
pub mod model;
pub mod optim;
pub mod penalty;
pub mod scalar;
pub mod selection;
pub mod simulation;
pub mod tables;

pub use error::{Error, Result};
pub use fit::{fit, relaxed_refit, FitConfig, FitResult, GradientMode};
pub use model::{ModelSpec, Params, Sequence, SequenceSet};
pub use penalty::{PenaltyConfig, PenaltyMode};
pub use scalar::Scalar;
pub use selection::{LambdaGrid, PathResult, Scheme};

pub type Params64 = Params<f64>;
pub type Sequence64 = Sequence<f64>;
pub type SequenceSet64 = SequenceSet<f64>;
pub type PenaltyConfig64 = PenaltyConfig<f64>;
pub type FitResult64 = FitResult<f64>;
pub type PathResult64 = PathResult<f64>;
pub type LambdaGrid64 = LambdaGrid<f64>;

pub type Params32 = Params<f32>;
pub type SequenceSet32 = SequenceSet<f32>;
