//! Loss-guided stability selection for sparse linear models.
//!
//! The pipeline draws subsamples of a training set, runs componentwise
//! gradient boosting on each one, aggregates the selected predictor sets into
//! selection frequencies and then picks a stable model either by a
//! validation-loss-guided grid search over candidate stable sets or by a
//! post-selection subset search over a small "meta-stable" candidate set.
//!
//! [`harness`] wraps everything into a reproducible benchmark runner on
//! synthetic data generated by [`datagen`].

pub mod boosting;
pub mod data;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod rng;
pub mod selection;

pub use boosting::{fit_boost, BoostConfig, BoostModel, Loss};
pub use data::{Dataset, Task};
pub use error::{Error, Result};
pub use estimators::{evaluate_loss, fit_reduced, FittedSubmodel};
pub use selection::{SelectionProfile, StableModel};
