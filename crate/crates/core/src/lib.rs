//! Supervised kernel learning with automatic-relevance-determination (ARD)
//! kernels approximated by random Fourier features.
//!
//! A model is `f(x) = βᵀ z(λ ∘ x)` where `z` is a frozen random Fourier
//! feature map for the unit-relevance Gaussian kernel and `λ` holds one
//! relevance per input feature. Both `β` and `λ` are learned jointly by block
//! stochastic gradient descent with moment estimation; `|λ| / max|λ|` is
//! reported as feature importance.
//!
//! Module map:
//! - [`spectral`]: frequency sampling, the feature map, exact and approximate
//!   ARD kernels, and a dense kernel ridge regression oracle.
//! - [`objective`]: losses, the regularized objective, block gradients and the
//!   proximal operator of the ridge penalty.
//! - [`optimizer`]: the training loop with early stopping.
//! - [`model`]: the user-facing estimator and its binary file format.
//! - [`data`]: CSV ingestion, splitting, standardization, synthetic data.
//! - [`metrics`]: MSE, accuracy, F1 and AUC.
//! - [`cli`]: command implementations behind the `rffnet` binary.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
