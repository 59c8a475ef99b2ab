//! Neural networks whose size is a trainable quantity.
//!
//! Two growing networks are provided next to a static baseline:
//!
//! - [`models::AuxWeightNet`] reads its hidden-layer size from a prepended
//!   weight `N` and gates neuron `i` with the smooth step `ψ(i - N)`.
//! - [`models::ControllerMaskNet`] keeps a fixed maximum-size MLP and masks
//!   its hidden neurons according to a trainable controller value `C1`.
//!
//! Both are trained by the same gradient step that updates their weights,
//! using the reverse-mode engine in [`autodiff`]. The [`harness`] module runs
//! paired growing/static trials, parameter sweeps, and the derived metrics.

// Range checks are written as `!(x > lo)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod growth;
pub mod harness;
pub mod models;
pub mod optim;
pub mod seeding;
pub mod tasks;
pub mod tensor;

pub use autodiff::{grad_check, GradCheckReport, Graph, Var};
pub use error::{Error, Result};
pub use models::{AuxWeightNet, ControllerMaskNet, Model, Network, StaticMlp};
pub use tensor::Tensor;

/// Version string recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
