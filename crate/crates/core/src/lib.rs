//! Itô-type càdlàg rough path lifts over sampled paths.
//!
//! Paths are piecewise-constant interpolants of time-stamped samples, so
//! hitting times, left-point integrals and suprema over partitions are all
//! finite combinatorial objects that can be computed exactly.
//!
//! The crate is organised bottom-up:
//!
//! - [`paths`]: the [`CadlagPath`] staircase, matrix-valued paths and CSV I/O.
//! - [`pvar`]: exact p-variation and two-parameter p/2-variation by dynamic
//!   programming, with an exhaustive-enumeration oracle.
//! - [`dyadic`]: stopping times at thresholds `2^-n`, the approximating
//!   staircase, its left-point integral and convergence-rate fitting.
//! - [`lift`]: Itô, Gaussian and perturbed lifts `(X, 𝕏)`, Chen's relation,
//!   quadratic covariation and Young integrals.
//! - [`simulate`]: seeded staircase generators and covariance diagnostics.
//! - [`extension`]: the variation clock `φ` and the reparametrised path `g`
//!   with `X = g ∘ φ`.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dyadic;
pub mod error;
pub mod extension;
pub mod lift;
pub mod par;
pub mod paths;
pub mod pvar;
pub mod simulate;

pub use dyadic::{DyadicSchedule, RateFit};
pub use error::{Error, Result};
pub use extension::TimeChange;
pub use lift::{BracketPath, LiftConfig, LiftMethod, RoughLift};

pub use paths::{CadlagPath, MatrixPath};
pub use pvar::{TwoParamTensor, VariationResult};
pub use simulate::{CovarianceKernel, GeneratorSpec, Model};
