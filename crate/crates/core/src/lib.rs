//! Adaptive importance sampling with Langevin-type proposal adaptation.
//!
//! A proposal `q_θ` is adapted by stochastic gradient Langevin dynamics
//! (or its underdamped variant) on `R(θ) = E_q[(Π/q)²]`, and each iteration
//! produces a self-normalized importance sampling estimate with diagnostics.

// `!(x > 0.0)` is used on purpose so NaN is rejected; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adapt;
pub mod error;
pub mod grad;
pub mod harness;
pub mod matrix;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod rng;
pub mod snis;

pub use adapt::{Hyperparams, MomentumOrder, OptimizerState, Scheme};
pub use error::{OaisError, Result};
pub use grad::{EstimatorKind, GradEstimate};
pub use matrix::Matrix;
pub use model::{FamilyKind, FrozenProposal, ProposalFamily, TargetModel, Theta};
pub use snis::{Diagnostics, WeightedEnsemble};
