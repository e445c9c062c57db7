//! Target densities and reparameterizable proposal families.

mod proposal;
mod target;

pub use proposal::{FamilyKind, FrozenProposal, ProposalFamily, Theta, DEFAULT_NU};
pub use target::{GaussianComponent, GradLogDensityFn, LogDensityFn, TargetModel};
