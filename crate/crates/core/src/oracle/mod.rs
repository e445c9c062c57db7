//! Ground truth by tensor-grid trapezoid quadrature (`d_x <= 2`).
//!
//! All integrands are evaluated in the log domain, shifted by their maximum
//! and accumulated with compensated summation in grid order, so results are
//! bit-reproducible.

mod probe;
mod quadrature;

pub use probe::{assumption_probe, assumption_probe_quadrature, c3_estimate, probe_grid, ProbeReport};
pub use quadrature::{
    midpoint_convexity_check, quad_expectation, quad_grad_r, quad_log_r, quad_log_z, quad_r, quad_rho,
    quad_z, QuadRule, QuadratureSpec, DEFAULT_NODES,
};
