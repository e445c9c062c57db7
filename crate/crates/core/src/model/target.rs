use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use super::proposal::{FamilyKind, ProposalFamily, Theta};
use crate::error::{OaisError, Result};
use crate::numeric::log_sum_exp;

pub type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradLogDensityFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Number of standard deviations a Gaussian extent reaches on each side.
const GAUSSIAN_EXTENT_SDS: f64 = 12.0;

/// An unnormalized target density `Π(x) = Z π(x)`.
///
/// Only `log Π` is required. The gradient is needed by the pathwise gradient
/// estimator, and the log-normalizer is known only for synthetic targets.
/// `extent` is a box that holds all but a negligible part of the mass; the
/// quadrature oracle uses it as its default integration domain.
#[derive(Clone)]
pub struct TargetModel {
    name: String,
    dim_x: usize,
    log_unnorm: LogDensityFn,
    grad_log_unnorm: Option<GradLogDensityFn>,
    log_normalizer: Option<f64>,
    extent: Option<Vec<(f64, f64)>>,
}

impl fmt::Debug for TargetModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetModel")
            .field("name", &self.name)
            .field("dim_x", &self.dim_x)
            .field("has_grad", &self.grad_log_unnorm.is_some())
            .field("log_normalizer", &self.log_normalizer)
            .field("extent", &self.extent)
            .finish()
    }
}

/// One weighted component of an unnormalized axis-aligned Gaussian mixture:
/// `weight * exp(-0.5 * sum(((x - mean) / std)^2))`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: Vec<f64>, std: Vec<f64>) -> Self {
        Self { weight, mean, std }
    }

    fn log_mass(&self) -> f64 {
        let d = self.mean.len() as f64;
        self.weight.ln() + 0.5 * d * (2.0 * PI).ln() + self.std.iter().map(|s| s.ln()).sum::<f64>()
    }
}

impl TargetModel {
    pub fn new(name: impl Into<String>, dim_x: usize, log_unnorm: LogDensityFn) -> Result<Self> {
        if dim_x == 0 {
            return Err(OaisError::InvalidArgument("target dimension must be >= 1".into()));
        }
        Ok(Self {
            name: name.into(),
            dim_x,
            log_unnorm,
            grad_log_unnorm: None,
            log_normalizer: None,
            extent: None,
        })
    }

    /// Convenience constructor from a plain closure.
    pub fn from_fn<F>(name: impl Into<String>, dim_x: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(name, dim_x, Arc::new(f))
    }

    pub fn with_grad(mut self, grad: GradLogDensityFn) -> Self {
        self.grad_log_unnorm = Some(grad);
        self
    }

    pub fn with_log_normalizer(mut self, log_z: f64) -> Self {
        self.log_normalizer = Some(log_z);
        self
    }

    /// Panics if `extent.len() != dim_x`.
    pub fn with_extent(mut self, extent: Vec<(f64, f64)>) -> Self {
        assert_eq!(extent.len(), self.dim_x, "extent must give one interval per dimension");
        self.extent = Some(extent);
        self
    }

    /// `Π(x) = exp(-0.5 * sum(((x - mean) / std)^2))`, so `Z = (2π)^{d/2} prod(std)`.
    pub fn gaussian(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        Self::mixture(vec![GaussianComponent::new(1.0, mean, std)])
            .map(|t| t.renamed("gaussian"))
    }

    /// Unnormalized mixture `sum_j w_j exp(-0.5 |(x - m_j) / s_j|^2)`. The weights
    /// need not sum to one.
    pub fn mixture(components: Vec<GaussianComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| OaisError::InvalidArgument("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(OaisError::InvalidArgument("component mean is empty".into()));
        }
        for c in &components {
            if c.mean.len() != dim || c.std.len() != dim {
                return Err(OaisError::dims("mixture component", dim, c.mean.len().max(c.std.len())));
            }
            if !(c.weight > 0.0) || c.std.iter().any(|s| !(*s > 0.0)) {
                return Err(OaisError::InvalidArgument(
                    "mixture weights and standard deviations must be positive".into(),
                ));
            }
        }
        let log_z = log_sum_exp(&components.iter().map(GaussianComponent::log_mass).collect::<Vec<_>>());
        let extent = (0..dim)
            .map(|i| {
                let lo = components
                    .iter()
                    .map(|c| c.mean[i] - GAUSSIAN_EXTENT_SDS * c.std[i])
                    .fold(f64::INFINITY, f64::min);
                let hi = components
                    .iter()
                    .map(|c| c.mean[i] + GAUSSIAN_EXTENT_SDS * c.std[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect();

        let comps = Arc::new(components);
        let log_f = {
            let comps = Arc::clone(&comps);
            Arc::new(move |x: &[f64]| mixture_log(&comps, x)) as LogDensityFn
        };
        let grad_f = {
            let comps = Arc::clone(&comps);
            Arc::new(move |x: &[f64], out: &mut [f64]| mixture_grad(&comps, x, out)) as GradLogDensityFn
        };
        let name = if comps.len() == 1 { "gaussian" } else { "mixture" };
        Ok(Self::new(name, dim, log_f)?
            .with_grad(grad_f)
            .with_log_normalizer(log_z)
            .with_extent(extent))
    }

    /// `Π = exp(log_scale) * q_θ`: a target that some member of the family
    /// matches exactly.
    pub fn from_proposal(family: &ProposalFamily, theta: &Theta, log_scale: f64) -> Result<Self> {
        let frozen = family.freeze(theta)?;
        let d = family.dim_x();
        let spread = match family.kind() {
            FamilyKind::StudentTLocScale { .. } => 200.0,
            _ => GAUSSIAN_EXTENT_SDS,
        };
        let extent = (0..d)
            .map(|i| {
                let row_norm = frozen.chol_row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                let m = frozen.mean()[i];
                (m - spread * row_norm, m + spread * row_norm)
            })
            .collect();
        let log_f = {
            let q = frozen.clone();
            Arc::new(move |x: &[f64]| q.log_density(x) + log_scale) as LogDensityFn
        };
        let grad_f = {
            let q = frozen;
            Arc::new(move |x: &[f64], out: &mut [f64]| q.grad_x_into(x, out)) as GradLogDensityFn
        };
        Ok(Self::new(format!("{}-member", family.kind().id()), d, log_f)?
            .with_grad(grad_f)
            .with_log_normalizer(log_scale)
            .with_extent(extent))
    }

    fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    #[inline]
    pub fn log_unnorm(&self, x: &[f64]) -> f64 {
        (self.log_unnorm)(x)
    }

    pub fn has_grad(&self) -> bool {
        self.grad_log_unnorm.is_some()
    }

    /// Writes `∇ log Π(x)` into `out`; returns `false` when the target has no gradient.
    #[inline]
    pub fn grad_log_unnorm_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        match &self.grad_log_unnorm {
            Some(g) => {
                g(x, out);
                true
            }
            None => false,
        }
    }

    pub fn grad_log_unnorm(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.dim_x];
        self.grad_log_unnorm_into(x, &mut out).then_some(out)
    }

    pub fn log_normalizer(&self) -> Option<f64> {
        self.log_normalizer
    }

    pub fn extent(&self) -> Option<&[(f64, f64)]> {
        self.extent.as_deref()
    }
}

fn component_log(c: &GaussianComponent, x: &[f64]) -> f64 {
    let q: f64 = x
        .iter()
        .zip(&c.mean)
        .zip(&c.std)
        .map(|((xi, m), s)| {
            let z = (xi - m) / s;
            z * z
        })
        .sum();
    c.weight.ln() - 0.5 * q
}

fn mixture_log(comps: &[GaussianComponent], x: &[f64]) -> f64 {
    if comps.len() == 1 {
        return component_log(&comps[0], x);
    }
    let terms: smallvec::SmallVec<[f64; 4]> = comps.iter().map(|c| component_log(c, x)).collect();
    log_sum_exp(&terms)
}

fn mixture_grad(comps: &[GaussianComponent], x: &[f64], out: &mut [f64]) {
    if let [c] = comps {
        for (i, o) in out.iter_mut().enumerate() {
            *o = -(x[i] - c.mean[i]) / (c.std[i] * c.std[i]);
        }
        return;
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    let terms: smallvec::SmallVec<[f64; 4]> = comps.iter().map(|c| component_log(c, x)).collect();
    let lse = log_sum_exp(&terms);
    for (c, t) in comps.iter().zip(&terms) {
        let r = (t - lse).exp();
        for (i, o) in out.iter_mut().enumerate() {
            *o -= r * (x[i] - c.mean[i]) / (c.std[i] * c.std[i]);
        }
    }
}
