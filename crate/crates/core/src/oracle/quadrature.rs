use crate::error::{OaisError, Result};
use crate::model::{ProposalFamily, TargetModel, Theta};
use crate::numeric::KahanSum;

pub const DEFAULT_NODES: usize = 2001;

/// Integrand values below `max * NEGLIGIBLE` at the boundary are treated as zero.
const LOG_NEGLIGIBLE: f64 = -27.631_021_115_928_547; // ln(1e-12)

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadRule {
    Trapezoid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub bounds: Vec<(f64, f64)>,
    pub nodes_per_dim: usize,
    pub rule: QuadRule,
}

impl QuadratureSpec {
    pub fn new(bounds: Vec<(f64, f64)>, nodes_per_dim: usize) -> Result<Self> {
        if bounds.is_empty() {
            return Err(OaisError::InvalidArgument("quadrature needs at least one interval".into()));
        }
        if nodes_per_dim < 3 {
            return Err(OaisError::InvalidArgument("quadrature needs at least 3 nodes per dimension".into()));
        }
        if bounds.iter().any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(OaisError::InvalidArgument(format!("bad quadrature bounds {bounds:?}")));
        }
        Ok(Self {
            bounds,
            nodes_per_dim,
            rule: QuadRule::Trapezoid,
        })
    }

    /// Bounds taken from the target's extent, default node count.
    pub fn for_target(target: &TargetModel) -> Result<Self> {
        let extent = target.extent().ok_or_else(|| {
            OaisError::InvalidArgument(format!(
                "target `{}` has no extent; give quadrature bounds explicitly",
                target.name()
            ))
        })?;
        Self::new(extent.to_vec(), DEFAULT_NODES)
    }

    pub fn with_nodes(mut self, nodes_per_dim: usize) -> Self {
        self.nodes_per_dim = nodes_per_dim.max(3);
        self
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn axis(&self, k: usize) -> (Vec<f64>, f64) {
        let (a, b) = self.bounds[k];
        let n = self.nodes_per_dim;
        let h = (b - a) / (n - 1) as f64;
        ((0..n).map(|i| a + h * i as f64).collect(), h)
    }
}

pub(crate) struct LogIntegral {
    pub log_value: f64,
    /// Largest boundary value relative to the interior maximum, in log space.
    pub boundary_log_ratio: f64,
    /// Some boundary node carries non-negligible mass and does not decay outward.
    pub rising: bool,
}

fn check_dim(spec: &QuadratureSpec, dim: usize) -> Result<()> {
    if dim > 2 {
        return Err(OaisError::UnsupportedDimension(dim));
    }
    if spec.dim() != dim {
        return Err(OaisError::dims("quadrature bounds", dim, spec.dim()));
    }
    Ok(())
}

#[inline]
fn trap_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i == n - 1 {
        0.5
    } else {
        1.0
    }
}

/// Log-values of `f` on the grid, row-major in (axis 0, axis 1).
fn grid_values<F: Fn(&[f64]) -> f64>(spec: &QuadratureSpec, log_f: F) -> (Vec<f64>, f64) {
    let n = spec.nodes_per_dim;
    match spec.dim() {
        1 => {
            let (xs, h) = spec.axis(0);
            (xs.iter().map(|&x| log_f(&[x])).collect(), h)
        }
        _ => {
            let (xs, hx) = spec.axis(0);
            let (ys, hy) = spec.axis(1);
            let mut out = Vec::with_capacity(n * n);
            for &x in &xs {
                for &y in &ys {
                    out.push(log_f(&[x, y]));
                }
            }
            (out, hx * hy)
        }
    }
}

/// (boundary index, inward neighbour index) pairs for the grid edges.
fn boundary_pairs(dim: usize, n: usize) -> Vec<(usize, usize)> {
    if dim == 1 {
        return vec![(0, 1), (n - 1, n - 2)];
    }
    let idx = |i: usize, j: usize| i * n + j;
    let mut pairs = Vec::with_capacity(4 * n);
    for t in 0..n {
        pairs.push((idx(0, t), idx(1, t)));
        pairs.push((idx(n - 1, t), idx(n - 2, t)));
        pairs.push((idx(t, 0), idx(t, 1)));
        pairs.push((idx(t, n - 1), idx(t, n - 2)));
    }
    pairs
}

pub(crate) fn integrate_log<F: Fn(&[f64]) -> f64>(
    spec: &QuadratureSpec,
    log_f: F,
) -> Result<LogIntegral> {
    let n = spec.nodes_per_dim;
    let (vals, cell) = grid_values(spec, log_f);
    if let Some(i) = vals.iter().position(|v| v.is_nan()) {
        return Err(OaisError::NonFiniteValue { what: "quadrature integrand", index: i });
    }
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(LogIntegral {
            log_value: f64::NEG_INFINITY,
            boundary_log_ratio: f64::NEG_INFINITY,
            rising: false,
        });
    }
    if max == f64::INFINITY {
        return Ok(LogIntegral {
            log_value: f64::INFINITY,
            boundary_log_ratio: 0.0,
            rising: true,
        });
    }
    let mut acc = KahanSum::new();
    match spec.dim() {
        1 => {
            for (i, v) in vals.iter().enumerate() {
                acc.add(trap_weight(i, n) * (v - max).exp());
            }
        }
        _ => {
            for i in 0..n {
                let wi = trap_weight(i, n);
                for j in 0..n {
                    acc.add(wi * trap_weight(j, n) * (vals[i * n + j] - max).exp());
                }
            }
        }
    }
    let mut boundary_log_ratio = f64::NEG_INFINITY;
    let mut rising = false;
    for (b, inner) in boundary_pairs(spec.dim(), n) {
        let rel = vals[b] - max;
        boundary_log_ratio = boundary_log_ratio.max(rel);
        // flat to within rounding counts as not decaying
        let slack = 1e-9 * (1.0 + vals[b].abs());
        if vals[b].is_finite() && rel > LOG_NEGLIGIBLE && vals[b] >= vals[inner] - slack {
            rising = true;
        }
    }
    Ok(LogIntegral {
        log_value: max + (acc.value() * cell).ln(),
        boundary_log_ratio,
        rising,
    })
}

fn warn_boundary(what: &str, res: &LogIntegral, level: log::Level) {
    if res.boundary_log_ratio > LOG_NEGLIGIBLE {
        log::log!(
            level,
            "{what}: integrand at the quadrature boundary is {:.3e} of its maximum; widen the bounds",
            res.boundary_log_ratio.exp()
        );
    }
}

/// `log ∫ Π(x) dx`.
pub fn quad_log_z(target: &TargetModel, spec: &QuadratureSpec) -> Result<f64> {
    check_dim(spec, target.dim_x())?;
    let res = integrate_log(spec, |x| target.log_unnorm(x))?;
    warn_boundary("Z", &res, log::Level::Warn);
    Ok(res.log_value)
}

/// `Z_π = ∫ Π(x) dx`.
pub fn quad_z(target: &TargetModel, spec: &QuadratureSpec) -> Result<f64> {
    quad_log_z(target, spec).map(f64::exp)
}

/// `log R(θ) = log ∫ Π²(x) / q_θ(x) dx`. A boundary that does not decay is
/// reported as [`OaisError::HeavyTail`].
pub fn quad_log_r(
    target: &TargetModel,
    proposal: &ProposalFamily,
    theta: &Theta,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_dim(spec, target.dim_x())?;
    if proposal.dim_x() != target.dim_x() {
        return Err(OaisError::dims("proposal dimension", target.dim_x(), proposal.dim_x()));
    }
    let q = proposal.freeze(theta)?;
    let res = integrate_log(spec, |x| 2.0 * target.log_unnorm(x) - q.log_density(x))?;
    if res.rising {
        return Err(OaisError::HeavyTail {
            detail: format!(
                "Π²/q_θ does not decay at the boundary (theta = {:?}, boundary/max = {:.3e})",
                theta.as_slice(),
                res.boundary_log_ratio.exp()
            ),
        });
    }
    // evaluated every iteration when tracking; too chatty for warn
    warn_boundary("R", &res, log::Level::Debug);
    Ok(res.log_value)
}

pub fn quad_r(
    target: &TargetModel,
    proposal: &ProposalFamily,
    theta: &Theta,
    spec: &QuadratureSpec,
) -> Result<f64> {
    quad_log_r(target, proposal, theta, spec).map(f64::exp)
}

/// `ρ(θ) = R(θ) / Z²`.
pub fn quad_rho(
    target: &TargetModel,
    proposal: &ProposalFamily,
    theta: &Theta,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let log_r = quad_log_r(target, proposal, theta, spec)?;
    let log_z = quad_log_z(target, spec)?;
    Ok((log_r - 2.0 * log_z).exp())
}

/// Central differences of [`quad_r`]; default step `1e-4 (1 + |θ_j|)`.
pub fn quad_grad_r(
    target: &TargetModel,
    proposal: &ProposalFamily,
    theta: &Theta,
    spec: &QuadratureSpec,
    step: Option<f64>,
) -> Result<Vec<f64>> {
    let base = theta.as_slice();
    let mut out = Vec::with_capacity(base.len());
    for j in 0..base.len() {
        let h = step.unwrap_or(1e-4 * (1.0 + base[j].abs()));
        let mut plus = base.to_vec();
        let mut minus = base.to_vec();
        plus[j] += h;
        minus[j] -= h;
        let rp = quad_r(target, proposal, &Theta::new(plus)?, spec)?;
        let rm = quad_r(target, proposal, &Theta::new(minus)?, spec)?;
        out.push((rp - rm) / (2.0 * h));
    }
    Ok(out)
}

/// `(φ, π) = ∫ φ Π / ∫ Π`.
pub fn quad_expectation<F>(target: &TargetModel, spec: &QuadratureSpec, phi: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    check_dim(spec, target.dim_x())?;
    let n = spec.nodes_per_dim;
    let (logs, _) = grid_values(spec, |x| target.log_unnorm(x));
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(OaisError::InvalidArgument("target density vanishes on the quadrature grid".into()));
    }
    let (phis, _) = grid_values(spec, &phi);
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for (k, (l, p)) in logs.iter().zip(&phis).enumerate() {
        let w = match spec.dim() {
            1 => trap_weight(k, n),
            _ => trap_weight(k / n, n) * trap_weight(k % n, n),
        };
        let m = w * (l - max).exp();
        if m > 0.0 {
            num.add(m * p);
        }
        den.add(m);
    }
    Ok(num.value() / den.value())
}

/// `R((θ₁+θ₂)/2) - (R(θ₁) + R(θ₂))/2`; positive values violate convexity.
pub fn midpoint_convexity_check(
    target: &TargetModel,
    proposal: &ProposalFamily,
    theta1: &Theta,
    theta2: &Theta,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if theta1.len() != theta2.len() {
        return Err(OaisError::dims("theta pair", theta1.len(), theta2.len()));
    }
    let mid: Vec<f64> = theta1
        .as_slice()
        .iter()
        .zip(theta2.as_slice())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let r1 = quad_r(target, proposal, theta1, spec)?;
    let r2 = quad_r(target, proposal, theta2, spec)?;
    let rm = quad_r(target, proposal, &Theta::new(mid)?, spec)?;
    Ok(rm - 0.5 * (r1 + r2))
}
