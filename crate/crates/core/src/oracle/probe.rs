//! Empirical probes of the smoothness and dissipativity hypotheses on `R`.

use super::quadrature::{quad_grad_r, QuadratureSpec};
use crate::error::{OaisError, Result};
use crate::model::{ProposalFamily, TargetModel, Theta};
use crate::numeric::{dot, norm};

pub const MIN_PROBE_POINTS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    /// Largest observed `|∇R(θ) - ∇R(θ')| / |θ - θ'|`; a lower bound on `L_R`.
    pub lipschitz_hat: f64,
    /// Slope of the least-squares line `<∇R(θ), θ> ≈ m |θ|² - b`.
    pub dissip_m_hat: f64,
    pub dissip_b_hat: f64,
    /// Fraction of grid points below the fitted line.
    pub violation_fraction: f64,
    pub probe_points: usize,
}

/// Tensor grid with `points_per_dim` nodes per axis on `center ± radius`.
pub fn probe_grid(center: &[f64], radius: f64, points_per_dim: usize) -> Result<Vec<Theta>> {
    if points_per_dim < 2 || !(radius > 0.0) {
        return Err(OaisError::InvalidArgument(
            "probe grid needs >= 2 points per axis and a positive radius".into(),
        ));
    }
    let d = center.len();
    let total = points_per_dim.checked_pow(d as u32).ok_or_else(|| {
        OaisError::InvalidArgument("probe grid too large".into())
    })?;
    let step = 2.0 * radius / (points_per_dim - 1) as f64;
    (0..total)
        .map(|mut flat| {
            let mut v = vec![0.0; d];
            for k in (0..d).rev() {
                let i = flat % points_per_dim;
                flat /= points_per_dim;
                v[k] = center[k] - radius + step * i as f64;
            }
            Theta::new(v)
        })
        .collect()
}

/// Probes with an arbitrary gradient source.
pub fn assumption_probe<G>(grid: &[Theta], gradient: G) -> Result<ProbeReport>
where
    G: Fn(&Theta) -> Result<Vec<f64>>,
{
    if grid.len() < MIN_PROBE_POINTS {
        return Err(OaisError::InvalidArgument(format!(
            "assumption probe needs at least {MIN_PROBE_POINTS} grid points, got {}",
            grid.len()
        )));
    }
    let grads = grid.iter().map(&gradient).collect::<Result<Vec<_>>>()?;

    let mut lipschitz: f64 = 0.0;
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let dtheta: Vec<f64> = grid[i]
                .as_slice()
                .iter()
                .zip(grid[j].as_slice())
                .map(|(a, b)| a - b)
                .collect();
            let dist = norm(&dtheta);
            if dist == 0.0 {
                continue;
            }
            let dgrad: Vec<f64> = grads[i].iter().zip(&grads[j]).map(|(a, b)| a - b).collect();
            lipschitz = lipschitz.max(norm(&dgrad) / dist);
        }
    }

    // <∇R(θ), θ> against |θ|², ordinary least squares with intercept
    let xs: Vec<f64> = grid.iter().map(|t| dot(t.as_slice(), t.as_slice())).collect();
    let ys: Vec<f64> = grid.iter().zip(&grads).map(|(t, g)| dot(g, t.as_slice())).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let scale = ys.iter().fold(1.0f64, |a, y| a.max(y.abs()));
    let violations = xs
        .iter()
        .zip(&ys)
        .filter(|(x, y)| **y < slope * **x + intercept - 1e-9 * scale)
        .count();

    Ok(ProbeReport {
        lipschitz_hat: lipschitz,
        dissip_m_hat: slope,
        dissip_b_hat: -intercept,
        violation_fraction: violations as f64 / n,
        probe_points: grid.len(),
    })
}

/// Probes `R` through the quadrature gradient.
pub fn assumption_probe_quadrature(
    target: &TargetModel,
    proposal: &ProposalFamily,
    grid: &[Theta],
    spec: &QuadratureSpec,
) -> Result<ProbeReport> {
    assumption_probe(grid, |theta| quad_grad_r(target, proposal, theta, spec, None))
}

/// Plug-in value of `d/(2β) log(e L (b β / d + 1) / m)` from probe estimates.
/// `None` when the estimates leave the logarithm undefined.
pub fn c3_estimate(report: &ProbeReport, dim_theta: usize, beta: f64) -> Option<f64> {
    let d = dim_theta as f64;
    let m = report.dissip_m_hat;
    let b = report.dissip_b_hat.max(0.0);
    if !(m > 0.0) || !(report.lipschitz_hat > 0.0) || !(beta > 0.0) || beta.is_infinite() {
        return None;
    }
    let arg = std::f64::consts::E * report.lipschitz_hat * (b * beta / d + 1.0) / m;
    (arg > 0.0).then(|| d / (2.0 * beta) * arg.ln())
}
