//! Step-size / sample-size calibration with `N = ceil(η^{-α})`.

use statrs::distribution::{ContinuousCDF, Normal};

use super::config::Experiment;
use super::replicate::{run_replicates, ReplicateOptions, ReplicateOutcome};
use crate::error::{OaisError, Result};

/// One `(α, η)` cell of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub alpha: f64,
    pub eta: f64,
    pub n: usize,
    /// Per test function, mean of the summary MSE over the plateau window.
    pub plateau_mse: Vec<f64>,
    /// Standard error of `plateau_mse` across completed replicates.
    pub plateau_se: Vec<f64>,
    /// Replicates that completed all `K` iterations.
    pub n_ok: usize,
}

/// Slope of `log plateau MSE` against `log η` for one `α` and test function.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub alpha: f64,
    pub test_function: String,
    pub slope: f64,
    pub lo: f64,
    pub hi: f64,
    /// Number of cells used.
    pub points: usize,
}

#[derive(Clone, Debug)]
pub struct SweepTable {
    pub test_functions: Vec<String>,
    pub cells: Vec<SweepCell>,
    pub slopes: Vec<SlopeFit>,
}

/// Confidence level of [`SlopeFit::lo`] / [`SlopeFit::hi`].
pub const SLOPE_CONFIDENCE: f64 = 0.95;

/// `ceil(η^{-α})`, guarded against `1.0000000001`-style round-up.
pub fn samples_for(eta: f64, alpha: f64) -> Result<usize> {
    if !(eta > 0.0) || !alpha.is_finite() || alpha < 0.0 {
        return Err(OaisError::InvalidArgument(format!(
            "sweep needs eta > 0 and alpha >= 0, got eta = {eta}, alpha = {alpha}"
        )));
    }
    let raw = eta.powf(-alpha);
    let n = (raw * (1.0 - 1e-12)).ceil();
    if !(1.0..1e9).contains(&n) {
        return Err(OaisError::InvalidArgument(format!("derived N = {raw} is out of range")));
    }
    Ok(n as usize)
}

/// First iteration index (1-based) of the plateau window.
pub fn plateau_start(k: usize, fraction: f64) -> usize {
    let len = ((k as f64) * fraction.clamp(0.0, 1.0)).ceil().max(1.0) as usize;
    k - len.min(k) + 1
}

/// Plateau MSE and its standard error for one replicate outcome.
pub fn plateau_stats(outcome: &ReplicateOutcome, k: usize, fraction: f64) -> (Vec<f64>, Vec<f64>, usize) {
    let start = plateau_start(k, fraction);
    let phis = outcome.truths.len();
    let window: Vec<_> = outcome.summary.iter().filter(|r| r.k >= start).collect();
    let mse: Vec<f64> = (0..phis)
        .map(|j| window.iter().map(|r| r.mse[j]).sum::<f64>() / window.len() as f64)
        .collect();

    let runs = outcome.runs.as_deref().unwrap_or(&[]);
    let per_run: Vec<Vec<f64>> = runs
        .iter()
        .filter(|r| r.completed())
        .map(|r| {
            let rows: Vec<_> = r.rows.iter().filter(|row| row.k >= start).collect();
            (0..phis)
                .map(|j| {
                    rows.iter()
                        .map(|row| (row.estimates[j] - outcome.truths[j]).powi(2))
                        .sum::<f64>()
                        / rows.len() as f64
                })
                .collect()
        })
        .collect();
    let n_ok = per_run.len();
    let se = (0..phis)
        .map(|j| {
            if n_ok < 2 {
                return f64::NAN;
            }
            let (_, var, _) = crate::numeric::mean_var(per_run.iter().map(|v| v[j]));
            (var / n_ok as f64).sqrt()
        })
        .collect();
    (mse, se, n_ok)
}

/// Weighted least squares of `log mse` on `log η`, with each point's
/// variance from the delta method `(se / mse)²`. The slope's standard error
/// is inflated by the reduced chi-square when that exceeds one.
fn fit_slope(points: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|(eta, m, se)| *eta > 0.0 && *m > 0.0 && se.is_finite() && *se > 0.0)
        .map(|&(eta, m, se)| (eta.ln(), m.ln(), (m / se).powi(2)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let mut se = (1.0 / sxx).sqrt();
    if pts.len() > 2 {
        let chi2: f64 = pts
            .iter()
            .map(|p| p.2 * (p.1 - my - slope * (p.0 - mx)).powi(2))
            .sum();
        let reduced = chi2 / (pts.len() - 2) as f64;
        se *= reduced.max(1.0).sqrt();
    }
    Some((slope, se))
}

/// Runs [`run_replicates`] for every `(α, η)` with `N = ceil(η^{-α})` and
/// averages the MSE over the last `plateau_fraction` of the iterations.
pub fn calibration_sweep(
    base: &Experiment,
    alphas: &[f64],
    etas: &[f64],
    plateau_fraction: f64,
) -> Result<SweepTable> {
    if alphas.is_empty() || etas.is_empty() {
        return Err(OaisError::InvalidArgument("sweep grids must be nonempty".into()));
    }
    if !(plateau_fraction > 0.0 && plateau_fraction <= 1.0) {
        return Err(OaisError::InvalidArgument("plateau fraction must be in (0, 1]".into()));
    }
    let names = base.test_function_names();
    let opts = ReplicateOptions { keep_runs: true };
    let mut cells = Vec::with_capacity(alphas.len() * etas.len());
    for &alpha in alphas {
        for &eta in etas {
            let n = samples_for(eta, alpha)?;
            let exp = base.with_eta_and_n(eta, n)?;
            let outcome = run_replicates(&exp, &opts)?;
            let (plateau_mse, plateau_se, n_ok) = plateau_stats(&outcome, exp.k, plateau_fraction);
            log::info!("sweep cell alpha = {alpha}, eta = {eta}, N = {n}: plateau mse = {plateau_mse:?}");
            cells.push(SweepCell {
                alpha,
                eta,
                n,
                plateau_mse,
                plateau_se,
                n_ok,
            });
        }
    }

    let z = Normal::standard().inverse_cdf(0.5 + SLOPE_CONFIDENCE / 2.0);
    let mut slopes = Vec::new();
    for &alpha in alphas {
        for (j, name) in names.iter().enumerate() {
            let pts: Vec<_> = cells
                .iter()
                .filter(|c| c.alpha == alpha)
                .map(|c| (c.eta, c.plateau_mse[j], c.plateau_se[j]))
                .collect();
            if let Some((slope, se)) = fit_slope(&pts) {
                slopes.push(SlopeFit {
                    alpha,
                    test_function: name.clone(),
                    slope,
                    lo: slope - z * se,
                    hi: slope + z * se,
                    points: pts.len(),
                });
            }
        }
    }
    Ok(SweepTable {
        test_functions: names,
        cells,
        slopes,
    })
}
