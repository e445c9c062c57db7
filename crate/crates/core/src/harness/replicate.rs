//! Independent replicates of [`run_ais`](super::run_ais) and their per-iteration
//! MSE / bias against quadrature ground truth.

use rayon::prelude::*;

use super::config::Experiment;
use super::run::{run_ais_with_id, RunRecord};
use crate::error::{OaisError, Result};
use crate::oracle::quad_expectation;
use crate::rng::derive_seed;

/// Replicates are executed in chunks of this size and folded in index order,
/// so summaries do not depend on thread scheduling.
const CHUNK: usize = 64;

#[derive(Clone, Debug, Default)]
pub struct ReplicateOptions {
    /// Keep every [`RunRecord`] in the outcome (memory grows with `replicates * K`).
    pub keep_runs: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub k: usize,
    /// Per test function, mean over replicates of `(estimate - truth)²`.
    pub mse: Vec<f64>,
    /// Per test function, mean estimate minus truth.
    pub bias: Vec<f64>,
    pub mean_rho_hat: f64,
    /// Mean over replicates of quadrature `R(θ_k)`; NaN when not tracked.
    pub mean_r_quad: f64,
    /// Replicates that reached iteration `k`.
    pub n_ok: usize,
}

#[derive(Clone, Debug)]
pub struct ReplicateOutcome {
    pub summary: Vec<SummaryRow>,
    /// `(φ, π)` per test function, from quadrature.
    pub truths: Vec<f64>,
    pub seeds: Vec<u64>,
    /// `(run_id, reason)` for every aborted replicate.
    pub failures: Vec<(usize, String)>,
    pub runs: Option<Vec<RunRecord>>,
}

#[derive(Clone)]
struct Accumulator {
    n_ok: usize,
    est: Vec<f64>,
    sq_err: Vec<f64>,
    rho_hat: f64,
    quad_r: f64,
    quad_count: usize,
}

impl Accumulator {
    fn new(phis: usize) -> Self {
        Self {
            n_ok: 0,
            est: vec![0.0; phis],
            sq_err: vec![0.0; phis],
            rho_hat: 0.0,
            quad_r: 0.0,
            quad_count: 0,
        }
    }
}

/// Ground truth `(φ, π)` for every configured test function.
pub fn ground_truths(exp: &Experiment) -> Result<Vec<f64>> {
    let spec = exp
        .quad
        .as_ref()
        .ok_or(OaisError::UnsupportedDimension(exp.target.dim_x()))?;
    exp.test_functions
        .iter()
        .map(|phi| quad_expectation(&exp.target, spec, |x| phi.eval(x)))
        .collect()
}

/// Seeds for replicate `r` are `derive_seed(master_seed, r)`.
pub fn replicate_seeds(master_seed: u64, replicates: usize) -> Vec<u64> {
    (0..replicates as u64).map(|r| derive_seed(master_seed, r)).collect()
}

pub fn run_replicates(exp: &Experiment, opts: &ReplicateOptions) -> Result<ReplicateOutcome> {
    if exp.replicates < 2 {
        return Err(OaisError::InvalidArgument(format!(
            "run_replicates needs replicates >= 2, got {}",
            exp.replicates
        )));
    }
    let seeds = replicate_seeds(exp.master_seed, exp.replicates);
    run_replicates_with_seeds(exp, &seeds, opts)
}

/// As [`run_replicates`] with explicit per-replicate seeds.
pub fn run_replicates_with_seeds(
    exp: &Experiment,
    seeds: &[u64],
    opts: &ReplicateOptions,
) -> Result<ReplicateOutcome> {
    let truths = ground_truths(exp)?;
    let phis = exp.test_functions.len();
    let mut acc = vec![Accumulator::new(phis); exp.k];
    let mut failures = Vec::new();
    let mut kept = opts.keep_runs.then(Vec::new);

    for (c, chunk) in seeds.chunks(CHUNK).enumerate() {
        let records: Vec<RunRecord> = chunk
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| run_ais_with_id(exp, seed, c * CHUNK + i))
            .collect();
        for rec in records {
            if let Some(a) = &rec.abort {
                failures.push((rec.run_id, format!("k = {}: {}", a.k, a.reason)));
            }
            for row in &rec.rows {
                let slot = &mut acc[row.k - 1];
                slot.n_ok += 1;
                for j in 0..phis {
                    let e = row.estimates[j];
                    slot.est[j] += e;
                    slot.sq_err[j] += (e - truths[j]) * (e - truths[j]);
                }
                slot.rho_hat += row.rho_hat;
                if let Some(r) = row.quad_r {
                    slot.quad_r += r;
                    slot.quad_count += 1;
                }
            }
            if let Some(k) = kept.as_mut() {
                k.push(rec);
            }
        }
    }

    let summary = acc
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            let n = a.n_ok as f64;
            SummaryRow {
                k: i + 1,
                mse: a.sq_err.iter().map(|s| s / n).collect(),
                bias: a.est.iter().zip(&truths).map(|(s, t)| s / n - t).collect(),
                mean_rho_hat: a.rho_hat / n,
                mean_r_quad: if a.quad_count > 0 {
                    a.quad_r / a.quad_count as f64
                } else {
                    f64::NAN
                },
                n_ok: a.n_ok,
            }
        })
        .collect();

    Ok(ReplicateOutcome {
        summary,
        truths,
        seeds: seeds.to_vec(),
        failures,
        runs: kept,
    })
}
