//! One adaptive importance sampling run: adapt, sample, weigh, record.

use std::time::Instant;

use super::config::Experiment;
use crate::adapt::{self, OptimizerState};
use crate::error::{OaisError, Result};
use crate::grad::{self, EstimatorKind, GradEstimate};
use crate::matrix::Matrix;
use crate::oracle::{quad_grad_r, quad_r};
use crate::rng::{SeededStream, STREAM_ADAPT, STREAM_SAMPLE};
use crate::snis::{diagnostics, log_weights_frozen, normalize, weighted_average};

/// One row of the per-iteration trace.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRow {
    pub k: usize,
    pub theta: Vec<f64>,
    pub rho_hat: f64,
    pub r_hat: f64,
    pub z_hat: f64,
    pub ess: f64,
    /// One SNIS estimate per configured test function.
    pub estimates: Vec<f64>,
    /// `R(θ_k)` by quadrature; `inf` where the integral diverges.
    pub quad_r: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbortKind {
    Divergence,
    DegenerateEnsemble,
    Numerical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunAbort {
    pub kind: AbortKind,
    /// Iteration that failed.
    pub k: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<IterationRow>,
    pub abort: Option<RunAbort>,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }
}

fn classify(err: &OaisError) -> AbortKind {
    match err {
        OaisError::Divergence { .. } => AbortKind::Divergence,
        OaisError::DegenerateEnsemble => AbortKind::DegenerateEnsemble,
        _ => AbortKind::Numerical,
    }
}

struct Runner<'a> {
    exp: &'a Experiment,
    state: OptimizerState,
    adapt_rng: SeededStream,
    sample_rng: SeededStream,
    eps_row: Vec<f64>,
    samples: Matrix,
}

impl<'a> Runner<'a> {
    fn new(exp: &'a Experiment, seed: u64) -> Result<Self> {
        Ok(Self {
            exp,
            state: OptimizerState::new(exp.scheme, exp.theta0.clone(), exp.hyper.clone())?,
            adapt_rng: SeededStream::substream(seed, STREAM_ADAPT),
            sample_rng: SeededStream::substream(seed, STREAM_SAMPLE),
            eps_row: vec![0.0; exp.proposal.dim_eps()],
            samples: Matrix::zeros(exp.n, exp.proposal.dim_x()),
        })
    }

    fn gradient(&mut self) -> Result<GradEstimate> {
        let exp = self.exp;
        let theta = &self.state.theta;
        let raw = match exp.estimator {
            EstimatorKind::Exact => {
                let spec = exp.quad.as_ref().ok_or(OaisError::UnsupportedDimension(exp.target.dim_x()))?;
                GradEstimate {
                    grad: quad_grad_r(&exp.target, &exp.proposal, theta, spec, None)?,
                    estimator_kind: EstimatorKind::Exact,
                    batch_size: 1,
                }
            }
            kind => {
                let eps = exp.proposal.sample_eps(&mut self.adapt_rng, exp.grad_batch);
                grad::estimate(kind, &exp.target, &exp.proposal, theta, &eps)?
            }
        };
        Ok(grad::clip(raw, exp.clip_norm))
    }

    fn iterate(&mut self, k: usize) -> Result<IterationRow> {
        let started = Instant::now();
        let exp = self.exp;

        let g = self.gradient()?;
        self.state = adapt::step(&self.state, &g, &mut self.adapt_rng)?;

        let q = exp.proposal.freeze(&self.state.theta)?;
        for i in 0..exp.n {
            exp.proposal.fill_eps(&mut self.sample_rng, &mut self.eps_row);
            q.push_forward_into(&self.eps_row, self.samples.row_mut(i));
        }
        let log_w = log_weights_frozen(&exp.target, &q, &self.samples)?;
        let diag = diagnostics(&log_w)?;
        let w = normalize(&log_w)?;
        let estimates = exp
            .test_functions
            .iter()
            .map(|phi| weighted_average(&w, self.samples.iter_rows().map(|x| phi.eval(x))))
            .collect();

        let quad_r = match (&exp.quad, exp.track_quad_r) {
            (Some(spec), true) => Some(match quad_r(&exp.target, &exp.proposal, &self.state.theta, spec) {
                Ok(v) => v,
                Err(OaisError::HeavyTail { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            }),
            _ => None,
        };

        Ok(IterationRow {
            k,
            theta: self.state.theta.as_slice().to_vec(),
            rho_hat: diag.rho_hat,
            r_hat: diag.r_hat,
            z_hat: diag.z_hat,
            ess: diag.ess,
            estimates,
            quad_r,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// Runs `K` iterations from `θ₀`. Gradient noise and integration samples come
/// from two independent substreams of `seed`. A failure stops the run and
/// is recorded in [`RunRecord::abort`] alongside the rows completed so far.
pub fn run_ais(exp: &Experiment, seed: u64) -> RunRecord {
    run_ais_with_id(exp, seed, 0)
}

pub(crate) fn run_ais_with_id(exp: &Experiment, seed: u64, run_id: usize) -> RunRecord {
    let mut record = RunRecord {
        run_id,
        seed,
        config_hash: exp.config_hash.clone(),
        rows: Vec::with_capacity(exp.k),
        abort: None,
    };
    let mut runner = match Runner::new(exp, seed) {
        Ok(r) => r,
        Err(e) => {
            record.abort = Some(RunAbort {
                kind: classify(&e),
                k: 0,
                reason: e.to_string(),
            });
            return record;
        }
    };
    for k in 1..=exp.k {
        match runner.iterate(k) {
            Ok(row) => record.rows.push(row),
            Err(e) => {
                log::warn!("run {run_id} (seed {seed}) aborted at k = {k}: {e}");
                record.abort = Some(RunAbort {
                    kind: classify(&e),
                    k,
                    reason: e.to_string(),
                });
                break;
            }
        }
    }
    record
}
