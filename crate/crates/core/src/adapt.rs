//! Parameter update maps for the proposal: SGLD, SGHMC, plain SGD and
//! Langevin with an exact gradient.
//!
//! Each scheme has a pure `*_update` that takes the Gaussian noise vector
//! explicitly, and a `*_step` wrapper that draws it from a stream. Replaying
//! recorded noise through the `*_update` functions reproduces a trajectory
//! bit for bit.

use std::fmt;

use crate::error::{OaisError, Result};
use crate::model::Theta;
use crate::rng::SeededStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Sgld,
    Sghmc,
    Sgd,
    /// SGLD driven by the quadrature gradient of `R`.
    ExactLangevin,
}

impl Scheme {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "sgld" => Ok(Self::Sgld),
            "sghmc" => Ok(Self::Sghmc),
            "sgd" => Ok(Self::Sgd),
            "exact-langevin" => Ok(Self::ExactLangevin),
            other => Err(OaisError::Config(format!("unknown optimizer scheme `{other}`"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Sgld => "sgld",
            Self::Sghmc => "sghmc",
            Self::Sgd => "sgd",
            Self::ExactLangevin => "exact-langevin",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Which momentum the SGHMC position update uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MomentumOrder {
    /// `θ_{k+1} = θ_k + η V_k`.
    #[default]
    AsPaper,
    /// `θ_{k+1} = θ_k + η V_{k+1}`.
    Updated,
}

impl MomentumOrder {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "as-paper" => Ok(Self::AsPaper),
            "updated" => Ok(Self::Updated),
            other => Err(OaisError::Config(format!("unknown sghmc_momentum_order `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    /// η.
    pub step_size: f64,
    /// β; `f64::INFINITY` disables the injected noise.
    pub inv_temp: f64,
    /// γ, SGHMC only.
    pub friction: f64,
    pub eta_max: f64,
    /// Abort once `|θ|` exceeds this.
    pub divergence_radius: f64,
    pub momentum_order: MomentumOrder,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            inv_temp: 1e4,
            friction: 1.0,
            eta_max: 1.0,
            divergence_radius: 1e6,
            momentum_order: MomentumOrder::AsPaper,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub scheme: Scheme,
    pub theta: Theta,
    /// `V`, present iff the scheme is SGHMC.
    pub momentum: Option<Vec<f64>>,
    pub hyper: Hyperparams,
    pub iteration: u64,
}

impl OptimizerState {
    pub fn new(scheme: Scheme, theta: Theta, hyper: Hyperparams) -> Result<Self> {
        let h = &hyper;
        if !(h.step_size >= 0.0) || !h.step_size.is_finite() {
            return Err(OaisError::Config(format!("eta must be finite and >= 0, got {}", h.step_size)));
        }
        if h.step_size > h.eta_max {
            return Err(OaisError::Config(format!(
                "eta = {} exceeds eta_max = {}",
                h.step_size, h.eta_max
            )));
        }
        if !(h.inv_temp > 0.0) {
            return Err(OaisError::Config(format!("beta must be > 0, got {}", h.inv_temp)));
        }
        if scheme == Scheme::Sghmc && !(h.friction > 0.0 && h.friction.is_finite()) {
            return Err(OaisError::Config(format!("gamma must be > 0, got {}", h.friction)));
        }
        if !(h.divergence_radius > 0.0) {
            return Err(OaisError::Config("divergence_radius must be > 0".into()));
        }
        let momentum = (scheme == Scheme::Sghmc).then(|| vec![0.0; theta.len()]);
        Ok(Self {
            scheme,
            theta,
            momentum,
            hyper,
            iteration: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    fn noisy(&self) -> bool {
        self.scheme != Scheme::Sgd && self.hyper.inv_temp.is_finite()
    }

    /// Standard deviation of the injected noise per coordinate.
    pub fn noise_scale(&self) -> f64 {
        if !self.noisy() {
            return 0.0;
        }
        let h = &self.hyper;
        match self.scheme {
            Scheme::Sghmc => (2.0 * h.friction * h.step_size / h.inv_temp).sqrt(),
            _ => (2.0 * h.step_size / h.inv_temp).sqrt(),
        }
    }

    fn draw_noise(&self, rng: &mut SeededStream) -> Vec<f64> {
        if !self.noisy() {
            return Vec::new();
        }
        let mut xi = vec![0.0; self.dim()];
        rng.fill_normal(&mut xi);
        xi
    }

    fn finish(&self, theta: Vec<f64>, momentum: Option<Vec<f64>>) -> Result<Self> {
        let iteration = self.iteration + 1;
        let n = crate::numeric::norm(&theta);
        let momentum_ok = momentum.as_ref().is_none_or(|v| v.iter().all(|x| x.is_finite()));
        if !n.is_finite() || !momentum_ok || n > self.hyper.divergence_radius {
            return Err(OaisError::Divergence { iteration, norm: n });
        }
        Ok(Self {
            scheme: self.scheme,
            theta: Theta::new(theta)?,
            momentum,
            hyper: self.hyper.clone(),
            iteration,
        })
    }
}

fn check_grad(state: &OptimizerState, grad: &[f64]) -> Result<()> {
    if grad.len() != state.dim() {
        return Err(OaisError::dims("gradient", state.dim(), grad.len()));
    }
    Ok(())
}

fn check_noise(state: &OptimizerState, noise: &[f64]) -> Result<()> {
    if state.noisy() && noise.len() != state.dim() {
        return Err(OaisError::dims("noise", state.dim(), noise.len()));
    }
    Ok(())
}

fn require(state: &OptimizerState, allowed: &[Scheme]) -> Result<()> {
    if allowed.contains(&state.scheme) {
        Ok(())
    } else {
        Err(OaisError::InvalidArgument(format!(
            "update does not apply to scheme {}",
            state.scheme
        )))
    }
}

/// `θ' = θ - η g + sqrt(2η/β) ξ`. `noise` is ignored when β is infinite.
pub fn sgld_update(state: &OptimizerState, grad: &[f64], noise: &[f64]) -> Result<OptimizerState> {
    require(state, &[Scheme::Sgld, Scheme::ExactLangevin])?;
    check_grad(state, grad)?;
    check_noise(state, noise)?;
    let eta = state.hyper.step_size;
    let sigma = state.noise_scale();
    let theta: Vec<f64> = state
        .theta
        .as_slice()
        .iter()
        .zip(grad)
        .enumerate()
        .map(|(i, (t, g))| {
            let stepped = t - eta * g;
            if state.noisy() {
                stepped + sigma * noise[i]
            } else {
                stepped
            }
        })
        .collect();
    state.finish(theta, None)
}

pub fn sgld_step(
    state: &OptimizerState,
    grad: impl AsRef<[f64]>,
    rng: &mut SeededStream,
) -> Result<OptimizerState> {
    require(state, &[Scheme::Sgld, Scheme::ExactLangevin])?;
    let xi = state.draw_noise(rng);
    sgld_update(state, grad.as_ref(), &xi)
}

/// `V' = V - η(γ V + g) + sqrt(2γη/β) ξ`, then `θ' = θ + η V` (or `η V'`
/// with [`MomentumOrder::Updated`]).
pub fn sghmc_update(state: &OptimizerState, grad: &[f64], noise: &[f64]) -> Result<OptimizerState> {
    require(state, &[Scheme::Sghmc])?;
    check_grad(state, grad)?;
    check_noise(state, noise)?;
    let h = &state.hyper;
    let (eta, gamma) = (h.step_size, h.friction);
    let sigma = state.noise_scale();
    let v_old = state
        .momentum
        .as_deref()
        .ok_or_else(|| OaisError::InvalidArgument("sghmc state without momentum".into()))?;
    let v_new: Vec<f64> = v_old
        .iter()
        .zip(grad)
        .enumerate()
        .map(|(i, (v, g))| {
            let drift = v - eta * (gamma * v + g);
            if state.noisy() {
                drift + sigma * noise[i]
            } else {
                drift
            }
        })
        .collect();
    let velocity = match h.momentum_order {
        MomentumOrder::AsPaper => v_old,
        MomentumOrder::Updated => &v_new[..],
    };
    let theta: Vec<f64> = state
        .theta
        .as_slice()
        .iter()
        .zip(velocity)
        .map(|(t, v)| t + eta * v)
        .collect();
    state.finish(theta, Some(v_new))
}

pub fn sghmc_step(
    state: &OptimizerState,
    grad: impl AsRef<[f64]>,
    rng: &mut SeededStream,
) -> Result<OptimizerState> {
    require(state, &[Scheme::Sghmc])?;
    let xi = state.draw_noise(rng);
    sghmc_update(state, grad.as_ref(), &xi)
}

/// `θ' = θ - η g`.
pub fn sgd_step(state: &OptimizerState, grad: impl AsRef<[f64]>) -> Result<OptimizerState> {
    require(state, &[Scheme::Sgd])?;
    let grad = grad.as_ref();
    check_grad(state, grad)?;
    let eta = state.hyper.step_size;
    let theta = state
        .theta
        .as_slice()
        .iter()
        .zip(grad)
        .map(|(t, g)| t - eta * g)
        .collect();
    state.finish(theta, None)
}

/// Dispatches on `state.scheme`.
pub fn step(
    state: &OptimizerState,
    grad: impl AsRef<[f64]>,
    rng: &mut SeededStream,
) -> Result<OptimizerState> {
    match state.scheme {
        Scheme::Sgld | Scheme::ExactLangevin => sgld_step(state, grad, rng),
        Scheme::Sghmc => sghmc_step(state, grad, rng),
        Scheme::Sgd => sgd_step(state, grad),
    }
}
