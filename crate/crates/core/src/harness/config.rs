//! TOML run configuration and its validated form.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::testfn::TestFunction;
use crate::adapt::{Hyperparams, MomentumOrder, Scheme};
use crate::error::{OaisError, Result};
use crate::grad::EstimatorKind;
use crate::model::{FamilyKind, GaussianComponent, ProposalFamily, TargetModel, Theta};
use crate::oracle::QuadratureSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: TargetConfig,
    pub proposal: ProposalConfig,
    pub optimizer: OptimizerConfig,
    pub run: RunSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetConfig {
    /// `exp(-0.5 |(x - mean) / std|²)`.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    /// Unnormalized axis-aligned Gaussian mixture.
    Mixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        stds: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalConfig {
    pub family: String,
    pub theta0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

fn default_beta() -> f64 {
    f64::INFINITY
}
fn default_gamma() -> f64 {
    1.0
}
fn default_estimator() -> String {
    "pathwise".into()
}
fn default_one() -> usize {
    1
}
fn default_order() -> String {
    "as-paper".into()
}
fn default_eta_max() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    1e6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub scheme: String,
    pub eta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_estimator")]
    pub grad_estimator: String,
    #[serde(default = "default_one")]
    pub grad_batch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    #[serde(default = "default_order")]
    pub sghmc_momentum_order: String,
    #[serde(default = "default_eta_max")]
    pub eta_max: f64,
    #[serde(default = "default_radius")]
    pub divergence_radius: f64,
}

fn default_test_functions() -> Vec<String> {
    vec!["tanh".into()]
}
fn default_nodes() -> usize {
    crate::oracle::DEFAULT_NODES
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Samples per iteration.
    pub n: usize,
    /// Iterations.
    pub k: usize,
    #[serde(default = "default_test_functions")]
    pub test_functions: Vec<String>,
    pub master_seed: u64,
    #[serde(default = "default_one")]
    pub replicates: usize,
    #[serde(default = "default_nodes")]
    pub quad_nodes: usize,
    /// Evaluate `R(θ_k)` by quadrature at every iteration.
    #[serde(default = "default_true")]
    pub track_quad_r: bool,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OaisError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| OaisError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// First 16 hex digits of SHA-256 over the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn build(&self) -> Result<Experiment> {
        Experiment::from_config(self)
    }
}

impl TargetConfig {
    pub fn build(&self) -> Result<TargetModel> {
        let cfg = |e: OaisError| OaisError::Config(format!("target: {e}"));
        match self {
            Self::Gaussian { mean, std } => {
                if mean.len() != std.len() {
                    return Err(OaisError::Config("target mean and std lengths differ".into()));
                }
                TargetModel::gaussian(mean.clone(), std.clone()).map_err(cfg)
            }
            Self::Mixture { weights, means, stds } => {
                if weights.len() != means.len() || weights.len() != stds.len() {
                    return Err(OaisError::Config("mixture weights/means/stds lengths differ".into()));
                }
                let comps = weights
                    .iter()
                    .zip(means)
                    .zip(stds)
                    .map(|((w, m), s)| GaussianComponent::new(*w, m.clone(), s.clone()))
                    .collect();
                TargetModel::mixture(comps).map_err(cfg)
            }
        }
    }
}

/// A validated configuration with every identifier resolved.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: RunConfig,
    pub config_hash: String,
    pub target: TargetModel,
    pub proposal: ProposalFamily,
    pub theta0: Theta,
    pub scheme: Scheme,
    pub hyper: Hyperparams,
    pub estimator: EstimatorKind,
    pub grad_batch: usize,
    pub clip_norm: Option<f64>,
    pub n: usize,
    pub k: usize,
    pub test_functions: Vec<TestFunction>,
    pub master_seed: u64,
    pub replicates: usize,
    /// Present when `d_x <= 2`.
    pub quad: Option<QuadratureSpec>,
    pub track_quad_r: bool,
}

impl Experiment {
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        let target = config.target.build()?;
        let p = &config.proposal;
        let kind = FamilyKind::parse(&p.family, p.nu)?;
        let proposal = ProposalFamily::new(kind, target.dim_x())
            .map_err(|e| OaisError::Config(format!("proposal: {e}")))?;
        if p.theta0.len() != proposal.dim_theta() {
            return Err(OaisError::Config(format!(
                "theta0 has {} entries, {} needs {}",
                p.theta0.len(),
                p.family,
                proposal.dim_theta()
            )));
        }
        let theta0 = Theta::new(p.theta0.clone()).map_err(|e| OaisError::Config(e.to_string()))?;

        let o = &config.optimizer;
        let scheme = Scheme::parse(&o.scheme)?;
        let estimator = if scheme == Scheme::ExactLangevin {
            EstimatorKind::Exact
        } else {
            EstimatorKind::parse(&o.grad_estimator)?
        };
        let hyper = Hyperparams {
            step_size: o.eta,
            inv_temp: o.beta,
            friction: o.gamma,
            eta_max: o.eta_max,
            divergence_radius: o.divergence_radius,
            momentum_order: MomentumOrder::parse(&o.sghmc_momentum_order)?,
        };
        // surfaces hyperparameter errors at load time
        crate::adapt::OptimizerState::new(scheme, theta0.clone(), hyper.clone())?;
        if o.grad_batch == 0 {
            return Err(OaisError::Config("grad_batch must be >= 1".into()));
        }
        if let Some(c) = o.clip_norm {
            if !(c > 0.0) {
                return Err(OaisError::Config("clip_norm must be > 0".into()));
            }
        }
        if estimator == EstimatorKind::Pathwise && !target.has_grad() {
            return Err(OaisError::Config("pathwise estimator needs a target gradient".into()));
        }

        let r = &config.run;
        if r.n == 0 || r.k == 0 || r.replicates == 0 {
            return Err(OaisError::Config("n, k and replicates must all be >= 1".into()));
        }
        let test_functions = r
            .test_functions
            .iter()
            .map(|s| TestFunction::parse(s))
            .collect::<Result<Vec<_>>>()?;
        if test_functions.is_empty() {
            return Err(OaisError::Config("at least one test function is required".into()));
        }
        let quad = if target.dim_x() <= 2 {
            Some(
                QuadratureSpec::for_target(&target)
                    .map_err(|e| OaisError::Config(e.to_string()))?
                    .with_nodes(r.quad_nodes),
            )
        } else {
            None
        };
        if estimator == EstimatorKind::Exact && quad.is_none() {
            return Err(OaisError::UnsupportedDimension(target.dim_x()));
        }
        Ok(Self {
            config: config.clone(),
            config_hash: config.hash(),
            target,
            proposal,
            theta0,
            scheme,
            hyper,
            estimator,
            grad_batch: o.grad_batch,
            clip_norm: o.clip_norm,
            n: r.n,
            k: r.k,
            test_functions,
            master_seed: r.master_seed,
            replicates: r.replicates,
            track_quad_r: r.track_quad_r && quad.is_some(),
            quad,
        })
    }

    pub fn test_function_names(&self) -> Vec<String> {
        self.test_functions.iter().map(TestFunction::name).collect()
    }

    /// Same problem with a different step size and sample count.
    pub fn with_eta_and_n(&self, eta: f64, n: usize) -> Result<Self> {
        let mut cfg = self.config.clone();
        cfg.optimizer.eta = eta;
        cfg.run.n = n;
        Self::from_config(&cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[target]
kind = "gaussian"
mean = [0.0]
std = [1.0]

[proposal]
family = "gaussian-meanchol"
theta0 = [3.0, 1.0]

[optimizer]
scheme = "sgld"
eta = 1e-3
beta = 1e4

[run]
n = 100
k = 10
master_seed = 7
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_toml_str(BASIC).unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.proposal.dim_theta(), 2);
        assert_eq!(exp.estimator, EstimatorKind::Pathwise);
        assert_eq!(exp.test_function_names(), vec!["tanh"]);
        assert!(exp.quad.is_some());
        assert_eq!(exp.config_hash.len(), 16);
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn infinite_beta_literal() {
        let text = BASIC.replace("beta = 1e4", "beta = inf");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        assert!(cfg.optimizer.beta.is_infinite());
        // omitted beta defaults to the noise-free limit
        let text = BASIC.replace("beta = 1e4\n", "");
        assert!(RunConfig::from_toml_str(&text).unwrap().optimizer.beta.is_infinite());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for (from, to) in [
            ("n = 100", "n = 100\nbogus = 1"),
            ("eta = 1e-3", "eta = 1e-3\nlr = 2"),
            ("std = [1.0]", "std = [1.0]\nshape = 2"),
            ("theta0 = [3.0, 1.0]", "theta0 = [3.0, 1.0]\nscale = 1"),
        ] {
            let text = BASIC.replace(from, to);
            assert!(matches!(RunConfig::from_toml_str(&text), Err(OaisError::Config(_))), "{to}");
        }
    }

    #[test]
    fn unresolved_identifiers_are_config_errors() {
        for (from, to) in [
            ("\"sgld\"", "\"adam\""),
            ("\"gaussian-meanchol\"", "\"flow\""),
            ("kind = \"gaussian\"", "kind = \"banana\""),
            ("theta0 = [3.0, 1.0]", "theta0 = [3.0]"),
            ("n = 100", "n = 0"),
        ] {
            let text = BASIC.replace(from, to);
            let res = RunConfig::from_toml_str(&text).and_then(|c| c.build());
            assert!(matches!(res, Err(OaisError::Config(_))), "{to}: {res:?}");
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_toml_str(BASIC).unwrap();
        let mut b = a.clone();
        b.run.master_seed = 8;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }
}
