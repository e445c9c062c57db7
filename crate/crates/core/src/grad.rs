//! Stochastic estimates of `∇R(θ)`, `R(θ) = E_q[W_θ²]`.
//!
//! Three per-draw estimators `H(θ, ε)` share one code path:
//!
//! * `Score`: `-W²(x) ∇_θ log q_θ(x)`, the score-function form.
//! * `Pathwise`: the total θ-derivative of `W²(g_θ(ε))` holding ε fixed,
//!   `W² [2 Jᵀ(∇_x log Π - ∇_x log q_θ) - 2 ∇_θ log q_θ]`. Unbiased.
//! * `PaperLiteral`: `-W² Jᵀ ∇_x log q_θ(x)`, the reparameterized formula
//!   read with an x-gradient and no explicit θ term. Biased in general; kept
//!   for comparison only.
//!
//! `W²` is evaluated as `exp(2 log W)`, which stays finite for
//! `|log W| < 354`.

use std::fmt;

use smallvec::SmallVec;

use crate::error::{OaisError, Result};
use crate::matrix::Matrix;
use crate::model::{FrozenProposal, ProposalFamily, TargetModel, Theta};
use crate::snis::log_weight_at;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Score,
    Pathwise,
    PaperLiteral,
    /// Deterministic gradient from the quadrature oracle.
    Exact,
}

impl EstimatorKind {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "score" => Ok(Self::Score),
            "pathwise" => Ok(Self::Pathwise),
            "paper-literal" => Ok(Self::PaperLiteral),
            "exact" => Ok(Self::Exact),
            other => Err(OaisError::Config(format!("unknown gradient estimator `{other}`"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Score => "score",
            Self::Pathwise => "pathwise",
            Self::PaperLiteral => "paper-literal",
            Self::Exact => "exact",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradEstimate {
    pub grad: Vec<f64>,
    pub estimator_kind: EstimatorKind,
    pub batch_size: usize,
}

impl GradEstimate {
    pub fn norm(&self) -> f64 {
        crate::numeric::norm(&self.grad)
    }
}

impl AsRef<[f64]> for GradEstimate {
    fn as_ref(&self) -> &[f64] {
        &self.grad
    }
}

type Buf = SmallVec<[f64; 8]>;

/// Scratch space for one per-draw evaluation.
struct Workspace {
    x: Buf,
    gx_target: Buf,
    gx_q: Buf,
    score: Buf,
    jt: Buf,
}

impl Workspace {
    fn new(dx: usize, dt: usize) -> Self {
        Self {
            x: SmallVec::from_elem(0.0, dx),
            gx_target: SmallVec::from_elem(0.0, dx),
            gx_q: SmallVec::from_elem(0.0, dx),
            score: SmallVec::from_elem(0.0, dt),
            jt: SmallVec::from_elem(0.0, dt),
        }
    }
}

fn per_draw(
    kind: EstimatorKind,
    target: &TargetModel,
    q: &FrozenProposal,
    eps: &[f64],
    index: usize,
    ws: &mut Workspace,
    out: &mut [f64],
) -> Result<()> {
    q.push_forward_into(eps, &mut ws.x);
    let lw = log_weight_at(target, q, &ws.x, index)?;
    let w2 = (2.0 * lw).exp();
    match kind {
        EstimatorKind::Score => {
            q.score_into(&ws.x, &mut ws.score);
            for (o, s) in out.iter_mut().zip(&ws.score) {
                *o = -w2 * s;
            }
        }
        EstimatorKind::Pathwise => {
            if !target.grad_log_unnorm_into(&ws.x, &mut ws.gx_target) {
                return Err(OaisError::UnsupportedEstimator("pathwise"));
            }
            q.grad_x_into(&ws.x, &mut ws.gx_q);
            for (t, g) in ws.gx_target.iter_mut().zip(&ws.gx_q) {
                *t -= g;
            }
            q.jacobian_t_apply(eps, &ws.gx_target, &mut ws.jt);
            q.score_into(&ws.x, &mut ws.score);
            for ((o, j), s) in out.iter_mut().zip(&ws.jt).zip(&ws.score) {
                *o = w2 * (2.0 * j - 2.0 * s);
            }
        }
        EstimatorKind::PaperLiteral => {
            q.grad_x_into(&ws.x, &mut ws.gx_q);
            q.jacobian_t_apply(eps, &ws.gx_q, &mut ws.jt);
            for (o, j) in out.iter_mut().zip(&ws.jt) {
                *o = -w2 * j;
            }
        }
        EstimatorKind::Exact => return Err(OaisError::UnsupportedEstimator("exact (use the oracle)")),
    }
    if let Some(j) = out.iter().position(|v| !v.is_finite()) {
        return Err(OaisError::NonFiniteValue {
            what: "gradient term",
            index: index * out.len() + j,
        });
    }
    Ok(())
}

fn check_batch(proposal: &ProposalFamily, eps: &Matrix) -> Result<()> {
    if eps.rows() == 0 {
        return Err(OaisError::InvalidArgument("gradient batch is empty".into()));
    }
    if eps.cols() != proposal.dim_eps() {
        return Err(OaisError::dims("eps batch", proposal.dim_eps(), eps.cols()));
    }
    if let crate::model::FamilyKind::StudentTLocScale { .. } = proposal.kind() {
        let d = proposal.dim_x();
        if eps.iter_rows().any(|r| !(r[d] > 0.0)) {
            return Err(OaisError::InvalidArgument(
                "student-t auxiliary chi-square coordinate must be positive".into(),
            ));
        }
    }
    Ok(())
}

/// Per-draw values `H(θ, ε_i)`, one row per row of `eps`.
pub fn grad_samples(
    kind: EstimatorKind,
    target: &TargetModel,
    proposal: &ProposalFamily,
    theta: &Theta,
    eps: &Matrix,
) -> Result<Matrix> {
    check_batch(proposal, eps)?;
    if kind == EstimatorKind::Pathwise && !target.has_grad() {
        return Err(OaisError::UnsupportedEstimator("pathwise"));
    }
    let q = proposal.freeze(theta)?;
    let dt = proposal.dim_theta();
    let mut ws = Workspace::new(proposal.dim_x(), dt);
    let mut out = Matrix::zeros(eps.rows(), dt);
    for (i, e) in eps.iter_rows().enumerate() {
        per_draw(kind, target, &q, e, i, &mut ws, out.row_mut(i))?;
    }
    Ok(out)
}

/// Batch mean of `H(θ, ε_i)` over the rows of `eps`.
pub fn estimate(
    kind: EstimatorKind,
    target: &TargetModel,
    proposal: &ProposalFamily,
    theta: &Theta,
    eps: &Matrix,
) -> Result<GradEstimate> {
    check_batch(proposal, eps)?;
    if kind == EstimatorKind::Pathwise && !target.has_grad() {
        return Err(OaisError::UnsupportedEstimator("pathwise"));
    }
    let q = proposal.freeze(theta)?;
    let dt = proposal.dim_theta();
    let mut ws = Workspace::new(proposal.dim_x(), dt);
    let mut term: Buf = SmallVec::from_elem(0.0, dt);
    let mut sum = vec![0.0; dt];
    for (i, e) in eps.iter_rows().enumerate() {
        per_draw(kind, target, &q, e, i, &mut ws, &mut term)?;
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
    }
    let n = eps.rows() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(GradEstimate {
        grad: sum,
        estimator_kind: kind,
        batch_size: eps.rows(),
    })
}

pub fn grad_score(
    target: &TargetModel,
    proposal: &ProposalFamily,
    theta: &Theta,
    eps: &Matrix,
) -> Result<GradEstimate> {
    estimate(EstimatorKind::Score, target, proposal, theta, eps)
}

pub fn grad_pathwise(
    target: &TargetModel,
    proposal: &ProposalFamily,
    theta: &Theta,
    eps: &Matrix,
) -> Result<GradEstimate> {
    estimate(EstimatorKind::Pathwise, target, proposal, theta, eps)
}

pub fn grad_paper_literal(
    target: &TargetModel,
    proposal: &ProposalFamily,
    theta: &Theta,
    eps: &Matrix,
) -> Result<GradEstimate> {
    estimate(EstimatorKind::PaperLiteral, target, proposal, theta, eps)
}

/// Rescales to Euclidean norm `max_norm` when exceeded. `None` is the identity.
pub fn clip(grad: GradEstimate, max_norm: Option<f64>) -> GradEstimate {
    let Some(max_norm) = max_norm else {
        return grad;
    };
    let n = grad.norm();
    if n <= max_norm || n == 0.0 {
        return grad;
    }
    let s = max_norm / n;
    GradEstimate {
        grad: grad.grad.iter().map(|g| g * s).collect(),
        ..grad
    }
}
