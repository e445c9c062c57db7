//! Reparameterizable proposal families `x = g_θ(ε)`, `ε ~ r_ε`.
//!
//! Parameter layout, for dimension `d`:
//!
//! * `gaussian-mean`: `θ = μ` (`d` entries), unit covariance.
//! * `gaussian-meanchol`, `student-t-locscale`: `θ = [μ, vech(L)]` where
//!   `vech` walks the lower triangle row by row, `(0,0), (1,0), (1,1), ...`,
//!   and diagonal entries are stored as `log L_ii`. Any real vector is a
//!   valid parameter.
//!
//! The student-t base noise is `ε = (z_1..z_d, u)` with `z ~ N(0, I)` and
//! `u ~ χ²(ν)`, and `g_θ(ε) = μ + L z / sqrt(u / ν)`. Since `u` is part of
//! `ε`, nothing random depends on θ except through `g_θ`.

use std::f64::consts::PI;

use smallvec::SmallVec;
use statrs::function::gamma::ln_gamma;

use crate::error::{OaisError, Result};
use crate::matrix::Matrix;
use crate::rng::SeededStream;

pub const DEFAULT_NU: f64 = 5.0;

type Buf = SmallVec<[f64; 8]>;

/// A point in the unconstrained parameter space `ℝ^{d_θ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Theta(Vec<f64>);

impl Theta {
    /// Fails on non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(OaisError::NonFiniteValue { what: "theta", index });
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        crate::numeric::norm(&self.0)
    }
}

impl AsRef<[f64]> for Theta {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FamilyKind {
    GaussianMean,
    GaussianMeanChol,
    StudentTLocScale { nu: f64 },
}

impl FamilyKind {
    /// Parses `gaussian-mean`, `gaussian-meanchol` or `student-t-locscale`.
    pub fn parse(id: &str, nu: Option<f64>) -> Result<Self> {
        match id {
            "gaussian-mean" => Ok(Self::GaussianMean),
            "gaussian-meanchol" => Ok(Self::GaussianMeanChol),
            "student-t-locscale" => Ok(Self::StudentTLocScale {
                nu: nu.unwrap_or(DEFAULT_NU),
            }),
            other => Err(OaisError::Config(format!("unknown proposal family `{other}`"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::GaussianMean => "gaussian-mean",
            Self::GaussianMeanChol => "gaussian-meanchol",
            Self::StudentTLocScale { .. } => "student-t-locscale",
        }
    }
}

#[inline]
fn tri_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProposalFamily {
    kind: FamilyKind,
    dim_x: usize,
}

impl ProposalFamily {
    pub fn new(kind: FamilyKind, dim_x: usize) -> Result<Self> {
        if dim_x == 0 {
            return Err(OaisError::InvalidArgument("proposal dimension must be >= 1".into()));
        }
        if let FamilyKind::StudentTLocScale { nu } = kind {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(OaisError::InvalidArgument(format!(
                    "student-t degrees of freedom must be positive, got {nu}"
                )));
            }
        }
        Ok(Self { kind, dim_x })
    }

    pub fn gaussian_mean(dim_x: usize) -> Self {
        Self::new(FamilyKind::GaussianMean, dim_x).expect("dim_x >= 1")
    }

    pub fn gaussian_meanchol(dim_x: usize) -> Self {
        Self::new(FamilyKind::GaussianMeanChol, dim_x).expect("dim_x >= 1")
    }

    pub fn student_t(dim_x: usize, nu: f64) -> Result<Self> {
        Self::new(FamilyKind::StudentTLocScale { nu }, dim_x)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_theta(&self) -> usize {
        let d = self.dim_x;
        match self.kind {
            FamilyKind::GaussianMean => d,
            _ => d + d * (d + 1) / 2,
        }
    }

    pub fn dim_eps(&self) -> usize {
        match self.kind {
            FamilyKind::StudentTLocScale { .. } => self.dim_x + 1,
            _ => self.dim_x,
        }
    }

    /// Packs a mean and a lower-triangular factor (row-major `d x d`, strictly
    /// positive diagonal) into the unconstrained layout.
    pub fn pack(&self, mean: &[f64], chol: &[f64]) -> Result<Theta> {
        let d = self.dim_x;
        check_len("mean", d, mean.len())?;
        if matches!(self.kind, FamilyKind::GaussianMean) {
            return Theta::new(mean.to_vec());
        }
        check_len("cholesky factor", d * d, chol.len())?;
        let mut v = mean.to_vec();
        for i in 0..d {
            for j in 0..=i {
                let l = chol[i * d + j];
                if i == j {
                    if !(l > 0.0) {
                        return Err(OaisError::InvalidArgument(
                            "cholesky diagonal must be positive".into(),
                        ));
                    }
                    v.push(l.ln());
                } else {
                    v.push(l);
                }
            }
        }
        Theta::new(v)
    }

    /// Unpacks θ once so that many densities or pushes can reuse it.
    pub fn freeze(&self, theta: &Theta) -> Result<FrozenProposal> {
        FrozenProposal::new(self, theta.as_slice())
    }

    pub fn sample_eps(&self, rng: &mut SeededStream, n: usize) -> Matrix {
        let mut eps = Matrix::zeros(n, self.dim_eps());
        for i in 0..n {
            self.fill_eps(rng, eps.row_mut(i));
        }
        eps
    }

    /// Draws one base-noise vector into `row` (length `dim_eps`).
    #[inline]
    pub fn fill_eps(&self, rng: &mut SeededStream, row: &mut [f64]) {
        let d = self.dim_x;
        rng.fill_normal(&mut row[..d]);
        if let FamilyKind::StudentTLocScale { nu } = self.kind {
            row[d] = rng.chi_square(nu);
        }
    }

    pub fn push_forward(&self, theta: &Theta, eps: &[f64]) -> Result<Vec<f64>> {
        let q = self.freeze(theta)?;
        q.check_eps(eps)?;
        let mut x = vec![0.0; self.dim_x];
        q.push_forward_into(eps, &mut x);
        Ok(x)
    }

    pub fn log_density(&self, theta: &Theta, x: &[f64]) -> Result<f64> {
        let q = self.freeze(theta)?;
        check_len("x", self.dim_x, x.len())?;
        Ok(q.log_density(x))
    }

    /// `∇_θ log q_θ(x)`.
    pub fn score_theta(&self, theta: &Theta, x: &[f64]) -> Result<Vec<f64>> {
        let q = self.freeze(theta)?;
        check_len("x", self.dim_x, x.len())?;
        let mut out = vec![0.0; self.dim_theta()];
        q.score_into(x, &mut out);
        Ok(out)
    }

    /// `∇_x log q_θ(x)`.
    pub fn grad_x_log_density(&self, theta: &Theta, x: &[f64]) -> Result<Vec<f64>> {
        let q = self.freeze(theta)?;
        check_len("x", self.dim_x, x.len())?;
        let mut out = vec![0.0; self.dim_x];
        q.grad_x_into(x, &mut out);
        Ok(out)
    }

    /// Dense `d_x x d_θ` Jacobian `∂g_θ(ε)/∂θ`.
    pub fn pathwise_jacobian(&self, theta: &Theta, eps: &[f64]) -> Result<Matrix> {
        let q = self.freeze(theta)?;
        q.check_eps(eps)?;
        let (dx, dt) = (self.dim_x, self.dim_theta());
        let mut jac = Matrix::zeros(dx, dt);
        let mut e = vec![0.0; dx];
        let mut col = vec![0.0; dt];
        for i in 0..dx {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[i] = 1.0;
            q.jacobian_t_apply(eps, &e, &mut col);
            jac.row_mut(i).copy_from_slice(&col);
        }
        Ok(jac)
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(OaisError::dims(what, expected, got))
    }
}

/// A family member with θ already unpacked into `(μ, L)`.
#[derive(Clone, Debug)]
pub struct FrozenProposal {
    kind: FamilyKind,
    d: usize,
    dim_theta: usize,
    mu: Buf,
    // row-major d x d, lower triangle populated
    chol: Buf,
    log_det_chol: f64,
    log_norm: f64,
}

impl FrozenProposal {
    fn new(family: &ProposalFamily, theta: &[f64]) -> Result<Self> {
        let d = family.dim_x;
        check_len("theta", family.dim_theta(), theta.len())?;
        let mu: Buf = theta[..d].iter().copied().collect();
        let mut chol: Buf = SmallVec::from_elem(0.0, d * d);
        let mut log_det = 0.0;
        match family.kind {
            FamilyKind::GaussianMean => {
                for i in 0..d {
                    chol[i * d + i] = 1.0;
                }
            }
            _ => {
                for i in 0..d {
                    for j in 0..=i {
                        let v = theta[d + tri_index(i, j)];
                        if i == j {
                            chol[i * d + i] = v.exp();
                            log_det += v;
                        } else {
                            chol[i * d + j] = v;
                        }
                    }
                }
            }
        }
        if let Some(index) = theta.iter().position(|v| !v.is_finite()) {
            return Err(OaisError::NonFiniteValue { what: "theta", index });
        }
        let df = d as f64;
        let log_norm = match family.kind {
            FamilyKind::StudentTLocScale { nu } => {
                ln_gamma(0.5 * (nu + df)) - ln_gamma(0.5 * nu) - 0.5 * df * (nu * PI).ln()
            }
            _ => -0.5 * df * (2.0 * PI).ln(),
        };
        Ok(Self {
            kind: family.kind,
            d,
            dim_theta: family.dim_theta(),
            mu,
            chol,
            log_det_chol: log_det,
            log_norm,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.d
    }

    pub fn dim_theta(&self) -> usize {
        self.dim_theta
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn chol_row(&self, i: usize) -> &[f64] {
        &self.chol[i * self.d..(i + 1) * self.d]
    }

    fn check_eps(&self, eps: &[f64]) -> Result<()> {
        let want = match self.kind {
            FamilyKind::StudentTLocScale { .. } => self.d + 1,
            _ => self.d,
        };
        check_len("eps", want, eps.len())?;
        if let FamilyKind::StudentTLocScale { .. } = self.kind {
            if !(eps[self.d] > 0.0) {
                return Err(OaisError::InvalidArgument(
                    "student-t auxiliary chi-square coordinate must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// `y` such that `g_θ(ε) = μ + L y`.
    #[inline]
    fn standard_coords(&self, eps: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&eps[..self.d]);
        if let FamilyKind::StudentTLocScale { nu } = self.kind {
            let s = (eps[self.d] / nu).sqrt().recip();
            y.iter_mut().for_each(|v| *v *= s);
        }
    }

    #[inline]
    pub fn push_forward_into(&self, eps: &[f64], out: &mut [f64]) {
        let d = self.d;
        if let FamilyKind::GaussianMean = self.kind {
            for i in 0..d {
                out[i] = self.mu[i] + eps[i];
            }
            return;
        }
        let mut y: Buf = SmallVec::from_elem(0.0, d);
        self.standard_coords(eps, &mut y);
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i + 1];
            out[i] = self.mu[i] + row.iter().zip(&y[..=i]).map(|(l, v)| l * v).sum::<f64>();
        }
    }

    /// Solves `L z = x - μ` by forward substitution.
    #[inline]
    fn whiten(&self, x: &[f64], z: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            let mut acc = x[i] - self.mu[i];
            for j in 0..i {
                acc -= self.chol[i * d + j] * z[j];
            }
            z[i] = acc / self.chol[i * d + i];
        }
    }

    /// Solves `Lᵀ a = z` by back substitution.
    #[inline]
    fn back_solve(&self, z: &[f64], a: &mut [f64]) {
        let d = self.d;
        for i in (0..d).rev() {
            let mut acc = z[i];
            for k in i + 1..d {
                acc -= self.chol[k * d + i] * a[k];
            }
            a[i] = acc / self.chol[i * d + i];
        }
    }

    /// Radial factor of `∇ log q` w.r.t. the whitened residual: 1 for the
    /// Gaussian families, `(ν + d) / (ν + |z|²)` for student-t.
    #[inline]
    fn radial(&self, z2: f64) -> f64 {
        match self.kind {
            FamilyKind::StudentTLocScale { nu } => (nu + self.d as f64) / (nu + z2),
            _ => 1.0,
        }
    }

    #[inline]
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut z: Buf = SmallVec::from_elem(0.0, self.d);
        self.whiten(x, &mut z);
        let z2: f64 = z.iter().map(|v| v * v).sum();
        let kernel = match self.kind {
            FamilyKind::StudentTLocScale { nu } => -0.5 * (nu + self.d as f64) * (z2 / nu).ln_1p(),
            _ => -0.5 * z2,
        };
        self.log_norm - self.log_det_chol + kernel
    }

    /// Returns `(z, a = L⁻ᵀ z, radial factor)` at `x`.
    #[inline]
    fn residuals(&self, x: &[f64]) -> (Buf, Buf, f64) {
        let mut z: Buf = SmallVec::from_elem(0.0, self.d);
        let mut a: Buf = SmallVec::from_elem(0.0, self.d);
        self.whiten(x, &mut z);
        self.back_solve(&z, &mut a);
        let z2: f64 = z.iter().map(|v| v * v).sum();
        let s = self.radial(z2);
        (z, a, s)
    }

    #[inline]
    pub fn grad_x_into(&self, x: &[f64], out: &mut [f64]) {
        let (_, a, s) = self.residuals(x);
        for (o, ai) in out.iter_mut().zip(&a) {
            *o = -s * ai;
        }
    }

    #[inline]
    pub fn score_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        let (z, a, s) = self.residuals(x);
        for i in 0..d {
            out[i] = s * a[i];
        }
        if let FamilyKind::GaussianMean = self.kind {
            return;
        }
        for i in 0..d {
            for j in 0..i {
                out[d + tri_index(i, j)] = s * a[i] * z[j];
            }
            out[d + tri_index(i, i)] = s * a[i] * z[i] * self.chol[i * d + i] - 1.0;
        }
    }

    /// `out = Jᵀ v` with `J = ∂g_θ(ε)/∂θ` (`v` has length `d_x`).
    #[inline]
    pub fn jacobian_t_apply(&self, eps: &[f64], v: &[f64], out: &mut [f64]) {
        let d = self.d;
        out[..d].copy_from_slice(&v[..d]);
        if let FamilyKind::GaussianMean = self.kind {
            return;
        }
        let mut y: Buf = SmallVec::from_elem(0.0, d);
        self.standard_coords(eps, &mut y);
        for i in 0..d {
            for j in 0..i {
                out[d + tri_index(i, j)] = v[i] * y[j];
            }
            out[d + tri_index(i, i)] = v[i] * self.chol[i * d + i] * y[i];
        }
    }
}
