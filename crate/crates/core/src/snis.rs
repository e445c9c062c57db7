//! Self-normalized importance sampling in the log domain.
//!
//! Unnormalized weights `W = Π / q_θ` are never formed directly; every
//! quantity below is computed from `log W` through log-sum-exp.

use crate::error::{OaisError, Result};
use crate::matrix::Matrix;
use crate::model::{FrozenProposal, ProposalFamily, TargetModel, Theta};
use crate::numeric::{log_sum_exp, log_sum_exp_scaled, KahanSum};

/// Samples with their unnormalized log-weights and normalized weights.
#[derive(Clone, Debug)]
pub struct WeightedEnsemble {
    samples: Matrix,
    log_w_unnorm: Vec<f64>,
    w_norm: Vec<f64>,
}

impl WeightedEnsemble {
    pub fn new(samples: Matrix, log_w_unnorm: Vec<f64>) -> Result<Self> {
        if samples.rows() != log_w_unnorm.len() {
            return Err(OaisError::dims("log-weights", samples.rows(), log_w_unnorm.len()));
        }
        let w_norm = normalize(&log_w_unnorm)?;
        Ok(Self {
            samples,
            log_w_unnorm,
            w_norm,
        })
    }

    /// Draws nothing; weights the given samples against `target` under `q_θ`.
    pub fn weigh(
        target: &TargetModel,
        proposal: &ProposalFamily,
        theta: &Theta,
        samples: Matrix,
    ) -> Result<Self> {
        let lw = log_weights(target, proposal, theta, &samples)?;
        Self::new(samples, lw)
    }

    pub fn len(&self) -> usize {
        self.w_norm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w_norm.is_empty()
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn log_w_unnorm(&self) -> &[f64] {
        &self.log_w_unnorm
    }

    pub fn w_norm(&self) -> &[f64] {
        &self.w_norm
    }

    pub fn diagnostics(&self) -> Result<Diagnostics> {
        diagnostics(&self.log_w_unnorm)
    }
}

/// `log Π(x_i) - log q_θ(x_i)` for each row of `samples`.
pub fn log_weights(
    target: &TargetModel,
    proposal: &ProposalFamily,
    theta: &Theta,
    samples: &Matrix,
) -> Result<Vec<f64>> {
    let q = proposal.freeze(theta)?;
    log_weights_frozen(target, &q, samples)
}

pub fn log_weights_frozen(
    target: &TargetModel,
    q: &FrozenProposal,
    samples: &Matrix,
) -> Result<Vec<f64>> {
    if samples.cols() != target.dim_x() || samples.cols() != q.dim_x() {
        return Err(OaisError::dims("samples", target.dim_x(), samples.cols()));
    }
    samples
        .iter_rows()
        .enumerate()
        .map(|(i, x)| log_weight_at(target, q, x, i))
        .collect()
}

/// Zero target density gives a `-inf` log-weight; anything else non-finite is
/// an error naming the sample.
#[inline]
pub(crate) fn log_weight_at(
    target: &TargetModel,
    q: &FrozenProposal,
    x: &[f64],
    index: usize,
) -> Result<f64> {
    let lp = target.log_unnorm(x);
    if lp.is_nan() || lp == f64::INFINITY {
        return Err(OaisError::NonFiniteLogDensity {
            index,
            detail: format!("log target = {lp}"),
        });
    }
    let lq = q.log_density(x);
    if !lq.is_finite() {
        return Err(OaisError::NonFiniteLogDensity {
            index,
            detail: format!("log proposal = {lq}"),
        });
    }
    Ok(lp - lq)
}

/// Softmax of `log_w`.
pub fn normalize(log_w: &[f64]) -> Result<Vec<f64>> {
    if let Some(index) = log_w.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(OaisError::NonFiniteValue { what: "log-weights", index });
    }
    let lse = log_sum_exp(log_w);
    if lse == f64::NEG_INFINITY {
        return Err(OaisError::DegenerateEnsemble);
    }
    Ok(log_w.iter().map(|&v| (v - lse).exp()).collect())
}

/// `Σ_i w_i φ_i / Σ_i w_i` over normalized weights. Dividing by the
/// computed weight sum makes a constant `φ` exact despite rounding in `w`.
pub(crate) fn weighted_average(w: &[f64], values: impl IntoIterator<Item = f64>) -> f64 {
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for (wi, v) in w.iter().zip(values) {
        num.add(wi * v);
        den.add(*wi);
    }
    num.value() / den.value()
}

/// `Σ_i w_i φ(x_i)`.
pub fn snis_estimate<F>(ensemble: &WeightedEnsemble, phi: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut values = Vec::with_capacity(ensemble.len());
    for (i, x) in ensemble.samples.iter_rows().enumerate() {
        let v = phi(x);
        if !v.is_finite() {
            return Err(OaisError::NonFiniteValue { what: "test function", index: i });
        }
        values.push(v);
    }
    Ok(weighted_average(&ensemble.w_norm, values))
}

/// Weight-based diagnostics of one ensemble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    /// `1 / Σ w_i²`, in `[1, N]`.
    pub ess: f64,
    /// `(1/N) Σ W_i²`, estimates `R(θ)`.
    pub r_hat: f64,
    /// `N Σ W_i² / (Σ W_i)²`, estimates `ρ(θ)`; at least 1.
    pub rho_hat: f64,
    /// `(1/N) Σ W_i`, estimates `Z_π`.
    pub z_hat: f64,
}

pub fn diagnostics(log_w: &[f64]) -> Result<Diagnostics> {
    if let Some(index) = log_w.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(OaisError::NonFiniteValue { what: "log-weights", index });
    }
    let n = log_w.len() as f64;
    let lse1 = log_sum_exp(log_w);
    if lse1 == f64::NEG_INFINITY {
        return Err(OaisError::DegenerateEnsemble);
    }
    let lse2 = log_sum_exp_scaled(log_w, 2.0);
    let ln_n = n.ln();
    // Cauchy-Schwarz gives rho >= 1; clamp away rounding below it.
    let log_rho = (lse2 + ln_n - 2.0 * lse1).max(0.0);
    let rho_hat = log_rho.exp();
    Ok(Diagnostics {
        ess: n / rho_hat,
        r_hat: (lse2 - ln_n).exp(),
        rho_hat,
        z_hat: (lse1 - ln_n).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[0.0; 4]).unwrap(), vec![0.25; 4]);
        let ln2 = 2f64.ln();
        let w = normalize(&[ln2, ln2, f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap();
        assert_eq!(w, vec![0.5, 0.5, 0.0, 0.0]);
        let w = normalize(&[1000.0, 1000.0 + 3f64.ln()]).unwrap();
        // ln 3 is only resolved to ~1e-13 next to 1000
        assert!((w[0] - 0.25).abs() < 1e-12 && (w[1] - 0.75).abs() < 1e-12);
        assert!(matches!(
            normalize(&[f64::NEG_INFINITY; 3]),
            Err(OaisError::DegenerateEnsemble)
        ));
    }

    #[test]
    fn diagnostics_examples() {
        let d = diagnostics(&[0.0; 5]).unwrap();
        assert_eq!((d.rho_hat, d.ess, d.z_hat, d.r_hat), (1.0, 5.0, 1.0, 1.0));
        let ln2 = 2f64.ln();
        let d = diagnostics(&[ln2, ln2, f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap();
        assert!((d.rho_hat - 2.0).abs() < 1e-14);
        assert!((d.ess - 2.0).abs() < 1e-14);
        assert!((d.z_hat - 1.0).abs() < 1e-14);
        assert!((d.r_hat - 2.0).abs() < 1e-14);
    }

    #[test]
    fn log_weight_examples() {
        let fam = ProposalFamily::gaussian_meanchol(1);
        let theta = fam.pack(&[0.3], &[1.4]).unwrap();
        let samples = Matrix::from_rows(&[[0.0], [1.0], [-2.5]]);

        let same = TargetModel::from_proposal(&fam, &theta, 0.0).unwrap();
        let lw = log_weights(&same, &fam, &theta, &samples).unwrap();
        assert!(lw.iter().all(|v| v.abs() < 1e-14));

        let scaled = TargetModel::from_proposal(&fam, &theta, 3f64.ln()).unwrap();
        let lw = log_weights(&scaled, &fam, &theta, &samples).unwrap();
        assert!(lw.iter().all(|v| (v - 3f64.ln()).abs() < 1e-14));

        // Π = exp(-x²/2), q = N(0, 2) at x = 0: 0 - log(1/sqrt(4π))
        let target = TargetModel::gaussian(vec![0.0], vec![1.0]).unwrap();
        let q = fam.pack(&[0.0], &[2f64.sqrt()]).unwrap();
        let lw = log_weights(&target, &fam, &q, &Matrix::from_rows(&[[0.0]])).unwrap();
        assert!((lw[0] - 0.5 * (4.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn zero_target_density_keeps_sample_with_zero_weight() {
        let fam = ProposalFamily::gaussian_mean(1);
        let target = TargetModel::from_fn("half-line", 1, |x| {
            if x[0] > 0.0 { 0.0 } else { f64::NEG_INFINITY }
        })
        .unwrap();
        let theta = Theta::zeros(1);
        let ens = WeightedEnsemble::weigh(&target, &fam, &theta, Matrix::from_rows(&[[1.0], [-1.0]])).unwrap();
        assert_eq!(ens.len(), 2);
        assert_eq!(ens.w_norm(), &[1.0, 0.0]);
    }

    #[test]
    fn nan_target_is_reported_with_index() {
        let fam = ProposalFamily::gaussian_mean(1);
        let target = TargetModel::from_fn("bad", 1, |x| if x[0] > 2.0 { f64::NAN } else { 0.0 }).unwrap();
        let err = log_weights(&target, &fam, &Theta::zeros(1), &Matrix::from_rows(&[[0.0], [3.0]]))
            .unwrap_err();
        assert!(matches!(err, OaisError::NonFiniteLogDensity { index: 1, .. }));
    }

    #[test]
    fn snis_examples() {
        let samples = Matrix::from_rows(&[[1.0], [2.0], [5.0]]);
        let ens = WeightedEnsemble::new(samples, vec![0.3, -1.0, 2.0]).unwrap();
        assert!((snis_estimate(&ens, |_| 7.0).unwrap() - 7.0).abs() < 1e-14);
        let one = WeightedEnsemble::new(Matrix::from_rows(&[[4.2]]), vec![-3.0]).unwrap();
        assert_eq!(snis_estimate(&one, |x| x[0] * x[0]).unwrap(), 4.2 * 4.2);
        assert!(matches!(
            snis_estimate(&ens, |x| if x[0] > 4.0 { f64::INFINITY } else { 0.0 }),
            Err(OaisError::NonFiniteValue { index: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn rho_hat_at_least_one(lw in prop::collection::vec(-50.0f64..50.0, 1..64)) {
            let d = diagnostics(&lw).unwrap();
            prop_assert!(d.rho_hat >= 1.0);
            prop_assert!(d.ess <= lw.len() as f64 * (1.0 + 1e-12));
            prop_assert!(d.ess >= 1.0 - 1e-12);
        }

        #[test]
        fn normalize_sums_to_one_and_is_shift_invariant(
            lw in prop::collection::vec(-300.0f64..300.0, 1..64),
            shift in -500.0f64..500.0,
        ) {
            let w = normalize(&lw).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|v| *v >= 0.0));
            let shifted: Vec<f64> = lw.iter().map(|v| v + shift).collect();
            let ws = normalize(&shifted).unwrap();
            for (a, b) in w.iter().zip(&ws) {
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300) + 1e-300);
            }
        }

        #[test]
        fn estimate_invariant_to_target_rescaling(
            lw in prop::collection::vec(-20.0f64..20.0, 1..32),
            log_c in -100.0f64..100.0,
        ) {
            let n = lw.len();
            let xs: Vec<[f64; 1]> = (0..n).map(|i| [i as f64 * 0.37 - 2.0]).collect();
            let a = WeightedEnsemble::new(Matrix::from_rows(&xs), lw.clone()).unwrap();
            let b = WeightedEnsemble::new(Matrix::from_rows(&xs), lw.iter().map(|v| v + log_c).collect()).unwrap();
            let ea = snis_estimate(&a, |x| x[0].tanh()).unwrap();
            let eb = snis_estimate(&b, |x| x[0].tanh()).unwrap();
            prop_assert!((ea - eb).abs() < 1e-12);
        }
    }
}
