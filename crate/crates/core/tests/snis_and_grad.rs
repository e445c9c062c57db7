//! Importance sampling and gradient estimators against quadrature and
//! closed-form oracles.

use oais_core::grad::{grad_samples, EstimatorKind};
use oais_core::model::{ProposalFamily, TargetModel, Theta};
use oais_core::numeric::mean_var;
use oais_core::oracle::{quad_grad_r, quad_rho, quad_z, QuadratureSpec};
use oais_core::rng::SeededStream;
use oais_core::snis::{diagnostics, WeightedEnsemble};
use oais_core::Matrix;

fn std_normal() -> TargetModel {
    TargetModel::gaussian(vec![0.0], vec![1.0]).unwrap()
}

/// `ρ` for `π = N(0,1)` and `q = N(μ, s²)`.
fn closed_form_rho(mu: f64, s2: f64) -> f64 {
    s2 / (2.0 * s2 - 1.0).sqrt() * (mu * mu / (2.0 * s2 - 1.0)).exp()
}

fn ensemble(fam: &ProposalFamily, theta: &Theta, target: &TargetModel, n: usize, rng: &mut SeededStream) -> WeightedEnsemble {
    let eps = fam.sample_eps(rng, n);
    let mut xs = Matrix::zeros(n, fam.dim_x());
    for (i, e) in eps.iter_rows().enumerate() {
        let x = fam.push_forward(theta, e).unwrap();
        xs.row_mut(i).copy_from_slice(&x);
    }
    WeightedEnsemble::weigh(target, fam, theta, xs).unwrap()
}

#[test]
fn quad_rho_matches_closed_form() {
    let t = std_normal();
    let spec = QuadratureSpec::for_target(&t).unwrap();
    let fam = ProposalFamily::gaussian_meanchol(1);
    for (mu, s2) in [(0.0, 2.0), (1.0, 2.0), (-0.5, 0.8), (2.0, 3.0)] {
        let theta = fam.pack(&[mu], &[f64::sqrt(s2)]).unwrap();
        let q = quad_rho(&t, &fam, &theta, &spec).unwrap();
        let c = closed_form_rho(mu, s2);
        assert!((q / c - 1.0).abs() < 1e-8, "mu={mu} s2={s2}: {q} vs {c}");
    }
}

#[test]
fn z_hat_is_unbiased_and_rho_hat_consistent() {
    let t = std_normal();
    let fam = ProposalFamily::gaussian_meanchol(1);
    let theta = fam.pack(&[0.5], &[1.3]).unwrap();
    let z = (2.0 * std::f64::consts::PI).sqrt();
    let mut rng = SeededStream::new(1);
    let zs: Vec<f64> = (0..2000)
        .map(|_| diagnostics(ensemble(&fam, &theta, &t, 50, &mut rng).log_w_unnorm()).unwrap().z_hat)
        .collect();
    let (m, v, n) = mean_var(zs);
    assert!((m - z).abs() < 4.0 * (v / n as f64).sqrt(), "mean z_hat {m} vs {z}");

    let big = ensemble(&fam, &theta, &t, 400_000, &mut rng);
    let d = big.diagnostics().unwrap();
    let exact = closed_form_rho(0.5, 1.69);
    assert!((d.rho_hat / exact - 1.0).abs() < 0.02, "{} vs {exact}", d.rho_hat);
    assert!((d.ess - 400_000.0 / d.rho_hat).abs() < 1e-6 * d.ess);
}

#[test]
fn fixed_proposal_mse_and_bias_respect_bounds() {
    let t = std_normal();
    let spec = QuadratureSpec::for_target(&t).unwrap();
    let fam = ProposalFamily::gaussian_meanchol(1);
    let truth = 0.0; // E_π[tanh] by symmetry
    let mut rng = SeededStream::new(2);
    for (mu, sd) in [(1.0, 2f64.sqrt()), (0.0, 1.5)] {
        let theta = fam.pack(&[mu], &[sd]).unwrap();
        let rho = quad_rho(&t, &fam, &theta, &spec).unwrap();
        for n in [20, 200] {
            let reps = 1000;
            let errs: Vec<f64> = (0..reps)
                .map(|_| {
                    let ens = ensemble(&fam, &theta, &t, n, &mut rng);
                    oais_core::snis::snis_estimate(&ens, |x| x[0].tanh()).unwrap() - truth
                })
                .collect();
            let mse = errs.iter().map(|e| e * e).sum::<f64>() / reps as f64;
            let (bias, var, _) = mean_var(errs.iter().copied());
            assert!(mse <= 4.0 * rho / n as f64, "mse {mse} > {}", 4.0 * rho / n as f64);
            let se = (var / reps as f64).sqrt();
            assert!(bias.abs() <= 12.0 * rho / n as f64 + 4.0 * se);
        }
    }
}

#[test]
fn score_and_pathwise_are_unbiased_in_two_dimensions() {
    let target = TargetModel::gaussian(vec![0.3, -0.2], vec![1.0, 0.8]).unwrap();
    let spec = QuadratureSpec::for_target(&target).unwrap().with_nodes(301);
    let fam = ProposalFamily::gaussian_meanchol(2);
    let theta = fam.pack(&[0.1, 0.0], &[1.2, 0.0, 0.1, 1.1]).unwrap();
    let exact = quad_grad_r(&target, &fam, &theta, &spec, None).unwrap();
    let mut rng = SeededStream::new(8);
    let eps = fam.sample_eps(&mut rng, 100_000);
    let mut means = Vec::new();
    for kind in [EstimatorKind::Score, EstimatorKind::Pathwise] {
        let g = grad_samples(kind, &target, &fam, &theta, &eps).unwrap();
        let mut row = Vec::new();
        for (j, truth) in exact.iter().enumerate() {
            let (m, v, n) = mean_var(g.iter_rows().map(|r| r[j]));
            let se = (v / n as f64).sqrt();
            assert!((m - truth).abs() < 4.0 * se, "{kind} [{j}]: {m} vs {truth} (se {se})");
            row.push((m, se));
        }
        means.push(row);
    }
    for (&(a, sa), &(b, sb)) in means[0].iter().zip(&means[1]) {
        assert!((a - b).abs() < 4.0 * (sa * sa + sb * sb).sqrt());
    }
}

#[test]
fn quadrature_refinement_is_stable() {
    let t = TargetModel::mixture(vec![
        oais_core::model::GaussianComponent::new(0.3, vec![-2.0], vec![0.7]),
        oais_core::model::GaussianComponent::new(0.7, vec![1.5], vec![1.0]),
    ])
    .unwrap();
    let base = QuadratureSpec::for_target(&t).unwrap();
    let coarse = quad_z(&t, &base.clone().with_nodes(1001)).unwrap();
    let fine = quad_z(&t, &base.with_nodes(4001)).unwrap();
    assert!((coarse / fine - 1.0).abs() < 1e-8);
}
