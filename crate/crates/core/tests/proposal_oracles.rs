//! Proposal families against independent oracles: statrs CDFs, finite
//! differences and Monte Carlo moments.

use oais_core::model::{FamilyKind, ProposalFamily, Theta};
use oais_core::rng::SeededStream;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

fn families(d: usize) -> Vec<ProposalFamily> {
    vec![
        ProposalFamily::gaussian_mean(d),
        ProposalFamily::gaussian_meanchol(d),
        ProposalFamily::student_t(d, 5.0).unwrap(),
    ]
}

fn random_theta(fam: &ProposalFamily, rng: &mut SeededStream) -> Theta {
    let v = (0..fam.dim_theta()).map(|_| 0.5 * rng.normal()).collect();
    Theta::new(v).unwrap()
}

fn random_x(d: usize, rng: &mut SeededStream) -> Vec<f64> {
    (0..d).map(|_| 1.5 * rng.normal()).collect()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Central difference with step `h` along coordinate `i`.
fn central<F: Fn(&[f64]) -> f64>(f: F, at: &[f64], i: usize, h: f64) -> f64 {
    let mut p = at.to_vec();
    let mut m = at.to_vec();
    p[i] += h;
    m[i] -= h;
    (f(&p) - f(&m)) / (2.0 * h)
}

#[test]
fn pushed_samples_pass_ks_against_reference_cdf() {
    let n = 100_000;
    let crit = 1.628 / (n as f64).sqrt(); // 1% level
    let (mu, sigma) = (0.7, 1.6);
    for fam in families(1) {
        let theta = match fam.kind() {
            FamilyKind::GaussianMean => Theta::new(vec![mu]).unwrap(),
            _ => fam.pack(&[mu], &[sigma]).unwrap(),
        };
        let cdf: Box<dyn Fn(f64) -> f64> = match fam.kind() {
            FamilyKind::GaussianMean => {
                let d = Normal::new(mu, 1.0).unwrap();
                Box::new(move |x| d.cdf(x))
            }
            FamilyKind::GaussianMeanChol => {
                let d = Normal::new(mu, sigma).unwrap();
                Box::new(move |x| d.cdf(x))
            }
            FamilyKind::StudentTLocScale { nu } => {
                let d = StudentsT::new(mu, sigma, nu).unwrap();
                Box::new(move |x| d.cdf(x))
            }
        };
        let mut rng = SeededStream::new(11);
        let eps = fam.sample_eps(&mut rng, n);
        let mut xs: Vec<f64> = eps
            .iter_rows()
            .map(|e| fam.push_forward(&theta, e).unwrap()[0])
            .collect();
        xs.sort_by(f64::total_cmp);
        let dmax = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(dmax < crit, "{:?}: KS D = {dmax} >= {crit}", fam.kind());
    }
}

#[test]
fn score_grad_x_and_jacobian_match_finite_differences() {
    let mut rng = SeededStream::new(3);
    let h = 1e-5;
    for fam in families(2) {
        for _ in 0..20 {
            let theta = random_theta(&fam, &mut rng);
            let x = random_x(2, &mut rng);

            let score = fam.score_theta(&theta, &x).unwrap();
            for (i, s) in score.iter().enumerate() {
                let fd = central(
                    |t| fam.log_density(&Theta::new(t.to_vec()).unwrap(), &x).unwrap(),
                    theta.as_slice(),
                    i,
                    h,
                );
                assert!(rel_close(*s, fd, 1e-5), "{:?} score[{i}]: {s} vs {fd}", fam.kind());
            }

            let gx = fam.grad_x_log_density(&theta, &x).unwrap();
            for (i, g) in gx.iter().enumerate() {
                let fd = central(|y| fam.log_density(&theta, y).unwrap(), &x, i, h);
                assert!(rel_close(*g, fd, 1e-5), "{:?} grad_x[{i}]: {g} vs {fd}", fam.kind());
            }

            let mut eps = vec![0.0; fam.dim_eps()];
            fam.fill_eps(&mut rng, &mut eps);
            let jac = fam.pathwise_jacobian(&theta, &eps).unwrap();
            for r in 0..2 {
                for c in 0..fam.dim_theta() {
                    let fd = central(
                        |t| fam.push_forward(&Theta::new(t.to_vec()).unwrap(), &eps).unwrap()[r],
                        theta.as_slice(),
                        c,
                        h,
                    );
                    assert!(
                        rel_close(jac.get(r, c), fd, 1e-5),
                        "{:?} J[{r},{c}]: {} vs {fd}",
                        fam.kind(),
                        jac.get(r, c)
                    );
                }
            }
        }
    }
}

#[test]
fn score_has_zero_mean_under_q() {
    let n = 200_000;
    let mut rng = SeededStream::new(5);
    for fam in families(2) {
        let theta = random_theta(&fam, &mut rng);
        let eps = fam.sample_eps(&mut rng, n);
        let dt = fam.dim_theta();
        let mut sum = vec![0.0; dt];
        let mut sq = vec![0.0; dt];
        for e in eps.iter_rows() {
            let x = fam.push_forward(&theta, e).unwrap();
            for (j, s) in fam.score_theta(&theta, &x).unwrap().into_iter().enumerate() {
                sum[j] += s;
                sq[j] += s * s;
            }
        }
        for j in 0..dt {
            let m = sum[j] / n as f64;
            let se = ((sq[j] / n as f64 - m * m) / n as f64).sqrt();
            assert!(m.abs() < 4.0 * se, "{:?} E[score_{j}] = {m} (se {se})", fam.kind());
        }
    }
}

#[test]
fn base_noise_moments() {
    let n = 1_000_000;
    let mut rng = SeededStream::new(17);
    let fam = ProposalFamily::student_t(2, 4.0).unwrap();
    let eps = fam.sample_eps(&mut rng, n);
    for c in 0..3 {
        let (m, v, _) = oais_core::numeric::mean_var(eps.iter_rows().map(|r| r[c]));
        let (em, ev) = if c < 2 { (0.0, 1.0) } else { (4.0, 8.0) };
        let se_m = (ev / n as f64).sqrt();
        assert!((m - em).abs() < 4.0 * se_m, "column {c}: mean {m}");
        assert!((v / ev - 1.0).abs() < 0.01, "column {c}: var {v}");
    }
    let c01: f64 = eps.iter_rows().map(|r| r[0] * r[1]).sum::<f64>() / n as f64;
    assert!(c01.abs() < 4.0 / (n as f64).sqrt());
}
