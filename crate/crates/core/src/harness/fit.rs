//! Fitting `c₁ exp(-c₀ η k) + offset` to a decay curve.
//!
//! Levenberg–Marquardt on `(log λ, c₁, offset)` with `λ = c₀ η`, started
//! from every decade of `λ` with `(c₁, offset)` solved linearly at the start
//! point. The lowest sum of squares wins.

use crate::error::{OaisError, Result};

pub const MIN_FIT_POINTS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub c0_hat: f64,
    pub c1_hat: f64,
    pub offset_hat: f64,
    /// RMSE between `log y` and `log model`; NaN if either is non-positive.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug)]
struct Params {
    log_rate: f64,
    c1: f64,
    offset: f64,
}

impl Params {
    #[inline]
    fn eval(&self, k: f64) -> f64 {
        self.c1 * (-self.log_rate.exp() * k).exp() + self.offset
    }
}

fn sse(p: &Params, ks: &[f64], ys: &[f64]) -> f64 {
    ks.iter().zip(ys).map(|(k, y)| (p.eval(*k) - y).powi(2)).sum()
}

/// `(c₁, offset)` by least squares for a fixed rate.
fn linear_start(log_rate: f64, ks: &[f64], ys: &[f64]) -> Params {
    let rate = log_rate.exp();
    let bs: Vec<f64> = ks.iter().map(|k| (-rate * k).exp()).collect();
    let n = ks.len() as f64;
    let mb = bs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sbb: f64 = bs.iter().map(|b| (b - mb).powi(2)).sum();
    let sby: f64 = bs.iter().zip(ys).map(|(b, y)| (b - mb) * (y - my)).sum();
    let c1 = if sbb > 1e-300 { sby / sbb } else { 0.0 };
    Params {
        log_rate,
        c1,
        offset: my - c1 * mb,
    }
}

/// Solves the 3x3 system `a x = b` by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn levenberg_marquardt(mut p: Params, ks: &[f64], ys: &[f64]) -> (Params, f64) {
    let mut cost = sse(&p, ks, ys);
    let mut damping = 1e-3;
    for _ in 0..500 {
        let rate = p.log_rate.exp();
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (k, y) in ks.iter().zip(ys) {
            let e = (-rate * k).exp();
            let r = p.c1 * e + p.offset - y;
            let jrow = [-p.c1 * e * k * rate, e, 1.0];
            for a in 0..3 {
                jtr[a] += jrow[a] * r;
                for b in 0..3 {
                    jtj[a][b] += jrow[a] * jrow[b];
                }
            }
        }
        let mut improved = false;
        while damping < 1e12 {
            let mut lhs = jtj;
            for (a, row) in lhs.iter_mut().enumerate() {
                row[a] += damping * jtj[a][a].max(1e-12);
            }
            let Some(step) = solve3(lhs, [-jtr[0], -jtr[1], -jtr[2]]) else {
                damping *= 4.0;
                continue;
            };
            let cand = Params {
                log_rate: p.log_rate + step[0].clamp(-5.0, 5.0),
                c1: p.c1 + step[1],
                offset: p.offset + step[2],
            };
            let c = sse(&cand, ks, ys);
            if c.is_finite() && c < cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = cand;
                cost = c;
                damping = (damping / 3.0).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            damping *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (p, cost)
}

/// Fits `c₁ exp(-c₀ η k) + offset` to `(k, y)` points.
///
/// A curve that grows rather than decays (fitted `c₁` clearly negative) is
/// reported as [`OaisError::FitFailure`].
pub fn fit_rate(curve: &[(f64, f64)], eta: f64) -> Result<RateFit> {
    if curve.len() < MIN_FIT_POINTS {
        return Err(OaisError::InvalidArgument(format!(
            "rate fit needs at least {MIN_FIT_POINTS} points, got {}",
            curve.len()
        )));
    }
    if !(eta > 0.0) {
        return Err(OaisError::InvalidArgument("rate fit needs eta > 0".into()));
    }
    if let Some(i) = curve.iter().position(|(k, y)| !k.is_finite() || !y.is_finite()) {
        return Err(OaisError::NonFiniteValue { what: "rate curve", index: i });
    }
    let ks: Vec<f64> = curve.iter().map(|c| c.0).collect();
    let ys: Vec<f64> = curve.iter().map(|c| c.1).collect();

    let mut best: Option<(Params, f64)> = None;
    for decade in -8..=2 {
        for half in [0.0, 0.5] {
            let start = linear_start((decade as f64 + half) * std::f64::consts::LN_10, &ks, &ys);
            let (p, c) = levenberg_marquardt(start, &ks, &ys);
            if best.as_ref().is_none_or(|(_, bc)| c < *bc) {
                best = Some((p, c));
            }
        }
    }
    let (p, _) = best.expect("at least one start");

    let log_rmse = {
        let mut acc = 0.0;
        let mut ok = true;
        for (k, y) in ks.iter().zip(&ys) {
            let m = p.eval(*k);
            if *y <= 0.0 || m <= 0.0 {
                ok = false;
                break;
            }
            acc += (y.ln() - m.ln()).powi(2);
        }
        if ok {
            (acc / ks.len() as f64).sqrt()
        } else {
            f64::NAN
        }
    };

    let scale = ys.iter().fold(0.0f64, |a, y| a.max(y.abs())).max(1e-300);
    if p.c1 < -1e-6 * scale {
        return Err(OaisError::FitFailure {
            residual: log_rmse,
            reason: format!("curve is not decaying (fitted c1 = {:.3e})", p.c1),
        });
    }
    Ok(RateFit {
        c0_hat: p.log_rate.exp() / eta,
        c1_hat: p.c1,
        offset_hat: p.offset,
        residual: log_rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_synthetic_decay() {
        let curve: Vec<(f64, f64)> = (1..=400)
            .map(|k| (k as f64, 3.0 * (-0.02 * k as f64).exp() + 1.2))
            .collect();
        let fit = fit_rate(&curve, 1e-2).unwrap();
        assert!((fit.c0_hat * 1e-2 / 0.02 - 1.0).abs() < 1e-2, "{fit:?}");
        assert!((fit.c1_hat / 3.0 - 1.0).abs() < 1e-2);
        assert!((fit.offset_hat / 1.2 - 1.0).abs() < 1e-2);
        assert!(fit.residual < 1e-6);
        assert!(fit.c0_hat >= 0.0);
    }

    #[test]
    fn constant_curve() {
        let curve: Vec<(f64, f64)> = (1..=50).map(|k| (k as f64, 2.5)).collect();
        let fit = fit_rate(&curve, 1.0).unwrap();
        assert!(fit.c1_hat.abs() < 1e-8, "{fit:?}");
        assert!((fit.offset_hat - 2.5).abs() < 1e-8);
    }

    #[test]
    fn rising_curve_fails() {
        let curve: Vec<(f64, f64)> = (1..=50).map(|k| (k as f64, 1.0 - (-0.05 * k as f64).exp())).collect();
        assert!(matches!(fit_rate(&curve, 1.0), Err(OaisError::FitFailure { .. })));
    }

    #[test]
    fn too_short() {
        let curve: Vec<(f64, f64)> = (1..10).map(|k| (k as f64, 1.0)).collect();
        assert!(fit_rate(&curve, 1.0).is_err());
    }
}
