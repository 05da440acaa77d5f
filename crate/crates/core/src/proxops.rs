//! Proximity operators: soft thresholding, the exponential prox via Lambert W, the data-fidelity
//! prox with a log-normal prior, and composition with a tight frame.

use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::randfield::{apply_mode_gain, LogNormalParams};
use crate::transform::Dictionary;

const INV_E: f64 = 1.0 / E;

/// Above this log-argument `W(e^L)` is solved in log form to avoid overflowing `e^L`.
const LOG_FORM_THRESHOLD: f64 = 500.0;

/// Step and weights of the data-fidelity prox.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxParams {
    /// Proximal step `β`.
    pub beta: f64,
    /// Log-normal prior weight `γ`.
    pub gamma: f64,
    /// Sparsity weight `λ`.
    pub lambda: f64,
    /// Expected counts per pixel `m̄`.
    pub mean_count: f64,
}

impl ProxParams {
    pub fn new(beta: f64, gamma: f64, lambda: f64, mean_count: f64) -> Result<Self> {
        let p = ProxParams {
            beta,
            gamma,
            lambda,
            mean_count,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.mean_count > 0.0 && self.mean_count.is_finite()) {
            return Err(Error::Domain(format!(
                "mean count must be positive, got {}",
                self.mean_count
            )));
        }
        Ok(())
    }
}

/// How the data-fidelity prox handles the log-normal quadratic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProxMode {
    /// `K⁻¹ ∘ prox_{βm̄ exp} ∘ K⁻¹` with `K = I + γβΣ⁻¹`, valid for any stationary `Σ`.
    #[default]
    Paper,
    /// Exact pixelwise solution; requires `Σ = σ² I`.
    Exact,
}

impl std::str::FromStr for ProxMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(ProxMode::Paper),
            "exact" => Ok(ProxMode::Exact),
            other => Err(Error::Config(format!(
                "unknown prox mode '{other}' (expected paper or exact)"
            ))),
        }
    }
}

impl std::fmt::Display for ProxMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProxMode::Paper => "paper",
            ProxMode::Exact => "exact",
        })
    }
}

/// `sign(x) max(|x| − t, 0)`.
#[inline]
pub fn soft_threshold_scalar(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn soft_threshold(x: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("threshold must be non-negative, got {t}")));
    }
    Ok(x.iter().map(|&v| soft_threshold_scalar(v, t)).collect())
}

/// Principal branch of the Lambert W function, `w e^w = x` for `x >= −1/e`.
pub fn lambert_w(x: f64) -> Result<f64> {
    if x.is_nan() || x < -INV_E - 4.0 * f64::EPSILON {
        return Err(Error::Domain(format!("Lambert W is undefined below -1/e, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let gap = E * x + 1.0;
    if gap <= 0.0 {
        return Ok(-1.0);
    }
    let mut w = if gap < 0.5 {
        // branch-point series in p = sqrt(2(ex + 1))
        let p = (2.0 * gap).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x.ln_1p() * (1.0 - x.ln_1p() / (2.0 + x.ln_1p()))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        if !step.is_finite() {
            break;
        }
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// `W(e^L)` for any real `L`, without forming `e^L` when it would overflow.
///
/// For large `L` solves `w + ln w = L` by Newton iteration.
pub fn lambert_w_exp(log_x: f64) -> f64 {
    if log_x < LOG_FORM_THRESHOLD {
        return lambert_w(log_x.exp()).expect("exp is non-negative");
    }
    let mut w = log_x - log_x.ln();
    for _ in 0..64 {
        let g = w + w.ln() - log_x;
        let step = g / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w {
            break;
        }
    }
    w
}

/// Minimizer of `a e^p + (p − x)²/2`, i.e. `x − W(a e^x)`.
///
/// Equivalent to `log(W(a e^x) / a)` since `log W(t) = log t − W(t)`.
pub fn prox_scaled_exp(x: f64, a: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("exponential weight must be positive, got {a}")));
    }
    Ok(x - lambert_w_exp(a.ln() + x))
}

/// Proximity operator of `βF`, `F(z) = m̄ Σ exp(z) + (γ1 − y)ᵀz + γ‖z − μ‖²_{Σ⁻¹}`.
///
/// `Paper` mode evaluates `K⁻¹ prox_{βm̄ exp}(K⁻¹(x + β(y − γ1 + γβΣ⁻¹μ)))` with `K = I + γβΣ⁻¹`,
/// the inverses applied mode by mode in the Fourier domain. `Exact` mode needs `Σ = σ²I` and solves
/// `κp + βm̄ e^p = r` pixelwise with `κ = 1 + 2γβ/σ²`, `r = x + β(y − γ) + 2γβμ/σ²`.
pub fn prox_data(x: &[f64], params: &ProxParams, prior: &LogNormalParams, y: &[f64], mode: ProxMode) -> Result<Vec<f64>> {
    params.validate()?;
    let shape = prior.cov.shape();
    shape.check_len(x.len())?;
    shape.check_len(y.len())?;
    let ProxParams {
        beta,
        gamma,
        mean_count,
        ..
    } = *params;
    let a = beta * mean_count;

    match mode {
        ProxMode::Paper => {
            let c = gamma * beta;
            let shift = gamma * beta * prior.mu / prior.cov.dc_power();
            let s: Vec<f64> = x
                .iter()
                .zip(y)
                .map(|(&xi, &yi)| xi + beta * (yi - gamma + shift))
                .collect();
            let k_inv = |v: &[f64]| -> Vec<f64> {
                if c == 0.0 {
                    v.to_vec()
                } else {
                    apply_mode_gain(v, &prior.cov, |lam| 1.0 / (1.0 + c / lam))
                }
            };
            let r = k_inv(&s);
            let q = r
                .iter()
                .map(|&ri| prox_scaled_exp(ri, a))
                .collect::<Result<Vec<f64>>>()?;
            Ok(k_inv(&q))
        }
        ProxMode::Exact => {
            let sigma2 = prior.cov.flat_value().ok_or_else(|| {
                Error::Config("exact prox mode requires a flat prior spectrum (Σ = σ²I)".into())
            })?;
            let kappa = 1.0 + 2.0 * gamma * beta / sigma2;
            let offset = 2.0 * gamma * beta * prior.mu / sigma2;
            x.iter()
                .zip(y)
                .map(|(&xi, &yi)| {
                    let r = xi + beta * (yi - gamma) + offset;
                    prox_scaled_exp(r / kappa, a / kappa)
                })
                .collect()
        }
    }
}

/// `prox_{f∘Φ}(α) = α + ν⁻¹ Φᵀ(prox_{νf}(Φα) − Φα)` for a tight frame `Φ`; `inner_prox` evaluates
/// `prox_{νf}`.
pub fn prox_tight_frame<F>(coeffs: &[f64], inner_prox: F, dict: &dyn Dictionary) -> Result<Vec<f64>>
where
    F: FnOnce(&[f64]) -> Result<Vec<f64>>,
{
    let z = dict.synthesize(coeffs)?;
    let pz = inner_prox(&z)?;
    dict.shape().check_len(pz.len())?;
    let diff: Vec<f64> = pz.iter().zip(&z).map(|(p, v)| p - v).collect();
    let back = dict.forward(&diff)?;
    let inv_nu = 1.0 / dict.frame_constant();
    Ok(coeffs.iter().zip(&back).map(|(c, b)| c + inv_nu * b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{RadialBinning, Shape};
    use crate::randfield::StationaryCovariance;
    use crate::transform::Dct2;
    use std::sync::Arc;

    /// Bisection on the increasing map `w -> w e^w` over `[-1, hi]`.
    fn w_bisect(x: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0, 1.0f64.max(x.ln().max(1.0)));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[0.0, 2.0, -0.3], 0.5).unwrap(), vec![0.0, 1.5, 0.0]);
        assert_eq!(soft_threshold(&[0.0], 3.0).unwrap(), vec![0.0]);
        assert!(soft_threshold(&[1.0], -0.1).is_err());
    }

    #[test]
    fn lambert_w_examples() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert!((lambert_w(E).unwrap() - 1.0).abs() <= 1e-14);
        let w1 = lambert_w(1.0).unwrap();
        assert!((w1 - w_bisect(1.0)).abs() < 1e-12);
        assert!((w1 - 0.567143290).abs() < 1e-9);
        assert!((lambert_w(-INV_E).unwrap() + 1.0).abs() < 1e-7);
        assert!(lambert_w(-0.5).is_err());
    }

    #[test]
    fn log_form_agrees_with_direct() {
        for l in [-30.0, -1.0, 0.0, 3.0, 200.0, 499.0] {
            let direct = lambert_w(f64::exp(l)).unwrap();
            assert!((lambert_w_exp(l) - direct).abs() <= 1e-13 * (1.0 + direct));
        }
        // continuity across the switch to the log form
        let below = lambert_w_exp(LOG_FORM_THRESHOLD - 1e-9);
        let above = lambert_w_exp(LOG_FORM_THRESHOLD + 1e-9);
        assert!((below - above).abs() < 1e-8);
        let w = lambert_w_exp(1e6);
        assert!((w + w.ln() - 1e6).abs() < 1e-9);
    }

    #[test]
    fn prox_scaled_exp_examples() {
        assert!(prox_scaled_exp(1.0, 1.0).unwrap().abs() < 1e-15);
        let p = prox_scaled_exp(0.0, 1.0).unwrap();
        assert!((p + w_bisect(1.0)).abs() < 1e-12);
        let a = 1e-9;
        assert!((prox_scaled_exp(3.0, a).unwrap() - 3.0).abs() <= 2.0 * a * 3.0f64.exp());
        assert!(prox_scaled_exp(0.0, 0.0).is_err());
        let big = prox_scaled_exp(1e6, 2.0).unwrap();
        assert!(big.is_finite() && big < 1e6);
    }

    fn flat_prior(shape: Shape, sigma2: f64, mu: f64) -> LogNormalParams {
        let b = Arc::new(RadialBinning::linear(shape, 3).unwrap());
        LogNormalParams::new(mu, StationaryCovariance::flat(b, sigma2).unwrap()).unwrap()
    }

    #[test]
    fn zero_gamma_is_pixelwise_closed_form() {
        let shape = Shape::square(4).unwrap();
        let prior = flat_prior(shape, 0.3, 0.1);
        let params = ProxParams::new(0.7, 0.0, 0.0, 2.5).unwrap();
        let x: Vec<f64> = (0..16).map(|i| (i as f64 - 8.0) / 5.0).collect();
        let y: Vec<f64> = (0..16).map(|i| (i % 5) as f64).collect();
        for mode in [ProxMode::Paper, ProxMode::Exact] {
            let p = prox_data(&x, &params, &prior, &y, mode).unwrap();
            for i in 0..16 {
                let s = x[i] + 0.7 * y[i];
                let want = s - lambert_w(0.7 * 2.5 * s.exp()).unwrap();
                assert!((p[i] - want).abs() < 1e-12, "{mode}: {} vs {want}", p[i]);
            }
        }
    }

    #[test]
    fn counts_equal_to_mean() {
        // y = m̄, x = 0, γ = 0 gives p = βm̄ − W(βm̄ e^{βm̄}) = 0 since W(t e^t) = t
        let shape = Shape::square(2).unwrap();
        let prior = flat_prior(shape, 1.0, 0.0);
        let params = ProxParams::new(0.5, 0.0, 0.0, 3.0).unwrap();
        let p = prox_data(&[0.0; 4], &params, &prior, &[3.0; 4], ProxMode::Paper).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn exact_mode_rejects_structured_spectrum() {
        let shape = Shape::square(8).unwrap();
        let b = Arc::new(RadialBinning::linear(shape, 3).unwrap());
        let cov = StationaryCovariance::new(b, vec![1.0, 2.0, 3.0]).unwrap();
        let prior = LogNormalParams::new(0.0, cov).unwrap();
        let params = ProxParams::new(1.0, 1.0, 0.0, 1.0).unwrap();
        assert!(prox_data(&[0.0; 64], &params, &prior, &[0.0; 64], ProxMode::Exact).is_err());
        assert!(prox_data(&[0.0; 64], &params, &prior, &[0.0; 64], ProxMode::Paper).is_ok());
    }

    #[test]
    fn exact_mode_satisfies_stationarity() {
        let shape = Shape::square(3).unwrap();
        let (beta, gamma, mbar, sigma2, mu) = (0.8, 0.6, 4.0, 0.5, -0.2);
        let prior = flat_prior(shape, sigma2, mu);
        let params = ProxParams::new(beta, gamma, 0.0, mbar).unwrap();
        let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.3 - 1.0).collect();
        let y: Vec<f64> = (0..9).map(|i| (i * 2) as f64).collect();
        let p = prox_data(&x, &params, &prior, &y, ProxMode::Exact).unwrap();
        for i in 0..9 {
            // derivative of βF + ½(p − x)² at p
            let g = beta * (mbar * p[i].exp() + gamma - y[i] + 2.0 * gamma * (p[i] - mu) / sigma2) + p[i] - x[i];
            assert!(g.abs() < 1e-10, "pixel {i}: {g}");
        }
    }

    #[test]
    fn tight_frame_identity_and_box() {
        let shape = Shape::square(8).unwrap();
        let d = Dct2::new(shape);
        let coeffs: Vec<f64> = (0..64).map(|i| ((i * 37) % 17) as f64 / 4.0 - 2.0).collect();
        let same = prox_tight_frame(&coeffs, |z| Ok(z.to_vec()), &d).unwrap();
        assert!(same.iter().zip(&coeffs).all(|(a, b)| (a - b).abs() < 1e-12));

        let clip = |z: &[f64]| -> Result<Vec<f64>> { Ok(z.iter().map(|v| v.clamp(-0.5, 0.5)).collect()) };
        let out = prox_tight_frame(&coeffs, clip, &d).unwrap();
        let direct = d.forward(&clip(&d.synthesize(&coeffs).unwrap()).unwrap()).unwrap();
        assert!(out.iter().zip(&direct).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
