//! MAP density estimation on complete count maps.
//!
//! Minimizes, over dictionary coefficients `α` with `z = Φα`,
//!
//! ```text
//! J(α) = m̄ Σᵢ exp(zᵢ) + (γ1 − y)ᵀz + γ‖z − μ‖²_{Σ⁻¹} + λ‖α‖₁
//! ```
//!
//! with a two-term averaged Douglas–Rachford (parallel proximal) iteration. The first term is
//! handled by [`prox_data`] composed with the frame, the second by soft thresholding.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{CountMap, DensityField, GaussianField};
use crate::proxops::{prox_data, prox_tight_frame, soft_threshold_scalar, ProxMode, ProxParams};
use crate::randfield::{apply_cov_power_full, LogNormalParams, SeededRng};
use crate::transform::Dictionary;

/// Starting point of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// `α₀ = Φᵀ log(max(y, 1) / m̄)`.
    #[default]
    LogCounts,
    /// `α₀ = Φᵀ y`, the raw counts.
    RawCounts,
}

impl std::str::FromStr for InitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(InitMode::LogCounts),
            "raw" => Ok(InitMode::RawCounts),
            other => Err(Error::Config(format!("unknown init '{other}' (expected log or raw)"))),
        }
    }
}

impl std::fmt::Display for InitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitMode::LogCounts => "log",
            InitMode::RawCounts => "raw",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub n_est: usize,
    /// Proximal step.
    pub beta: f64,
    /// Relaxation, in (0, 2).
    pub theta: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Stop once `‖α_{t+1} − α_t‖ <= tolerance (1 + ‖α_{t+1}‖)`.
    pub tolerance: Option<f64>,
    pub prox_mode: ProxMode,
    pub init: InitMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_est: 40,
            beta: 1.0,
            theta: 1.0,
            lambda: 1e-3,
            gamma: 1e-4,
            tolerance: Some(1e-6),
            prox_mode: ProxMode::Paper,
            init: InitMode::LogCounts,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_est == 0 {
            return Err(Error::Config("n_est must be at least 1".into()));
        }
        if !(self.theta > 0.0 && self.theta < 2.0) {
            return Err(Error::Config(format!("theta must lie in (0, 2), got {}", self.theta)));
        }
        if let Some(t) = self.tolerance {
            if !(t >= 0.0) {
                return Err(Error::Config(format!("tolerance must be non-negative, got {t}")));
            }
        }
        ProxParams::new(self.beta, self.gamma, self.lambda, 1.0)
            .map(|_| ())
            .map_err(|e| Error::Config(e.to_string()))
    }

    fn objective_params(&self, mean_count: f64) -> ProxParams {
        ProxParams {
            beta: self.beta,
            gamma: self.gamma,
            lambda: self.lambda,
            mean_count,
        }
    }
}

/// Per-iteration diagnostics of one solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveTrace {
    pub objective: Vec<f64>,
    pub step_norm: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len()
    }

    /// `iteration,objective,step_norm` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,objective,step_norm\n");
        for (i, (j, s)) in self.objective.iter().zip(&self.step_norm).enumerate() {
            let _ = writeln!(out, "{},{:?},{:?}", i + 1, j, s);
        }
        out
    }
}

/// Poisson negative log-likelihood of intensities `eta` for counts `y`, constants dropped.
///
/// Returns `+∞` outside the domain (`η <= 0` where `y > 0`, `η < 0` where `y = 0`).
pub fn poisson_negloglik(eta: &[f64], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&e, &c) in eta.iter().zip(y) {
        if c > 0.0 {
            if e > 0.0 {
                total += -c * e.ln() + e;
            } else {
                return f64::INFINITY;
            }
        } else if e >= 0.0 {
            total += e;
        } else {
            return f64::INFINITY;
        }
    }
    total
}

/// `dᵀ Σ⁻¹ d` for `d = z − μ`.
fn prior_quadratic(z: &[f64], prior: &LogNormalParams) -> f64 {
    let d: Vec<f64> = z.iter().map(|v| v - prior.mu).collect();
    let w = apply_cov_power_full(&d, &prior.cov, -1.0);
    d.iter().zip(&w).map(|(a, b)| a * b).sum()
}

/// Negative log-density of the log-normal prior, `½(z − μ)ᵀΣ⁻¹(z − μ) + Σ z` with `z = log(1 + δ)`.
pub fn lognormal_penalty(delta: &DensityField, prior: &LogNormalParams) -> Result<f64> {
    prior.cov.shape().check_same(delta.shape())?;
    let z = delta.to_gaussian();
    Ok(0.5 * prior_quadratic(z.values(), prior) + z.values().iter().sum::<f64>())
}

/// Value of the full objective `J(α)`.
pub fn objective(
    alpha: &[f64],
    y: &[f64],
    params: &ProxParams,
    prior: &LogNormalParams,
    dict: &dyn Dictionary,
) -> Result<f64> {
    let z = dict.synthesize(alpha)?;
    dict.shape().check_len(y.len())?;
    let m = params.mean_count;
    let g = params.gamma;
    let mut smooth = 0.0;
    for (&zi, &yi) in z.iter().zip(y) {
        smooth += m * zi.exp() + (g - yi) * zi;
    }
    if g > 0.0 {
        smooth += g * prior_quadratic(&z, prior);
    }
    let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
    Ok(smooth + params.lambda * l1)
}

/// Gradient of the smooth part of `J` with respect to `α`.
pub fn smooth_gradient(
    alpha: &[f64],
    y: &[f64],
    params: &ProxParams,
    prior: &LogNormalParams,
    dict: &dyn Dictionary,
) -> Result<Vec<f64>> {
    let z = dict.synthesize(alpha)?;
    let g = params.gamma;
    let mut grad_z: Vec<f64> = z
        .iter()
        .zip(y)
        .map(|(&zi, &yi)| params.mean_count * zi.exp() + g - yi)
        .collect();
    if g > 0.0 {
        let d: Vec<f64> = z.iter().map(|v| v - prior.mu).collect();
        let w = apply_cov_power_full(&d, &prior.cov, -1.0);
        for (gz, wi) in grad_z.iter_mut().zip(&w) {
            *gz += 2.0 * g * wi;
        }
    }
    dict.forward(&grad_z)
}

/// Largest violation of `0 ∈ ∇S(α) + λ∂‖α‖₁`: `|∇S_i + λ sign(α_i)|` on non-zero coefficients and
/// `max(|∇S_i| − λ, 0)` on zero ones. Coefficients below `1e-12·max(1, ‖α‖∞)` in magnitude count as
/// zero.
pub fn l1_optimality_residual(
    alpha: &[f64],
    y: &[f64],
    params: &ProxParams,
    prior: &LogNormalParams,
    dict: &dyn Dictionary,
) -> Result<f64> {
    let grad = smooth_gradient(alpha, y, params, prior, dict)?;
    let zero = 1e-12 * alpha.iter().fold(1.0f64, |m, a| m.max(a.abs()));
    Ok(alpha
        .iter()
        .zip(&grad)
        .map(|(&a, &g)| {
            if a.abs() > zero {
                (g + params.lambda * a.signum()).abs()
            } else {
                (g.abs() - params.lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max))
}

/// Initial coefficients for `y` under `mode`.
pub fn initial_coefficients(y: &CountMap, mode: InitMode, dict: &dyn Dictionary) -> Result<Vec<f64>> {
    let m = y.mean_count();
    let start: Vec<f64> = match mode {
        InitMode::LogCounts => y.counts().iter().map(|&c| ((c.max(1)) as f64 / m).ln()).collect(),
        InitMode::RawCounts => y.counts_f64(),
    };
    dict.forward(&start)
}

/// Estimates the density of a complete count map, starting from `config.init`.
pub fn estimate_density(
    y: &CountMap,
    prior: &LogNormalParams,
    config: &SolverConfig,
    dict: &dyn Dictionary,
) -> Result<(DensityField, SolveTrace)> {
    let alpha0 = initial_coefficients(y, config.init, dict)?;
    estimate_density_from(y, prior, config, dict, alpha0)
}

/// [`estimate_density`] from explicit starting coefficients.
pub fn estimate_density_from(
    y: &CountMap,
    prior: &LogNormalParams,
    config: &SolverConfig,
    dict: &dyn Dictionary,
    alpha0: Vec<f64>,
) -> Result<(DensityField, SolveTrace)> {
    config.validate()?;
    if !y.is_complete() {
        return Err(Error::Config(
            "density estimation needs a complete observation (mask all ones)".into(),
        ));
    }
    let shape = y.shape();
    shape.check_same(dict.shape())?;
    shape.check_same(prior.cov.shape())?;
    if alpha0.len() != dict.coeff_count() {
        return Err(Error::dim(
            format!("{} coefficients", dict.coeff_count()),
            format!("{} coefficients", alpha0.len()),
        ));
    }

    let counts = y.counts_f64();
    let half = ProxParams {
        beta: 0.5 * config.beta,
        gamma: config.gamma,
        lambda: config.lambda,
        mean_count: y.mean_count(),
    };
    let threshold = 0.5 * config.beta * config.lambda;
    let theta = config.theta;
    let full = config.objective_params(y.mean_count());

    let mut p_data = alpha0.clone();
    let mut p_sparse = alpha0.clone();
    let mut alpha = alpha0;
    let mut trace = SolveTrace::default();

    for _ in 0..config.n_est {
        let xi_data = prox_tight_frame(
            &p_data,
            |z| prox_data(z, &half, prior, &counts, config.prox_mode),
            dict,
        )?;
        let xi_sparse: Vec<f64> = p_sparse.iter().map(|&v| soft_threshold_scalar(v, threshold)).collect();

        let mut step2 = 0.0;
        let mut norm2 = 0.0;
        for i in 0..alpha.len() {
            let xi = 0.5 * (xi_data[i] + xi_sparse[i]);
            p_data[i] += theta * (2.0 * xi - alpha[i] - xi_data[i]);
            p_sparse[i] += theta * (2.0 * xi - alpha[i] - xi_sparse[i]);
            let next = alpha[i] + theta * (xi - alpha[i]);
            step2 += (next - alpha[i]).powi(2);
            norm2 += next * next;
            alpha[i] = next;
        }
        let step = step2.sqrt();
        trace.objective.push(objective(&alpha, &counts, &full, prior, dict)?);
        trace.step_norm.push(step);
        if let Some(tol) = config.tolerance {
            if step <= tol * (1.0 + norm2.sqrt()) {
                break;
            }
        }
    }

    let z = dict.synthesize(&alpha)?;
    trace.alpha = alpha;
    let delta = GaussianField::new(shape, z)?.to_density()?;
    Ok((delta, trace))
}

/// Outcome of [`existence_uniqueness_checks`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceReport {
    /// `J(tα₀)` for `t ∈ {1, 10, 100}`, one row per random direction.
    pub coercivity_probes: Vec<[f64; 3]>,
    /// Every probe row strictly increasing.
    pub coercive_along_probes: bool,
    /// A zero-count pixel along which `J` decreases without bound when `λ = γ = 0`.
    pub non_coercive_pixel: Option<usize>,
    /// Largest pixel difference between densities solved from two different starting points.
    pub uniqueness_gap: f64,
}

/// Numerical probes of existence (coercivity) and uniqueness of the minimizer.
pub fn existence_uniqueness_checks(
    y: &CountMap,
    prior: &LogNormalParams,
    config: &SolverConfig,
    dict: &dyn Dictionary,
    directions: usize,
    rng: &mut SeededRng,
) -> Result<ExistenceReport> {
    let counts = y.counts_f64();
    let params = config.objective_params(y.mean_count());
    let n = dict.coeff_count();

    let mut probes = Vec::with_capacity(directions);
    for _ in 0..directions {
        let dir = rng.normals(n);
        let mut row = [0.0; 3];
        for (slot, t) in row.iter_mut().zip([1.0, 10.0, 100.0]) {
            let a: Vec<f64> = dir.iter().map(|v| t * v).collect();
            *slot = objective(&a, &counts, &params, prior, dict)?;
        }
        probes.push(row);
    }
    let coercive = probes.iter().all(|r| r[0] < r[1] && r[1] < r[2]);

    let mut non_coercive_pixel = None;
    if config.lambda == 0.0 && config.gamma == 0.0 {
        for (i, &c) in counts.iter().enumerate() {
            if c != 0.0 {
                continue;
            }
            let mut e = vec![0.0; n];
            e[i] = -1.0;
            let dir = dict.forward(&e)?;
            let vals: Vec<f64> = [1.0, 10.0, 100.0]
                .iter()
                .map(|t| {
                    let a: Vec<f64> = dir.iter().map(|v| t * v).collect();
                    objective(&a, &counts, &params, prior, dict)
                })
                .collect::<Result<_>>()?;
            if vals[0] >= vals[1] && vals[1] >= vals[2] {
                non_coercive_pixel = Some(i);
                break;
            }
        }
    }

    let (first, _) = estimate_density(y, prior, config, dict)?;
    let start = initial_coefficients(y, config.init, dict)?
        .into_iter()
        .map(|a| a + 0.5 * rng.normal())
        .collect();
    let (second, _) = estimate_density_from(y, prior, config, dict, start)?;
    let gap = first
        .delta()
        .iter()
        .zip(second.delta())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    Ok(ExistenceReport {
        coercivity_probes: probes,
        coercive_along_probes: coercive,
        non_coercive_pixel,
        uniqueness_gap: gap,
    })
}
