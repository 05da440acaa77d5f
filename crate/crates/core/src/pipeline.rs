//! Data-augmentation loop: initialization from the masked counts, then rounds of multiple
//! imputation (E-step), per-imputation density estimation (M-step) and parameter averaging.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{CountMap, DensityField, GaussianField, RadialBinning, Shape};
use crate::proxops::soft_threshold_scalar;
use crate::randfield::{estimate_mean, estimate_spectrum, LogNormalParams, SeededRng, StationaryCovariance};
use crate::solver::{estimate_density, SolveTrace, SolverConfig};
use crate::synthesis::{impute, ImputationConfig};
use crate::transform::{Dct2, Dictionary};

/// How the frequency plane is cut into spectrum bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinningSpec {
    Linear(usize),
    Log(usize),
}

impl BinningSpec {
    pub fn build(&self, shape: Shape) -> Result<RadialBinning> {
        match *self {
            BinningSpec::Linear(n) => RadialBinning::linear(shape, n),
            BinningSpec::Log(n) => RadialBinning::logarithmic(shape, n),
        }
    }
}

impl Default for BinningSpec {
    fn default() -> Self {
        BinningSpec::Log(12)
    }
}

impl std::str::FromStr for BinningSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad binning '{s}' (expected linear:<n> or log:<n>)"));
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        match kind {
            "linear" => Ok(BinningSpec::Linear(n)),
            "log" => Ok(BinningSpec::Log(n)),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for BinningSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BinningSpec::Linear(n) => write!(f, "linear:{n}"),
            BinningSpec::Log(n) => write!(f, "log:{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationConfig {
    pub n_iter: usize,
    /// Imputations per round.
    pub n_mi: usize,
    pub imputation: ImputationConfig,
    pub solver: SolverConfig,
    pub bins: BinningSpec,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            n_iter: 6,
            n_mi: 5,
            imputation: ImputationConfig::default(),
            solver: SolverConfig::default(),
            bins: BinningSpec::default(),
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::Config("n_iter must be at least 1".into()));
        }
        if self.n_mi == 0 {
            return Err(Error::Config("n_mi must be at least 1".into()));
        }
        self.imputation.validate()?;
        self.solver.validate()
    }
}

/// Parameters after one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSummary {
    pub mu: f64,
    pub spectrum: Vec<f64>,
    pub mean_count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    /// Pixelwise mean of the last round's per-imputation estimates.
    pub delta: DensityField,
    pub params: LogNormalParams,
    pub mean_count: f64,
    pub initial_params: LogNormalParams,
    pub initial_mean_count: f64,
    /// One entry per round.
    pub history: Vec<RoundSummary>,
    /// `traces[round][imputation]`.
    pub traces: Vec<Vec<SolveTrace>>,
    /// Per-imputation density estimates of the last round.
    pub last_estimates: Vec<DensityField>,
    /// Completed observations of the last round.
    pub last_imputations: Vec<CountMap>,
}

impl PipelineResult {
    /// `round,mu,mean_count,bin_0,...` rows; round 0 is the initialization.
    pub fn history_csv(&self) -> String {
        let n_bins = self.initial_params.cov.spectrum().len();
        let mut out = String::from("round,mu,mean_count");
        for b in 0..n_bins {
            let _ = write!(out, ",bin_{b}");
        }
        out.push('\n');
        let mut row = |round: usize, mu: f64, m: f64, s: &[f64]| {
            let _ = write!(out, "{round},{mu:?},{m:?}");
            for v in s {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        };
        row(
            0,
            self.initial_params.mu,
            self.initial_mean_count,
            self.initial_params.cov.spectrum(),
        );
        for (i, h) in self.history.iter().enumerate() {
            row(i + 1, h.mu, h.mean_count, &h.spectrum);
        }
        out
    }
}

/// Mean count, log-normal mean and spectrum estimated from the observed pixels of `y`.
///
/// Uses `ẑ = log(max(y, 1) / m̄̂)` on observed pixels with the masked periodogram.
pub fn initialize_params(y: &CountMap, binning: &Arc<RadialBinning>) -> Result<(LogNormalParams, f64)> {
    let observed = y.observed_pixels();
    if observed == 0 {
        return Err(Error::EmptyMask("no observed pixels to initialize from".into()));
    }
    let total: u64 = y
        .counts()
        .iter()
        .zip(y.mask())
        .filter(|(_, &m)| m == 1)
        .map(|(&c, _)| c)
        .sum();
    let mean_count = total as f64 / observed as f64;
    if mean_count <= 0.0 {
        return Err(Error::Domain("all observed counts are zero".into()));
    }
    let z = GaussianField::new(y.shape(), log_counts(y, mean_count))?;
    let mu = estimate_mean(&z, Some(y.mask()))?;
    let cov = estimate_spectrum(&z, binning, Some(y.mask()))?;
    Ok((LogNormalParams::new(mu, cov)?, mean_count))
}

/// `log(max(y, 1) / m̄)` on observed pixels, 0 elsewhere.
fn log_counts(y: &CountMap, mean_count: f64) -> Vec<f64> {
    y.counts()
        .iter()
        .zip(y.mask())
        .map(|(&c, &m)| if m == 1 { (c.max(1) as f64 / mean_count).ln() } else { 0.0 })
        .collect()
}

/// Arithmetic means of `(μᵢ, Σᵢ, m̄ᵢ)`.
pub fn average_params(items: &[(LogNormalParams, f64)]) -> Result<(LogNormalParams, f64)> {
    let (first, _) = items
        .first()
        .ok_or_else(|| Error::Config("cannot average an empty parameter list".into()))?;
    let binning = first.cov.binning();
    let n = items.len() as f64;
    let mut spectrum = vec![0.0; first.cov.spectrum().len()];
    let mut mu = 0.0;
    let mut mean_count = 0.0;
    for (p, m) in items {
        if !p.cov.binning().compatible(binning) {
            return Err(Error::Config("cannot average spectra with different binnings".into()));
        }
        mu += p.mu;
        mean_count += m;
        for (s, v) in spectrum.iter_mut().zip(p.cov.spectrum()) {
            *s += v;
        }
    }
    spectrum.iter_mut().for_each(|s| *s /= n);
    let cov = StationaryCovariance::new(binning.clone(), spectrum)?;
    Ok((LogNormalParams::new(mu / n, cov)?, mean_count / n))
}

/// Per-imputation M-step parameters from a density estimate and its completed counts.
fn mstep_params(
    delta: &DensityField,
    completed: &CountMap,
    binning: &Arc<RadialBinning>,
) -> Result<(LogNormalParams, f64)> {
    let z = delta.to_gaussian();
    let mu = estimate_mean(&z, None)?;
    let cov = estimate_spectrum(&z, binning, None)?;
    let n = delta.delta().len() as f64;
    let mean_y = completed.counts().iter().sum::<u64>() as f64 / n;
    let mean_eta = delta.delta().iter().map(|d| 1.0 + d).sum::<f64>() / n;
    let mean_count = mean_y / mean_eta;
    if !(mean_count > 0.0 && mean_count.is_finite()) {
        return Err(Error::Domain(format!(
            "re-estimated mean count is not positive ({mean_count})"
        )));
    }
    Ok((LogNormalParams::new(mu, cov)?, mean_count))
}

/// Runs the full scheme with the cosine dictionary.
pub fn run_data_augmentation(y: &CountMap, config: &AugmentationConfig) -> Result<PipelineResult> {
    run_data_augmentation_with(y, config, &Dct2::new(y.shape()))
}

pub fn run_data_augmentation_with(
    y: &CountMap,
    config: &AugmentationConfig,
    dict: &dyn Dictionary,
) -> Result<PipelineResult> {
    config.validate()?;
    let shape = y.shape();
    shape.check_same(dict.shape())?;
    let binning = Arc::new(config.bins.build(shape)?);
    let (initial_params, initial_mean_count) = initialize_params(y, &binning)?;

    // first E-step uses the log-count estimate on observed pixels
    let start: Vec<f64> = log_counts(y, initial_mean_count).iter().map(|z| z.exp_m1()).collect();
    let mut delta_hat = DensityField::new(shape, start)?;
    let mut params = initial_params.clone();
    let mut mean_count = initial_mean_count;
    let mut history = Vec::with_capacity(config.n_iter);
    let mut traces = Vec::with_capacity(config.n_iter);
    let mut last_estimates = Vec::new();
    let mut last_imputations = Vec::new();

    for round in 0..config.n_iter {
        let outputs: Vec<(CountMap, DensityField, SolveTrace)> = (0..config.n_mi)
            .into_par_iter()
            .map(|i| {
                let index = (round * config.n_mi + i) as u64;
                let mut rng = SeededRng::derive(config.seed, "impute", index);
                let completed = impute(y, &delta_hat, &params, mean_count, &config.imputation, &mut rng)?;
                let (delta, trace) = estimate_density(&completed, &params, &config.solver, dict)?;
                Ok((completed, delta, trace))
            })
            .collect::<Result<_>>()?;

        let estimates = outputs
            .iter()
            .map(|(c, d, _)| mstep_params(d, c, &binning))
            .collect::<Result<Vec<_>>>()?;
        let (p, m) = average_params(&estimates)?;
        params = p;
        mean_count = m;
        history.push(RoundSummary {
            mu: params.mu,
            spectrum: params.cov.spectrum().to_vec(),
            mean_count,
        });

        let n = config.n_mi as f64;
        let mut mean_delta = vec![0.0; shape.len()];
        for (_, d, _) in &outputs {
            for (acc, v) in mean_delta.iter_mut().zip(d.delta()) {
                *acc += v;
            }
        }
        mean_delta.iter_mut().for_each(|v| *v /= n);
        delta_hat = DensityField::new(shape, mean_delta)?;

        let mut round_traces = Vec::with_capacity(outputs.len());
        last_estimates.clear();
        last_imputations.clear();
        for (c, d, t) in outputs {
            round_traces.push(t);
            last_estimates.push(d);
            last_imputations.push(c);
        }
        traces.push(round_traces);
    }

    Ok(PipelineResult {
        delta: delta_hat,
        params,
        mean_count,
        initial_params,
        initial_mean_count,
        history,
        traces,
        last_estimates,
        last_imputations,
    })
}

/// Largest per-bin relative change between two spectra.
pub fn spectrum_change(previous: &[f64], next: &[f64]) -> f64 {
    previous
        .iter()
        .zip(next)
        .map(|(a, b)| (b - a).abs() / a.abs())
        .fold(0.0, f64::max)
}

/// `½‖M(m̄(1 + Φα) − y)‖² + λ‖α‖₁`.
pub fn baseline_objective(alpha: &[f64], y: &CountMap, dict: &dyn Dictionary, lambda: f64) -> Result<f64> {
    let delta = dict.synthesize(alpha)?;
    let m = y.mean_count();
    let fit: f64 = delta
        .iter()
        .zip(y.counts())
        .zip(y.mask())
        .filter(|(_, &k)| k == 1)
        .map(|((&d, &c), _)| (m * (1.0 + d) - c as f64).powi(2))
        .sum();
    Ok(0.5 * fit + lambda * alpha.iter().map(|a| a.abs()).sum::<f64>())
}

/// Sparse inpainting with a quadratic data term, solved by iterative soft thresholding with
/// step `1/(m̄²ν)`. Returns `δ = Φα` and the objective after each iteration. The result is not
/// constrained to `δ > −1`.
pub fn baseline_quadratic_inpaint(
    y: &CountMap,
    dict: &dyn Dictionary,
    lambda: f64,
    n_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    y.shape().check_same(dict.shape())?;
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be non-negative, got {lambda}")));
    }
    let m = y.mean_count();
    let step = 1.0 / (m * m * dict.frame_constant());
    let threshold = step * lambda;
    let mut alpha = vec![0.0; dict.coeff_count()];
    let mut objective = Vec::with_capacity(n_iter);
    for _ in 0..n_iter {
        let delta = dict.synthesize(&alpha)?;
        let residual: Vec<f64> = delta
            .iter()
            .zip(y.counts())
            .zip(y.mask())
            .map(|((&d, &c), &k)| if k == 1 { m * (m * (1.0 + d) - c as f64) } else { 0.0 })
            .collect();
        let grad = dict.forward(&residual)?;
        for (a, g) in alpha.iter_mut().zip(&grad) {
            *a = soft_threshold_scalar(*a - step * g, threshold);
        }
        objective.push(baseline_objective(&alpha, y, dict, lambda)?);
    }
    Ok((dict.synthesize(&alpha)?, objective))
}

/// Per-bin relative errors of named spectra against a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumComparison {
    pub centers: Vec<f64>,
    pub truth: Vec<f64>,
    pub names: Vec<String>,
    /// `errors[e][b]` is `|estimate − truth| / truth` for estimate `e`, bin `b`.
    pub errors: Vec<Vec<f64>>,
}

impl SpectrumComparison {
    /// `k_bin_center,truth,<name>...`, one row per populated bin, values are relative errors.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k_bin_center,truth");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for b in 0..self.truth.len() {
            let _ = write!(out, "{:?},{:?}", self.centers[b], self.truth[b]);
            for e in &self.errors {
                let _ = write!(out, ",{:?}", e[b]);
            }
            out.push('\n');
        }
        out
    }
}

/// Compares spectra over the populated bins of `binning`.
pub fn compare_spectra(
    binning: &RadialBinning,
    truth: &[f64],
    estimates: &[(String, Vec<f64>)],
) -> Result<SpectrumComparison> {
    let n = binning.n_bins();
    let check = |name: &str, len: usize| {
        if len != n {
            Err(Error::dim(format!("{n} bins"), format!("{len} bins in {name}")))
        } else {
            Ok(())
        }
    };
    check("truth", truth.len())?;
    for (name, s) in estimates {
        check(name, s.len())?;
    }
    let keep: Vec<usize> = (0..n).filter(|&b| binning.mode_counts()[b] > 0).collect();
    Ok(SpectrumComparison {
        centers: keep.iter().map(|&b| binning.centers()[b]).collect(),
        truth: keep.iter().map(|&b| truth[b]).collect(),
        names: estimates.iter().map(|(n, _)| n.clone()).collect(),
        errors: estimates
            .iter()
            .map(|(_, s)| keep.iter().map(|&b| (s[b] - truth[b]).abs() / truth[b]).collect())
            .collect(),
    })
}
