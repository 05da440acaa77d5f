//! Imputation of missing regions by alternating projections onto mean, covariance and
//! observed-data constraint sets, followed by Poisson resampling.

use crate::error::{Error, Result};
use crate::grid::{CountMap, DensityField, GaussianField};
use crate::randfield::{
    estimate_spectrum, poisson_sample, sample_lognormal_field, LogNormalParams, SeededRng, StationaryCovariance,
    SPECTRUM_FLOOR,
};
use crate::fft::Fft2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImputationConfig {
    /// Projection sweeps per imputation.
    pub n_tex: usize,
    pub seed: u64,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig { n_tex: 15, seed: 0 }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tex == 0 {
            return Err(Error::Config("n_tex must be at least 1".into()));
        }
        Ok(())
    }
}

/// `M·reference + (I − M)·delta`.
pub fn project_observed(delta: &DensityField, reference: &DensityField, mask: &[u8]) -> Result<DensityField> {
    delta.shape().check_same(reference.shape())?;
    delta.shape().check_len(mask.len())?;
    let out = delta
        .delta()
        .iter()
        .zip(reference.delta())
        .zip(mask)
        .map(|((&d, &r), &m)| if m == 1 { r } else { d })
        .collect();
    DensityField::new(delta.shape(), out)
}

/// Shifts `z` so that its mean is exactly `mu`.
pub fn project_mean(z: &GaussianField, mu: f64) -> GaussianField {
    let shift = mu - z.mean();
    let values = z.values().iter().map(|v| v + shift).collect();
    GaussianField::new(z.shape(), values).expect("finite shift of a finite field")
}

/// Rescales every non-DC mode by `sqrt(target / estimated)` for its bin, so the binned spectrum of
/// the result equals `target`. Bins estimated below the floor are scaled from the floor value.
pub fn project_cov(z: &GaussianField, target: &StationaryCovariance) -> Result<GaussianField> {
    let binning = target.binning();
    let estimated = estimate_spectrum(z, binning, None)?;
    let gains: Vec<f64> = target
        .spectrum()
        .iter()
        .zip(estimated.spectrum())
        .map(|(t, e)| (t / e.max(SPECTRUM_FLOOR)).sqrt())
        .collect();
    let bins = binning.mode_bins();
    let out = Fft2::cached(z.shape()).filter(z.values(), |i| bins[i].map_or(1.0, |b| gains[b]));
    GaussianField::new(z.shape(), out)
}

/// Runs the projection loop and returns the final density field.
///
/// Missing pixels start from a log-normal draw; each sweep applies the mean, covariance and
/// observed-data projections in that order. An all-zero mask is allowed here (pure synthesis).
pub fn synthesize_texture(
    delta_hat: &DensityField,
    mask: &[u8],
    prior: &LogNormalParams,
    n_tex: usize,
    rng: &mut SeededRng,
) -> Result<DensityField> {
    let shape = delta_hat.shape();
    shape.check_len(mask.len())?;
    shape.check_same(prior.cov.shape())?;
    if n_tex == 0 {
        return Err(Error::Config("n_tex must be at least 1".into()));
    }
    let draw = sample_lognormal_field(prior, rng)?;
    let mut p = project_observed(&draw, delta_hat, mask)?;
    for _ in 0..n_tex {
        let z = p.to_gaussian();
        let z = project_mean(&z, prior.mu);
        let z = project_cov(&z, &prior.cov)?;
        let filled = z.to_density()?;
        p = project_observed(&filled, delta_hat, mask)?;
    }
    Ok(p)
}

/// Completes `y` with synthetic counts in its missing region.
///
/// Observed pixels keep their counts; missing pixels receive Poisson draws of intensity
/// `m̄(1 + p)` where `p` is the synthesized density. The result is a complete map with mean count
/// `mean_count`.
pub fn impute(
    y: &CountMap,
    delta_hat: &DensityField,
    prior: &LogNormalParams,
    mean_count: f64,
    config: &ImputationConfig,
    rng: &mut SeededRng,
) -> Result<CountMap> {
    config.validate()?;
    y.shape().check_same(delta_hat.shape())?;
    if y.observed_pixels() == 0 {
        return Err(Error::EmptyMask("cannot impute a map with no observed pixels".into()));
    }
    if y.is_complete() {
        return CountMap::complete(y.shape(), y.counts().to_vec(), mean_count);
    }
    let p = synthesize_texture(delta_hat, y.mask(), prior, config.n_tex, rng)?;
    let intensity: Vec<f64> = p.delta().iter().map(|d| mean_count * (1.0 + d)).collect();
    let drawn = poisson_sample(&intensity, rng)?;
    let counts = y
        .counts()
        .iter()
        .zip(y.mask())
        .zip(drawn)
        .map(|((&c, &m), d)| if m == 1 { c } else { d })
        .collect();
    CountMap::complete(y.shape(), counts, mean_count)
}
