//! Stationary Gaussian and log-normal fields.
//!
//! A [`StationaryCovariance`] is diagonal in the unitary Fourier basis: every non-DC mode whose
//! frequency magnitude falls in bin `b` has variance `spectrum[b]`. Under this normalization
//! white noise of pixel variance `s²` has a flat spectrum equal to `s²`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::grid::{radial_average, DensityField, GaussianField, RadialBinning, Shape};
pub use crate::rng::SeededRng;

/// Lower bound applied to every estimated spectrum bin.
pub const SPECTRUM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryCovariance {
    binning: Arc<RadialBinning>,
    spectrum: Vec<f64>,
}

impl StationaryCovariance {
    pub fn new(binning: Arc<RadialBinning>, spectrum: Vec<f64>) -> Result<Self> {
        if spectrum.len() != binning.n_bins() {
            return Err(Error::dim(
                format!("{} spectrum bins", binning.n_bins()),
                format!("{} values", spectrum.len()),
            ));
        }
        if let Some((b, v)) = spectrum
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::Domain(format!(
                "spectrum must be positive and finite, bin {b} is {v}"
            )));
        }
        Ok(StationaryCovariance { binning, spectrum })
    }

    pub fn flat(binning: Arc<RadialBinning>, value: f64) -> Result<Self> {
        let n = binning.n_bins();
        StationaryCovariance::new(binning, vec![value; n])
    }

    /// Bin-averaged power law `amplitude * (|k| / k0)^index`.
    pub fn power_law(binning: Arc<RadialBinning>, amplitude: f64, index: f64, k0: f64) -> Result<Self> {
        if !(k0 > 0.0) {
            return Err(Error::Domain(format!("reference frequency must be positive, got {k0}")));
        }
        let kmag = binning.shape().frequency_magnitudes();
        let law = |k: f64| amplitude * (k / k0).powf(index);
        let grid: Vec<f64> = kmag.iter().map(|&k| if k > 0.0 { law(k) } else { 0.0 }).collect();
        let spectrum = radial_average(&grid, &binning)?
            .into_iter()
            .zip(binning.centers())
            .map(|(v, &c)| v.unwrap_or_else(|| law(c)))
            .collect();
        StationaryCovariance::new(binning, spectrum)
    }

    pub fn binning(&self) -> &Arc<RadialBinning> {
        &self.binning
    }

    pub fn shape(&self) -> Shape {
        self.binning.shape()
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Eigenvalue used for the DC mode by the prior's quadratic form: the first non-empty bin.
    pub fn dc_power(&self) -> f64 {
        self.binning
            .mode_counts()
            .iter()
            .position(|&c| c > 0)
            .map_or(self.spectrum[0], |b| self.spectrum[b])
    }

    /// `Some(σ²)` when every populated bin has the same value, i.e. `Σ = σ² I`.
    pub fn flat_value(&self) -> Option<f64> {
        let mut populated = self
            .spectrum
            .iter()
            .zip(self.binning.mode_counts())
            .filter(|(_, &c)| c > 0)
            .map(|(v, _)| *v);
        let first = populated.next().unwrap_or(self.spectrum[0]);
        populated
            .all(|v| (v - first).abs() <= 1e-12 * first)
            .then_some(first)
    }

    /// Pixel variance implied by the spectrum (mean non-DC mode power).
    pub fn total_variance(&self) -> f64 {
        let n = self.shape().len() as f64;
        self.spectrum
            .iter()
            .zip(self.binning.mode_counts())
            .map(|(v, &c)| v * c as f64)
            .sum::<f64>()
            / n
    }

    fn check_grid(&self, shape: Shape) -> Result<()> {
        self.shape().check_same(shape)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogNormalParams {
    pub mu: f64,
    pub cov: StationaryCovariance,
}

impl LogNormalParams {
    pub fn new(mu: f64, cov: StationaryCovariance) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Domain(format!("mean must be finite, got {mu}")));
        }
        Ok(LogNormalParams { mu, cov })
    }

    /// Chooses `μ = −σ²/2` so that `E[δ] = 0`.
    pub fn zero_mean_density(cov: StationaryCovariance) -> Self {
        let mu = -0.5 * cov.total_variance();
        LogNormalParams { mu, cov }
    }
}

/// Multiplies each non-DC Fourier mode by `spectrum[bin]^exponent`; the DC mode passes through.
pub fn apply_cov_power(field: &GaussianField, cov: &StationaryCovariance, exponent: f64) -> Result<GaussianField> {
    cov.check_grid(field.shape())?;
    if !exponent.is_finite() {
        return Err(Error::Domain(format!("exponent must be finite, got {exponent}")));
    }
    let values = spectral_power(field.values(), cov, exponent, 1.0);
    GaussianField::new(field.shape(), values)
}

/// Applies `Σ^exponent` including the DC mode, whose eigenvalue is [`StationaryCovariance::dc_power`].
///
/// This is the operator used by the prior's quadratic form.
pub(crate) fn apply_cov_power_full(values: &[f64], cov: &StationaryCovariance, exponent: f64) -> Vec<f64> {
    spectral_power(values, cov, exponent, cov.dc_power().powf(exponent))
}

fn spectral_power(values: &[f64], cov: &StationaryCovariance, exponent: f64, dc_gain: f64) -> Vec<f64> {
    let gains: Vec<f64> = cov.spectrum.iter().map(|v| v.powf(exponent)).collect();
    let bins = cov.binning.mode_bins();
    Fft2::cached(cov.shape()).filter(values, |i| bins[i].map_or(dc_gain, |b| gains[b]))
}

/// Multiplies every mode, DC included, by `gain(eigenvalue of Σ on that mode)`.
pub(crate) fn apply_mode_gain(values: &[f64], cov: &StationaryCovariance, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let bins = cov.binning.mode_bins();
    let per_bin: Vec<f64> = cov.spectrum.iter().map(|&v| gain(v)).collect();
    let dc = gain(cov.dc_power());
    Fft2::cached(cov.shape()).filter(values, |i| bins[i].map_or(dc, |b| per_bin[b]))
}

/// Unit-variance white Gaussian field.
pub fn white_noise(shape: Shape, rng: &mut SeededRng) -> GaussianField {
    GaussianField::new(shape, rng.normals(shape.len())).expect("normal draws are finite")
}

/// `z = μ + Σ^{1/2} w` for white `w`. The DC mode is scaled by the lowest populated bin.
pub fn sample_gaussian_field(params: &LogNormalParams, rng: &mut SeededRng) -> Result<GaussianField> {
    let w = white_noise(params.cov.shape(), rng);
    let colored = apply_cov_power_full(w.values(), &params.cov, 0.5);
    let z = colored.iter().map(|v| v + params.mu).collect();
    GaussianField::new(params.cov.shape(), z)
}

/// `δ = exp(z) − 1` for a Gaussian draw `z`.
pub fn sample_lognormal_field(params: &LogNormalParams, rng: &mut SeededRng) -> Result<DensityField> {
    sample_gaussian_field(params, rng)?.to_density()
}

/// Mean of `z` over all pixels, or over pixels with `mask == 1`.
pub fn estimate_mean(z: &GaussianField, mask: Option<&[u8]>) -> Result<f64> {
    match mask {
        None => Ok(z.mean()),
        Some(m) => {
            z.shape().check_len(m.len())?;
            let (sum, count) = z
                .values()
                .iter()
                .zip(m)
                .filter(|(_, &k)| k == 1)
                .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
            if count == 0 {
                return Err(Error::EmptyMask("mean of a field with no observed pixels".into()));
            }
            Ok(sum / count as f64)
        }
    }
}

/// Mean-subtracted periodogram, radially averaged and floored at [`SPECTRUM_FLOOR`].
///
/// With a mask the field is zeroed outside the observed region and the power is divided by the
/// observed fraction.
pub fn estimate_spectrum(
    z: &GaussianField,
    binning: &Arc<RadialBinning>,
    mask: Option<&[u8]>,
) -> Result<StationaryCovariance> {
    binning.shape().check_same(z.shape())?;
    let mean = estimate_mean(z, mask)?;
    let (centered, fraction): (Vec<f64>, f64) = match mask {
        None => (z.values().iter().map(|v| v - mean).collect(), 1.0),
        Some(m) => {
            let observed = m.iter().filter(|&&k| k == 1).count();
            (
                z.values()
                    .iter()
                    .zip(m)
                    .map(|(v, &k)| if k == 1 { v - mean } else { 0.0 })
                    .collect(),
                observed as f64 / m.len() as f64,
            )
        }
    };
    let power = Fft2::cached(z.shape()).power(&centered);
    let spectrum = radial_average(&power, binning)?
        .into_iter()
        .map(|v| (v.unwrap_or(0.0) / fraction).max(SPECTRUM_FLOOR))
        .collect();
    StationaryCovariance::new(binning.clone(), spectrum)
}

/// Independent Poisson draws with the given intensities.
pub fn poisson_sample(intensity: &[f64], rng: &mut SeededRng) -> Result<Vec<u64>> {
    if let Some((i, v)) = intensity
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
    {
        return Err(Error::Domain(format!(
            "Poisson intensity must be finite and non-negative, pixel {i} is {v}"
        )));
    }
    Ok(intensity.iter().map(|&lam| poisson_draw(lam, rng)).collect())
}

/// One Poisson variate: sequential inversion below 10, transformed rejection (PTRS) above.
pub fn poisson_draw(lambda: f64, rng: &mut SeededRng) -> u64 {
    if lambda == 0.0 {
        return 0;
    }
    if lambda < 10.0 {
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let u = rng.uniform();
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p == 0.0 {
                break;
            }
        }
        return k;
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// `ln(k!)`: exact summation below 30, Stirling series above.
pub(crate) fn ln_factorial(k: u64) -> f64 {
    if k < 30 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let x2 = x * x;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x2 * x2 * x)
}
