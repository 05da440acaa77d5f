//! Raster containers, masks and radial frequency binning.
//!
//! All rasters are row-major: pixel `(row, col)` lives at `row * width + col`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Shape { width, height })
    }

    pub fn square(side: usize) -> Result<Self> {
        Shape::new(side, side)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::dim(
                format!("{} samples ({}x{})", self.len(), self.width, self.height),
                format!("{len} samples"),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_same(&self, other: Shape) -> Result<()> {
        if *self != other {
            return Err(Error::dim(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        Ok(())
    }

    /// Signed frequency (cycles per pixel) of the DFT bin `index` along an axis of length `n`.
    fn axis_frequency(index: usize, n: usize) -> f64 {
        let signed = if index <= n / 2 {
            index as f64
        } else {
            index as f64 - n as f64
        };
        signed / n as f64
    }

    /// Frequency magnitude `|k|` in cycles per pixel for every DFT mode, row-major.
    pub fn frequency_magnitudes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for row in 0..self.height {
            let ky = Self::axis_frequency(row, self.height);
            for col in 0..self.width {
                let kx = Self::axis_frequency(col, self.width);
                out.push((kx * kx + ky * ky).sqrt());
            }
        }
        out
    }

    /// Largest frequency magnitude present on the grid.
    pub fn max_frequency(&self) -> f64 {
        let kx = Self::axis_frequency(self.width / 2, self.width).abs();
        let ky = Self::axis_frequency(self.height / 2, self.height).abs();
        (kx * kx + ky * ky).sqrt()
    }

    /// Smallest non-zero frequency magnitude (the fundamental), `None` on a 1x1 grid.
    pub fn fundamental_frequency(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        if self.width > 1 {
            best = Some(1.0 / self.width as f64);
        }
        if self.height > 1 {
            let f = 1.0 / self.height as f64;
            best = Some(best.map_or(f, |b| b.min(f)));
        }
        best
    }
}

/// Observed counts `y`, the binary mask `M` (1 = observed) and the mean count per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMap {
    shape: Shape,
    counts: Vec<u64>,
    mask: Vec<u8>,
    mean_count: f64,
}

impl CountMap {
    pub fn new(shape: Shape, counts: Vec<u64>, mask: Vec<u8>, mean_count: f64) -> Result<Self> {
        shape.check_len(counts.len())?;
        shape.check_len(mask.len())?;
        if let Some(bad) = mask.iter().find(|&&m| m > 1) {
            return Err(Error::Domain(format!("mask values must be 0 or 1, found {bad}")));
        }
        if !(mean_count > 0.0 && mean_count.is_finite()) {
            return Err(Error::Domain(format!(
                "mean count must be positive and finite, got {mean_count}"
            )));
        }
        Ok(CountMap {
            shape,
            counts,
            mask,
            mean_count,
        })
    }

    /// Fully observed map.
    pub fn complete(shape: Shape, counts: Vec<u64>, mean_count: f64) -> Result<Self> {
        let mask = vec![1u8; shape.len()];
        CountMap::new(shape, counts, mask, mean_count)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn mean_count(&self) -> f64 {
        self.mean_count
    }

    pub fn with_mean_count(mut self, mean_count: f64) -> Result<Self> {
        if !(mean_count > 0.0 && mean_count.is_finite()) {
            return Err(Error::Domain(format!(
                "mean count must be positive and finite, got {mean_count}"
            )));
        }
        self.mean_count = mean_count;
        Ok(self)
    }

    pub fn observed_pixels(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn observed_fraction(&self) -> f64 {
        self.observed_pixels() as f64 / self.shape.len() as f64
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m == 1)
    }

    /// Counts as reals, for the optimization code.
    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Mask as reals in {0, 1}.
    pub fn mask_f64(&self) -> Vec<f64> {
        self.mask.iter().map(|&m| m as f64).collect()
    }
}

/// Density contrast `δ`, with `δ > -1` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    shape: Shape,
    delta: Vec<f64>,
}

impl DensityField {
    pub fn new(shape: Shape, delta: Vec<f64>) -> Result<Self> {
        shape.check_len(delta.len())?;
        if let Some((i, &d)) = delta
            .iter()
            .enumerate()
            .find(|(_, d)| !(**d > -1.0 && d.is_finite()))
        {
            return Err(Error::Domain(format!(
                "density contrast must be finite and > -1, pixel {i} is {d}"
            )));
        }
        Ok(DensityField { shape, delta })
    }

    pub fn zeros(shape: Shape) -> Self {
        DensityField {
            shape,
            delta: vec![0.0; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.delta
    }

    /// `z = log(1 + δ)`.
    pub fn to_gaussian(&self) -> GaussianField {
        GaussianField {
            shape: self.shape,
            z: self.delta.iter().map(|d| d.ln_1p()).collect(),
        }
    }
}

/// Latent Gaussian field `z = log(1 + δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianField {
    shape: Shape,
    z: Vec<f64>,
}

impl GaussianField {
    pub fn new(shape: Shape, z: Vec<f64>) -> Result<Self> {
        shape.check_len(z.len())?;
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("gaussian field is not finite at pixel {i}")));
        }
        Ok(GaussianField { shape, z })
    }

    pub fn constant(shape: Shape, value: f64) -> Self {
        GaussianField {
            shape,
            z: vec![value; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.z
    }

    /// `δ = exp(z) - 1`. Fails only if `z` is so negative that `exp(z)` underflows to 0.
    pub fn to_density(&self) -> Result<DensityField> {
        DensityField::new(self.shape, self.z.iter().map(|v| v.exp_m1()).collect())
    }

    pub fn mean(&self) -> f64 {
        self.z.iter().sum::<f64>() / self.z.len() as f64
    }
}

/// `output[i] = mask[i] * map[i]`.
pub fn apply_mask(map: &[f64], mask: &[u8]) -> Result<Vec<f64>> {
    if map.len() != mask.len() {
        return Err(Error::dim(
            format!("{} mask samples", map.len()),
            format!("{} mask samples", mask.len()),
        ));
    }
    Ok(map
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m == 1 { v } else { 0.0 })
        .collect())
}

/// Partition of the non-DC DFT modes of a grid into shells of frequency magnitude.
///
/// Bin `b` holds the modes with `edges[b] < |k| <= edges[b + 1]`; the DC mode belongs to no bin.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialBinning {
    shape: Shape,
    edges: Vec<f64>,
    mode_bin: Vec<Option<usize>>,
    counts: Vec<usize>,
    centers: Vec<f64>,
}

impl RadialBinning {
    pub fn from_edges(shape: Shape, edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Config("a binning needs at least two edges".into()));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Config("bin edges must be finite and strictly increasing".into()));
        }
        let kmag = shape.frequency_magnitudes();
        let lowest = kmag[1..].iter().copied().fold(f64::INFINITY, f64::min);
        let highest = shape.max_frequency();
        if shape.len() > 1 && (edges[0] >= lowest || *edges.last().unwrap() < highest) {
            return Err(Error::Config(format!(
                "bin edges [{}, {}] must cover all non-DC frequencies in ({lowest}, {highest}]",
                edges[0],
                edges.last().unwrap()
            )));
        }
        let n_bins = edges.len() - 1;
        let mut counts = vec![0usize; n_bins];
        let mut ksum = vec![0.0; n_bins];
        let mode_bin = kmag
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                if i == 0 {
                    return None;
                }
                let b = edges.partition_point(|&e| e < k) - 1;
                counts[b] += 1;
                ksum[b] += k;
                Some(b)
            })
            .collect();
        let centers = counts
            .iter()
            .zip(&ksum)
            .enumerate()
            .map(|(b, (&c, &s))| {
                if c > 0 {
                    s / c as f64
                } else {
                    0.5 * (edges[b] + edges[b + 1])
                }
            })
            .collect();
        Ok(RadialBinning {
            shape,
            edges,
            mode_bin,
            counts,
            centers,
        })
    }

    /// `n_bins` equal-width shells from 0 to the largest frequency on the grid.
    pub fn linear(shape: Shape, n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::Config("number of bins must be positive".into()));
        }
        let kmax = shape.max_frequency();
        let mut edges: Vec<f64> = (0..=n_bins).map(|i| kmax * i as f64 / n_bins as f64).collect();
        edges[n_bins] = kmax;
        RadialBinning::from_edges(shape, edges)
    }

    /// First shell `(0, f]` at the fundamental `f`, then `n_bins - 1` log-spaced shells up to
    /// the largest frequency.
    pub fn logarithmic(shape: Shape, n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::Config("logarithmic binning needs at least two bins".into()));
        }
        let kmax = shape.max_frequency();
        let kmin = shape
            .fundamental_frequency()
            .ok_or_else(|| Error::Config("grid has no non-DC modes".into()))?;
        let ratio = (kmax / kmin).ln();
        let mut edges = vec![0.0];
        for i in 0..n_bins {
            edges.push(kmin * (ratio * i as f64 / (n_bins - 1) as f64).exp());
        }
        edges[n_bins] = kmax;
        RadialBinning::from_edges(shape, edges)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Number of DFT modes in each bin.
    pub fn mode_counts(&self) -> &[usize] {
        &self.counts
    }

    /// Mean frequency magnitude of the modes in each bin (bin midpoint for empty bins).
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Bin of each DFT mode, row-major; `None` for DC.
    pub fn mode_bins(&self) -> &[Option<usize>] {
        &self.mode_bin
    }

    /// Whether two binnings partition the same grid identically.
    pub fn compatible(&self, other: &RadialBinning) -> bool {
        self.shape == other.shape && self.edges == other.edges
    }

    /// Short textual descriptor, e.g. `edges:0,0.1,0.2` (lossless).
    pub fn descriptor(&self) -> String {
        let parts: Vec<String> = self.edges.iter().map(|e| format!("{e:?}")).collect();
        format!("edges:{}", parts.join(","))
    }
}

/// Per-bin arithmetic mean of a per-mode power grid. The DC mode is excluded; empty bins are `None`.
pub fn radial_average(power_grid: &[f64], binning: &RadialBinning) -> Result<Vec<Option<f64>>> {
    binning.shape.check_len(power_grid.len())?;
    let mut sums = vec![0.0; binning.n_bins()];
    for (p, bin) in power_grid.iter().zip(&binning.mode_bin) {
        if let Some(b) = bin {
            sums[*b] += p;
        }
    }
    Ok(sums
        .into_iter()
        .zip(&binning.counts)
        .map(|(s, &c)| if c > 0 { Some(s / c as f64) } else { None })
        .collect())
}
