//! Unitary 2D discrete Fourier transforms on row-major grids.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Shape;

pub struct Fft2 {
    shape: Shape,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Fft2 {
    pub fn new(shape: Shape) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            shape,
            row_fwd: planner.plan_fft_forward(shape.width),
            row_inv: planner.plan_fft_inverse(shape.width),
            col_fwd: planner.plan_fft_forward(shape.height),
            col_inv: planner.plan_fft_inverse(shape.height),
            scale: 1.0 / (shape.len() as f64).sqrt(),
        }
    }

    /// Shared plan for `shape`.
    pub fn cached(shape: Shape) -> Arc<Fft2> {
        static CACHE: OnceLock<Mutex<HashMap<Shape, Arc<Fft2>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry(shape)
            .or_insert_with(|| Arc::new(Fft2::new(shape)))
            .clone()
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    fn run(&self, buf: &mut [Complex64], rows: &dyn Fft<f64>, cols: &dyn Fft<f64>) {
        let (w, h) = (self.shape.width, self.shape.height);
        debug_assert_eq!(buf.len(), w * h);
        if w > 1 {
            rows.process(buf);
        }
        if h > 1 {
            let mut t = vec![Complex64::default(); w * h];
            for r in 0..h {
                for c in 0..w {
                    t[c * h + r] = buf[r * w + c];
                }
            }
            cols.process(&mut t);
            for r in 0..h {
                for c in 0..w {
                    buf[r * w + c] = t[c * h + r];
                }
            }
        }
        for v in buf.iter_mut() {
            *v *= self.scale;
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, self.row_fwd.as_ref(), self.col_fwd.as_ref());
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, self.row_inv.as_ref(), self.col_inv.as_ref());
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Inverse transform, keeping the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut spectrum);
        spectrum.into_iter().map(|c| c.re).collect()
    }

    /// Per-mode power `|F x|^2` under the unitary transform.
    pub fn power(&self, data: &[f64]) -> Vec<f64> {
        self.forward_real(data).iter().map(|c| c.norm_sqr()).collect()
    }

    /// Multiplies every Fourier mode `i` of a real field by `gain(i)`.
    ///
    /// `gain` must be symmetric under `k -> -k` for the result to be real.
    pub fn filter(&self, data: &[f64], gain: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut spec = self.forward_real(data);
        for (i, v) in spec.iter_mut().enumerate() {
            *v *= gain(i);
        }
        self.inverse_real(spec)
    }
}

/// Keeps the Fourier modes with `|k| <= kmax` (cycles per pixel) and zeroes the rest.
pub fn low_pass(data: &[f64], shape: Shape, kmax: f64) -> Result<Vec<f64>> {
    shape.check_len(data.len())?;
    if !(kmax >= 0.0) {
        return Err(Error::Domain(format!("kmax must be non-negative, got {kmax}")));
    }
    let k = shape.frequency_magnitudes();
    Ok(Fft2::cached(shape).filter(data, |i| if k[i] <= kmax { 1.0 } else { 0.0 }))
}
