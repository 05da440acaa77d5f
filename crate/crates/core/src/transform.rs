//! Analysis/synthesis dictionaries for the sparsity prior.

use crate::error::{Error, Result};
use crate::grid::Shape;
use crate::rng::SeededRng;

/// A tight frame: `synthesize(forward(x)) = frame_constant() * x`.
///
/// Solver code only ever touches a dictionary through this trait.
pub trait Dictionary: Send + Sync {
    fn shape(&self) -> Shape;

    /// Number of coefficients `L >= n`.
    fn coeff_count(&self) -> usize;

    fn frame_constant(&self) -> f64;

    /// Analysis `Φᵀ x`.
    fn forward(&self, map: &[f64]) -> Result<Vec<f64>>;

    /// Synthesis `Φ α`.
    fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>>;
}

/// Orthonormal 2D type-II cosine basis (`ν = 1`, `L = n`).
#[derive(Debug, Clone)]
pub struct Dct2 {
    shape: Shape,
    // basis[k * n + j] = s_k cos(pi (2j + 1) k / 2n)
    row_basis: Vec<f64>,
    col_basis: Vec<f64>,
}

fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for j in 0..n {
            m[k * n + j] = s * (std::f64::consts::PI * (2 * j + 1) as f64 * k as f64 / (2.0 * nf)).cos();
        }
    }
    m
}

/// Applies `matrix` (or its transpose) to every row of `data`.
fn along_rows(data: &[f64], width: usize, matrix: &[f64], transpose: bool) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (src, dst) in data.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
        if transpose {
            for (k, &v) in src.iter().enumerate() {
                let row = &matrix[k * width..(k + 1) * width];
                for (d, &m) in dst.iter_mut().zip(row) {
                    *d += m * v;
                }
            }
        } else {
            for (k, d) in dst.iter_mut().enumerate() {
                let row = &matrix[k * width..(k + 1) * width];
                *d = row.iter().zip(src).map(|(m, x)| m * x).sum();
            }
        }
    }
    out
}

fn transpose(data: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..height {
        for c in 0..width {
            out[c * height + r] = data[r * width + c];
        }
    }
    out
}

impl Dct2 {
    pub fn new(shape: Shape) -> Self {
        Dct2 {
            shape,
            row_basis: dct_matrix(shape.width),
            col_basis: dct_matrix(shape.height),
        }
    }

    fn apply(&self, data: &[f64], inverse: bool) -> Vec<f64> {
        let (w, h) = (self.shape.width, self.shape.height);
        let rows = along_rows(data, w, &self.row_basis, inverse);
        let t = transpose(&rows, w, h);
        let cols = along_rows(&t, h, &self.col_basis, inverse);
        transpose(&cols, h, w)
    }
}

impl Dictionary for Dct2 {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn coeff_count(&self) -> usize {
        self.shape.len()
    }

    fn frame_constant(&self) -> f64 {
        1.0
    }

    fn forward(&self, map: &[f64]) -> Result<Vec<f64>> {
        self.shape.check_len(map.len())?;
        Ok(self.apply(map, false))
    }

    fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.coeff_count() {
            return Err(Error::dim(
                format!("{} coefficients", self.coeff_count()),
                format!("{} coefficients", coeffs.len()),
            ));
        }
        Ok(self.apply(coeffs, true))
    }
}

/// Largest relative deviation `|‖Φᵀx‖² − ν‖x‖²| / ‖x‖²` over `trials` random Gaussian maps.
pub fn verify_tight_frame(dict: &dyn Dictionary, trials: usize, rng: &mut SeededRng) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Config("tight-frame check needs at least one trial".into()));
    }
    let n = dict.shape().len();
    let nu = dict.frame_constant();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x = rng.normals(n);
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let coeff2: f64 = dict.forward(&x)?.iter().map(|v| v * v).sum();
        worst = worst.max((coeff2 - nu * norm2).abs() / norm2);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scaled(Dct2, f64);

    impl Dictionary for Scaled {
        fn shape(&self) -> Shape {
            self.0.shape()
        }
        fn coeff_count(&self) -> usize {
            self.0.coeff_count()
        }
        fn frame_constant(&self) -> f64 {
            self.0.frame_constant()
        }
        fn forward(&self, map: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.forward(map)?.into_iter().map(|v| v * self.1).collect())
        }
        fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.synthesize(coeffs)?.into_iter().map(|v| v * self.1).collect())
        }
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn zero_maps_to_zero() {
        let d = Dct2::new(Shape::new(5, 3).unwrap());
        assert!(d.forward(&[0.0; 15]).unwrap().iter().all(|&v| v == 0.0));
        assert!(d.synthesize(&[0.0; 15]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn atoms_are_one_hot() {
        let shape = Shape::new(6, 4).unwrap();
        let d = Dct2::new(shape);
        for idx in [0, 5, 13, 23] {
            let mut e = vec![0.0; 24];
            e[idx] = 1.0;
            let atom = d.synthesize(&e).unwrap();
            assert!((dot(&atom, &atom) - 1.0).abs() < 1e-12);
            let back = d.forward(&atom).unwrap();
            for (i, v) in back.iter().enumerate() {
                let want = if i == idx { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parseval_adjoint_and_round_trip() {
        let shape = Shape::new(12, 9).unwrap();
        let d = Dct2::new(shape);
        let mut rng = SeededRng::new(3);
        let x = rng.normals(shape.len());
        let a = rng.normals(shape.len());
        let fx = d.forward(&x).unwrap();
        assert!((dot(&fx, &fx) - dot(&x, &x)).abs() < 1e-10 * dot(&x, &x));
        let lhs = dot(&fx, &a);
        let rhs = dot(&x, &d.synthesize(&a).unwrap());
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        let back = d.synthesize(&fx).unwrap();
        assert!(x.iter().zip(&back).all(|(p, q)| (p - q).abs() < 1e-10));
    }

    #[test]
    fn synthesis_is_linear() {
        let shape = Shape::square(8).unwrap();
        let d = Dct2::new(shape);
        let mut rng = SeededRng::new(9);
        let a = rng.normals(64);
        let b = rng.normals(64);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let lhs = d.synthesize(&sum).unwrap();
        let sa = d.synthesize(&a).unwrap();
        let sb = d.synthesize(&b).unwrap();
        for i in 0..64 {
            assert!((lhs[i] - sa[i] - sb[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn tight_frame_check() {
        let shape = Shape::square(16).unwrap();
        let mut rng = SeededRng::new(1);
        let dev = verify_tight_frame(&Dct2::new(shape), 5, &mut rng).unwrap();
        assert!(dev <= 1e-10);
        // forward scaled by 2: ‖Φᵀx‖² = 4‖x‖² against a claimed ν = 1
        let dev = verify_tight_frame(&Scaled(Dct2::new(shape), 2.0), 5, &mut rng).unwrap();
        assert!((dev - 3.0).abs() < 1e-9);
        assert!(verify_tight_frame(&Dct2::new(shape), 0, &mut rng).is_err());
    }

    #[test]
    fn length_mismatch() {
        let d = Dct2::new(Shape::square(4).unwrap());
        assert!(d.forward(&[0.0; 15]).is_err());
        assert!(d.synthesize(&[0.0; 17]).is_err());
    }
}
