//! Mask and spectrum descriptors.

use std::path::PathBuf;
use std::sync::Arc;

use densrecon_core::{DMap, Dtype, Kind, RadialBinning, Samples, SeededRng, Shape, StationaryCovariance};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum MaskSpec {
    None,
    /// Each pixel is masked independently with probability `p`.
    Random(f64),
    /// Masked rectangle, column `x`, row `y`, width `w`, height `h`.
    Box { x: usize, y: usize, w: usize, h: usize },
    File(PathBuf),
}

impl std::str::FromStr for MaskSpec {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        let bad = || CliError::Usage(format!("bad mask '{s}' (expected none, random:p, box:x,y,w,h or file:path)"));
        if s == "none" {
            return Ok(MaskSpec::None);
        }
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "random" => {
                let p: f64 = rest.parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad());
                }
                Ok(MaskSpec::Random(p))
            }
            "box" => {
                let v: Vec<usize> = rest.split(',').map(|t| t.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
                match v[..] {
                    [x, y, w, h] => Ok(MaskSpec::Box { x, y, w, h }),
                    _ => Err(bad()),
                }
            }
            "file" if !rest.is_empty() => Ok(MaskSpec::File(PathBuf::from(rest))),
            _ => Err(bad()),
        }
    }
}

impl MaskSpec {
    /// `1` = observed, `0` = missing.
    pub fn build(&self, shape: Shape, rng: &mut SeededRng) -> CliResult<Vec<u8>> {
        let n = shape.len();
        let mask = match self {
            MaskSpec::None => vec![1; n],
            MaskSpec::Random(p) => (0..n).map(|_| u8::from(rng.uniform() >= *p)).collect(),
            MaskSpec::Box { x, y, w, h } => {
                if x + w > shape.width || y + h > shape.height {
                    return Err(CliError::Usage(format!(
                        "box {x},{y},{w},{h} exceeds the {}x{} grid",
                        shape.width, shape.height
                    )));
                }
                let mut m = vec![1; n];
                for r in *y..y + h {
                    m[r * shape.width + x..r * shape.width + x + w].fill(0);
                }
                m
            }
            MaskSpec::File(path) => {
                let d = DMap::load(path)?;
                if d.kind != Kind::Mask || d.samples.dtype() != Dtype::U8 {
                    return Err(CliError::Usage(format!("{} is not a mask map", path.display())));
                }
                if d.shape()? != shape {
                    return Err(CliError::Usage(format!(
                        "mask {} is {}x{}, truth is {}x{}",
                        path.display(),
                        d.width,
                        d.height,
                        shape.width,
                        shape.height
                    )));
                }
                match d.samples {
                    Samples::U8(v) => v,
                    _ => unreachable!(),
                }
            }
        };
        if mask.iter().all(|&m| m == 0) {
            return Err(CliError::Usage("mask leaves no observed pixels".into()));
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumSpec {
    /// `A (|k|/k0)^n`; `k0` defaults to the fundamental frequency of the grid.
    PowerLaw { amplitude: f64, index: f64, k0: Option<f64> },
    File(PathBuf),
}

impl std::str::FromStr for SpectrumSpec {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        let bad = |why: &str| CliError::Usage(format!("bad spectrum '{s}': {why}"));
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(SpectrumSpec::File(PathBuf::from(path)));
        }
        let (mut amplitude, mut index, mut k0) = (None, None, None);
        for part in s.split(',') {
            let (k, v) = part.split_once('=').ok_or_else(|| bad("expected A=..,n=.."))?;
            let v: f64 = v.trim().parse().map_err(|_| bad("values must be numbers"))?;
            match k.trim() {
                "A" => amplitude = Some(v),
                "n" => index = Some(v),
                "k0" => k0 = Some(v),
                other => return Err(bad(&format!("unknown field '{other}'"))),
            }
        }
        let amplitude = amplitude.ok_or_else(|| bad("missing A"))?;
        let index = index.ok_or_else(|| bad("missing n"))?;
        if !(amplitude > 0.0 && amplitude.is_finite()) || !index.is_finite() {
            return Err(bad("A must be positive and n finite"));
        }
        if let Some(k) = k0 {
            if !(k > 0.0) {
                return Err(bad("k0 must be positive"));
            }
        }
        Ok(SpectrumSpec::PowerLaw { amplitude, index, k0 })
    }
}

impl SpectrumSpec {
    pub fn build(&self, binning: Arc<RadialBinning>) -> CliResult<StationaryCovariance> {
        match self {
            SpectrumSpec::PowerLaw { amplitude, index, k0 } => {
                let k0 = match k0 {
                    Some(k) => *k,
                    None => binning
                        .shape()
                        .fundamental_frequency()
                        .ok_or_else(|| CliError::Usage("grid too small for a power law".into()))?,
                };
                Ok(StationaryCovariance::power_law(binning, *amplitude, *index, k0).map_err(usage)?)
            }
            SpectrumSpec::File(path) => {
                let values = DMap::load(path)?.to_spectrum().map_err(usage)?;
                StationaryCovariance::new(binning, values).map_err(|e| {
                    CliError::Usage(format!("spectrum file {}: {e}", path.display()))
                })
            }
        }
    }
}

fn usage(e: densrecon_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_descriptors() {
        assert_eq!("none".parse::<MaskSpec>().unwrap(), MaskSpec::None);
        assert_eq!("random:0.3".parse::<MaskSpec>().unwrap(), MaskSpec::Random(0.3));
        assert_eq!(
            "box:1,2,3,4".parse::<MaskSpec>().unwrap(),
            MaskSpec::Box { x: 1, y: 2, w: 3, h: 4 }
        );
        for bad in ["random:1.5", "box:1,2,3", "disk:3", "file:"] {
            assert!(bad.parse::<MaskSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn box_mask_and_refusals() {
        let shape = Shape::square(8).unwrap();
        let mut rng = SeededRng::new(0);
        let m = MaskSpec::Box { x: 0, y: 0, w: 4, h: 4 }.build(shape, &mut rng).unwrap();
        assert_eq!(m.iter().filter(|&&v| v == 0).count(), 16);
        assert_eq!(m[0], 0);
        assert_eq!(m[4], 1);
        assert!(MaskSpec::Random(1.0).build(shape, &mut rng).is_err());
        assert!(MaskSpec::Box { x: 0, y: 0, w: 8, h: 8 }.build(shape, &mut rng).is_err());
        assert!(MaskSpec::Box { x: 5, y: 0, w: 4, h: 1 }.build(shape, &mut rng).is_err());
    }

    #[test]
    fn spectrum_descriptors() {
        assert_eq!(
            "A=1,n=-2".parse::<SpectrumSpec>().unwrap(),
            SpectrumSpec::PowerLaw { amplitude: 1.0, index: -2.0, k0: None }
        );
        for bad in ["A=1", "n=2", "A=-1,n=2", "A=1,n=x", "A=1,n=2,q=3"] {
            assert!(bad.parse::<SpectrumSpec>().is_err(), "{bad}");
        }
    }
}
