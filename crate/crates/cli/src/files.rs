//! Text, image and manifest files written by the commands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use densrecon_core::dmap::write_atomic;
use densrecon_core::pipeline::BinningSpec;
use densrecon_core::Shape;

use crate::{CliError, CliResult};

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    Ok(write_atomic(path, text.as_bytes())?)
}

/// `path` itself when it is a file, `path/name` when it is a directory.
pub fn resolve(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

/// Reads `key=value` lines, skipping blanks and `#` comments.
pub fn read_key_values(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Runtime(format!("{}: malformed line '{line}'", path.display())))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn field<'a>(map: &'a BTreeMap<String, String>, key: &str, path: &Path) -> CliResult<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| CliError::Runtime(format!("{}: missing '{key}'", path.display())))
}

fn number<T: std::str::FromStr>(raw: &str, key: &str, path: &Path) -> CliResult<T> {
    raw.parse()
        .map_err(|_| CliError::Runtime(format!("{}: bad value '{raw}' for '{key}'", path.display())))
}

/// Log-normal parameters with their grid and binning, as stored in `params.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFile {
    pub shape: Shape,
    pub bins: BinningSpec,
    pub mu: f64,
    pub mean_count: Option<f64>,
    pub spectrum: Vec<f64>,
}

impl ParamsFile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "width={}", self.shape.width);
        let _ = writeln!(out, "height={}", self.shape.height);
        let _ = writeln!(out, "bins={}", self.bins);
        let _ = writeln!(out, "mu={:?}", self.mu);
        if let Some(m) = self.mean_count {
            let _ = writeln!(out, "mean_count={m:?}");
        }
        let values: Vec<String> = self.spectrum.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "spectrum={}", values.join(","));
        out
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let map = read_key_values(path)?;
        let width = number(field(&map, "width", path)?, "width", path)?;
        let height = number(field(&map, "height", path)?, "height", path)?;
        let bins = number(field(&map, "bins", path)?, "bins", path)?;
        let mu = number(field(&map, "mu", path)?, "mu", path)?;
        let mean_count = map.get("mean_count").map(|v| number(v, "mean_count", path)).transpose()?;
        let spectrum = field(&map, "spectrum", path)?
            .split(',')
            .map(|v| number(v.trim(), "spectrum", path))
            .collect::<CliResult<Vec<f64>>>()?;
        Ok(ParamsFile {
            shape: Shape::new(width, height)?,
            bins,
            mu,
            mean_count,
            spectrum,
        })
    }
}

/// Value at fraction `q` of the sorted finite samples (nearest rank).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Binary 8-bit PGM with a linear stretch of `[p1, p99]` onto `[0, 255]`.
pub fn pgm_bytes(values: &[f64], shape: Shape) -> Vec<u8> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let (lo, hi) = if sorted.is_empty() {
        (0.0, 0.0)
    } else {
        (percentile(&sorted, 0.01), percentile(&sorted, 0.99))
    };
    let mut out = format!("P5\n{} {}\n255\n", shape.width, shape.height).into_bytes();
    out.extend(values.iter().map(|&v| {
        if hi > lo && v.is_finite() {
            (255.0 * ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).round() as u8
        } else {
            0
        }
    }));
    out
}

pub fn write_pgm(path: &Path, values: &[f64], shape: Shape) -> CliResult<()> {
    Ok(write_atomic(path, &pgm_bytes(values, shape))?)
}

/// Ordered `key=value` record of a command invocation.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Manifest::default();
        m.push("tool", env!("CARGO_PKG_NAME"));
        m.push("version", env!("CARGO_PKG_VERSION"));
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_config(&mut self, config_text: &str) {
        for line in config_text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.push(&format!("config.{k}"), v);
            }
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().fold(String::new(), |mut out, (k, v)| {
            let _ = writeln!(out, "{k}={v}");
            out
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_text(path, &self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_layout_and_stretch() {
        let shape = Shape::new(4, 25).unwrap();
        let values: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let bytes = pgm_bytes(&values, shape);
        let header = b"P5\n4 25\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let pixels = &bytes[header.len()..];
        assert_eq!(pixels.len(), 100);
        assert_eq!(pixels[0], 0);
        assert_eq!(pixels[1], 0);
        assert_eq!(pixels[99], 255);
        assert!(pixels.windows(2).all(|w| w[0] <= w[1]));
        let flat = pgm_bytes(&[3.0; 100], shape);
        assert!(flat[header.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn params_round_trip() {
        let p = ParamsFile {
            shape: Shape::new(8, 4).unwrap(),
            bins: BinningSpec::Log(3),
            mu: -0.125,
            mean_count: Some(10.5),
            spectrum: vec![1.0, 0.1 + 0.2, 1e-12],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.txt");
        write_text(&path, &p.to_text()).unwrap();
        assert_eq!(ParamsFile::load(&path).unwrap(), p);
    }
}
