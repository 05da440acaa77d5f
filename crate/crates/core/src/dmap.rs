//! DMAP1 raster files.
//!
//! A file is one header line
//!
//! ```text
//! magic=DMAP1 width=<w> height=<h> dtype=<f64|i64|u8> kind=<counts|mask|density|gaussian|spectrum>
//! ```
//!
//! terminated by `\n`, followed by `width * height` little-endian samples in row-major order.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{CountMap, DensityField, GaussianField, Shape};

pub const MAGIC: &str = "DMAP1";
const MAX_HEADER: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64,
    I64,
    U8,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F64 | Dtype::I64 => 8,
            Dtype::U8 => 1,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::F64 => "f64",
            Dtype::I64 => "i64",
            Dtype::U8 => "u8",
        })
    }
}

impl FromStr for Dtype {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "f64" => Ok(Dtype::F64),
            "i64" => Ok(Dtype::I64),
            "u8" => Ok(Dtype::U8),
            other => Err(format!("unknown dtype '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Counts,
    Mask,
    Density,
    Gaussian,
    Spectrum,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Counts => "counts",
            Kind::Mask => "mask",
            Kind::Density => "density",
            Kind::Gaussian => "gaussian",
            Kind::Spectrum => "spectrum",
        })
    }
}

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "counts" => Ok(Kind::Counts),
            "mask" => Ok(Kind::Mask),
            "density" => Ok(Kind::Density),
            "gaussian" => Ok(Kind::Gaussian),
            "spectrum" => Ok(Kind::Spectrum),
            other => Err(format!("unknown kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    F64(Vec<f64>),
    I64(Vec<i64>),
    U8(Vec<u8>),
}

impl Samples {
    pub fn dtype(&self) -> Dtype {
        match self {
            Samples::F64(_) => Dtype::F64,
            Samples::I64(_) => Dtype::I64,
            Samples::U8(_) => Dtype::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Samples::F64(v) => v.len(),
            Samples::I64(v) => v.len(),
            Samples::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An in-memory DMAP1 raster.
#[derive(Debug, Clone, PartialEq)]
pub struct DMap {
    pub width: usize,
    pub height: usize,
    pub kind: Kind,
    pub samples: Samples,
}

impl DMap {
    pub fn new(width: usize, height: usize, kind: Kind, samples: Samples) -> Result<Self> {
        if samples.len() != width * height {
            return Err(Error::dim(
                format!("{} samples ({width}x{height})", width * height),
                format!("{} samples", samples.len()),
            ));
        }
        Ok(DMap {
            width,
            height,
            kind,
            samples,
        })
    }

    pub fn header(&self) -> String {
        format!(
            "magic={MAGIC} width={} height={} dtype={} kind={}\n",
            self.width,
            self.height,
            self.samples.dtype(),
            self.kind
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header();
        let mut out = Vec::with_capacity(header.len() + self.samples.len() * self.samples.dtype().size());
        out.extend_from_slice(header.as_bytes());
        match &self.samples {
            Samples::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Samples::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Samples::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .take(MAX_HEADER)
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(bytes.len().min(MAX_HEADER), "header line not terminated"))?;
        let header = std::str::from_utf8(&bytes[..newline])
            .map_err(|e| Error::format(e.valid_up_to(), "header is not UTF-8"))?;

        let mut magic = None;
        let mut width = None;
        let mut height = None;
        let mut dtype = None;
        let mut kind = None;
        let mut offset = 0;
        for token in header.split(' ') {
            let at = offset;
            offset += token.len() + 1;
            if token.is_empty() {
                continue;
            }
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::format(at, format!("expected key=value, found '{token}'")))?;
            let value_at = at + key.len() + 1;
            match key {
                "magic" => {
                    if value != MAGIC {
                        return Err(Error::format(value_at, format!("bad magic '{value}'")));
                    }
                    magic = Some(());
                }
                "width" | "height" => {
                    let v: usize = value
                        .parse()
                        .map_err(|_| Error::format(value_at, format!("bad {key} '{value}'")))?;
                    if key == "width" {
                        width = Some(v);
                    } else {
                        height = Some(v);
                    }
                }
                "dtype" => dtype = Some(value.parse::<Dtype>().map_err(|m| Error::format(value_at, m))?),
                "kind" => kind = Some(value.parse::<Kind>().map_err(|m| Error::format(value_at, m))?),
                other => return Err(Error::format(at, format!("unknown header key '{other}'"))),
            }
        }
        if magic.is_none() {
            return Err(Error::format(0, "missing magic"));
        }
        let missing = |name: &str| Error::format(newline, format!("missing header key '{name}'"));
        let width = width.ok_or_else(|| missing("width"))?;
        let height = height.ok_or_else(|| missing("height"))?;
        let dtype = dtype.ok_or_else(|| missing("dtype"))?;
        let kind = kind.ok_or_else(|| missing("kind"))?;

        let start = newline + 1;
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::format(0, "dimensions overflow"))?;
        let expected = n * dtype.size();
        let payload = &bytes[start..];
        if payload.len() < expected {
            return Err(Error::format(
                bytes.len(),
                format!("truncated payload: expected {expected} bytes, found {}", payload.len()),
            ));
        }
        if payload.len() > expected {
            return Err(Error::format(start + expected, "trailing bytes after payload"));
        }
        let samples = match dtype {
            Dtype::F64 => Samples::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::I64 => Samples::I64(
                payload
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::U8 => Samples::U8(payload.to_vec()),
        };
        DMap::new(width, height, kind, samples)
    }

    /// Writes the file atomically (temporary sibling, then rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        DMap::from_bytes(&fs::read(path)?)
    }

    pub fn shape(&self) -> Result<Shape> {
        Shape::new(self.width, self.height)
    }

    pub fn from_density(field: &DensityField) -> Self {
        let s = field.shape();
        DMap {
            width: s.width,
            height: s.height,
            kind: Kind::Density,
            samples: Samples::F64(field.delta().to_vec()),
        }
    }

    pub fn from_gaussian(field: &GaussianField) -> Self {
        let s = field.shape();
        DMap {
            width: s.width,
            height: s.height,
            kind: Kind::Gaussian,
            samples: Samples::F64(field.values().to_vec()),
        }
    }

    pub fn from_counts(map: &CountMap) -> Self {
        let s = map.shape();
        DMap {
            width: s.width,
            height: s.height,
            kind: Kind::Counts,
            samples: Samples::I64(map.counts().iter().map(|&c| c as i64).collect()),
        }
    }

    pub fn from_mask(map: &CountMap) -> Self {
        let s = map.shape();
        DMap {
            width: s.width,
            height: s.height,
            kind: Kind::Mask,
            samples: Samples::U8(map.mask().to_vec()),
        }
    }

    pub fn from_spectrum(values: &[f64]) -> Self {
        DMap {
            width: values.len(),
            height: 1,
            kind: Kind::Spectrum,
            samples: Samples::F64(values.to_vec()),
        }
    }

    fn expect(&self, kind: Kind, dtype: Dtype) -> Result<()> {
        if self.kind != kind || self.samples.dtype() != dtype {
            return Err(Error::format(
                0,
                format!(
                    "expected kind={kind} dtype={dtype}, found kind={} dtype={}",
                    self.kind,
                    self.samples.dtype()
                ),
            ));
        }
        Ok(())
    }

    pub fn to_density(&self) -> Result<DensityField> {
        self.expect(Kind::Density, Dtype::F64)?;
        match &self.samples {
            Samples::F64(v) => DensityField::new(self.shape()?, v.clone()),
            _ => unreachable!(),
        }
    }

    pub fn to_spectrum(&self) -> Result<Vec<f64>> {
        self.expect(Kind::Spectrum, Dtype::F64)?;
        match &self.samples {
            Samples::F64(v) => Ok(v.clone()),
            _ => unreachable!(),
        }
    }

    /// Reassembles a count map from a counts raster and its mask raster.
    pub fn to_count_map(counts: &DMap, mask: &DMap, mean_count: f64) -> Result<CountMap> {
        counts.expect(Kind::Counts, Dtype::I64)?;
        mask.expect(Kind::Mask, Dtype::U8)?;
        let shape = counts.shape()?;
        shape.check_same(mask.shape()?)?;
        let c = match &counts.samples {
            Samples::I64(v) => v
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    u64::try_from(x)
                        .map_err(|_| Error::Domain(format!("negative count {x} at pixel {i}")))
                })
                .collect::<Result<Vec<u64>>>()?,
            _ => unreachable!(),
        };
        let m = match &mask.samples {
            Samples::U8(v) => v.clone(),
            _ => unreachable!(),
        };
        CountMap::new(shape, c, m, mean_count)
    }
}

/// Writes `bytes` to `path` via a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn file_size_is_header_plus_payload() {
        let map = DMap::new(2, 2, Kind::Density, Samples::F64(vec![0.1, 0.2, 0.3, 0.4])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dmap");
        map.save(&path).unwrap();
        let len = fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(len, map.header().len() + 32);
        assert_eq!(DMap::load(&path).unwrap(), map);
    }

    #[test]
    fn bad_magic_is_rejected_with_offset() {
        let bytes = b"magic=XXXX width=1 height=1 dtype=u8 kind=mask\n\x01";
        match DMap::from_bytes(bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_dtype_and_truncation() {
        let bytes = b"magic=DMAP1 width=1 height=1 dtype=f32 kind=mask\n\x01";
        assert!(matches!(DMap::from_bytes(bytes), Err(Error::Format { .. })));
        let bytes = b"magic=DMAP1 width=2 height=1 dtype=f64 kind=density\n\0\0\0\0\0\0\0\0";
        match DMap::from_bytes(bytes) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, bytes.len());
                assert!(message.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_newline() {
        assert!(matches!(
            DMap::from_bytes(b"magic=DMAP1 width=1"),
            Err(Error::Format { .. })
        ));
    }

    fn arb_map() -> impl Strategy<Value = DMap> {
        (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
            let n = w * h;
            prop_oneof![
                prop::collection::vec(any::<f64>(), n)
                    .prop_map(move |v| DMap::new(w, h, Kind::Gaussian, Samples::F64(v)).unwrap()),
                prop::collection::vec(any::<i64>(), n)
                    .prop_map(move |v| DMap::new(w, h, Kind::Counts, Samples::I64(v)).unwrap()),
                prop::collection::vec(any::<u8>(), n)
                    .prop_map(move |v| DMap::new(w, h, Kind::Mask, Samples::U8(v)).unwrap()),
            ]
        })
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bit_exact(map in arb_map()) {
            let bytes = map.to_bytes();
            let back = DMap::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
