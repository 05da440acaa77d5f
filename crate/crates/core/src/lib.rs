//! Reconstruction of log-normal density fields from incomplete, Poisson-noised count maps.
//!
//! The pipeline alternates two steps. Missing regions are filled by texture synthesis under mean
//! and covariance constraints ([`synthesis`]). The density is then estimated on the completed data
//! by a Douglas–Rachford splitting that combines a Poisson likelihood, a log-normal prior and a
//! sparsity prior in a cosine dictionary ([`solver`]). [`pipeline`] runs the outer loop with
//! multiple imputations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dmap;
pub mod error;
pub mod fft;
pub mod grid;
pub mod pipeline;
pub mod proxops;
pub mod randfield;
pub mod rng;
pub mod solver;
pub mod synthesis;
pub mod transform;

pub use dmap::{DMap, Dtype, Kind, Samples};
pub use error::{Error, Result};
pub use grid::{apply_mask, radial_average, CountMap, DensityField, GaussianField, RadialBinning, Shape};
pub use pipeline::{AugmentationConfig, PipelineResult};
pub use proxops::{ProxMode, ProxParams};
pub use randfield::{LogNormalParams, StationaryCovariance};
pub use rng::SeededRng;
pub use solver::{SolveTrace, SolverConfig};
pub use synthesis::ImputationConfig;
pub use transform::{Dct2, Dictionary};
