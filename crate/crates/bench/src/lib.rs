//! Criterion benchmarks for the reconstruction kernels; see `benches/kernels.rs`.
