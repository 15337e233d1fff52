//! Criterion benchmarks for the graphvrnn kernels; see `benches/`.
