//! Criterion benchmarks for the hot kernels of `debias-core`; see `benches/`.
