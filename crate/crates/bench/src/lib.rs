//! Criterion benchmarks for the gmflow kernels live in `benches/`.
