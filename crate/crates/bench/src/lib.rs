//! Criterion benchmarks of the propagation and analysis kernels live in `benches/`.
