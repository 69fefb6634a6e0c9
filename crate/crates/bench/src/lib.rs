//! Criterion benchmarks for the qcm-core kernels; see `benches/`.
