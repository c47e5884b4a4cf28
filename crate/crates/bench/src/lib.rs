//! Criterion benchmarks for the NOS receivers; see `benches/`.
