//! Criterion benchmarks for `fbmsde`; see `benches/`.
