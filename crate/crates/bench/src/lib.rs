//! Criterion benchmarks for `reclass-core`; the benchmarks live under `benches/`.
