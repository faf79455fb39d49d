//! Criterion benchmarks for the hot loops in `dprlab-core`; see `benches/`.
