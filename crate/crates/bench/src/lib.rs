//! Benchmarks for erz-core live in `benches/`.
