//! Criterion benchmarks for msde-core live in `benches/`.
