//! Benchmarks live in `benches/`: brackets and certification in `symbol`,
//! the corner and Carleman labs in `labs`.
