// Benchmarks live in benches/stages.rs; this crate has no library API.
