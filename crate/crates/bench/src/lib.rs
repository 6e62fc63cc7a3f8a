//! Benchmark-only crate; see `benches/pipeline.rs` for the measured paths:
//! tensor kernels, exact audits, the extraction isometry, preparation
//! reports, and trial sampling.
