//! Seeded Monte Carlo sampling and limit-theorem verification runners.
//!
//! Random points come from ChaCha20 (`rand_chacha` 0.9): point `i` of a batch
//! with seed `s` reads 64-bit words, most significant bit first, from stream
//! `i` of `ChaCha20Rng::seed_from_u64(s)`. The digits of a point therefore do
//! not depend on how a batch is split across workers, and a longer point
//! extends a shorter one with the same index.

mod kernel;
pub mod ks;
mod report;
mod runners;
mod sample;
mod stats;

pub use kernel::TailKernel;
pub use ks::{quarter_limit_cdf, ks_statistic, ks_two_sample, normal_cdf, uniform_cdf};
pub use report::{Check, Comparator, Metric, VerificationReport};
pub use runners::{
    run_appendix, run_clt, run_geometric, run_identities, run_lil, run_lln, run_moments,
    AppendixConfig, CltConfig, GeometricConfig, IdentitiesConfig, LilConfig, LlnConfig,
    MomentsConfig,
};
pub use sample::{DyadicGrid, PointSource, SampleBatch};
pub use stats::Accumulator;
