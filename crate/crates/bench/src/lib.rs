//! Shared fixtures for the evaluator benchmarks.

use takagi::montecarlo::SampleBatch;
use takagi::{BitPoint, CoefficientSeq};

/// Sequences exercised by every benchmark group.
pub fn sequences() -> Vec<(&'static str, CoefficientSeq)> {
    vec![
        ("takagi", CoefficientSeq::takagi()),
        ("powerlaw2", CoefficientSeq::power_law(2.0).expect("valid")),
        ("stretchexp", CoefficientSeq::stretched_exp(1.0, 0.5).expect("valid")),
    ]
}

pub fn points(count: usize, bits: usize) -> Vec<BitPoint> {
    SampleBatch::new(7, count, bits).expect("valid batch").points().collect()
}
