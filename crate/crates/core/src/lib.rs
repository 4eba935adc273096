//! Exact and Monte Carlo analysis of Takagi-class functions
//! `f(x) = Σ cₙ φ⁽ⁿ⁾(x)`, where `φ` is the tent map.
//!
//! The crate is organised bottom-up:
//!
//! - [`coefficients`]: coefficient families, certified tail sums and
//!   classification against the rate-of-convergence conditions.
//! - [`point_eval`]: bit-exact evaluation of tent-map iterates, partial sums
//!   and normalised tail statistics at a point given by its binary expansion.
//! - [`moments`]: closed-form tail means, variances and covariances.
//! - [`montecarlo`]: seeded sampling and the limit-theorem verification runners.
//! - [`asymptotics`]: integral brackets for stretched-exponential tails.

// `!(x > 0.0)` is how parameter checks reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod coefficients;
mod dyadic;
mod error;
pub mod moments;
pub mod montecarlo;
pub mod point_eval;
mod quadrature;

pub use asymptotics::Bracket;
pub use coefficients::{
    Condition, ConditionVerdict, CoefficientSeq, DifferentiabilityClass, Family, TailSumResult,
    Verdict,
};
pub use dyadic::Dyadic;
pub use error::{Error, Result};
pub use moments::TailStats;
pub use montecarlo::{SampleBatch, VerificationReport};
pub use point_eval::{BitPoint, CertifiedValue};
