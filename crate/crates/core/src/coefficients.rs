//! Coefficient sequences `{cₙ}`, certified tail sums `Σ_{n≥N} (cₙ)^p`, and
//! classification against the tail-ratio conditions and Kôno's
//! differentiability trichotomy.
//!
//! Tail sums are carried internally in *scaled* form: the value divided by
//! `s_N^p`, where `s_N = exp(ln_scale(N))` is a family-specific unit that keeps
//! geometric and stretched-exponential tails representable for large `N`.
//! Every ratio statistic used downstream is invariant under this scaling.

use std::fmt;
use std::fs;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::asymptotics::stretch_integral_scaled;
use crate::error::{Error, Result};

/// The supported coefficient families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `cₙ = n^{-alpha}`, `alpha > 1`.
    PowerLaw { alpha: f64 },
    /// `cₙ = exp(-k nᵝ)`, `k > 0`, `0 < beta ≤ 1`.
    StretchedExp { k: f64, beta: f64 },
    /// `cₙ = rⁿ`, `0 < |r| < 1`.
    Geometric { r: f64 },
    /// `cₙ = 2^{-n} / √n`.
    DyadicOverSqrt,
    /// Finite list `c₁, …, c_len`, zero afterwards.
    Explicit { terms: Vec<f64> },
}

/// A validated coefficient sequence in `ℓ¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct CoefficientSeq {
    family: Family,
}

impl TryFrom<Family> for CoefficientSeq {
    type Error = Error;

    fn try_from(family: Family) -> Result<Self> {
        Self::new(family)
    }
}

impl From<CoefficientSeq> for Family {
    fn from(seq: CoefficientSeq) -> Family {
        seq.family
    }
}

/// `Σ_{n≥N} (cₙ)^p` with `|value − true sum| ≤ error_bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSumResult {
    pub value: f64,
    pub error_bound: f64,
}

/// A tail sum expressed in units of `exp(ln_unit)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledTailSum {
    pub value: f64,
    pub error_bound: f64,
    pub ln_unit: f64,
}

/// `exp(ln)`, exact when `ln` is an integer multiple of `ln 2`.
pub(crate) fn exp_unit(ln: f64) -> f64 {
    let k = (ln / std::f64::consts::LN_2).round();
    if k.abs() < 2000.0 && k * std::f64::consts::LN_2 == ln {
        k.exp2()
    } else {
        ln.exp()
    }
}

impl ScaledTailSum {
    pub fn unscaled(&self) -> TailSumResult {
        let unit = exp_unit(self.ln_unit);
        TailSumResult {
            value: self.value * unit,
            error_bound: self.error_bound * unit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// `Σ(cₙ)² / (Σcₙ)² → 0`
    C14,
    /// `Σ_N exp(-K (Σcₙ)²/Σ(cₙ)²) < ∞` for every `K > 0`
    C15,
    /// `(c_N)² / Σ(cₙ)² → 0`
    C16,
    /// `Σ_N (c_N)⁴ / (Σ(cₙ)²)² < ∞`
    C17,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::C14, Condition::C15, Condition::C16, Condition::C17];

    pub fn name(self) -> &'static str {
        match self {
            Condition::C14 => "C14",
            Condition::C15 => "C15",
            Condition::C16 => "C16",
            Condition::C17 => "C17",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub condition: Condition,
    pub verdict: Verdict,
    /// `(N, ratio)` along a geometric grid of `N`.
    pub evidence: Vec<(u64, f64)>,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Differentiability {
    AbsolutelyContinuous,
    AEDifferentiableNowhere,
    NowhereDifferentiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentiabilityClass {
    pub class: Differentiability,
    pub witness: String,
}

/// Status of the standing hypotheses `Σ_{n≥N}(cₙ)² > 0` and `Σ_{n≥N}cₙ ≠ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisStatus {
    pub square_tail_positive: bool,
    pub tail_sum_nonzero: bool,
    /// Smallest `N` at which one of the hypotheses fails.
    pub first_violation: Option<u64>,
}

// B_{2k} / (2k)! for k = 1..=7
const BERNOULLI_OVER_FACTORIAL: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30_240.0,
    -1.0 / 1_209_600.0,
    1.0 / 47_900_160.0,
    -691.0 / 1_307_674_368_000.0,
    1.0 / 74_724_249_600.0,
];

const EM_REL_TARGET: f64 = 1e-17;
const ROUNDING: f64 = 64.0 * f64::EPSILON;

/// Euler–Maclaurin tail `Σ_{n≥M} f(n)` for completely monotone `f`.
///
/// `derivs[j] = f^{(j)}(M)`, `j = 0..=13`. For completely monotone `f` the
/// remainder is bounded by the first omitted correction; the bound is doubled.
fn euler_maclaurin(derivs: &[f64; 14], integral: f64, integral_err: f64) -> (f64, f64, bool) {
    let mut sum = integral + 0.5 * derivs[0];
    for k in 0..6 {
        sum -= BERNOULLI_OVER_FACTORIAL[k] * derivs[2 * k + 1];
        let next = (BERNOULLI_OVER_FACTORIAL[k + 1] * derivs[2 * k + 3]).abs();
        if next <= EM_REL_TARGET * sum.abs() {
            return (sum, 2.0 * next + integral_err, true);
        }
    }
    let next = (BERNOULLI_OVER_FACTORIAL[6] * derivs[13]).abs();
    (sum, 2.0 * next + integral_err, false)
}

/// Float error of `head + tail` for non-negative terms each rounded to a few ulps.
fn rounding_bound(head: &CompensatedSum, tail: f64) -> f64 {
    4.0 * f64::EPSILON * head.magnitude() + 16.0 * f64::EPSILON * tail.abs()
}

/// Neumaier-compensated accumulator.
#[derive(Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
    abs: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs += x.abs();
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }

    /// Sum of absolute values of the inputs.
    pub(crate) fn magnitude(&self) -> f64 {
        self.abs
    }
}

impl CoefficientSeq {
    pub fn new(family: Family) -> Result<Self> {
        let invalid = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        match &family {
            Family::PowerLaw { alpha } => {
                if !(alpha.is_finite() && *alpha > 1.0) {
                    return invalid("power law requires alpha > 1");
                }
            }
            Family::StretchedExp { k, beta } => {
                if !(k.is_finite() && *k > 0.0) {
                    return invalid("stretched exponential requires K > 0");
                }
                if !(*beta > 0.0 && *beta <= 1.0) {
                    return invalid("stretched exponential requires 0 < beta <= 1");
                }
            }
            Family::Geometric { r } => {
                if !(r.is_finite() && *r != 0.0 && r.abs() < 1.0) {
                    return invalid("geometric requires 0 < |r| < 1");
                }
            }
            Family::DyadicOverSqrt => {}
            Family::Explicit { terms } => {
                if terms.iter().any(|t| !t.is_finite()) {
                    return invalid("explicit terms must be finite");
                }
            }
        }
        Ok(Self { family })
    }

    pub fn power_law(alpha: f64) -> Result<Self> {
        Self::new(Family::PowerLaw { alpha })
    }

    pub fn stretched_exp(k: f64, beta: f64) -> Result<Self> {
        Self::new(Family::StretchedExp { k, beta })
    }

    pub fn geometric(r: f64) -> Result<Self> {
        Self::new(Family::Geometric { r })
    }

    /// The Takagi function's coefficients `cₙ = 2^{-n}`.
    pub fn takagi() -> Self {
        Self {
            family: Family::Geometric { r: 0.5 },
        }
    }

    pub fn dyadic_over_sqrt() -> Self {
        Self {
            family: Family::DyadicOverSqrt,
        }
    }

    pub fn explicit(terms: Vec<f64>) -> Result<Self> {
        Self::new(Family::Explicit { terms })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// `cₙ` for `n ≥ 1`.
    ///
    /// # Panics
    ///
    /// Panics if `n == 0`.
    pub fn term(&self, n: u64) -> f64 {
        assert!(n >= 1, "coefficients are indexed from 1");
        match &self.family {
            Family::PowerLaw { alpha } => (n as f64).powf(-alpha),
            Family::StretchedExp { k, beta } => (-k * (n as f64).powf(*beta)).exp(),
            Family::Geometric { r } => geometric_power(*r, n as f64),
            Family::DyadicOverSqrt => pow2(-(n as f64)) / (n as f64).sqrt(),
            Family::Explicit { terms } => terms.get(n as usize - 1).copied().unwrap_or(0.0),
        }
    }

    /// The sequence `|cₙ|`.
    pub fn abs(&self) -> Self {
        let family = match &self.family {
            Family::Geometric { r } => Family::Geometric { r: r.abs() },
            Family::Explicit { terms } => Family::Explicit {
                terms: terms.iter().map(|t| t.abs()).collect(),
            },
            other => other.clone(),
        };
        Self { family }
    }

    /// True when every term is non-negative.
    pub fn is_nonnegative(&self) -> bool {
        match &self.family {
            Family::Geometric { r } => *r > 0.0,
            Family::Explicit { terms } => terms.iter().all(|&t| t >= 0.0),
            _ => true,
        }
    }

    /// Index of the last non-zero coefficient, if the sequence is finite.
    pub fn support_end(&self) -> Option<u64> {
        match &self.family {
            Family::Explicit { terms } => {
                Some(terms.iter().rposition(|&t| t != 0.0).map_or(0, |i| i as u64 + 1))
            }
            _ => None,
        }
    }

    /// Natural log of the unit `s_N` used for scaled tail quantities.
    pub fn ln_scale(&self, n: u64) -> f64 {
        let x = n as f64;
        match &self.family {
            Family::PowerLaw { .. } | Family::Explicit { .. } => 0.0,
            Family::StretchedExp { k, beta } => -k * x.powf(*beta),
            Family::Geometric { r } => x * r.abs().ln(),
            Family::DyadicOverSqrt => -x * std::f64::consts::LN_2,
        }
    }

    /// `cₙ / s_anchor` for `n ≥ anchor`.
    pub fn scaled_term(&self, n: u64, anchor: u64) -> f64 {
        match &self.family {
            Family::PowerLaw { .. } | Family::Explicit { .. } => self.term(n),
            Family::StretchedExp { k, beta } => {
                (-k * ((n as f64).powf(*beta) - (anchor as f64).powf(*beta))).exp()
            }
            Family::Geometric { r } => {
                let mag = r.abs().powf(n as f64 - anchor as f64);
                if *r < 0.0 && n % 2 == 1 {
                    -mag
                } else {
                    mag
                }
            }
            Family::DyadicOverSqrt => pow2(anchor as f64 - n as f64) / (n as f64).sqrt(),
        }
    }

    /// Ratio `s_{n+1} / s_n` of consecutive scale units.
    pub fn scale_step(&self, n: u64) -> f64 {
        match &self.family {
            Family::PowerLaw { .. } | Family::Explicit { .. } => 1.0,
            Family::StretchedExp { k, beta } => {
                (-k * ((n as f64 + 1.0).powf(*beta) - (n as f64).powf(*beta))).exp()
            }
            Family::Geometric { r } => r.abs(),
            Family::DyadicOverSqrt => 0.5,
        }
    }

    /// `Σ_{n≥N} (cₙ)^p` with a certified error bound.
    pub fn tail_sum(&self, n_start: u64, p: u32) -> Result<TailSumResult> {
        let scaled = self.tail_sum_scaled(n_start, p)?;
        if let Family::Geometric { r } = &self.family {
            // avoid the exp/ln round trip so dyadic ratios stay exact
            let lead = geometric_power(*r, n_start as f64).powi(p as i32);
            if lead != 0.0 {
                return Ok(TailSumResult {
                    value: lead / (1.0 - r.powi(p as i32)),
                    error_bound: 0.0,
                });
            }
        }
        Ok(scaled.unscaled())
    }

    /// `Σ_{n≥N} (cₙ)^p / s_N^p`.
    pub fn tail_sum_scaled(&self, n_start: u64, p: u32) -> Result<ScaledTailSum> {
        if n_start == 0 {
            return Err(Error::InvalidParameter("tail index N must be >= 1".into()));
        }
        if p == 0 {
            return Err(Error::InvalidParameter("power p must be >= 1".into()));
        }
        let ln_unit = p as f64 * self.ln_scale(n_start);
        let (value, error_bound) = match &self.family {
            Family::Geometric { r } => {
                let sign = if *r < 0.0 && (p as u64 * n_start) % 2 == 1 {
                    -1.0
                } else {
                    1.0
                };
                (sign / (1.0 - r.powi(p as i32)), 0.0)
            }
            Family::Explicit { terms } => {
                let mut acc = CompensatedSum::default();
                for &t in terms.iter().skip(n_start as usize - 1) {
                    acc.add(t.powi(p as i32));
                }
                (acc.value(), 0.0)
            }
            Family::PowerLaw { alpha } => power_law_tail(p as f64 * alpha, n_start),
            Family::StretchedExp { k, beta } => {
                if *beta == 1.0 {
                    (1.0 / -(-(p as f64) * k).exp_m1(), 0.0)
                } else {
                    stretched_tail(p as f64 * k, *beta, n_start)?
                }
            }
            Family::DyadicOverSqrt => dyadic_sqrt_tail(p, n_start),
        };
        Ok(ScaledTailSum {
            value,
            error_bound,
            ln_unit,
        })
    }

    /// `sup_{n≥N} (cₙ)²` in units of `s_N²`.
    pub fn sup_square_scaled(&self, n_start: u64) -> f64 {
        match &self.family {
            Family::Explicit { terms } => terms
                .iter()
                .skip(n_start as usize - 1)
                .map(|t| t * t)
                .fold(0.0, f64::max),
            _ => {
                let c = self.scaled_term(n_start, n_start);
                c * c
            }
        }
    }

    /// Checks the standing hypotheses for `N = 1..=limit` (or the support).
    pub fn standing_hypotheses(&self) -> HypothesisStatus {
        match self.support_end() {
            None => HypothesisStatus {
                square_tail_positive: true,
                tail_sum_nonzero: true,
                first_violation: None,
            },
            Some(end) => {
                // a finite sequence always has Σ_{n≥N}(cₙ)² = 0 beyond its support
                let mut first_zero_sum = None;
                for n in 1..=end {
                    let s = self.tail_sum(n, 1).map(|t| t.value).unwrap_or(0.0);
                    if s == 0.0 {
                        first_zero_sum = Some(n);
                        break;
                    }
                }
                let violation = first_zero_sum.unwrap_or(end + 1).min(end + 1);
                HypothesisStatus {
                    square_tail_positive: false,
                    tail_sum_nonzero: first_zero_sum.is_none(),
                    first_violation: Some(violation),
                }
            }
        }
    }

    fn evidence_grid(&self) -> Vec<u64> {
        let cap = self.support_end().unwrap_or(1 << 14);
        (0..=14)
            .map(|j| 1u64 << j)
            .filter(|&n| n <= cap)
            .collect()
    }

    fn condition_ratio(&self, which: Condition, n: u64) -> Option<f64> {
        let t1 = self.tail_sum_scaled(n, 1).ok()?.value;
        let t2 = self.tail_sum_scaled(n, 2).ok()?.value;
        let c = self.scaled_term(n, n);
        let ratio = match which {
            Condition::C14 => t2 / (t1 * t1),
            Condition::C15 => t1 * t1 / t2,
            Condition::C16 => c * c / t2,
            Condition::C17 => c.powi(4) / (t2 * t2),
        };
        ratio.is_finite().then_some(ratio)
    }

    /// Classifies the sequence against one of the four tail conditions.
    ///
    /// Built-in families are decided analytically; the evidence table reports
    /// the governing ratio on `N = 1, 2, 4, …, 2¹⁴`.
    pub fn check_condition(&self, which: Condition) -> ConditionVerdict {
        let evidence: Vec<(u64, f64)> = self
            .evidence_grid()
            .into_iter()
            .filter_map(|n| self.condition_ratio(which, n).map(|r| (n, r)))
            .collect();
        let (verdict, rationale) = self.analytic_verdict(which);
        ConditionVerdict {
            condition: which,
            verdict,
            evidence,
            rationale,
        }
    }

    fn analytic_verdict(&self, which: Condition) -> (Verdict, String) {
        use Condition::*;
        use Verdict::*;
        match &self.family {
            Family::PowerLaw { alpha } => {
                let text = match which {
                    C14 => format!(
                        "ratio ~ (alpha-1)^2/(2alpha-1) / N = {:.6}/N -> 0",
                        (alpha - 1.0).powi(2) / (2.0 * alpha - 1.0)
                    ),
                    C15 => "(Σcₙ)²/Σcₙ² grows linearly in N, so exp(-K·ratio) is summable for every K".into(),
                    C16 => format!("(c_N)²/Σcₙ² ~ ({:.6})/N -> 0", 2.0 * alpha - 1.0),
                    C17 => "summand ~ (2alpha-1)²/N² is summable".into(),
                };
                (Holds, text)
            }
            Family::StretchedExp { beta, .. } if *beta < 1.0 => match which {
                C14 => (Holds, format!("ratio ≍ N^-(1-beta) = N^-{:.3} -> 0", 1.0 - beta)),
                C15 => (Holds, format!("(Σcₙ)²/Σcₙ² ≍ N^{:.3} grows polynomially", 1.0 - beta)),
                C16 => (Holds, format!("(c_N)²/Σcₙ² ≍ N^-{:.3} -> 0", 1.0 - beta)),
                C17 => {
                    if *beta < 0.5 {
                        (Holds, format!("summand ≍ N^-{:.3}, summable since beta < 1/2", 2.0 * (1.0 - beta)))
                    } else {
                        (Fails, format!("summand ≍ N^-{:.3}, not summable since beta >= 1/2", 2.0 * (1.0 - beta)))
                    }
                }
            },
            Family::StretchedExp { k, .. } => {
                (Fails, geometric_rationale(which, (-k).exp()))
            }
            Family::Geometric { r } => (Fails, geometric_rationale(which, *r)),
            Family::DyadicOverSqrt => (
                Fails,
                format!(
                    "asymptotically geometric with ratio 1/2: {}",
                    geometric_rationale(which, 0.5)
                ),
            ),
            Family::Explicit { .. } => {
                let status = self.standing_hypotheses();
                (
                    Inconclusive,
                    format!(
                        "finite sequence: limits are not decidable from finitely many terms; \
                         standing hypotheses fail from N = {}",
                        status.first_violation.unwrap_or(1)
                    ),
                )
            }
        }
    }

    /// Kôno's trichotomy applied to `{2ⁿ cₙ}`.
    pub fn kono_classify(&self) -> DifferentiabilityClass {
        use Differentiability::*;
        let (class, witness) = match &self.family {
            Family::Geometric { r } => {
                let q = 2.0 * r.abs();
                if q < 1.0 {
                    (AbsolutelyContinuous, format!("|2ⁿcₙ| = {q}ⁿ is square-summable"))
                } else if q == 1.0 {
                    (NowhereDifferentiable, "|2ⁿcₙ| = 1 for all n, limsup > 0".into())
                } else {
                    (NowhereDifferentiable, format!("|2ⁿcₙ| = {q}ⁿ -> ∞"))
                }
            }
            Family::StretchedExp { k, beta } if *beta == 1.0 => {
                let q = 2.0 * (-k).exp();
                if q < 1.0 {
                    (AbsolutelyContinuous, format!("2ⁿcₙ = (2e^-K)ⁿ = {q:.6}ⁿ is square-summable"))
                } else {
                    (NowhereDifferentiable, format!("2ⁿcₙ = (2e^-K)ⁿ = {q:.6}ⁿ does not vanish"))
                }
            }
            Family::StretchedExp { .. } => (
                NowhereDifferentiable,
                "2ⁿcₙ = exp(n ln2 - K nᵝ) -> ∞ since beta < 1".into(),
            ),
            Family::PowerLaw { .. } => (
                NowhereDifferentiable,
                "2ⁿcₙ = 2ⁿ n^-alpha -> ∞".into(),
            ),
            Family::DyadicOverSqrt => (
                AEDifferentiableNowhere,
                "2ⁿcₙ = n^-1/2 -> 0 but Σ 1/n diverges".into(),
            ),
            Family::Explicit { .. } => (
                AbsolutelyContinuous,
                "finite sequence: 2ⁿcₙ vanishes eventually, hence square-summable".into(),
            ),
        };
        DifferentiabilityClass { class, witness }
    }
}

fn geometric_rationale(which: Condition, r: f64) -> String {
    match which {
        Condition::C14 => format!(
            "ratio = (1-r)²/(1-r²) = {:.6} for every N, bounded away from 0",
            (1.0 - r).powi(2) / (1.0 - r * r)
        ),
        Condition::C15 => format!(
            "(Σcₙ)²/Σcₙ² = {:.6} is bounded, so exp(-K·ratio) is not summable",
            (1.0 - r * r) / (1.0 - r).powi(2)
        ),
        Condition::C16 => format!("(c_N)²/Σcₙ² = 1 - r² = {:.6} is constant", 1.0 - r * r),
        Condition::C17 => format!(
            "summand = (1-r²)² = {:.6} is constant, not summable",
            (1.0 - r * r).powi(2)
        ),
    }
}

fn pow2(e: f64) -> f64 {
    e.exp2()
}

fn geometric_power(r: f64, n: f64) -> f64 {
    let mag = r.abs().powf(n);
    if r < 0.0 && n % 2.0 == 1.0 {
        -mag
    } else {
        mag
    }
}

/// `Σ_{n≥N} n^{-q}`, `q > 1`.
fn power_law_tail(q: f64, n_start: u64) -> (f64, f64) {
    let mut m = n_start.max(q.ceil() as u64 + 20);
    loop {
        let mut head = CompensatedSum::default();
        for n in n_start..m {
            head.add((n as f64).powf(-q));
        }
        let mf = m as f64;
        let mut derivs = [0.0; 14];
        derivs[0] = mf.powf(-q);
        for j in 1..14 {
            derivs[j] = derivs[j - 1] * (-(q + j as f64 - 1.0) / mf);
        }
        let integral = mf.powf(1.0 - q) / (q - 1.0);
        let (tail, err, converged) = euler_maclaurin(&derivs, integral, 0.0);
        if converged || m > (1 << 40) {
            let value = head.value() + tail;
            let rounding = rounding_bound(&head, tail);
            return (value, err + rounding);
        }
        m *= 2;
    }
}

/// `Σ_{n≥N} exp(-c nᵝ)` in units of `exp(-c Nᵝ)`, `0 < beta < 1`.
fn stretched_tail(c: f64, beta: f64, n_start: u64) -> Result<(f64, f64)> {
    let anchor = (n_start as f64).powf(beta);
    let mut m = n_start.max(32);
    loop {
        let mut head = CompensatedSum::default();
        for n in n_start..m {
            head.add((-c * ((n as f64).powf(beta) - anchor)).exp());
        }
        let mf = m as f64;
        let f_m = (-c * (mf.powf(beta) - anchor)).exp();
        // derivatives of g = exp(-h), h = c xᵝ, relative to g(M)
        let mut h = [0.0; 14];
        let mut falling = c;
        for (j, slot) in h.iter_mut().enumerate().skip(1) {
            falling *= beta - (j as f64 - 1.0);
            *slot = falling * mf.powf(beta - j as f64);
        }
        let mut g = [0.0; 14];
        g[0] = 1.0;
        for n in 1..14 {
            let mut binom = 1.0;
            let mut acc = 0.0;
            for k in 0..n {
                acc += binom * h[k + 1] * g[n - 1 - k];
                binom = binom * (n - 1 - k) as f64 / (k + 1) as f64;
            }
            g[n] = -acc;
        }
        let derivs = g.map(|d| d * f_m);
        let integral = stretch_integral_scaled(c, beta, mf)?;
        // express the integral in units of exp(-c Nᵝ)
        let shift = (integral.ln_scale + c * anchor).exp();
        let (tail, err, converged) =
            euler_maclaurin(&derivs, integral.mantissa * shift, integral.abs_error * shift);
        if converged || m > (1 << 40) {
            let value = head.value() + tail;
            let rounding = rounding_bound(&head, tail);
            return Ok((value, err + rounding));
        }
        m *= 2;
    }
}

/// `Σ_{n≥N} (2^{-n}/√n)^p` in units of `2^{-pN}`.
fn dyadic_sqrt_tail(p: u32, n_start: u64) -> (f64, f64) {
    let mut acc = CompensatedSum::default();
    let ratio = pow2(-(p as f64));
    let mut weight = 1.0;
    let mut n = n_start;
    loop {
        acc.add(weight * (n as f64).powf(-(p as f64) / 2.0));
        weight *= ratio;
        n += 1;
        let bound = weight * (n as f64).powf(-(p as f64) / 2.0) / (1.0 - ratio);
        if bound <= 1e-18 * acc.value() {
            return (acc.value() + 0.5 * bound, 0.5 * bound + ROUNDING * acc.magnitude());
        }
    }
}

impl fmt::Display for CoefficientSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::PowerLaw { alpha } => write!(f, "powerlaw:alpha={alpha}"),
            Family::StretchedExp { k, beta } => write!(f, "stretchexp:K={k},beta={beta}"),
            Family::Geometric { r } => write!(f, "geometric:r={r}"),
            Family::DyadicOverSqrt => write!(f, "dyadicsqrt"),
            Family::Explicit { terms } => {
                write!(f, "explicit:values=")?;
                for (i, t) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{t}")?;
                }
                Ok(())
            }
        }
    }
}

fn parse_params(body: &str) -> Result<Vec<(String, String)>> {
    body.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{kv}`")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn param_f64(params: &[(String, String)], key: &str) -> Result<f64> {
    let raw = params
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(key))
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Parse(format!("missing parameter `{key}`")))?;
    parse_real(raw)
}

fn parse_real(raw: &str) -> Result<f64> {
    if let Some((num, den)) = raw.split_once('/') {
        let n: f64 = num.trim().parse().map_err(|_| Error::Parse(format!("bad number `{raw}`")))?;
        let d: f64 = den.trim().parse().map_err(|_| Error::Parse(format!("bad number `{raw}`")))?;
        return Ok(n / d);
    }
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad number `{raw}`")))
}

/// Reads one real per line; blank lines and `#` comments are skipped.
pub fn parse_explicit_terms(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(parse_real)
        .collect()
}

impl FromStr for CoefficientSeq {
    type Err = Error;

    /// Parses `powerlaw:alpha=2`, `stretchexp:K=1,beta=0.5`, `geometric:r=0.5`,
    /// `explicit:file=<path>`, `explicit:values=a;b;c` or `dyadicsqrt`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        let params = parse_params(body)?;
        match name.to_ascii_lowercase().as_str() {
            "powerlaw" => Self::power_law(param_f64(&params, "alpha")?),
            "stretchexp" => Self::stretched_exp(param_f64(&params, "K")?, param_f64(&params, "beta")?),
            "geometric" => Self::geometric(param_f64(&params, "r")?),
            "takagi" => Ok(Self::takagi()),
            "dyadicsqrt" => Ok(Self::dyadic_over_sqrt()),
            "explicit" => {
                if let Some(values) = body.strip_prefix("values=") {
                    let terms = values
                        .split(';')
                        .filter(|v| !v.trim().is_empty())
                        .map(parse_real)
                        .collect::<Result<Vec<_>>>()?;
                    return Self::explicit(terms);
                }
                let path = body
                    .strip_prefix("file=")
                    .ok_or_else(|| Error::Parse("explicit needs file=<path> or values=...".into()))?;
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Parse(format!("cannot read `{path}`: {e}")))?;
                Self::explicit(parse_explicit_terms(&text)?)
            }
            other => Err(Error::Parse(format!("unknown sequence family `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_tail(seq: &CoefficientSeq, n: u64, p: u32, terms: u64) -> f64 {
        let mut acc = CompensatedSum::default();
        for i in n..n + terms {
            acc.add(seq.term(i).powi(p as i32));
        }
        acc.value()
    }

    #[test]
    fn terms_match_family_formulas() {
        assert_eq!(CoefficientSeq::power_law(2.0).unwrap().term(3), 1.0 / 9.0);
        assert_eq!(CoefficientSeq::geometric(0.5).unwrap().term(4), 1.0 / 16.0);
        assert_eq!(CoefficientSeq::explicit(vec![0.5, 0.25]).unwrap().term(3), 0.0);
        assert_eq!(CoefficientSeq::geometric(-0.5).unwrap().term(3), -0.125);
        let d = CoefficientSeq::dyadic_over_sqrt();
        assert!((d.term(4) - 1.0 / 32.0).abs() < 1e-18);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(CoefficientSeq::power_law(1.0).is_err());
        assert!(CoefficientSeq::stretched_exp(0.0, 0.5).is_err());
        assert!(CoefficientSeq::stretched_exp(1.0, 1.5).is_err());
        assert!(CoefficientSeq::geometric(1.0).is_err());
        assert!(CoefficientSeq::geometric(0.0).is_err());
        assert!(CoefficientSeq::explicit(vec![f64::NAN]).is_err());
    }

    #[test]
    fn geometric_tail_closed_forms() {
        let g = CoefficientSeq::geometric(0.5).unwrap();
        let t = g.tail_sum(3, 1).unwrap();
        assert_eq!(t.value, 0.25);
        assert_eq!(t.error_bound, 0.0);
        let t = g.tail_sum(1, 2).unwrap();
        assert!((t.value - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(t.error_bound, 0.0);
    }

    #[test]
    fn geometric_matches_brute_force() {
        for r in [0.5, -0.5, 0.9, -0.3, 0.25] {
            let g = CoefficientSeq::geometric(r).unwrap();
            for n in [1u64, 2, 7] {
                for p in [1u32, 2, 3, 4] {
                    let closed = g.tail_sum(n, p).unwrap().value;
                    let brute = brute_tail(&g, n, p, 10_000);
                    assert!((closed - brute).abs() < 1e-12, "r={r} n={n} p={p}");
                }
            }
        }
    }

    #[test]
    fn power_law_tail_asymptotics() {
        let s = CoefficientSeq::power_law(2.0).unwrap();
        let t = s.tail_sum(1000, 1).unwrap();
        let normalised = t.value * 1000.0 * 1.0;
        assert!((0.999..=1.001).contains(&normalised), "{normalised}");
        // ζ(2) = π²/6
        let z = s.tail_sum(1, 1).unwrap();
        assert!((z.value - std::f64::consts::PI.powi(2) / 6.0).abs() <= z.error_bound + 1e-15);
        assert!(z.error_bound < 1e-14);
    }

    #[test]
    fn power_law_within_integral_bracket() {
        let s = CoefficientSeq::power_law(1.5).unwrap();
        for n in [1u64, 10, 100, 5000] {
            for p in [1u32, 2, 4] {
                let q = p as f64 * 1.5;
                let t = s.tail_sum(n, p).unwrap().value;
                let lo = (n as f64).powf(1.0 - q) / (q - 1.0);
                let hi = lo + (n as f64).powf(-q);
                assert!(lo <= t && t <= hi, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn stretched_matches_brute_force() {
        for (k, beta) in [(1.0, 0.5), (2.0, 1.0 / 3.0), (0.5, 0.8), (1.0, 0.3)] {
            let s = CoefficientSeq::stretched_exp(k, beta).unwrap();
            for n in [1u64, 16, 200] {
                let t = s.tail_sum(n, 1).unwrap();
                let brute = brute_tail(&s, n, 1, 2_000_000);
                let rel = ((t.value - brute) / brute).abs();
                assert!(rel < 1e-10, "k={k} beta={beta} n={n} rel={rel}");
                assert!(t.error_bound <= 1e-12 * t.value);
            }
        }
    }

    #[test]
    fn stretched_beta_one_is_geometric() {
        let s = CoefficientSeq::stretched_exp(1.0, 1.0).unwrap();
        let g = CoefficientSeq::geometric((-1f64).exp()).unwrap();
        for n in [1u64, 5, 40] {
            let a = s.tail_sum(n, 2).unwrap().value;
            let b = g.tail_sum(n, 2).unwrap().value;
            assert!(((a - b) / b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_tail_survives_underflow() {
        let g = CoefficientSeq::geometric(0.5).unwrap();
        let t = g.tail_sum_scaled(5000, 2).unwrap();
        assert!((t.value - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.tail_sum(5000, 2).unwrap().value, 0.0);
        let s = CoefficientSeq::stretched_exp(1.0, 0.5).unwrap();
        let t = s.tail_sum_scaled(1_000_000, 1).unwrap();
        // ≈ 2(√N + 1)/K + 1/2
        assert!((t.value / 2002.5 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn zero_index_and_power_rejected() {
        let s = CoefficientSeq::takagi();
        assert!(s.tail_sum(0, 1).is_err());
        assert!(s.tail_sum(1, 0).is_err());
    }

    #[test]
    fn condition_examples() {
        let p = CoefficientSeq::power_law(2.0).unwrap();
        let v = p.check_condition(Condition::C14);
        assert_eq!(v.verdict, Verdict::Holds);
        let (n, r) = *v.evidence.last().unwrap();
        assert!((r * n as f64 - 1.0 / 3.0).abs() < 1e-3);

        let s = CoefficientSeq::stretched_exp(1.0, 0.7).unwrap();
        assert_eq!(s.check_condition(Condition::C17).verdict, Verdict::Fails);

        let g = CoefficientSeq::geometric(0.5).unwrap();
        let v = g.check_condition(Condition::C14);
        assert_eq!(v.verdict, Verdict::Fails);
        assert!(v.evidence.iter().all(|&(_, r)| (r - 1.0 / 3.0).abs() < 1e-12));
        let v = g.check_condition(Condition::C16);
        assert!(v.evidence.iter().all(|&(_, r)| (r - 0.75).abs() < 1e-12));
    }

    #[test]
    fn explicit_is_inconclusive() {
        let e = CoefficientSeq::explicit(vec![0.5, 0.25, 0.125]).unwrap();
        for c in Condition::ALL {
            let v = e.check_condition(c);
            assert_eq!(v.verdict, Verdict::Inconclusive);
            assert!(!v.evidence.is_empty());
        }
        let h = e.standing_hypotheses();
        assert!(!h.square_tail_positive);
        assert_eq!(h.first_violation, Some(4));
    }

    #[test]
    fn kono_examples() {
        use Differentiability::*;
        assert_eq!(CoefficientSeq::geometric(0.25).unwrap().kono_classify().class, AbsolutelyContinuous);
        assert_eq!(CoefficientSeq::takagi().kono_classify().class, NowhereDifferentiable);
        assert_eq!(CoefficientSeq::geometric(-0.5).unwrap().kono_classify().class, NowhereDifferentiable);
        assert_eq!(CoefficientSeq::dyadic_over_sqrt().kono_classify().class, AEDifferentiableNowhere);
        assert_eq!(CoefficientSeq::power_law(3.0).unwrap().kono_classify().class, NowhereDifferentiable);
        assert_eq!(
            CoefficientSeq::stretched_exp(1.0, 0.5).unwrap().kono_classify().class,
            NowhereDifferentiable
        );
        assert_eq!(
            CoefficientSeq::stretched_exp(1.0, 1.0).unwrap().kono_classify().class,
            AbsolutelyContinuous
        );
    }

    #[test]
    fn sup_ratio_vanishes_when_c16_holds() {
        for seq in [
            CoefficientSeq::power_law(2.0).unwrap(),
            CoefficientSeq::stretched_exp(1.0, 0.5).unwrap(),
        ] {
            assert_eq!(seq.check_condition(Condition::C16).verdict, Verdict::Holds);
            let ratios: Vec<f64> = [16u64, 256, 4096]
                .iter()
                .map(|&n| seq.sup_square_scaled(n) / seq.tail_sum_scaled(n, 2).unwrap().value)
                .collect();
            assert!(ratios.windows(2).all(|w| w[1] < w[0]));
            assert!(ratios[2] < 0.02);
        }
    }

    #[test]
    fn sequence_strings_round_trip() {
        for s in [
            "powerlaw:alpha=2",
            "stretchexp:K=1,beta=0.5",
            "geometric:r=-0.5",
            "dyadicsqrt",
            "explicit:values=0.5;0.25",
        ] {
            let seq: CoefficientSeq = s.parse().unwrap();
            let again: CoefficientSeq = seq.to_string().parse().unwrap();
            assert_eq!(seq, again);
        }
        assert!("powerlaw:beta=2".parse::<CoefficientSeq>().is_err());
        assert!("nonsense".parse::<CoefficientSeq>().is_err());
        assert!("geometric:r=2".parse::<CoefficientSeq>().is_err());
    }

    #[test]
    fn explicit_file_parsing() {
        let terms = parse_explicit_terms("0.5\n# comment\n\n0.25 # trailing\n1/8\n").unwrap();
        assert_eq!(terms, vec![0.5, 0.25, 0.125]);
    }
}
