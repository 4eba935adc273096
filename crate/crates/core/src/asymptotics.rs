//! Integral brackets for stretched-exponential tails and the tail-sum
//! equivalence `Σ_{n≥N} e^{-Knᵝ} ≍ N^{1-β} e^{-KNᵝ}`.

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSeq;
use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// A two-sided bracket `lower ≤ target ≤ upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub target: f64,
}

impl Bracket {
    pub fn holds(&self) -> bool {
        self.lower <= self.target && self.target <= self.upper
    }
}

/// `∫_a^∞ e^{-K xᵝ} dx = mantissa · exp(ln_scale)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScaledIntegral {
    pub mantissa: f64,
    pub abs_error: f64,
    pub ln_scale: f64,
}

const TAIL_TARGET: f64 = 1e-18;

/// `∫_0^∞ g(u) du` for a log-concave `g` whose log-derivative is
/// `q/(shift + u) − 1`. The cut at `U` is certified by `g(U)/λ`.
fn gamma_like_integral<G: Fn(f64) -> f64>(g: G, q: f64, shift: f64, lower_bound: f64) -> (f64, f64) {
    let mut upper = 70f64.max(2.0 * q - shift);
    loop {
        let lambda = 1.0 - q / (shift + upper);
        let tail = g(upper) / lambda;
        if lambda > 0.0 && tail <= TAIL_TARGET * lower_bound {
            let r = integrate(&g, 0.0, upper, 1e-18 * lower_bound, 1e-15);
            return (r.value + 0.5 * tail, r.abs_error + 0.5 * tail);
        }
        upper *= 2.0;
    }
}

pub(crate) fn stretch_integral_scaled(k: f64, beta: f64, a: f64) -> Result<ScaledIntegral> {
    check_domain(k, beta, a)?;
    let t0 = k * a.powf(beta);
    let q = 1.0 / beta - 1.0;
    if t0 >= 1.0 {
        // t = t0 + u, factored as e^{-t0} t0^q ∫ (1+u/t0)^q e^{-u} du
        let prefactor = a.powf(1.0 - beta) / (beta * k);
        let (j, err) = if q == 0.0 {
            (1.0, 0.0)
        } else {
            gamma_like_integral(|u| (q * (u / t0).ln_1p() - u).exp(), q, t0, 1.0)
        };
        Ok(ScaledIntegral {
            mantissa: prefactor * j,
            abs_error: prefactor * err,
            ln_scale: -t0,
        })
    } else {
        let prefactor = 1.0 / (beta * k.powf(1.0 / beta));
        let (j, err) = if q == 0.0 {
            (1.0, 0.0)
        } else {
            // Γ(q+1) ≥ 0.88 bounds the integral from below
            gamma_like_integral(|u| (q * (t0 + u).ln() - u).exp(), q, t0, 0.88)
        };
        Ok(ScaledIntegral {
            mantissa: prefactor * j,
            abs_error: prefactor * err,
            ln_scale: -t0,
        })
    }
}

fn check_domain(k: f64, beta: f64, a: f64) -> Result<()> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Domain { value: k, domain: "K > 0" });
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain { value: beta, domain: "0 < beta <= 1" });
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Domain { value: a, domain: "a > 0" });
    }
    Ok(())
}

/// `∫_a^∞ e^{-K xᵝ} dx` and its certified absolute error.
pub fn stretch_integral_certified(k: f64, beta: f64, a: f64) -> Result<(f64, f64)> {
    let s = stretch_integral_scaled(k, beta, a)?;
    let unit = s.ln_scale.exp();
    Ok((s.mantissa * unit, s.abs_error * unit))
}

/// `∫_a^∞ e^{-K xᵝ} dx`.
pub fn stretch_integral(k: f64, beta: f64, a: f64) -> Result<f64> {
    Ok(stretch_integral_certified(k, beta, a)?.0)
}

fn check_open_beta(k: f64, beta: f64) -> Result<()> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Domain { value: k, domain: "K > 0" });
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain { value: beta, domain: "0 < beta < 1" });
    }
    Ok(())
}

/// Bracket constants `(C₁, C₂)` for `0 < β < 1`.
///
/// `C₂` comes from repeated integration by parts of `∫ t^{1/β-1} e^{-t} dt`;
/// the coefficients `Π_{j<i} (1/β − j)` are accumulated directly so no gamma
/// ratio is evaluated near a pole.
pub fn integral_bracket_constants(k: f64, beta: f64) -> Result<(f64, f64)> {
    check_open_beta(k, beta)?;
    let inv = 1.0 / beta;
    let c1 = 1.0 / (beta * k);
    let s = (inv - 1.0).ceil() as i64;
    let mut coef = 1.0;
    let mut bracket = 0.0;
    for i in 1..=s {
        bracket += coef * k.powf(inv - i as f64);
        coef *= inv - i as f64;
    }
    bracket += coef;
    let c2 = bracket / (beta * k.powf(inv));
    Ok((c1, c2))
}

fn check_upper_regime(k: f64, beta: f64, a: f64) -> Result<()> {
    if a < 1.0 || k * a.powf(beta) < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "upper bracket needs a >= 1 and K·a^beta >= 1 (a = {a}, K·a^beta = {})",
            k * a.powf(beta)
        )));
    }
    Ok(())
}

/// `C₁ a^{1-β} e^{-Kaᵝ} ≤ ∫_a^∞ e^{-Kxᵝ} dx ≤ C₂ a^{1-β} e^{-Kaᵝ}`.
pub fn integral_bracket(k: f64, beta: f64, a: f64) -> Result<Bracket> {
    let (c1, c2) = integral_bracket_constants(k, beta)?;
    check_upper_regime(k, beta, a)?;
    let envelope = a.powf(1.0 - beta) * (-k * a.powf(beta)).exp();
    Ok(Bracket {
        lower: c1 * envelope,
        upper: c2 * envelope,
        target: stretch_integral(k, beta, a)?,
    })
}

/// Same bracket as [`integral_bracket`] divided by `a^{1-β} e^{-Kaᵝ}`, so it
/// stays representable for large `a`.
pub fn integral_bracket_normalised(k: f64, beta: f64, a: f64) -> Result<Bracket> {
    let (c1, c2) = integral_bracket_constants(k, beta)?;
    check_upper_regime(k, beta, a)?;
    let s = stretch_integral_scaled(k, beta, a)?;
    let shift = (s.ln_scale + k * a.powf(beta)).exp();
    Ok(Bracket {
        lower: c1,
        upper: c2,
        target: s.mantissa * shift / a.powf(1.0 - beta),
    })
}

/// Smallest tail index treated as "sufficiently large".
pub const TAILSUM_MIN_N: u64 = 16;

fn check_tailsum_regime(k: f64, beta: f64, n: u64) -> Result<()> {
    if n < TAILSUM_MIN_N || k * (n as f64).powf(beta) < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "out of regime: need N >= {TAILSUM_MIN_N} and K·N^beta >= 1 (N = {n})"
        )));
    }
    Ok(())
}

/// `C₁ ≤ Σ_{n≥N} e^{-Knᵝ} / (N^{1-β} e^{-KNᵝ}) ≤ 1 + C₂`.
pub fn tailsum_bracket_normalised(k: f64, beta: f64, n: u64) -> Result<Bracket> {
    let (c1, c2) = integral_bracket_constants(k, beta)?;
    check_tailsum_regime(k, beta, n)?;
    let seq = CoefficientSeq::stretched_exp(k, beta)?;
    let tail = seq.tail_sum_scaled(n, 1)?;
    Ok(Bracket {
        lower: c1,
        upper: 1.0 + c2,
        target: tail.value / (n as f64).powf(1.0 - beta),
    })
}

/// `C₁ N^{1-β} e^{-KNᵝ} ≤ Σ_{n≥N} e^{-Knᵝ} ≤ (1 + C₂) N^{1-β} e^{-KNᵝ}`.
pub fn tailsum_bracket(k: f64, beta: f64, n: u64) -> Result<Bracket> {
    let b = tailsum_bracket_normalised(k, beta, n)?;
    let envelope = (n as f64).powf(1.0 - beta) * (-k * (n as f64).powf(beta)).exp();
    Ok(Bracket {
        lower: b.lower * envelope,
        upper: b.upper * envelope,
        target: b.target * envelope,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareRatioFloor {
    /// `Σ_{n≥N} (cₙ)² / (Σ_{n≥N} cₙ)²` for `cₙ = e^{-Knᵝ}`.
    pub ratio: f64,
    /// `1 / (1 + β⁻¹K^{-1/β})²`
    pub floor: f64,
}

/// `Σ_{n≥N} e^{-pK(nᵝ − Nᵝ)}`, summed until the geometric remainder is negligible.
fn fast_tail_scaled(pk: f64, beta: f64, n_start: u64) -> f64 {
    let anchor = (n_start as f64).powf(beta);
    // for β ≥ 1 consecutive term ratios never exceed e^{-pK}
    let rho = (-pk).exp();
    let mut sum = 0.0;
    let mut n = n_start;
    loop {
        let t = (-pk * ((n as f64).powf(beta) - anchor)).exp();
        sum += t;
        if t * rho / (1.0 - rho) <= 1e-18 * sum {
            return sum;
        }
        n += 1;
    }
}

/// Ratio `Σ(cₙ)²/(Σcₙ)²` for `cₙ = e^{-Knᵝ}`, `β ≥ 1`, against its floor.
pub fn square_ratio_lower(k: f64, beta: f64, n: u64) -> Result<SquareRatioFloor> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Domain { value: k, domain: "K > 0" });
    }
    if !(beta.is_finite() && beta >= 1.0) {
        return Err(Error::Domain { value: beta, domain: "beta >= 1" });
    }
    if n == 0 || k * (n as f64).powf(beta) < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "need N >= 1 and K·N^beta >= 1 (N = {n})"
        )));
    }
    let ratio = if beta == 1.0 {
        let r = (-k).exp();
        (1.0 - r) / (1.0 + r)
    } else {
        let t1 = fast_tail_scaled(k, beta, n);
        let t2 = fast_tail_scaled(2.0 * k, beta, n);
        t2 / (t1 * t1)
    };
    let floor = 1.0 / (1.0 + 1.0 / (beta * k.powf(1.0 / beta))).powi(2);
    Ok(SquareRatioFloor { ratio, floor })
}
