//! Closed-form moments of the tail `M_N` and related bounds.

use serde::{Deserialize, Serialize};

use crate::coefficients::{exp_unit, CoefficientSeq, CompensatedSum, Family};
use crate::error::{Error, Result};

/// Mean and variance of the tail at index `N`.
///
/// `m_n = ½ Σ_{n≥N} cₙ` and `s2_n = (1/12) Σ_{n≥N} (cₙ)²`. The `*_scaled`
/// fields are the same quantities in units of `s_N = exp(ln_unit)` (resp.
/// `s_N²`), which stay representable when the unscaled ones underflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    pub n: u64,
    pub m_n: f64,
    pub m_error: f64,
    pub s2_n: f64,
    pub s2_error: f64,
    pub ln_unit: f64,
    pub m_scaled: f64,
    pub s2_scaled: f64,
}

pub fn tail_stats(seq: &CoefficientSeq, n: u64) -> Result<TailStats> {
    let t1 = seq.tail_sum_scaled(n, 1)?;
    let t2 = seq.tail_sum_scaled(n, 2)?;
    let unit = exp_unit(t1.ln_unit);
    let unit2 = exp_unit(t2.ln_unit);
    Ok(TailStats {
        n,
        m_n: 0.5 * t1.value * unit,
        m_error: 0.5 * t1.error_bound * unit,
        s2_n: t2.value * unit2 / 12.0,
        s2_error: t2.error_bound * unit2 / 12.0,
        ln_unit: t1.ln_unit,
        m_scaled: 0.5 * t1.value,
        s2_scaled: t2.value / 12.0,
    })
}

/// Moments of `φ*⁽ⁿ⁾`, which is uniform on `[−½, ½]` for every `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiStarMoments {
    pub mean: f64,
    pub second: f64,
    pub fourth: f64,
}

pub fn phi_star_moments() -> PhiStarMoments {
    PhiStarMoments {
        mean: 0.0,
        second: 1.0 / 12.0,
        fourth: 1.0 / 80.0,
    }
}

/// `E[((f − f_N)/m_N − 1)²] = (1/3) Σ(cₙ)² / (Σcₙ)²`.
pub fn l2_ratio_error(seq: &CoefficientSeq, n: u64) -> Result<f64> {
    let t1 = seq.tail_sum_scaled(n, 1)?;
    if t1.value == 0.0 || t1.value.abs() <= t1.error_bound {
        return Err(Error::DegenerateMean(n));
    }
    let t2 = seq.tail_sum_scaled(n, 2)?;
    Ok(t2.value / (3.0 * t1.value * t1.value))
}

/// `Cov((φ*⁽ⁱ⁾)², (φ*⁽ʲ⁾)²) = (1/180) 4^{-(j−i)}` for `i < j`.
pub fn cov_sq(i: u64, j: u64) -> Result<f64> {
    if i == 0 || i >= j {
        return Err(Error::InvalidParameter(format!("need 1 <= i < j, got ({i}, {j})")));
    }
    Ok((-2.0 * (j - i) as f64).exp2() / 180.0)
}

/// `Var(Q²_N / s²_N)` with `Q²_N = Σ_{n≥N} (cₙ φ*⁽ⁿ⁾)²`, and two upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarQ2 {
    pub exact: f64,
    pub exact_error: f64,
    /// `(8/15) sup_{j≥N}(c_j)² / Σ_{n≥N}(cₙ)²`; accounts for the
    /// off-diagonal covariances only.
    pub off_diagonal_bound: f64,
    /// `(4/3) sup_{j≥N}(c_j)² / Σ_{n≥N}(cₙ)²`; diagonal term included.
    pub corrected_bound: f64,
}

/// Lags `j − i` beyond this are bounded rather than summed.
const MAX_LAG: u64 = 64;

pub fn var_q2(seq: &CoefficientSeq, n: u64) -> Result<VarQ2> {
    let t2 = seq.tail_sum_scaled(n, 2)?;
    if !(t2.value > 0.0) {
        return Err(Error::DegenerateVariance(n));
    }
    let t4 = seq.tail_sum_scaled(n, 4)?;
    let sup = seq.sup_square_scaled(n);
    let s2 = t2.value / 12.0;

    let (cross, cross_error) = match seq.family() {
        Family::Geometric { r } => {
            // Σ_i cᵢ²c_{i+d}² = r^{2d} Σ cᵢ⁴, so the lag series is geometric
            let q = r * r / 4.0;
            (2.0 / 180.0 * t4.value * q / (1.0 - q), 2.0 / 180.0 * t4.error_bound * q / (1.0 - q))
        }
        _ => lagged_cross_sum(seq, n, t2.value)?,
    };
    let numerator = t4.value / 180.0 + cross;
    let numerator_error = t4.error_bound / 180.0 + cross_error;
    let exact = numerator / (s2 * s2);
    let rel_s2 = t2.error_bound / t2.value;
    let exact_error =
        numerator_error / (s2 * s2) + exact * (2.0 * rel_s2 * 1.01 + 8.0 * f64::EPSILON);
    Ok(VarQ2 {
        exact,
        exact_error,
        off_diagonal_bound: 8.0 / 15.0 * sup / t2.value,
        corrected_bound: 4.0 / 3.0 * sup / t2.value,
    })
}

/// `2 Σ_{N≤i<j} cᵢ² c_j² Cov((φ*⁽ⁱ⁾)², (φ*⁽ʲ⁾)²)` in units of `s_N⁴`, with its error.
fn lagged_cross_sum(seq: &CoefficientSeq, n: u64, t2: f64) -> Result<(f64, f64)> {
    let weights: Vec<f64> = (1..=MAX_LAG).map(|d| (-2.0 * d as f64).exp2() / 180.0).collect();
    // |cᵢ| is non-increasing for every infinite family, so the i-tail past
    // `end` is at most (1/3)(1/180) Σ_{i≥end} cᵢ⁴.
    let t4_n = seq.tail_sum_scaled(n, 4)?.value;
    let end = match seq.support_end() {
        Some(s) => s.max(n),
        None => {
            let mut e = n.saturating_mul(2).max(n + MAX_LAG);
            loop {
                let t = seq.tail_sum_scaled(e, 4)?;
                let rel = (4.0 * (seq.ln_scale(e) - seq.ln_scale(n))).exp();
                if (t.value + t.error_bound) * rel <= 1e-16 * t4_n || e > (1 << 32) {
                    break e;
                }
                e = e.saturating_mul(2);
            }
        }
    };
    let squares: Vec<f64> = (n..end + MAX_LAG + 1)
        .map(|i| {
            let c = seq.scaled_term(i, n);
            c * c
        })
        .collect();
    let mut acc = CompensatedSum::default();
    for i in 0..(end - n) as usize {
        let mut inner = 0.0;
        for (d, w) in weights.iter().enumerate() {
            inner += w * squares[i + d + 1];
        }
        acc.add(squares[i] * inner);
    }
    let mut error = 4.0 * f64::EPSILON * acc.magnitude();
    if seq.support_end().is_none() {
        let t = seq.tail_sum_scaled(end, 4)?;
        let rel = (4.0 * (seq.ln_scale(end) - seq.ln_scale(n))).exp();
        error += 2.0 * (t.value + t.error_bound) * rel / (3.0 * 180.0);
    }
    // lags past MAX_LAG: Σᵢ cᵢ²c_{i+d}² ≤ (Σcᵢ²)²
    error += 2.0 * (-2.0 * MAX_LAG as f64).exp2() / (3.0 * 180.0) * t2 * t2;
    Ok((2.0 * acc.value(), 2.0 * error))
}

/// `min(1, 2 exp(−c² / (2 Σ_{n≥N}(cₙ)²)))`.
pub fn azuma_tail_bound(seq: &CoefficientSeq, n: u64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter("c must be positive".into()));
    }
    let t2 = seq.tail_sum(n, 2)?;
    Ok((2.0 * (-c * c / (2.0 * t2.value)).exp()).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_stats_examples() {
        let g = CoefficientSeq::takagi();
        let t = tail_stats(&g, 3).unwrap();
        assert_eq!(t.m_n, 0.125);
        assert!((t.s2_n - 1.0 / 576.0).abs() < 1e-18);
        let t = tail_stats(&g, 1).unwrap();
        assert!((t.s2_n - 1.0 / 36.0).abs() < 1e-17);
        let p = CoefficientSeq::power_law(2.0).unwrap();
        let t = tail_stats(&p, 1000).unwrap();
        assert!((t.m_n * 2.0 * 1000.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn moments_constants() {
        let m = phi_star_moments();
        assert_eq!((m.mean, m.second, m.fourth), (0.0, 1.0 / 12.0, 1.0 / 80.0));
    }

    #[test]
    fn l2_ratio_geometric_is_constant() {
        for r in [0.5, 0.3, 0.9] {
            let g = CoefficientSeq::geometric(r).unwrap();
            let closed = (1.0 - r) / (3.0 * (1.0 + r));
            for n in [1u64, 5, 20] {
                assert!((l2_ratio_error(&g, n).unwrap() - closed).abs() < 1e-14);
            }
        }
        let g = CoefficientSeq::takagi();
        assert!((l2_ratio_error(&g, 4).unwrap() - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn l2_ratio_power_law_decay() {
        let p = CoefficientSeq::power_law(2.0).unwrap();
        let v = l2_ratio_error(&p, 10_000).unwrap() * 10_000.0;
        assert!((v - 1.0 / 9.0).abs() < 1e-4);
    }

    #[test]
    fn cov_sq_examples() {
        assert_eq!(cov_sq(1, 2).unwrap(), 1.0 / 720.0);
        assert_eq!(cov_sq(3, 5).unwrap(), 1.0 / 2880.0);
        assert_eq!(cov_sq(1, 2).unwrap(), cov_sq(7, 8).unwrap());
        assert!(cov_sq(2, 2).is_err());
        assert!(cov_sq(0, 2).is_err());
    }

    fn brute_var_q2(seq: &CoefficientSeq, n: u64, terms: u64) -> f64 {
        let c2: Vec<f64> = (n..n + terms).map(|i| seq.term(i).powi(2)).collect();
        let t2: f64 = c2.iter().sum();
        let t4: f64 = c2.iter().map(|c| c * c).sum();
        let mut cross = 0.0;
        for i in 0..c2.len() {
            for j in i + 1..c2.len().min(i + 80) {
                cross += 2.0 * c2[i] * c2[j] * (-2.0 * (j - i) as f64).exp2() / 180.0;
            }
        }
        (t4 / 180.0 + cross) / (t2 / 12.0).powi(2)
    }

    #[test]
    fn var_q2_matches_double_sum() {
        for (seq, n) in [
            (CoefficientSeq::takagi(), 1u64),
            (CoefficientSeq::geometric(0.8).unwrap(), 3),
            (CoefficientSeq::power_law(3.0).unwrap(), 5),
            (CoefficientSeq::stretched_exp(1.0, 0.5).unwrap(), 2),
        ] {
            let v = var_q2(&seq, n).unwrap();
            let brute = brute_var_q2(&seq, n, 4000);
            assert!(((v.exact - brute) / brute).abs() < 1e-6, "{seq}: {} vs {brute}", v.exact);
            assert!(v.exact <= v.corrected_bound);
        }
    }

    #[test]
    fn diagonal_term_breaks_the_eight_fifteenths_bound() {
        let v = var_q2(&CoefficientSeq::takagi(), 1).unwrap();
        assert!(v.exact > v.off_diagonal_bound);
        assert!(v.exact <= v.corrected_bound);
        assert!((v.exact - 0.544).abs() < 1e-3);
    }

    #[test]
    fn power_law_bounds_vanish() {
        let p = CoefficientSeq::power_law(2.0).unwrap();
        let a = var_q2(&p, 100).unwrap();
        let b = var_q2(&p, 1000).unwrap();
        assert!((a.off_diagonal_bound / b.off_diagonal_bound - 10.0).abs() < 0.2);
        assert!(b.exact < a.exact);
    }

    #[test]
    fn azuma_examples() {
        let g = CoefficientSeq::takagi();
        let b = azuma_tail_bound(&g, 1, 1.0).unwrap();
        assert!((b - 2.0 * (-1.5f64).exp()).abs() < 1e-15);
        assert_eq!(azuma_tail_bound(&g, 1, 100.0).unwrap(), 0.0);
        assert_eq!(azuma_tail_bound(&g, 1, 0.01).unwrap(), 1.0);
        assert!(azuma_tail_bound(&g, 1, 0.0).is_err());
    }
}
