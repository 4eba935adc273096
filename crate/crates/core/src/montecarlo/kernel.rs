use crate::coefficients::CoefficientSeq;
use crate::error::{Error, Result};
use crate::point_eval::{ln_lil_normaliser, BitPoint};

/// Fast evaluation of `M_N(x)` at several `N` by the backward recursion
/// `M_N = c_N φ*⁽ᴺ⁾ + M_{N+1}`, carried in units of `s_N`.
///
/// The series is cut at an index `E` past which the tail variance
/// `Σ_{n≥E}(cₙ)²` is at most `omega` times that at the largest requested `N`;
/// the omitted part has mean zero and is reported, not hidden. For exact
/// (terminating) points every `φ*` past the last digit is `−½`, and that tail
/// is added in closed form.
#[derive(Debug, Clone)]
pub struct TailKernel {
    ns: Vec<u64>,
    lo: u64,
    end: u64,
    coef: Vec<f64>,
    step: Vec<f64>,
    exact_tail: f64,
    omitted_fraction: f64,
    m_scaled: Vec<f64>,
    sd_scaled: Vec<f64>,
    t2_scaled: Vec<f64>,
    ln_unit: Vec<f64>,
}

impl TailKernel {
    pub fn new(seq: &CoefficientSeq, ns: &[u64], omega: f64) -> Result<Self> {
        if ns.is_empty() {
            return Err(Error::EmptyInput);
        }
        if ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "tail indices must be >= 1 and strictly increasing".into(),
            ));
        }
        if !(omega > 0.0 && omega < 1.0) {
            return Err(Error::InvalidParameter("omega must lie in (0, 1)".into()));
        }
        let lo = ns[0];
        let hi = *ns.last().expect("non-empty");
        let (end, omitted_fraction) = match seq.support_end() {
            Some(s) => ((s + 1).max(hi + 1), 0.0),
            None => {
                let t2_hi = seq.tail_sum_scaled(hi, 2)?.value;
                let frac = |e: u64| -> Result<f64> {
                    let t = seq.tail_sum_scaled(e, 2)?;
                    Ok(t.value * (2.0 * (seq.ln_scale(e) - seq.ln_scale(hi))).exp() / t2_hi)
                };
                let mut lo_e = hi + 64;
                let mut e = lo_e;
                if frac(e)? > omega {
                    loop {
                        lo_e = e;
                        e = e.checked_mul(2).ok_or(Error::PrecisionExhausted {
                            needed: usize::MAX,
                            available: 0,
                        })?;
                        if frac(e)? <= omega {
                            break;
                        }
                    }
                    while e - lo_e > 1 {
                        let mid = lo_e + (e - lo_e) / 2;
                        if frac(mid)? <= omega {
                            e = mid;
                        } else {
                            lo_e = mid;
                        }
                    }
                }
                (e, frac(e)?)
            }
        };
        let coef = (lo..end).map(|n| seq.scaled_term(n, n)).collect();
        let step = (lo..end).map(|n| seq.scale_step(n)).collect();
        let exact_tail = -0.5 * seq.tail_sum_scaled(end, 1)?.value;
        let mut m_scaled = Vec::with_capacity(ns.len());
        let mut sd_scaled = Vec::with_capacity(ns.len());
        let mut t2_scaled = Vec::with_capacity(ns.len());
        let mut ln_unit = Vec::with_capacity(ns.len());
        for &n in ns {
            m_scaled.push(0.5 * seq.tail_sum_scaled(n, 1)?.value);
            let t2 = seq.tail_sum_scaled(n, 2)?.value;
            t2_scaled.push(t2);
            sd_scaled.push((t2 / 12.0).sqrt());
            ln_unit.push(seq.ln_scale(n));
        }
        Ok(Self {
            ns: ns.to_vec(),
            lo,
            end,
            coef,
            step,
            exact_tail,
            omitted_fraction,
            m_scaled,
            sd_scaled,
            t2_scaled,
            ln_unit,
        })
    }

    pub fn ns(&self) -> &[u64] {
        &self.ns
    }

    /// First index left out of the series.
    pub fn end(&self) -> u64 {
        self.end
    }

    /// `Σ_{n≥E}(cₙ)² / Σ_{n≥N_max}(cₙ)²`.
    pub fn omitted_variance_fraction(&self) -> f64 {
        self.omitted_fraction
    }

    /// Digits a point must carry for every window the kernel reads.
    pub fn bits_required(&self) -> usize {
        self.end as usize + 63
    }

    /// Writes `M_N(x) / s_N` for every requested `N` into `out`.
    pub fn eval_into(&self, x: &BitPoint, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.ns.len());
        let mut s = if x.is_exact() && (x.len() as u64) < self.end {
            self.exact_tail
        } else {
            0.0
        };
        let mut idx = self.ns.len();
        for n in (self.lo..self.end).rev() {
            let k = (n - self.lo) as usize;
            s = self.coef[k] * phi_star_fast(x, n as usize) + self.step[k] * s;
            if idx > 0 && self.ns[idx - 1] == n {
                idx -= 1;
                out[idx] = s;
            }
        }
    }

    pub fn eval(&self, x: &BitPoint) -> Vec<f64> {
        let mut out = vec![0.0; self.ns.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// `m_N / s_N`
    pub fn mean_scaled(&self, i: usize) -> f64 {
        self.m_scaled[i]
    }

    /// `Σ_{n≥N}(cₙ)² / s_N²`
    pub fn square_sum_scaled(&self, i: usize) -> f64 {
        self.t2_scaled[i]
    }

    /// `(f − f_N)/m_N` from the scaled tail.
    pub fn ratio(&self, i: usize, m: f64) -> f64 {
        1.0 + m / self.m_scaled[i]
    }

    /// `M_N / √(s²_N)`
    pub fn clt(&self, i: usize, m: f64) -> f64 {
        m / self.sd_scaled[i]
    }

    /// `s_N`
    pub fn unit(&self, i: usize) -> f64 {
        self.ln_unit[i].exp()
    }

    /// Multiplier turning `M_N / s_N` into `M_N / φ(s²_N)`.
    pub fn lil_factor(&self, i: usize) -> Result<f64> {
        let ln_t = (self.sd_scaled[i] * self.sd_scaled[i]).ln() + 2.0 * self.ln_unit[i];
        Ok((self.ln_unit[i] - ln_lil_normaliser(ln_t)?).exp())
    }
}

const TWO_POW_M53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// `φ*⁽ⁿ⁾(x)` from 53 digits after `εₙ`.
#[inline]
fn phi_star_fast(x: &BitPoint, n: usize) -> f64 {
    let w = x.window(n);
    let t = ((w << 1) >> 11) as i64 - (1i64 << 52);
    let mask = (w as i64) >> 63;
    ((t ^ mask) - mask) as f64 * TWO_POW_M53
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_eval::{phi_star, tail_m};

    #[test]
    fn fast_phi_star_matches_certified() {
        let x = BitPoint::parse_decimal("0.7182818284", 200).unwrap();
        for n in 1..100 {
            let c = phi_star(&x, n).unwrap();
            assert!((phi_star_fast(&x, n) - c.value).abs() <= c.abs_error + 2.0 * TWO_POW_M53);
        }
    }

    #[test]
    fn geometric_kernel_matches_certified_tail() {
        let seq = CoefficientSeq::geometric(-0.7).unwrap();
        let k = TailKernel::new(&seq, &[1, 3, 10], 1e-30).unwrap();
        let x = BitPoint::parse_decimal("0.41421356", k.bits_required()).unwrap();
        let out = k.eval(&x);
        for (i, &n) in [1u64, 3, 10].iter().enumerate() {
            let unit = seq.ln_scale(n).exp();
            let m = tail_m(&seq, &x, n, 1e-14).unwrap();
            assert!((out[i] * unit - m.value).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn exact_points_get_closed_form_tail() {
        let seq = CoefficientSeq::power_law(2.0).unwrap();
        let k = TailKernel::new(&seq, &[30], 1e-4).unwrap();
        let x = BitPoint::dyadic(5, 10).unwrap();
        let m = k.eval(&x)[0];
        assert!((k.ratio(0, m)).abs() < 1e-12);
    }

    #[test]
    fn truncation_respects_omega() {
        let seq = CoefficientSeq::power_law(2.0).unwrap();
        let k = TailKernel::new(&seq, &[1000], 1e-4).unwrap();
        assert!(k.omitted_variance_fraction() <= 1e-4);
        // Σ_{n≥E} n^-4 ≈ E^-3/3, so E ≈ 1000·10^{4/3}
        assert!((20_000..23_000).contains(&k.end()), "{}", k.end());
    }

    #[test]
    fn rejects_unsorted_indices() {
        let seq = CoefficientSeq::takagi();
        assert!(TailKernel::new(&seq, &[5, 3], 1e-4).is_err());
        assert!(TailKernel::new(&seq, &[], 1e-4).is_err());
    }
}
