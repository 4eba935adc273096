//! Point evaluation from binary expansions.
//!
//! Every value of `φ⁽ⁿ⁾(x) = φ(2ⁿ⁻¹x)` is read off the bits of `x`: with
//! `y = 0.εₙ₊₁εₙ₊₂…`, `φ⁽ⁿ⁾(x) = y` if `εₙ = 0` and `1 − y` otherwise.
//! No floating multiplication by `2ⁿ⁻¹` ever happens.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::coefficients::{exp_unit, CoefficientSeq, CompensatedSum};
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};

/// Minimum number of bits kept beyond the deepest certified iterate.
pub const GUARD: usize = 32;

/// A point of `[0, 1)` given by binary digits `ε₁ … ε_L`.
///
/// An *exact* point terminates: every digit past `L` is zero (a dyadic
/// rational in its terminating form). Otherwise the digits past `L` are
/// unknown and evaluations carry the truncation in their error bound.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitPoint {
    // ε₁ is the most significant bit of words[0]; bits past `len` are zero
    words: Vec<u64>,
    len: usize,
    exact: bool,
}

/// A value with a certified absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedValue {
    pub value: f64,
    pub abs_error: f64,
}

impl CertifiedValue {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            abs_error: 0.0,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.value - x).abs() <= self.abs_error
    }
}

/// Default bit length for evaluations up to iterate `max_n`.
pub fn default_bits(max_n: usize) -> usize {
    max_n.max(64) + 64
}

impl BitPoint {
    fn with_len(len: usize, exact: bool) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
            exact,
        }
    }

    fn set(&mut self, n: usize) {
        let i = n - 1;
        self.words[i / 64] |= 1u64 << (63 - i % 64);
    }

    /// Builds a point from digits `ε₁, ε₂, …`.
    pub fn from_bits(bits: &[bool], exact: bool) -> Result<Self> {
        if bits.is_empty() && !exact {
            return Err(Error::InvalidParameter("a truncated point needs L >= 1".into()));
        }
        let mut p = Self::with_len(bits.len(), exact);
        for (i, &b) in bits.iter().enumerate() {
            if b {
                p.set(i + 1);
            }
        }
        Ok(p)
    }

    /// `len` random digits, unknown beyond; `words` must hold at least `len` bits.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Result<Self> {
        if len == 0 || words.len() * 64 < len {
            return Err(Error::InvalidParameter("word buffer shorter than L".into()));
        }
        words.truncate(len.div_ceil(64));
        if !len.is_multiple_of(64) {
            let last = words.len() - 1;
            words[last] &= !0u64 << (64 - len % 64);
        }
        Ok(Self {
            words,
            len,
            exact: false,
        })
    }

    /// The dyadic rational `k / 2^m` in terminating form.
    pub fn dyadic(k: u64, m: u32) -> Result<Self> {
        if m < 64 && k >= 1u64 << m {
            return Err(Error::Domain {
                value: k as f64 / (m as f64).exp2(),
                domain: "[0, 1)",
            });
        }
        let m = m as usize;
        let mut p = Self::with_len(m, true);
        for j in 0..m.min(64) {
            if (k >> j) & 1 == 1 {
                p.set(m - j);
            }
        }
        Ok(p)
    }

    /// `p/q` expanded to `len` digits; exact when the expansion terminates.
    pub fn from_rational(p: &BigUint, q: &BigUint, len: usize) -> Result<Self> {
        if q.is_zero() || p >= q {
            return Err(Error::Domain {
                value: p.to_f64().unwrap_or(f64::NAN) / q.to_f64().unwrap_or(f64::NAN),
                domain: "[0, 1)",
            });
        }
        let mut out = Self::with_len(len, false);
        let mut rem = p.clone();
        for n in 1..=len {
            rem <<= 1u32;
            if &rem >= q {
                rem -= q;
                out.set(n);
            }
            if rem.is_zero() {
                out.exact = true;
                break;
            }
        }
        Ok(out)
    }

    /// Binary expansion of a double, exact when it fits in `len` digits.
    pub fn from_f64(x: f64, len: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::Domain {
                value: x,
                domain: "[0, 1)",
            });
        }
        let mut out = Self::with_len(len, false);
        let mut r = x;
        for n in 1..=len {
            if r == 0.0 {
                break;
            }
            r *= 2.0;
            if r >= 1.0 {
                r -= 1.0;
                out.set(n);
            }
        }
        out.exact = r == 0.0;
        Ok(out)
    }

    /// Parses a decimal real (`0.3`) or a fraction (`2/3`) to `len` digits.
    pub fn parse_decimal(s: &str, len: usize) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("not a real in [0, 1): `{s}`"));
        let (p, q) = if let Some((a, b)) = s.split_once('/') {
            let p: BigUint = a.trim().parse().map_err(|_| bad())?;
            let q: BigUint = b.trim().parse().map_err(|_| bad())?;
            (p, q)
        } else {
            let (int, frac) = s.split_once('.').unwrap_or((s, ""));
            if !(int.is_empty() || int.chars().all(|c| c == '0')) {
                return Err(bad());
            }
            if !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let p: BigUint = if frac.is_empty() {
                BigUint::zero()
            } else {
                frac.parse().map_err(|_| bad())?
            };
            (p, BigUint::from(10u8).pow(frac.len() as u32))
        };
        Self::from_rational(&p, &q, len)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// `εₙ`; digits past `L` are zero for exact points.
    pub fn bit(&self, n: usize) -> Result<u8> {
        if n == 0 {
            return Err(Error::InvalidParameter("digits are indexed from 1".into()));
        }
        if n > self.len {
            return if self.exact {
                Ok(0)
            } else {
                Err(Error::PrecisionExhausted {
                    needed: n,
                    available: self.len,
                })
            };
        }
        Ok(self.bit_unchecked(n))
    }

    #[inline]
    fn bit_unchecked(&self, n: usize) -> u8 {
        let i = n - 1;
        ((self.words[i / 64] >> (63 - i % 64)) & 1) as u8
    }

    /// Digits `εₙ … εₙ₊₆₃` packed MSB first; digits past `L` read as zero.
    #[inline]
    pub fn window(&self, n: usize) -> u64 {
        let i = n - 1;
        let (w, off) = (i / 64, i % 64);
        let hi = self.words.get(w).copied().unwrap_or(0);
        if off == 0 {
            return hi;
        }
        let lo = self.words.get(w + 1).copied().unwrap_or(0);
        (hi << off) | (lo >> (64 - off))
    }

    /// The point `2ᵏx mod 1`, obtained by dropping the first `k` digits.
    pub fn shifted(&self, k: usize) -> Result<Self> {
        if k >= self.len && !self.exact {
            return Err(Error::PrecisionExhausted {
                needed: k + 1,
                available: self.len,
            });
        }
        let len = self.len.saturating_sub(k);
        let mut out = Self::with_len(len, self.exact);
        for (j, word) in out.words.iter_mut().enumerate() {
            *word = self.window(k + 1 + 64 * j);
        }
        if !len.is_multiple_of(64) {
            let last = out.words.len() - 1;
            out.words[last] &= !0u64 << (64 - len % 64);
        }
        Ok(out)
    }

    /// Nearest double to the truncated expansion.
    pub fn to_f64(&self) -> f64 {
        let head = self.window(1);
        head as f64 * (-64f64).exp2()
    }

    /// Every digit as an exact dyadic `Σ εₖ 2⁻ᵏ`, `k ≤ L`.
    pub fn to_dyadic(&self) -> Dyadic {
        Dyadic::new(BigInt::from(self.digits_as_int(1, self.len)), self.len as u32)
    }

    // integer with digits ε_from … ε_to, ε_to least significant
    fn digits_as_int(&self, from: usize, to: usize) -> BigUint {
        let mut acc = BigUint::zero();
        for n in from..=to {
            acc <<= 1u32;
            if self.bit_unchecked(n) == 1 {
                acc += 1u32;
            }
        }
        acc
    }

    fn need_digits(&self, n: usize) -> Result<()> {
        if !self.exact && n > self.len {
            return Err(Error::PrecisionExhausted {
                needed: n,
                available: self.len,
            });
        }
        Ok(())
    }

    fn need_guarded(&self, n: usize) -> Result<()> {
        if !self.exact && n + GUARD > self.len {
            return Err(Error::PrecisionExhausted {
                needed: n + GUARD,
                available: self.len,
            });
        }
        Ok(())
    }
}

impl fmt::Display for BitPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0.")?;
        if self.len == 0 {
            write!(f, "0")?;
        }
        for n in 1..=self.len {
            write!(f, "{}", self.bit_unchecked(n))?;
        }
        if !self.exact {
            write!(f, "...")?;
        }
        Ok(())
    }
}

impl FromStr for BitPoint {
    type Err = Error;

    /// `0.0101` is the exact dyadic 5/16; a trailing `...` marks truncation.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (body, exact) = match s.strip_suffix("...") {
            Some(b) => (b, false),
            None => (s, true),
        };
        let digits = body
            .strip_prefix("0.")
            .ok_or_else(|| Error::Parse(format!("expected `0.` followed by binary digits: `{s}`")))?;
        let bits = digits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Parse(format!("not a binary digit: `{c}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(&bits, exact)
    }
}

/// The tent map.
pub fn tent(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain {
            value: x,
            domain: "[0, 1]",
        });
    }
    Ok(if x <= 0.5 { 2.0 * x } else { 2.0 * (1.0 - x) })
}

const TWO_POW_M64: f64 = 1.0 / 18_446_744_073_709_551_616.0;

/// `(εₙ, φ*⁽ⁿ⁾(x), abs_error)` from the 64-bit window at `n`.
#[inline]
fn phi_star_from_window(x: &BitPoint, n: usize) -> (u8, f64, f64) {
    let w = x.window(n);
    let eps = (w >> 63) as u8;
    let v = (w << 1) as i128; // digits n+1 … n+63
    let centred = v - (1i128 << 63);
    let signed = if eps == 0 { centred } else { -centred };
    let value = signed as f64 * TWO_POW_M64;
    let rounding = if (value / TWO_POW_M64) as i128 == signed {
        0.0
    } else {
        0.5 * f64::EPSILON * value.abs()
    };
    // digits past the window or past L
    let truncation = if x.exact {
        if x.len <= n + 63 {
            0.0
        } else {
            (-63f64).exp2()
        }
    } else {
        let known = x.len.saturating_sub(n);
        (-(known.min(63) as f64)).exp2()
    };
    (eps, value, rounding + truncation)
}

/// `φ⁽ⁿ⁾(x)`.
pub fn tent_iter(x: &BitPoint, n: usize) -> Result<CertifiedValue> {
    if n == 0 {
        return Err(Error::InvalidParameter("iterates are indexed from 1".into()));
    }
    x.need_digits(n)?;
    let (_, s, err) = phi_star_from_window(x, n);
    let value = s + 0.5;
    let rounding = if value - 0.5 == s { 0.0 } else { 0.5 * f64::EPSILON };
    Ok(CertifiedValue {
        value,
        abs_error: err + rounding,
    })
}

/// `Rₙ(x) = 1 − 2εₙ(x)`.
pub fn rademacher(x: &BitPoint, n: usize) -> Result<i8> {
    Ok(1 - 2 * x.bit(n)? as i8)
}

/// `φ*⁽ⁿ⁾(x) = φ⁽ⁿ⁾(x) − ½`, read from the digits after `n`.
pub fn phi_star(x: &BitPoint, n: usize) -> Result<CertifiedValue> {
    if n == 0 {
        return Err(Error::InvalidParameter("iterates are indexed from 1".into()));
    }
    x.need_guarded(n)?;
    let (_, value, abs_error) = phi_star_from_window(x, n);
    Ok(CertifiedValue { value, abs_error })
}

/// `φ*⁽ⁿ⁾(x)` through the Rademacher series `−2ⁿ⁻¹ Rₙ Σ_{k>n} Rₖ 2⁻ᵏ`.
pub fn phi_star_via_rademacher(x: &BitPoint, n: usize) -> Result<CertifiedValue> {
    x.need_guarded(n)?;
    let d = phi_star_rademacher_exact(x, n)?;
    let value = d.to_f64();
    let truncation = if x.exact {
        0.0
    } else {
        (-((x.len - n) as f64)).exp2()
    };
    Ok(CertifiedValue {
        value,
        abs_error: truncation + f64::EPSILON * value.abs(),
    })
}

/// Exact `φ*⁽ⁿ⁾` of the truncated expansion, from the shifted digits.
pub fn phi_star_shift_exact(x: &BitPoint, n: usize) -> Result<Dyadic> {
    if n == 0 {
        return Err(Error::InvalidParameter("iterates are indexed from 1".into()));
    }
    x.need_digits(n)?;
    if n > x.len {
        return Ok(Dyadic::new(BigInt::from(-1), 1));
    }
    let span = x.len - n;
    let y = BigInt::from(x.digits_as_int(n + 1, x.len));
    let numer = (y << 1u32) - (BigInt::one() << span);
    let numer = if x.bit_unchecked(n) == 1 { -numer } else { numer };
    Ok(Dyadic::new(numer, span as u32 + 1))
}

/// Exact `−2ⁿ⁻¹ Rₙ Σ_{k=n+1}^{L} Rₖ 2⁻ᵏ`; for exact points the all-zero
/// digit tail (`Rₖ = 1`, `k > L`) contributes `2⁻ᴸ` in closed form.
pub fn phi_star_rademacher_exact(x: &BitPoint, n: usize) -> Result<Dyadic> {
    if n == 0 {
        return Err(Error::InvalidParameter("iterates are indexed from 1".into()));
    }
    x.need_digits(n)?;
    if n > x.len {
        return Ok(Dyadic::new(BigInt::from(-1), 1));
    }
    let span = x.len - n;
    // Σ Rₖ 2^{L-k} = (2^{span} − 1) − 2·digits
    let digits = BigInt::from(x.digits_as_int(n + 1, x.len));
    let mut series: BigInt = (BigInt::one() << span) - 1 - (digits << 1u32);
    if x.exact {
        series += 1;
    }
    let numer = if x.bit_unchecked(n) == 1 { series } else { -series };
    Ok(Dyadic::new(numer, span as u32 + 1))
}

/// `Σ_{from ≤ n < to} w(n) · (φ⁽ⁿ⁾(x) + shift)`, with certified error.
fn weighted_sum<W: Fn(u64) -> f64>(
    x: &BitPoint,
    from: usize,
    to: usize,
    shift: f64,
    weight: W,
) -> CertifiedValue {
    let mut acc = CompensatedSum::default();
    let mut err = 0.0;
    for n in from..to {
        let c = weight(n as u64);
        if c == 0.0 {
            continue;
        }
        let (_, s, e) = phi_star_from_window(x, n);
        acc.add(c * (s + 0.5 + shift));
        err += c.abs() * e;
    }
    let value = acc.value();
    let count = to.saturating_sub(from) as f64;
    let rounding = (4.0 + count * f64::EPSILON) * f64::EPSILON * acc.magnitude()
        + 2.0 * f64::EPSILON * value.abs();
    CertifiedValue {
        value,
        abs_error: err + rounding,
    }
}

/// `f_N(x) = Σ_{n<N} cₙ φ⁽ⁿ⁾(x)`.
pub fn eval_partial(seq: &CoefficientSeq, x: &BitPoint, n_cut: u64) -> Result<CertifiedValue> {
    if n_cut == 0 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    let last = n_cut as usize - 1;
    if last > 0 {
        x.need_guarded(last)?;
    }
    Ok(weighted_sum(x, 1, n_cut as usize, 0.0, |n| seq.term(n)))
}

/// Smallest `n ≥ from` with `pred(n)`, for monotone `pred`.
fn first_index<P: FnMut(u64) -> Result<bool>>(from: u64, mut pred: P) -> Result<Option<u64>> {
    const CAP: u64 = 1 << 40;
    if pred(from)? {
        return Ok(Some(from));
    }
    let mut lo = from;
    let mut step = 1u64;
    let hi = loop {
        let cand = from.saturating_add(step);
        if cand > CAP {
            return Ok(None);
        }
        if pred(cand)? {
            break cand;
        }
        lo = cand;
        step *= 2;
    };
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// First index `E ≥ N` with `½ Σ_{n≥E} |cₙ| ≤ budget`, budget in units of `s_N`.
fn truncation_index(seq: &CoefficientSeq, n: u64, budget: f64) -> Result<u64> {
    if let Some(end) = seq.support_end() {
        return Ok((end + 1).max(n));
    }
    let abs = seq.abs();
    let ln_n = seq.ln_scale(n);
    first_index(n, |e| {
        let t = abs.tail_sum_scaled(e, 1)?;
        let rel = (seq.ln_scale(e) - ln_n).exp();
        Ok(0.5 * (t.value + t.error_bound) * rel <= budget)
    })?
    .ok_or(Error::PrecisionExhausted {
        needed: usize::MAX,
        available: 0,
    })
}

/// `f(x)` within `tol`.
pub fn eval_f(seq: &CoefficientSeq, x: &BitPoint, tol: f64) -> Result<CertifiedValue> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let unit = exp_unit(seq.ln_scale(1));
    let end = truncation_index(seq, 1, 0.5 * tol / unit)?;
    if x.exact && (x.len as u64 + 1) < end {
        // every iterate past L vanishes
        return Ok(weighted_sum(x, 1, x.len + 1, 0.0, |n| seq.term(n)));
    }
    if end > 1 {
        x.need_guarded(end as usize - 1).map_err(|e| match e {
            Error::PrecisionExhausted { available, .. } => Error::PrecisionExhausted {
                needed: end as usize - 1 + GUARD,
                available,
            },
            other => other,
        })?;
    }
    let head = weighted_sum(x, 1, end as usize, 0.0, |n| seq.term(n));
    let mean = seq.tail_sum(end, 1)?;
    let abs_tail = seq.abs().tail_sum(end, 1)?;
    let value = head.value + 0.5 * mean.value;
    Ok(CertifiedValue {
        value,
        abs_error: head.abs_error
            + 0.5 * mean.error_bound
            + 0.5 * (abs_tail.value + abs_tail.error_bound)
            + f64::EPSILON * value.abs(),
    })
}

/// `M_N(x)` in units of `s_N = exp(ln_scale(N))`; `tol` is in the same units.
pub(crate) fn tail_m_scaled(
    seq: &CoefficientSeq,
    x: &BitPoint,
    n: u64,
    tol: f64,
) -> Result<CertifiedValue> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let end = truncation_index(seq, n, 0.5 * tol)?;
    let rel = |e: u64| (seq.ln_scale(e) - seq.ln_scale(n)).exp();
    let nu = n as usize;
    if x.exact && (x.len as u64 + 1) < end {
        // past L every φ* equals −½, so the rest is −½ Σ_{k>L} cₖ
        let stop = (x.len + 1).max(nu);
        let head = weighted_sum(x, nu, stop, -0.5, |k| seq.scaled_term(k, n));
        let rest = seq.tail_sum_scaled(stop as u64, 1)?;
        let r = rel(stop as u64);
        return Ok(CertifiedValue {
            value: head.value - 0.5 * rest.value * r,
            abs_error: head.abs_error + 0.5 * rest.error_bound * r + f64::EPSILON * head.value.abs(),
        });
    }
    if end > n {
        x.need_guarded(end as usize - 1)?;
    }
    let head = weighted_sum(x, nu, end as usize, -0.5, |k| seq.scaled_term(k, n));
    let abs_tail = seq.abs().tail_sum_scaled(end, 1)?;
    Ok(CertifiedValue {
        value: head.value,
        abs_error: head.abs_error + 0.5 * (abs_tail.value + abs_tail.error_bound) * rel(end),
    })
}

/// `M_N(x) = f(x) − f_N(x) − m_N = Σ_{n≥N} cₙ φ*⁽ⁿ⁾(x)` within `tol`.
pub fn tail_m(seq: &CoefficientSeq, x: &BitPoint, n: u64, tol: f64) -> Result<CertifiedValue> {
    let unit = exp_unit(seq.ln_scale(n));
    let m = tail_m_scaled(seq, x, n, tol / unit)?;
    Ok(CertifiedValue {
        value: m.value * unit,
        abs_error: m.abs_error * unit,
    })
}

/// `M_N` two ways: the direct `φ*` tail and `f − f_N − m_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRoutes {
    pub direct: CertifiedValue,
    pub difference: CertifiedValue,
}

impl TailRoutes {
    pub fn agree(&self) -> bool {
        (self.direct.value - self.difference.value).abs()
            <= self.direct.abs_error + self.difference.abs_error
    }
}

pub fn tail_m_routes(seq: &CoefficientSeq, x: &BitPoint, n: u64, tol: f64) -> Result<TailRoutes> {
    let direct = tail_m(seq, x, n, tol)?;
    let f = eval_f(seq, x, tol)?;
    let partial = eval_partial(seq, x, n)?;
    let mean = seq.tail_sum(n, 1)?;
    let value = f.value - partial.value - 0.5 * mean.value;
    let difference = CertifiedValue {
        value,
        abs_error: f.abs_error
            + partial.abs_error
            + 0.5 * mean.error_bound
            + 2.0 * f64::EPSILON * (f.value.abs() + partial.value.abs() + value.abs()),
    };
    Ok(TailRoutes { direct, difference })
}

/// `(f − f_N)/m_N = 1 + M_N/m_N`; `tol` is relative to `|m_N|`.
pub fn stat_ratio(seq: &CoefficientSeq, x: &BitPoint, n: u64, tol: f64) -> Result<CertifiedValue> {
    let mean = seq.tail_sum_scaled(n, 1)?;
    let m = 0.5 * mean.value;
    if m == 0.0 || m.abs() <= 0.5 * mean.error_bound {
        return Err(Error::DegenerateMean(n));
    }
    let tail = tail_m_scaled(seq, x, n, tol * m.abs())?;
    let q = tail.value / m;
    let rel_mean = 0.5 * mean.error_bound / m.abs();
    Ok(CertifiedValue {
        value: 1.0 + q,
        abs_error: tail.abs_error / m.abs() + q.abs() * rel_mean * 1.01 + 2.0 * f64::EPSILON * (1.0 + q.abs()),
    })
}

/// `M_N / √(s²_N)`; `tol` is relative to `s_N`.
pub fn stat_clt(seq: &CoefficientSeq, x: &BitPoint, n: u64, tol: f64) -> Result<CertifiedValue> {
    let sq = seq.tail_sum_scaled(n, 2)?;
    let s2 = sq.value / 12.0;
    if !(s2 > 0.0) {
        return Err(Error::DegenerateVariance(n));
    }
    let sd = s2.sqrt();
    let tail = tail_m_scaled(seq, x, n, tol * sd)?;
    let z = tail.value / sd;
    Ok(CertifiedValue {
        value: z,
        abs_error: tail.abs_error / sd
            + z.abs() * (0.5 * sq.error_bound / sq.value + 2.0 * f64::EPSILON),
    })
}

/// `ln φ(t)` for `φ(t) = √(2t ln ln(1/t))`, given `ln t`.
pub fn ln_lil_normaliser(ln_t: f64) -> Result<f64> {
    if !(ln_t < -1.0) {
        return Err(Error::NormalizerUndefined(ln_t.exp()));
    }
    Ok(0.5 * (std::f64::consts::LN_2 + ln_t + (-ln_t).ln().ln()))
}

/// `M_N / φ(s²_N)`; `tol` is relative to `s_N`.
pub fn stat_lil(seq: &CoefficientSeq, x: &BitPoint, n: u64, tol: f64) -> Result<CertifiedValue> {
    let sq = seq.tail_sum_scaled(n, 2)?;
    let s2 = sq.value / 12.0;
    if !(s2 > 0.0) {
        return Err(Error::DegenerateVariance(n));
    }
    let ln_s = seq.ln_scale(n);
    let ln_phi = ln_lil_normaliser(s2.ln() + 2.0 * ln_s)?;
    let tail = tail_m_scaled(seq, x, n, tol * s2.sqrt())?;
    let factor = (ln_s - ln_phi).exp();
    let value = tail.value * factor;
    Ok(CertifiedValue {
        value,
        abs_error: tail.abs_error * factor + value.abs() * (sq.error_bound / sq.value + 8.0 * f64::EPSILON),
    })
}

/// Both sides of the geometric self-similarity identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarity {
    /// `(f_r − f_{r,N})(x) / (½ Σ_{n≥N} rⁿ)`
    pub lhs: CertifiedValue,
    /// `f_r(2ᴺ⁻¹x mod 1) / E[f_r]`
    pub rhs: CertifiedValue,
    pub gap: f64,
}

impl SelfSimilarity {
    pub fn within_certified_error(&self) -> bool {
        self.gap <= self.lhs.abs_error + self.rhs.abs_error
    }
}

pub fn selfsim_check(r: f64, x: &BitPoint, n: u64, tol: f64) -> Result<SelfSimilarity> {
    let seq = CoefficientSeq::geometric(r)?;
    if n == 0 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    let lhs = stat_ratio(&seq, x, n, tol)?;
    let expectation = 0.5 * r / (1.0 - r);
    let shifted = x.shifted(n as usize - 1)?;
    let f = eval_f(&seq, &shifted, tol * expectation.abs())?;
    let rhs = CertifiedValue {
        value: f.value / expectation,
        abs_error: f.abs_error / expectation.abs() + 2.0 * f64::EPSILON * (f.value / expectation).abs(),
    };
    Ok(SelfSimilarity {
        lhs,
        rhs,
        gap: (lhs.value - rhs.value).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_thirds(len: usize) -> BitPoint {
        BitPoint::parse_decimal("2/3", len).unwrap()
    }

    #[test]
    fn tent_values() {
        assert_eq!(tent(0.5).unwrap(), 1.0);
        assert_eq!(tent(0.0).unwrap(), 0.0);
        assert_eq!(tent(1.0).unwrap(), 0.0);
        assert!((tent(2.0 / 3.0).unwrap() - 2.0 / 3.0).abs() <= f64::EPSILON);
        assert!(tent(1.5).is_err());
    }

    #[test]
    fn tent_iter_examples() {
        let half = BitPoint::dyadic(1, 1).unwrap();
        assert_eq!(tent_iter(&half, 1).unwrap(), CertifiedValue::exact(1.0));
        assert_eq!(tent_iter(&half, 2).unwrap(), CertifiedValue::exact(0.0));
        let x = BitPoint::dyadic(5, 4).unwrap();
        for n in 5..20 {
            assert_eq!(tent_iter(&x, n).unwrap(), CertifiedValue::exact(0.0));
        }
        let t = two_thirds(64);
        let v = tent_iter(&t, 5).unwrap();
        assert!(v.contains(2.0 / 3.0));
        assert!(v.abs_error < 1e-15);
    }

    #[test]
    fn shift_route_is_within_truncation_of_two_thirds() {
        let t = two_thirds(64);
        let d = phi_star_shift_exact(&t, 3).unwrap();
        assert!((d.to_f64() - 1.0 / 6.0).abs() <= (-60f64).exp2());
    }

    #[test]
    fn truncated_point_runs_out() {
        let t = two_thirds(64);
        assert!(tent_iter(&t, 65).is_err());
        assert!(phi_star(&t, 40).is_err());
        assert!(rademacher(&t, 65).is_err());
    }

    #[test]
    fn rademacher_examples() {
        let q = BitPoint::dyadic(1, 2).unwrap();
        assert_eq!(rademacher(&q, 1).unwrap(), 1);
        assert_eq!(rademacher(&q, 2).unwrap(), -1);
        let z = BitPoint::dyadic(0, 0).unwrap();
        assert_eq!(rademacher(&z, 17).unwrap(), 1);
    }

    #[test]
    fn phi_star_examples() {
        let half = BitPoint::dyadic(1, 1).unwrap();
        assert_eq!(phi_star(&half, 1).unwrap(), CertifiedValue::exact(0.5));
        let t = two_thirds(128);
        assert!(phi_star(&t, 3).unwrap().contains(1.0 / 6.0));
        let via = phi_star_via_rademacher(&t, 3).unwrap();
        assert!((via.value - 1.0 / 6.0).abs() <= via.abs_error + 1e-17);
    }

    #[test]
    fn exact_routes_agree_on_dyadics() {
        let x = BitPoint::dyadic(0b1_0110_1101, 9).unwrap();
        for n in 1..30 {
            let a = phi_star_shift_exact(&x, n).unwrap();
            let b = phi_star_rademacher_exact(&x, n).unwrap();
            assert_eq!(a.cmp(&b), std::cmp::Ordering::Equal, "n={n}");
        }
    }

    #[test]
    fn truncated_routes_differ_by_last_digit_weight() {
        let x = BitPoint::parse_decimal("0.123456789", 100).unwrap();
        for n in 1..=40 {
            let a = phi_star_shift_exact(&x, n).unwrap();
            let b = phi_star_rademacher_exact(&x, n).unwrap();
            let gap = (&a - &b).abs();
            assert_eq!(gap, Dyadic::pow2_neg((100 - n + 1) as u32));
        }
    }

    #[test]
    fn partial_sum_examples() {
        let takagi = CoefficientSeq::takagi();
        let half = BitPoint::dyadic(1, 1).unwrap();
        assert_eq!(eval_partial(&takagi, &half, 1).unwrap().value, 0.0);
        assert_eq!(eval_partial(&takagi, &half, 2).unwrap().value, 0.5);
        let quarter = CoefficientSeq::geometric(0.25).unwrap();
        let x = BitPoint::dyadic(1, 2).unwrap();
        let v = eval_partial(&quarter, &x, 3).unwrap();
        assert_eq!(v.value, 3.0 / 16.0);
    }

    #[test]
    fn eval_f_examples() {
        let takagi = CoefficientSeq::takagi();
        let half = BitPoint::dyadic(1, 1).unwrap();
        assert_eq!(eval_f(&takagi, &half, 1e-12).unwrap().value, 0.5);
        let t = two_thirds(256);
        let v = eval_f(&takagi, &t, 1e-12).unwrap();
        assert!((v.value - 2.0 / 3.0).abs() <= v.abs_error.max(1e-12));
        assert!(v.abs_error <= 1e-12);
        let quarter = CoefficientSeq::geometric(0.25).unwrap();
        let x = BitPoint::parse_decimal("0.3", 256).unwrap();
        let v = eval_f(&quarter, &x, 1e-13).unwrap();
        assert!((v.value - 0.21).abs() <= v.abs_error + 1e-16);
    }

    #[test]
    fn eval_f_reports_required_bits() {
        let p = CoefficientSeq::power_law(2.0).unwrap();
        let x = BitPoint::parse_decimal("0.3", 128).unwrap();
        match eval_f(&p, &x, 1e-9) {
            Err(Error::PrecisionExhausted { needed, available }) => {
                assert_eq!(available, 128);
                assert!(needed > 1_000_000);
            }
            other => panic!("expected precision error, got {other:?}"),
        }
    }

    #[test]
    fn dyadic_tail_is_minus_mean() {
        let takagi = CoefficientSeq::takagi();
        let x = BitPoint::dyadic(3, 3).unwrap();
        for n in 4..12 {
            let m = tail_m(&takagi, &x, n, 1e-14).unwrap();
            let mean = 0.5 * takagi.tail_sum(n, 1).unwrap().value;
            assert_eq!(m.value, -mean);
            assert_eq!(stat_ratio(&takagi, &x, n, 1e-12).unwrap().value, 0.0);
        }
    }

    #[test]
    fn fixed_point_ratio_is_four_thirds() {
        let t = two_thirds(2048);
        for seq in [
            CoefficientSeq::takagi(),
            CoefficientSeq::geometric(0.7).unwrap(),
            CoefficientSeq::stretched_exp(1.0, 0.5).unwrap(),
        ] {
            for n in [1u64, 5, 40] {
                let r = stat_ratio(&seq, &t, n, 1e-12).unwrap();
                assert!((r.value - 4.0 / 3.0).abs() <= r.abs_error + 1e-14, "{seq} n={n}");
            }
        }
    }

    #[test]
    fn tail_routes_agree() {
        let x = BitPoint::parse_decimal("0.6180339887", 1024).unwrap();
        for seq in [
            CoefficientSeq::geometric(-0.6).unwrap(),
            CoefficientSeq::stretched_exp(0.8, 0.6).unwrap(),
            CoefficientSeq::dyadic_over_sqrt(),
        ] {
            let r = tail_m_routes(&seq, &x, 7, 1e-12).unwrap();
            assert!(r.agree(), "{seq}: {r:?}");
        }
    }

    #[test]
    fn selfsim_example_quarter() {
        let x = BitPoint::parse_decimal("0.3", 256).unwrap();
        let s = selfsim_check(0.25, &x, 1, 1e-13).unwrap();
        assert!((s.lhs.value - 1.26).abs() < 1e-12);
        assert!((s.rhs.value - 1.26).abs() < 1e-12);
        assert!(s.within_certified_error());
    }

    #[test]
    fn lil_normaliser_domain() {
        let takagi = CoefficientSeq::takagi();
        let x = BitPoint::parse_decimal("0.3", 256).unwrap();
        assert!(stat_lil(&takagi, &x, 3, 1e-10).is_ok());
        assert!(ln_lil_normaliser(-0.5).is_err());
    }

    #[test]
    fn display_and_parse() {
        let x: BitPoint = "0.0101".parse().unwrap();
        assert!(x.is_exact());
        assert_eq!(x, BitPoint::dyadic(5, 4).unwrap());
        assert_eq!(x.to_string(), "0.0101");
        let y: BitPoint = "0.11...".parse().unwrap();
        assert!(!y.is_exact());
        assert_eq!(y.to_string(), "0.11...");
        assert!("1.01".parse::<BitPoint>().is_err());
    }

    #[test]
    fn shifting_drops_leading_digits() {
        let x: BitPoint = "0.1101".parse().unwrap();
        assert_eq!(x.shifted(2).unwrap().to_string(), "0.01");
        let w = BitPoint::from_words(vec![u64::MAX, 0x8000_0000_0000_0000], 70).unwrap();
        let s = w.shifted(3).unwrap();
        assert_eq!(s.len(), 67);
        assert_eq!(s.bit(61).unwrap(), 1);
        assert_eq!(s.bit(62).unwrap(), 1);
        assert_eq!(s.bit(63).unwrap(), 0);
    }

    #[test]
    fn from_f64_is_exact_for_doubles() {
        let x = BitPoint::from_f64(0.375, 64).unwrap();
        assert!(x.is_exact());
        assert_eq!(x.to_f64(), 0.375);
    }
}
