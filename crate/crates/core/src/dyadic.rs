use std::cmp::Ordering;
use std::fmt;
use std::ops::{Neg, Sub};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

/// Exact dyadic rational `numer / 2^scale`.
///
/// Used where two evaluation routes must be compared below double precision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dyadic {
    numer: BigInt,
    scale: u32,
}

impl Dyadic {
    pub fn new(numer: BigInt, scale: u32) -> Self {
        Self { numer, scale }
    }

    pub fn zero() -> Self {
        Self::new(BigInt::zero(), 0)
    }

    /// `2^-k`
    pub fn pow2_neg(k: u32) -> Self {
        Self::new(BigInt::from(1u8), k)
    }

    pub fn numer(&self) -> &BigInt {
        &self.numer
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    fn rescaled(&self, scale: u32) -> BigInt {
        debug_assert!(scale >= self.scale);
        &self.numer << (scale - self.scale)
    }

    pub fn abs(&self) -> Self {
        Self::new(self.numer.abs(), self.scale)
    }

    pub fn is_zero(&self) -> bool {
        self.numer.is_zero()
    }

    /// Nearest double (up to one rounding of the numerator).
    pub fn to_f64(&self) -> f64 {
        let bits = self.numer.bits();
        // keep the numerator within f64 range before applying the scale
        if bits > 1000 {
            let shift = bits - 60;
            let head = (&self.numer >> shift).to_f64().unwrap_or(f64::NAN);
            return head * 2f64.powi(shift as i32 - self.scale as i32);
        }
        let n = self.numer.to_f64().unwrap_or(f64::NAN);
        n * 2f64.powi(-(self.scale as i32))
    }
}

impl Sub for &Dyadic {
    type Output = Dyadic;

    fn sub(self, rhs: &Dyadic) -> Dyadic {
        let scale = self.scale.max(rhs.scale);
        Dyadic::new(self.rescaled(scale) - rhs.rescaled(scale), scale)
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;

    fn neg(self) -> Dyadic {
        Dyadic::new(-self.numer, self.scale)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let scale = self.scale.max(other.scale);
        self.rescaled(scale).cmp(&other.rescaled(scale))
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2^{}", self.numer, self.scale)
    }
}
