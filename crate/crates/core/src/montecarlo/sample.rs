use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point_eval::BitPoint;

/// Anything that can hand out evaluation points by index.
pub trait PointSource: Sync {
    fn count(&self) -> usize;

    /// Point `i` carrying at least `min_bits` known digits.
    fn point(&self, i: usize, min_bits: usize) -> Result<BitPoint>;

    fn describe(&self) -> String;
}

/// A reproducible batch of uniform points, generated on demand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub seed: u64,
    pub count: usize,
    /// Digits per point; runners may request more.
    pub bits: usize,
}

impl SampleBatch {
    pub fn new(seed: u64, count: usize, bits: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter("sample count must be >= 1".into()));
        }
        if bits < 64 {
            return Err(Error::InvalidParameter("points need at least 64 bits".into()));
        }
        Ok(Self { seed, count, bits })
    }

    /// An independent batch for auxiliary draws, keyed by `tag`.
    pub fn derived(&self, tag: u64, count: usize) -> Self {
        Self {
            seed: self
                .seed
                .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
                .rotate_left(17),
            count,
            bits: self.bits,
        }
    }

    pub fn point_with_bits(&self, i: usize, bits: usize) -> BitPoint {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        let words = (0..bits.div_ceil(64)).map(|_| rng.next_u64()).collect();
        BitPoint::from_words(words, bits).expect("word count matches bit length")
    }

    pub fn points(&self) -> impl Iterator<Item = BitPoint> + '_ {
        (0..self.count).map(|i| self.point_with_bits(i, self.bits))
    }
}

impl PointSource for SampleBatch {
    fn count(&self) -> usize {
        self.count
    }

    fn point(&self, i: usize, min_bits: usize) -> Result<BitPoint> {
        Ok(self.point_with_bits(i, self.bits.max(min_bits)))
    }

    fn describe(&self) -> String {
        format!("chacha20 seed={} count={}", self.seed, self.count)
    }
}

/// All dyadic points `k / 2^m`, `k = 0 … 2^m − 1`, in terminating form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicGrid {
    pub m: u32,
}

impl PointSource for DyadicGrid {
    fn count(&self) -> usize {
        1usize << self.m
    }

    fn point(&self, i: usize, _min_bits: usize) -> Result<BitPoint> {
        BitPoint::dyadic(i as u64, self.m)
    }

    fn describe(&self) -> String {
        format!("dyadic grid k/2^{}", self.m)
    }
}

impl PointSource for Vec<BitPoint> {
    fn count(&self) -> usize {
        self.len()
    }

    fn point(&self, i: usize, min_bits: usize) -> Result<BitPoint> {
        let p = &self[i];
        if !p.is_exact() && p.len() < min_bits {
            return Err(Error::PrecisionExhausted {
                needed: min_bits,
                available: p.len(),
            });
        }
        Ok(p.clone())
    }

    fn describe(&self) -> String {
        format!("{} supplied points", self.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_are_reproducible() {
        let a = SampleBatch::new(1, 2, 64).unwrap();
        let b = SampleBatch::new(1, 2, 64).unwrap();
        assert_eq!(a.points().collect::<Vec<_>>(), b.points().collect::<Vec<_>>());
        let c = SampleBatch::new(2, 2, 64).unwrap();
        assert_ne!(a.points().next(), c.points().next());
    }

    #[test]
    fn longer_points_extend_shorter_ones() {
        let b = SampleBatch::new(9, 4, 64).unwrap();
        let short = b.point_with_bits(3, 70);
        let long = b.point_with_bits(3, 300);
        for n in 1..=70 {
            assert_eq!(short.bit(n).unwrap(), long.bit(n).unwrap());
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(SampleBatch::new(1, 0, 64).is_err());
        assert!(SampleBatch::new(1, 5, 32).is_err());
    }

    #[test]
    fn grid_points_are_exact() {
        let g = DyadicGrid { m: 3 };
        assert_eq!(g.count(), 8);
        let p = g.point(5, 1000).unwrap();
        assert!(p.is_exact());
        assert_eq!(p.to_f64(), 0.625);
    }
}
