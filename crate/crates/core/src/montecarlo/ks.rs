//! Kolmogorov–Smirnov distances and reference distribution functions.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// `sup_x |F_n(x) − F(x)|` over the empirical distribution of `samples`.
///
/// The gap is checked at every sample value and at its left limit, so ties
/// and atoms are handled.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let v = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == v {
            j += 1;
        }
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((at - cdf(v)).abs()).max((below - cdf(v.next_down())).abs());
        i = j;
    }
    Ok(d)
}

/// Two-sample distance `sup_x |F_a(x) − F_b(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn uniform_cdf(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// `P(6x(1−x) ≤ u) = 1 − √(1 − 2u/3)` for uniform `x`.
pub fn quarter_limit_cdf(u: f64) -> Result<f64> {
    if !(0.0..=1.5).contains(&u) {
        return Err(Error::Domain {
            value: u,
            domain: "[0, 3/2]",
        });
    }
    Ok(1.0 - (1.0 - 2.0 * u / 3.0).max(0.0).sqrt())
}
