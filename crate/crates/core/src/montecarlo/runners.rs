use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::TailKernel;
use super::ks::{quarter_limit_cdf, ks_statistic, ks_two_sample, normal_cdf, uniform_cdf};
use super::report::{Comparator, VerificationReport};
use super::sample::{PointSource, SampleBatch};
use super::stats::{mean_and_se, median, variance_and_se};
use crate::asymptotics::{
    square_ratio_lower, integral_bracket_normalised, integral_bracket_constants, stretch_integral,
    tailsum_bracket_normalised,
};
use crate::coefficients::{CoefficientSeq, Condition, Family, Verdict};
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::moments::{azuma_tail_bound, l2_ratio_error, phi_star_moments, tail_stats, var_q2};
use crate::point_eval::{
    phi_star, phi_star_rademacher_exact, phi_star_shift_exact, phi_star_via_rademacher,
    selfsim_check, stat_ratio, tail_m, tent_iter, BitPoint,
};

/// `M_N / s_N` for every point and every kernel index, row-major by point.
fn kernel_table(kernel: &TailKernel, source: &dyn PointSource) -> Result<Vec<Vec<f64>>> {
    let bits = kernel.bits_required();
    (0..source.count())
        .into_par_iter()
        .map(|i| Ok(kernel.eval(&source.point(i, bits)?)))
        .collect()
}

fn column(table: &[Vec<f64>], j: usize) -> Vec<f64> {
    table.iter().map(|row| row[j]).collect()
}

fn describe_kernel(report: &mut VerificationReport, kernel: &TailKernel, omega: f64) {
    report
        .param("omega", omega)
        .param("series_end", kernel.end())
        .param("bits", kernel.bits_required())
        .metric("omitted_variance_fraction", None, kernel.omitted_variance_fraction());
}

fn condition_holds(seq: &CoefficientSeq, c: Condition) -> bool {
    seq.check_condition(c).verdict == Verdict::Holds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlnConfig {
    /// Tail-variance fraction the series truncation may leave out.
    pub omega: f64,
    /// Allowed relative gap between empirical and closed-form mean square.
    pub rel_tol: f64,
    /// Band for the mean-square ratio between consecutive decades of `N`.
    pub decade_band: [f64; 2],
    /// The source holds only dyadic points past their last digit.
    pub dyadic_control: bool,
}

impl Default for LlnConfig {
    fn default() -> Self {
        Self {
            omega: 1e-4,
            rel_tol: 0.10,
            decade_band: [8.0, 12.0],
            dyadic_control: false,
        }
    }
}

/// Ratio law of large numbers: `E[((f − f_N)/m_N − 1)²]` against its closed form.
pub fn run_lln(
    seq: &CoefficientSeq,
    ns: &[u64],
    source: &dyn PointSource,
    cfg: &LlnConfig,
) -> Result<VerificationReport> {
    let kernel = TailKernel::new(seq, ns, cfg.omega)?;
    for (i, &n) in ns.iter().enumerate() {
        if kernel.mean_scaled(i) == 0.0 {
            return Err(Error::DegenerateMean(n));
        }
    }
    let table = kernel_table(&kernel, source)?;
    let mut report = VerificationReport::new("lln", seq.to_string());
    report
        .param("N", ns)
        .param("source", source.describe())
        .param("rel_tol", cfg.rel_tol)
        .param("decade_band", cfg.decade_band)
        .param("dyadic_control", cfg.dyadic_control);
    report.sample_size = source.count() as u64;
    describe_kernel(&mut report, &kernel, cfg.omega);

    let c14 = condition_holds(seq, Condition::C14);
    let devs: Vec<Vec<f64>> = (0..ns.len())
        .map(|j| {
            column(&table, j)
                .into_iter()
                .map(|m| kernel.ratio(j, m) - 1.0)
                .collect()
        })
        .collect();
    let mut mean_squares = Vec::new();
    for (j, &n) in ns.iter().enumerate() {
        let d = &devs[j];
        let (mean, _) = mean_and_se(d);
        let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
        let (ms, ms_se) = mean_and_se(&sq);
        mean_squares.push(ms);
        report
            .metric("mean_deviation", Some(n), mean)
            .metric("mean_square", Some(n), ms)
            .metric("mean_square_se", Some(n), ms_se);
        if cfg.dyadic_control {
            let worst = d.iter().map(|v| (v + 1.0).abs()).fold(0.0, f64::max);
            report
                .check(format!("ratio_is_zero_N{n}"), worst, Comparator::AtMost(1e-9))
                .check(
                    format!("mean_square_is_one_N{n}"),
                    ms,
                    Comparator::Within { target: 1.0, tol: 1e-9 },
                );
        } else {
            let closed = l2_ratio_error(seq, n)?;
            report.metric("closed_form", Some(n), closed);
            report.check(
                format!("mean_square_rel_error_N{n}"),
                ms / closed - 1.0,
                Comparator::Within { target: 0.0, tol: cfg.rel_tol },
            );
        }
    }
    // worst deviation from index j onward, averaged over paths
    for j in 0..ns.len() {
        let avg = (0..table.len())
            .map(|p| devs[j..].iter().map(|d| d[p].abs()).fold(0.0, f64::max))
            .sum::<f64>()
            / table.len() as f64;
        report.metric("path_sup_abs_deviation", Some(ns[j]), avg);
    }
    if !cfg.dyadic_control {
        for j in 0..ns.len().saturating_sub(1) {
            if ns[j + 1] != 10 * ns[j] {
                continue;
            }
            let ratio = mean_squares[j] / mean_squares[j + 1];
            report.metric("decade_ratio", Some(ns[j]), ratio);
            if c14 {
                report.check(
                    format!("decade_decay_N{}", ns[j]),
                    ratio,
                    Comparator::Between {
                        lo: cfg.decade_band[0],
                        hi: cfg.decade_band[1],
                    },
                );
            }
        }
        if !c14 {
            report.note("negative control: the tail-ratio condition C14 fails, the mean square is expected to plateau");
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CltConfig {
    pub omega: f64,
    pub ks_max: f64,
    /// Minimum KS distance required when the sequence is a negative control.
    pub negative_ks_min: f64,
    pub se_mult: f64,
}

impl Default for CltConfig {
    fn default() -> Self {
        Self {
            omega: 1e-4,
            ks_max: 0.02,
            negative_ks_min: 0.05,
            se_mult: 4.0,
        }
    }
}

/// Normal limit of `M_N / s_N` at a fixed `N`.
pub fn run_clt(
    seq: &CoefficientSeq,
    n: u64,
    source: &dyn PointSource,
    cfg: &CltConfig,
) -> Result<VerificationReport> {
    let kernel = TailKernel::new(seq, &[n], cfg.omega)?;
    if kernel.square_sum_scaled(0) <= 0.0 {
        return Err(Error::DegenerateVariance(n));
    }
    let table = kernel_table(&kernel, source)?;
    let raw = column(&table, 0);
    let z: Vec<f64> = raw.iter().map(|&m| kernel.clt(0, m)).collect();
    let positive = condition_holds(seq, Condition::C16);

    let mut report = VerificationReport::new("clt", seq.to_string());
    report
        .param("N", n)
        .param("source", source.describe())
        .param("ks_max", cfg.ks_max)
        .param("negative_ks_min", cfg.negative_ks_min)
        .param("se_mult", cfg.se_mult)
        .param("negative_control", !positive);
    report.sample_size = z.len() as u64;
    describe_kernel(&mut report, &kernel, cfg.omega);

    let ks = ks_statistic(&z, normal_cdf)?;
    let (mean, mean_se) = mean_and_se(&z);
    let (var, var_se) = variance_and_se(&z);
    let expected_var = 1.0 - kernel.omitted_variance_fraction();
    report
        .metric("ks_normal", Some(n), ks)
        .metric("mean", Some(n), mean)
        .metric("variance", Some(n), var)
        .check(
            "mean_is_zero",
            mean,
            Comparator::Within { target: 0.0, tol: cfg.se_mult * mean_se },
        )
        .check(
            "variance_is_one",
            var,
            Comparator::Within { target: expected_var, tol: cfg.se_mult * var_se },
        );
    if positive {
        report.check("ks_normal", ks, Comparator::AtMost(cfg.ks_max));
        if let Family::PowerLaw { alpha } = seq.family() {
            // (ratio − 1) rescaled by its first-order standard deviation
            let scale = (alpha - 1.0) / (3.0 * (2.0 * alpha - 1.0)).sqrt() / (n as f64).sqrt();
            let w: Vec<f64> = raw.iter().map(|&m| (kernel.ratio(0, m) - 1.0) / scale).collect();
            let ks_w = ks_statistic(&w, normal_cdf)?;
            report
                .metric("ks_rescaled_ratio", Some(n), ks_w)
                .check("ks_rescaled_ratio", ks_w, Comparator::AtMost(cfg.ks_max));
        }
    } else {
        report
            .check("ks_stays_large", ks, Comparator::AtLeast(cfg.negative_ks_min))
            .note("negative control: condition C16 fails, so no normal limit is expected");
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LilConfig {
    pub omega: f64,
    pub n_min: u64,
    pub n_max: u64,
    pub grid_ratio: f64,
    pub eps: f64,
    /// Share of paths whose supremum must stay below `1 + eps`.
    pub path_fraction: f64,
    /// Share of paths on which the normalised tail must decrease.
    pub decay_fraction: f64,
}

impl Default for LilConfig {
    fn default() -> Self {
        Self {
            omega: 1e-4,
            n_min: 100,
            n_max: 10_000,
            grid_ratio: 1.1,
            eps: 0.5,
            path_fraction: 0.95,
            decay_fraction: 0.9,
        }
    }
}

/// Geometric grid `n_min, ⌈n_min·ρ⌉, …` capped at `n_max`.
pub(crate) fn geometric_grid(n_min: u64, n_max: u64, ratio: f64) -> Vec<u64> {
    let mut out = vec![n_min];
    loop {
        let last = *out.last().expect("non-empty");
        let next = ((last as f64 * ratio * (1.0 - 1e-12)).ceil() as u64).max(last + 1);
        if next > n_max {
            break;
        }
        out.push(next);
    }
    out
}

/// Fraction of paths whose median `|value|` over the last quarter of the grid
/// is below that over the first quarter.
fn quartile_decrease_fraction(rows: &[Vec<f64>]) -> f64 {
    let k = rows[0].len();
    let q = (k / 4).max(1);
    let hits = rows
        .iter()
        .filter(|r| {
            let mut first: Vec<f64> = r[..q].iter().map(|v| v.abs()).collect();
            let mut last: Vec<f64> = r[k - q..].iter().map(|v| v.abs()).collect();
            median(&mut last) < median(&mut first)
        })
        .count();
    hits as f64 / rows.len() as f64
}

/// Envelope statistics for `M_N / φ(s²_N)` along a geometric grid of `N`.
pub fn run_lil(
    seq: &CoefficientSeq,
    source: &dyn PointSource,
    cfg: &LilConfig,
) -> Result<VerificationReport> {
    if cfg.n_min == 0 || cfg.n_max <= cfg.n_min || !(cfg.grid_ratio > 1.0) {
        return Err(Error::InvalidParameter("need 1 <= n_min < n_max and grid_ratio > 1".into()));
    }
    let grid = geometric_grid(cfg.n_min, cfg.n_max, cfg.grid_ratio);
    let kernel = TailKernel::new(seq, &grid, cfg.omega)?;
    let factors = (0..grid.len())
        .map(|i| kernel.lil_factor(i))
        .collect::<Result<Vec<_>>>()?;
    let table = kernel_table(&kernel, source)?;

    let mut report = VerificationReport::new("lil", seq.to_string());
    report
        .param("N_grid", &grid)
        .param("source", source.describe())
        .param("eps", cfg.eps)
        .param("path_fraction", cfg.path_fraction)
        .param("decay_fraction", cfg.decay_fraction)
        .param("C16", condition_holds(seq, Condition::C16))
        .param("C17", condition_holds(seq, Condition::C17));
    report.sample_size = table.len() as u64;
    describe_kernel(&mut report, &kernel, cfg.omega);

    let mut sup_plus = Vec::with_capacity(table.len());
    let mut sup_minus = Vec::with_capacity(table.len());
    let mut decay_rows = Vec::with_capacity(table.len());
    let mut slln_rows = Vec::with_capacity(table.len());
    for row in &table {
        let lil: Vec<f64> = row.iter().zip(&factors).map(|(m, f)| m * f).collect();
        sup_plus.push(lil.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        sup_minus.push(lil.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max));
        // M_N / Σ_{n≥N}(cₙ)² and M_N / Σ_{n≥N} cₙ, both from the scaled tail
        decay_rows.push(
            row.iter()
                .enumerate()
                .map(|(i, m)| m / (kernel.square_sum_scaled(i) * kernel.unit(i)))
                .collect::<Vec<f64>>(),
        );
        slln_rows.push(
            row.iter()
                .enumerate()
                .map(|(i, m)| m / (2.0 * kernel.mean_scaled(i)))
                .collect::<Vec<f64>>(),
        );
    }
    let bound = 1.0 + cfg.eps;
    let inside = sup_plus.iter().filter(|&&s| s <= bound).count() as f64 / sup_plus.len() as f64;
    let inside_two = sup_plus
        .iter()
        .zip(&sup_minus)
        .filter(|(&p, &m)| p <= bound && m <= bound)
        .count() as f64
        / sup_plus.len() as f64;
    let exceed = 1.0 - inside;
    let decay = quartile_decrease_fraction(&decay_rows);
    let slln = quartile_decrease_fraction(&slln_rows);
    let mut sorted = sup_plus.clone();
    report
        .metric("sup_median", None, median(&mut sorted))
        .metric("sup_max", None, sorted.last().copied().unwrap_or(f64::NAN))
        .metric("exceedance_fraction", None, exceed)
        .metric("two_sided_inside_fraction", None, inside_two)
        .metric("square_sum_decrease_fraction", None, decay)
        .metric("supplementary_mean_normalised_decrease_fraction", None, slln)
        .check("upper_envelope_fraction", inside, Comparator::AtLeast(cfg.path_fraction))
        .check(
            "square_sum_normalised_tail_decreases",
            decay,
            Comparator::AtLeast(cfg.decay_fraction),
        )
        .note("finite-N envelope evidence only; the limsup constant 1 is not confirmed at this scale")
        .note("supplementary: M_N normalised by the plain tail sum is reported for comparison and is not a check");
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometricConfig {
    pub n: u64,
    pub ks_max: f64,
    pub cdf_tol: f64,
    pub cdf_points: Vec<f64>,
    pub se_mult: f64,
    /// Ratio used for the Cesàro paths; defaults to the main `r`.
    pub cesaro_r: Option<f64>,
    pub cesaro_n: u64,
    pub cesaro_paths: usize,
    pub cesaro_tol: f64,
}

impl Default for GeometricConfig {
    fn default() -> Self {
        Self {
            n: 20,
            ks_max: 0.02,
            cdf_tol: 0.01,
            cdf_points: vec![0.3, 0.75, 1.2],
            se_mult: 4.0,
            cesaro_r: None,
            cesaro_n: 10_000,
            cesaro_paths: 10,
            cesaro_tol: 0.05,
        }
    }
}

const REFERENCE_TAG: u64 = 1;
const CESARO_TAG: u64 = 2;

/// Distributional limit and ergodic averages for `cₙ = rⁿ`.
pub fn run_geometric(r: f64, batch: &SampleBatch, cfg: &GeometricConfig) -> Result<VerificationReport> {
    let seq = CoefficientSeq::geometric(r)?;
    if cfg.n == 0 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    let ns: Vec<u64> = if cfg.n == 1 { vec![1] } else { vec![1, cfg.n] };
    let kernel = TailKernel::new(&seq, &ns, 1e-30)?;
    let at_n = ns.len() - 1;

    let sample_a = kernel_table(&kernel, batch)?;
    let ratios: Vec<f64> = sample_a.iter().map(|row| kernel.ratio(at_n, row[at_n])).collect();
    let reference_batch = batch.derived(REFERENCE_TAG, batch.count);
    let sample_b = kernel_table(&kernel, &reference_batch)?;
    let reference: Vec<f64> = sample_b.iter().map(|row| kernel.ratio(0, row[0])).collect();

    let mut report = VerificationReport::new("geometric", seq.to_string());
    report
        .param("N", cfg.n)
        .param("source", batch.describe())
        .param("reference_source", reference_batch.describe())
        .param("ks_max", cfg.ks_max)
        .param("se_mult", cfg.se_mult);
    report.seed = Some(batch.seed);
    report.sample_size = batch.count as u64;
    describe_kernel(&mut report, &kernel, 1e-30);

    let ks = ks_two_sample(&ratios, &reference)?;
    let (mean, se) = mean_and_se(&ratios);
    report
        .metric("ks_two_sample", Some(cfg.n), ks)
        .metric("limit_mean", Some(cfg.n), mean)
        .check("ks_two_sample", ks, Comparator::AtMost(cfg.ks_max))
        .check("limit_mean_is_one", mean, Comparator::Within { target: 1.0, tol: cfg.se_mult * se });

    if r == 0.25 {
        // f_{1/4}(x) = x(1 − x) and E[f_{1/4}] = 1/6
        let closed: Vec<f64> = reference_batch
            .points()
            .map(|p| {
                let x = p.to_f64();
                6.0 * x * (1.0 - x)
            })
            .collect();
        let gap = reference
            .iter()
            .zip(&closed)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let ks_closed = ks_two_sample(&ratios, &closed)?;
        report
            .metric("reference_closed_form_gap", None, gap)
            .metric("ks_two_sample_closed_form", Some(cfg.n), ks_closed)
            .check("ks_two_sample_closed_form", ks_closed, Comparator::AtMost(cfg.ks_max));
        let n_f = ratios.len() as f64;
        for &u in &cfg.cdf_points {
            let emp = ratios.iter().filter(|&&v| v <= u).count() as f64 / n_f;
            let gap = (emp - quarter_limit_cdf(u)?).abs();
            report.metric("cdf_gap", None, gap).check(
                format!("cdf_gap_u{u}"),
                gap,
                Comparator::AtMost(cfg.cdf_tol),
            );
        }
    }

    if cfg.cesaro_paths > 0 {
        let rc = cfg.cesaro_r.unwrap_or(r);
        let seq_c = CoefficientSeq::geometric(rc)?;
        let grid: Vec<u64> = (1..=cfg.cesaro_n).collect();
        let kc = TailKernel::new(&seq_c, &grid, 1e-30)?;
        let paths = batch.derived(CESARO_TAG, cfg.cesaro_paths);
        let rows = kernel_table(&kc, &paths)?;
        report.param("cesaro_r", rc).param("cesaro_N", cfg.cesaro_n);
        let mut worst: f64 = 0.0;
        for (p, row) in rows.iter().enumerate() {
            let avg = row
                .iter()
                .enumerate()
                .map(|(i, &m)| kc.ratio(i, m))
                .sum::<f64>()
                / row.len() as f64;
            worst = worst.max((avg - 1.0).abs());
            report.check(
                format!("cesaro_path_{p}"),
                avg,
                Comparator::Within { target: 1.0, tol: cfg.cesaro_tol },
            );
        }
        report.metric("cesaro_max_deviation", None, worst);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentitiesConfig {
    pub points: usize,
    pub max_n: usize,
    pub bits: usize,
    pub selfsim_pairs: usize,
    pub selfsim_max_n: u64,
    pub selfsim_rs: Vec<f64>,
    pub selfsim_gap: f64,
    pub tol: f64,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        Self {
            points: 10_000,
            max_n: 40,
            bits: 128,
            selfsim_pairs: 1000,
            selfsim_max_n: 30,
            selfsim_rs: vec![0.7, 0.25, -0.5],
            selfsim_gap: 1e-10,
            tol: 1e-13,
        }
    }
}

/// Exact identities: the two `φ*` routes, self-similarity, and the closed
/// forms at dyadic points and at `2/3`.
pub fn run_identities(seed: u64, cfg: &IdentitiesConfig) -> Result<VerificationReport> {
    let batch = SampleBatch::new(seed, cfg.points, cfg.bits)?;
    if cfg.max_n + 3 > cfg.bits {
        return Err(Error::InvalidParameter("bits must exceed max_n + 2".into()));
    }
    let mut report = VerificationReport::new("identities", "various");
    report.seed = Some(seed);
    report.sample_size = cfg.points as u64;
    report
        .param("bits", cfg.bits)
        .param("max_n", cfg.max_n)
        .param("selfsim_pairs", cfg.selfsim_pairs)
        .param("selfsim_rs", &cfg.selfsim_rs);

    // two routes for φ*: worst gap in units of 2^{-(L-n-2)}, plus float routes
    let l = cfg.bits;
    let route = (0..cfg.points)
        .into_par_iter()
        .map(|i| -> Result<(f64, usize)> {
            let x = batch.point_with_bits(i, l);
            let mut worst: f64 = 0.0;
            let mut float_misses = 0;
            for n in 1..=cfg.max_n {
                let a = phi_star_shift_exact(&x, n)?;
                let b = phi_star_rademacher_exact(&x, n)?;
                let gap = (&a - &b).abs();
                let allowed = Dyadic::pow2_neg((l - n - 2) as u32);
                let scaled = gap.to_f64() / allowed.to_f64();
                worst = worst.max(scaled);
                if n + crate::point_eval::GUARD <= l {
                    let p = phi_star(&x, n)?;
                    let q = phi_star_via_rademacher(&x, n)?;
                    if (p.value - q.value).abs() > p.abs_error + q.abs_error {
                        float_misses += 1;
                    }
                }
            }
            Ok((worst, float_misses))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = route.iter().map(|r| r.0).fold(0.0, f64::max);
    let misses: usize = route.iter().map(|r| r.1).sum();
    report
        .metric("route_gap_over_allowed", None, worst)
        .check("route_gap_within_bound", worst, Comparator::AtMost(1.0))
        .check("float_routes_within_error", misses as f64, Comparator::AtMost(0.0));

    // self-similarity
    let pairs = batch.derived(REFERENCE_TAG, cfg.selfsim_pairs.max(1));
    for &r in &cfg.selfsim_rs {
        let outcome = (0..cfg.selfsim_pairs)
            .into_par_iter()
            .map(|i| -> Result<(f64, bool)> {
                let x = pairs.point_with_bits(i, 256);
                let n = 1 + (i as u64 % cfg.selfsim_max_n);
                let s = selfsim_check(r, &x, n, cfg.tol)?;
                Ok((s.gap, s.within_certified_error()))
            })
            .collect::<Result<Vec<_>>>()?;
        let gap = outcome.iter().map(|o| o.0).fold(0.0, f64::max);
        let outside = outcome.iter().filter(|o| !o.1).count();
        report
            .metric(&format!("selfsim_max_gap_r{r}"), None, gap)
            .check(format!("selfsim_gap_r{r}"), gap, Comparator::AtMost(cfg.selfsim_gap))
            .check(
                format!("selfsim_certified_r{r}"),
                outside as f64,
                Comparator::AtMost(0.0),
            );
    }

    // dyadic closed forms: φ⁽ⁿ⁾ = 0 and f − f_N − m_N = −m_N for n, N > m
    let takagi = CoefficientSeq::takagi();
    let mut dyadic_failures = 0u32;
    for m in 1..=10u32 {
        for k in (1..(1u64 << m)).step_by(2) {
            let x = BitPoint::dyadic(k, m)?;
            for n in (m as u64 + 1)..=(m as u64 + 5) {
                if tent_iter(&x, n as usize)?.value != 0.0 || tent_iter(&x, n as usize)?.abs_error != 0.0 {
                    dyadic_failures += 1;
                }
                let mean = 0.5 * takagi.tail_sum(n, 1)?.value;
                if tail_m(&takagi, &x, n, cfg.tol)?.value != -mean
                    || stat_ratio(&takagi, &x, n, cfg.tol)?.value != 0.0
                {
                    dyadic_failures += 1;
                }
            }
        }
    }
    report.check("dyadic_closed_forms", dyadic_failures as f64, Comparator::AtMost(0.0));

    // x = 2/3 is fixed by the tent map, so the ratio statistic is 4/3
    let two_thirds = BitPoint::parse_decimal("2/3", 4096)?;
    let mut fixed_failures = 0u32;
    for seq in [
        takagi.clone(),
        CoefficientSeq::geometric(0.7)?,
        CoefficientSeq::geometric(0.25)?,
        CoefficientSeq::stretched_exp(1.0, 0.5)?,
    ] {
        for n in [1u64, 2, 10, 50] {
            let v = stat_ratio(&seq, &two_thirds, n, cfg.tol)?;
            if !v.contains(4.0 / 3.0) {
                fixed_failures += 1;
            }
        }
    }
    for n in 1..=64 {
        if !tent_iter(&two_thirds, n)?.contains(2.0 / 3.0) {
            fixed_failures += 1;
        }
    }
    report.check("two_thirds_closed_forms", fixed_failures as f64, Comparator::AtMost(0.0));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MomentsConfig {
    pub samples: usize,
    pub cov_samples: usize,
    pub lags: Vec<u64>,
    pub se_mult: f64,
    pub azuma_levels: Vec<f64>,
    pub uniform_ks_max: f64,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            cov_samples: 1_000_000,
            lags: vec![1, 2, 3],
            se_mult: 4.0,
            azuma_levels: vec![0.1, 0.2, 0.4],
            uniform_ks_max: 0.01,
        }
    }
}

/// Monte Carlo moments of `φ*`, the squared covariances, and Takagi tail checks.
pub fn run_moments(seed: u64, cfg: &MomentsConfig) -> Result<VerificationReport> {
    let batch = SampleBatch::new(seed, cfg.samples, 128)?;
    let mut report = VerificationReport::new("moments", "takagi");
    report.seed = Some(seed);
    report.sample_size = cfg.samples as u64;
    report
        .param("cov_samples", cfg.cov_samples)
        .param("lags", &cfg.lags)
        .param("se_mult", cfg.se_mult);
    let k = cfg.se_mult;
    let theory = phi_star_moments();

    let points: Vec<BitPoint> = batch.points().collect();
    let xs: Vec<f64> = points.iter().map(|p| p.to_f64()).collect();
    let (mx, sx) = mean_and_se(&xs);
    let ks_u = ks_statistic(&xs, uniform_cdf)?;
    report
        .metric("uniform_mean", None, mx)
        .metric("uniform_ks", None, ks_u)
        .check("uniform_mean", mx, Comparator::Within { target: 0.5, tol: k * sx })
        .check("uniform_ks", ks_u, Comparator::AtMost(cfg.uniform_ks_max));

    let phi: Vec<f64> = points.iter().map(|p| phi_star(p, 1).map(|c| c.value)).collect::<Result<_>>()?;
    let sq: Vec<f64> = phi.iter().map(|v| v * v).collect();
    let qu: Vec<f64> = phi.iter().map(|v| v.powi(4)).collect();
    let (m2, s2) = mean_and_se(&sq);
    let (m4, s4) = mean_and_se(&qu);
    report
        .metric("phi_star_second", None, m2)
        .metric("phi_star_fourth", None, m4)
        .check("phi_star_second", m2, Comparator::Within { target: theory.second, tol: k * s2 })
        .check("phi_star_fourth", m4, Comparator::Within { target: theory.fourth, tol: k * s4 });

    // squared-term covariances at lag d
    let max_lag = cfg.lags.iter().copied().max().unwrap_or(1) as usize;
    let big = batch.derived(REFERENCE_TAG, cfg.cov_samples);
    let pairs: Vec<Vec<f64>> = (0..cfg.cov_samples)
        .into_par_iter()
        .map(|i| {
            let p = big.point_with_bits(i, 128);
            (1..=1 + max_lag)
                .map(|n| phi_star(&p, n).map(|c| c.value * c.value))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let a: Vec<f64> = pairs.iter().map(|r| r[0]).collect();
    let (ma, _) = mean_and_se(&a);
    for &d in &cfg.lags {
        let b: Vec<f64> = pairs.iter().map(|r| r[d as usize]).collect();
        let (mb, _) = mean_and_se(&b);
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).collect();
        let (cov, se) = mean_and_se(&prod);
        let target = crate::moments::cov_sq(1, 1 + d)?;
        report.metric("cov_sq", Some(d), cov).check(
            format!("cov_sq_lag{d}"),
            cov,
            Comparator::Within { target, tol: k * se },
        );
    }

    // Takagi tail at N = 1: variance, Azuma bound, and Var(Q²/s²)
    let takagi = CoefficientSeq::takagi();
    let stats = tail_stats(&takagi, 1)?;
    let kernel = TailKernel::new(&takagi, &[1], 1e-30)?;
    let m1: Vec<f64> = points
        .iter()
        .map(|p| kernel.eval(p)[0] * stats.ln_unit.exp())
        .collect();
    let (var_m, var_se) = variance_and_se(&m1);
    report.metric("tail_variance", Some(1), var_m).check(
        "tail_variance_N1",
        var_m,
        Comparator::Within { target: stats.s2_n, tol: k * var_se },
    );
    for &c in &cfg.azuma_levels {
        let freq = m1.iter().filter(|v| v.abs() > c).count() as f64 / m1.len() as f64;
        let bound = azuma_tail_bound(&takagi, 1, c)?;
        report.metric("azuma_frequency", None, freq).check(
            format!("azuma_c{c}"),
            freq,
            Comparator::AtMost(bound),
        );
    }
    let q2: Vec<f64> = points
        .iter()
        .map(|p| {
            (1..=64)
                .map(|n| {
                    let c = takagi.term(n as u64);
                    phi_star(p, n).map(|v| (c * v.value).powi(2))
                })
                .sum::<Result<f64>>()
                .map(|q| q / stats.s2_n)
        })
        .collect::<Result<_>>()?;
    let (vq, vq_se) = variance_and_se(&q2);
    let exact = var_q2(&takagi, 1)?;
    report
        .metric("var_q2", Some(1), vq)
        .metric("var_q2_exact", Some(1), exact.exact)
        .check("var_q2_N1", vq, Comparator::Within { target: exact.exact, tol: k * vq_se });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppendixConfig {
    /// `(K, beta)` pairs with `0 < beta < 1`.
    pub params: Vec<(f64, f64)>,
    pub a_grid: Vec<f64>,
    pub n_grid: Vec<u64>,
    pub closed_form_tol: f64,
    pub square_ratio_n: Vec<u64>,
    pub powers: Vec<u32>,
}

impl Default for AppendixConfig {
    fn default() -> Self {
        Self {
            params: vec![(1.0, 0.5), (2.0, 1.0 / 3.0), (0.5, 0.8)],
            a_grid: vec![4.0, 16.0, 64.0],
            n_grid: vec![16, 64, 256],
            closed_form_tol: 1e-10,
            square_ratio_n: vec![16, 64, 256],
            powers: vec![1, 2],
        }
    }
}

/// Integral and tail-sum brackets for `e^{-Kxᵝ}`.
pub fn run_appendix(cfg: &AppendixConfig) -> Result<VerificationReport> {
    let mut report = VerificationReport::new("appendix", "stretchexp");
    report
        .param("params", &cfg.params)
        .param("a_grid", &cfg.a_grid)
        .param("n_grid", &cfg.n_grid)
        .param("square_ratio_N", &cfg.square_ratio_n);
    for &(k, beta) in &cfg.params {
        let tag = format!("K{k}_beta{beta:.6}");
        let (c1, c2) = integral_bracket_constants(k, beta)?;
        report.metric(&format!("C1_{tag}"), None, c1).metric(&format!("C2_{tag}"), None, c2);
        for &a in &cfg.a_grid {
            let b = integral_bracket_normalised(k, beta, a)?;
            report.check(
                format!("integral_bracket_{tag}_a{a}"),
                b.target,
                Comparator::Between { lo: b.lower, hi: b.upper },
            );
            if beta == 0.5 {
                // ∫_a^∞ e^{-K√x} dx = 2(K√a + 1) e^{-K√a} / K²
                let s = a.sqrt();
                let exact = 2.0 * (k * s + 1.0) * (-k * s).exp() / (k * k);
                let rel = (stretch_integral(k, beta, a)? / exact - 1.0).abs();
                report.check(
                    format!("closed_form_{tag}_a{a}"),
                    rel,
                    Comparator::AtMost(cfg.closed_form_tol),
                );
            }
        }
        for &n in &cfg.n_grid {
            let b = tailsum_bracket_normalised(k, beta, n)?;
            report.metric(&format!("tailsum_normalised_{tag}"), Some(n), b.target).check(
                format!("tailsum_bracket_{tag}_N{n}"),
                b.target,
                Comparator::Between { lo: b.lower, hi: b.upper },
            );
            let seq = CoefficientSeq::stretched_exp(k, beta)?;
            for &p in &cfg.powers {
                let pk = p as f64 * k;
                let (lo1, hi1) = integral_bracket_constants(pk, beta)?;
                let (lo2, hi2) = integral_bracket_constants(2.0 * pk, beta)?;
                let tp = seq.tail_sum_scaled(n, p)?.value;
                let t2p = seq.tail_sum_scaled(n, 2 * p)?.value;
                let v = t2p / (tp * tp) * (n as f64).powf(1.0 - beta);
                report.check(
                    format!("power_ratio_{tag}_p{p}_N{n}"),
                    v,
                    Comparator::Between {
                        lo: lo2 / (1.0 + hi1).powi(2),
                        hi: (1.0 + hi2) / (lo1 * lo1),
                    },
                );
            }
        }
    }
    for &n in &cfg.square_ratio_n {
        let e = square_ratio_lower(1.0, 1.0, n)?;
        report
            .metric("square_ratio", Some(n), e.ratio)
            .check(format!("square_ratio_floor_N{n}"), e.ratio, Comparator::AtLeast(e.floor));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_geometric_and_capped() {
        let g = geometric_grid(100, 10_000, 1.1);
        assert_eq!(g[0], 100);
        assert_eq!(g[1], 110);
        assert!(*g.last().unwrap() <= 10_000);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn small_clt_run_is_deterministic() {
        let seq = CoefficientSeq::power_law(2.0).unwrap();
        let batch = SampleBatch::new(3, 200, 64).unwrap();
        let a = run_clt(&seq, 50, &batch, &CltConfig::default()).unwrap();
        let b = run_clt(&seq, 50, &batch, &CltConfig::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn dyadic_lln_control() {
        let seq = CoefficientSeq::takagi();
        let grid = super::super::sample::DyadicGrid { m: 8 };
        let cfg = LlnConfig {
            dyadic_control: true,
            ..LlnConfig::default()
        };
        let r = run_lln(&seq, &[30], &grid, &cfg).unwrap();
        assert!(r.verdict, "{:?}", r.failed_checks().collect::<Vec<_>>());
    }

    #[test]
    fn appendix_defaults_pass() {
        let r = run_appendix(&AppendixConfig::default()).unwrap();
        assert!(r.verdict, "{:?}", r.failed_checks().collect::<Vec<_>>());
    }
}
