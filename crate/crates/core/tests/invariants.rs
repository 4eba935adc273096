use proptest::prelude::*;
use takagi::moments::cov_sq;
use takagi::montecarlo::{ks_statistic, ks_two_sample, uniform_cdf, Accumulator};
use takagi::point_eval::{
    eval_partial, phi_star, phi_star_rademacher_exact, phi_star_shift_exact, tent, tent_iter,
};
use takagi::{BitPoint, CoefficientSeq, Dyadic, SampleBatch};

fn seq_strategy() -> impl Strategy<Value = CoefficientSeq> {
    prop_oneof![
        (1.05f64..4.0).prop_map(|a| CoefficientSeq::power_law(a).unwrap()),
        (0.2f64..3.0, 0.1f64..1.0).prop_map(|(k, b)| CoefficientSeq::stretched_exp(k, b).unwrap()),
        (-0.95f64..0.95)
            .prop_filter("non-zero ratio", |r| r.abs() > 1e-3)
            .prop_map(|r| CoefficientSeq::geometric(r).unwrap()),
        Just(CoefficientSeq::dyadic_over_sqrt()),
    ]
}

fn point_strategy(len: usize) -> impl Strategy<Value = BitPoint> {
    (prop::collection::vec(any::<bool>(), len), any::<bool>())
        .prop_map(|(bits, exact)| BitPoint::from_bits(&bits, exact).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tail_sums_telescope(seq in seq_strategy(), n in 1u64..400, p in 1u32..4) {
        let a = seq.tail_sum_scaled(n, p).unwrap();
        let b = seq.tail_sum_scaled(n + 1, p).unwrap();
        // T(N) − T(N+1) = c_N^p, all in units of s_N^p
        let step = (b.ln_unit - a.ln_unit).exp();
        let lead = seq.scaled_term(n, n).powi(p as i32);
        let gap = a.value - b.value * step;
        let tol = a.error_bound + b.error_bound * step.abs() + 1e-13 * a.value.abs();
        prop_assert!((gap - lead).abs() <= tol, "gap {gap} lead {lead} tol {tol}");
    }

    #[test]
    fn tails_of_nonnegative_sequences_decrease(seq in seq_strategy(), n in 1u64..2000) {
        prop_assume!(seq.is_nonnegative());
        let a = seq.tail_sum(n, 2).unwrap().value;
        let b = seq.tail_sum(n + 1, 2).unwrap().value;
        prop_assert!(b <= a);
    }

    #[test]
    fn sequence_strings_round_trip(seq in seq_strategy()) {
        let back: CoefficientSeq = seq.to_string().parse().unwrap();
        prop_assert_eq!(back, seq);
    }

    #[test]
    fn exact_routes_differ_by_truncation_only(x in point_strategy(96), n in 1usize..90) {
        let a = phi_star_shift_exact(&x, n).unwrap();
        let b = phi_star_rademacher_exact(&x, n).unwrap();
        let gap = (&a - &b).abs();
        if x.is_exact() {
            prop_assert!(gap.is_zero());
        } else {
            prop_assert_eq!(gap, Dyadic::pow2_neg((x.len() - n + 1) as u32));
        }
    }

    #[test]
    fn centred_iterates_are_bounded(x in point_strategy(160), n in 1usize..100) {
        let v = phi_star(&x, n).unwrap();
        prop_assert!(v.value.abs() <= 0.5 + v.abs_error);
    }

    #[test]
    fn tent_iterates_compose(x in point_strategy(200), n in 1usize..60) {
        let a = tent_iter(&x, n).unwrap();
        let b = tent_iter(&x, n + 1).unwrap();
        let composed = tent(a.value).unwrap();
        // φ has Lipschitz constant 2
        prop_assert!((composed - b.value).abs() <= 2.0 * a.abs_error + b.abs_error + 4.0 * f64::EPSILON);
    }

    #[test]
    fn partial_sums_add_one_term(seq in seq_strategy(), x in point_strategy(256), n in 1u64..60) {
        let a = eval_partial(&seq, &x, n).unwrap();
        let b = eval_partial(&seq, &x, n + 1).unwrap();
        let phi = tent_iter(&x, n as usize).unwrap();
        let term = seq.term(n) * phi.value;
        let tol = a.abs_error + b.abs_error + seq.term(n).abs() * phi.abs_error;
        prop_assert!((b.value - a.value - term).abs() <= tol);
    }

    #[test]
    fn squared_covariance_is_shift_invariant(i in 1u64..40, d in 1u64..30, k in 0u64..20) {
        let c = cov_sq(i, i + d).unwrap();
        prop_assert_eq!(c, cov_sq(i + k, i + k + d).unwrap());
        prop_assert!((c - 0.25f64.powi(d as i32) / 180.0).abs() <= 1e-15 * c);
    }

    #[test]
    fn bit_points_round_trip_through_text(x in point_strategy(70)) {
        let back: BitPoint = x.to_string().parse().unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn longer_points_extend_shorter_ones(seed in any::<u64>(), i in 0usize..50, extra in 1usize..200) {
        let batch = SampleBatch::new(seed, 50, 64).unwrap();
        let short = batch.point_with_bits(i, 64);
        let long = batch.point_with_bits(i, 64 + extra);
        for n in 1..=64 {
            prop_assert_eq!(short.bit(n).unwrap(), long.bit(n).unwrap());
        }
    }

    #[test]
    fn accumulator_merge_is_order_free(xs in prop::collection::vec(-1e3f64..1e3, 2..200), cut in 0usize..200) {
        let cut = cut.min(xs.len());
        let whole = Accumulator::from_slice(&xs);
        let mut left = Accumulator::from_slice(&xs[..cut]);
        left.merge(&Accumulator::from_slice(&xs[cut..]));
        let mut right = Accumulator::from_slice(&xs[cut..]);
        right.merge(&Accumulator::from_slice(&xs[..cut]));
        prop_assert_eq!(left.count, whole.count);
        prop_assert_eq!(left.min, right.min);
        prop_assert_eq!(left.max, whole.max);
        prop_assert!((left.mean() - whole.mean()).abs() <= 1e-9);
        prop_assert!((left.variance() - right.variance()).abs() <= 1e-6 * (1.0 + whole.variance()));
    }

    #[test]
    fn ks_distances_are_permutation_free(mut xs in prop::collection::vec(0f64..1.0, 1..100), ys in prop::collection::vec(0f64..1.0, 1..100)) {
        let d = ks_statistic(&xs, uniform_cdf).unwrap();
        let e = ks_two_sample(&xs, &ys).unwrap();
        prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&e));
        xs.reverse();
        prop_assert_eq!(ks_statistic(&xs, uniform_cdf).unwrap(), d);
        prop_assert_eq!(ks_two_sample(&ys, &xs).unwrap(), e);
    }
}
