use mixpois::gamma_exact::GammaMixture;
use mixpois::numerics::log_binomial;
use mixpois::output::fmt_sig;
use mixpois::sampling::Accumulator;
use mixpois::RateDistribution;
use proptest::prelude::*;

fn any_law() -> impl Strategy<Value = RateDistribution> {
    prop_oneof![
        (0.2..5.0f64).prop_map(|l| RateDistribution::exponential(l).unwrap()),
        (0.3..6.0f64, 0.2..5.0f64).prop_map(|(b, l)| RateDistribution::gamma(b, l).unwrap()),
        (0.1..8.0f64).prop_map(|m| RateDistribution::poisson(m).unwrap()),
        (0.05..0.95f64, 0.1..2.0f64, 0.5..6.0f64)
            .prop_map(|(p, lo, gap)| RateDistribution::two_point(p, lo, lo + gap).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rate_function_is_convex_and_vanishes_at_mean(dist in any_law(), u in 0.05..0.95f64, v in 0.05..0.95f64) {
        let lo = dist.support_inf().max(1e-3);
        let hi = dist.support_sup().min(4.0 * dist.mean() + 10.0);
        let x = lo + u * (hi - lo);
        let y = lo + v * (hi - lo);
        let i = |z: f64| dist.rate_function(z).unwrap().value;
        let mid = i(0.5 * (x + y));
        prop_assert!(i(x) >= -1e-12 && i(y) >= -1e-12);
        prop_assert!(mid <= 0.5 * (i(x) + i(y)) + 1e-9 * (1.0 + i(x) + i(y)));
        prop_assert!(i(dist.mean()).abs() < 1e-12);
    }

    #[test]
    fn closed_and_numeric_rate_functions_agree(dist in any_law(), u in 0.05..0.95f64) {
        let lo = dist.support_inf().max(1e-2);
        let hi = dist.support_sup().min(4.0 * dist.mean() + 10.0);
        let a = lo + u * (hi - lo);
        let closed = dist.rate_function(a).unwrap();
        let numeric = dist.rate_function_numeric(a).unwrap();
        prop_assert!((closed.value - numeric.value).abs() <= 1e-8 * (1.0 + closed.value));
        prop_assert!((closed.theta_star - numeric.theta_star).abs() <= 1e-6 * (1.0 + closed.theta_star.abs()));
    }

    #[test]
    fn tilt_moves_the_mean(dist in any_law(), u in 0.05..0.95f64) {
        let hi = dist.support_sup().min(4.0 * dist.mean() + 10.0);
        let a = dist.mean() + u * (hi - dist.mean());
        let rf = dist.rate_function(a).unwrap();
        let tilted = dist.twisted(rf.theta_star).unwrap();
        prop_assert!((tilted.mean() - a).abs() <= 1e-8 * a);
    }

    #[test]
    fn log_binomial_is_symmetric(n in 0u32..5000, frac in 0.0..1.0f64) {
        let k = (frac * n as f64).floor();
        let n = n as f64;
        let l = log_binomial(n, k).unwrap();
        let r = log_binomial(n, n - k).unwrap();
        prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
    }

    #[test]
    fn merged_accumulators_match_one_pass(xs in prop::collection::vec(-1e3..1e3f64, 2..200), cut in 0.0..1.0f64) {
        let split = (cut * xs.len() as f64) as usize;
        let mut whole = Accumulator::default();
        xs.iter().for_each(|&x| whole.push(x));
        let (mut left, mut right) = (Accumulator::default(), Accumulator::default());
        xs[..split].iter().for_each(|&x| left.push(x));
        xs[split..].iter().for_each(|&x| right.push(x));
        left.merge(&right);
        prop_assert_eq!(left.count, whole.count);
        prop_assert_eq!(left.hits, whole.hits);
        prop_assert!((left.mean - whole.mean).abs() <= 1e-9 * (1.0 + whole.mean.abs()));
        prop_assert!((left.m2 - whole.m2).abs() <= 1e-9 * (1.0 + whole.m2));
    }

    #[test]
    fn tail_differences_are_point_masses(
        n in 1u32..60, alpha in 0.2..3.0f64, lambda in 0.5..4.0f64, beta in 0.5..3.0f64, k in 0u32..150,
    ) {
        let n = n as f64;
        let g = GammaMixture::new(beta, lambda, alpha, n).unwrap();
        let a = k as f64 / n;
        let b = (k + 1) as f64 / n;
        let here = g.tail_exact(a).unwrap();
        let next = g.tail_exact(b).unwrap();
        let p = g.p_exact(a).unwrap();
        prop_assert!((here - next - p).abs() <= 1e-11 * here.max(1e-300) + 1e-300);
    }

    #[test]
    fn formatted_numbers_round_trip(x in prop::num::f64::NORMAL) {
        let back: f64 = fmt_sig(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 1e-11 * x.abs());
    }

    #[test]
    fn distribution_labels_round_trip(dist in any_law()) {
        let back: RateDistribution = dist.to_string().parse().unwrap();
        prop_assert_eq!(back.kind(), dist.kind());
    }
}
