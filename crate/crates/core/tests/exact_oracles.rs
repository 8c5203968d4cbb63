//! Library results against independent exact or brute-force computations.

use approx::assert_relative_eq;
use mixpois::gamma_exact::GammaMixture;
use mixpois::numerics::{ln_gamma, log_binomial};
use mixpois::poisson_ldp::{compound_z, poisson_rate, psi_exact};
use mixpois::queue::{log_asym_q, omegas, queue_approx, theta_star_queue};
use mixpois::tail_asymptotics::approx_slow_case1;
use mixpois::{RateDistribution, ServiceTime};
use num_bigint::BigUint;

fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 60 {
        return (u64::try_from(x).unwrap() as f64).ln();
    }
    let shift = bits - 60;
    let top = u64::try_from(&(x >> shift)).unwrap() as f64;
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::from(1u32), |acc, i| acc * i)
}

fn binomial(n: u64, k: u64) -> BigUint {
    factorial(n) / (factorial(k) * factorial(n - k))
}

#[test]
fn log_factorials_match_big_integers() {
    for n in [1u64, 2, 5, 10, 17, 50, 120, 333, 1000] {
        let exact = ln_big(&factorial(n - 1));
        assert_relative_eq!(
            ln_gamma(n as f64).unwrap(),
            exact,
            epsilon = 1e-12,
            max_relative = 1e-13
        );
    }
}

#[test]
fn log_binomials_match_big_integers() {
    for &(n, k) in &[
        (10u64, 3u64),
        (52, 5),
        (200, 100),
        (1000, 1),
        (1000, 999),
        (777, 300),
    ] {
        let exact = ln_big(&binomial(n, k));
        assert_relative_eq!(
            log_binomial(n as f64, k as f64).unwrap(),
            exact,
            max_relative = 1e-12
        );
    }
}

#[test]
fn negative_binomial_with_integer_shape_matches_exact_form() {
    // N = 9, α = 1/2: shape r = 3 and Poisson scale t = 3.
    let (lambda, r, t) = (2.0, 3u64, 3.0);
    let g = GammaMixture::new(1.0, lambda, 0.5, 9.0).unwrap();
    for k in [0u64, 1, 4, 9, 27, 90] {
        let exact = ln_big(&binomial(k + r - 1, k))
            + k as f64 * (t / (lambda + t)).ln()
            + r as f64 * (lambda / (lambda + t)).ln();
        assert_relative_eq!(
            g.ln_pmf_count(k as f64).unwrap(),
            exact,
            epsilon = 1e-12,
            max_relative = 1e-12
        );
    }
}

#[test]
fn poisson_tail_matches_direct_summation() {
    for &(n, a, x) in &[
        (10.0, 2.0, 1.0),
        (40.0, 1.5, 1.0),
        (200.0, 0.5, 1.0),
        (7.0, 3.0, 0.4),
    ] {
        let mean: f64 = n * x;
        let k = (n * a).ceil() as u64;
        let ln_fact = |j: u64| (1..=j).map(|i| (i as f64).ln()).sum::<f64>();
        let tail: f64 = (k..k + 2000)
            .map(|j| (j as f64 * mean.ln() - mean - ln_fact(j)).exp())
            .sum();
        assert_relative_eq!(psi_exact(n, a, x).unwrap(), tail, max_relative = 1e-11);
    }
}

#[test]
fn compound_count_with_constant_rate_is_poisson() {
    let dist = RateDistribution::deterministic(1.3).unwrap();
    for a in [1.5, 2.0, 4.0] {
        let z = compound_z(&dist, a).unwrap();
        let p = poisson_rate(a, 1.3).unwrap();
        assert_relative_eq!(z.rate, p.rate, max_relative = 1e-12);
        assert_relative_eq!(z.theta_star, p.theta_star, max_relative = 1e-12);
    }
}

#[test]
fn slow_series_without_corrections_matches_general_formula() {
    let dist = RateDistribution::exponential(2.5).unwrap();
    let n = 160.0;
    let g = GammaMixture::new(1.0, 2.5, 0.2, n).unwrap();
    let series = g.p_asym_slow(1.0).unwrap();
    assert_eq!(series.coefficients.len(), 1);
    let general = approx_slow_case1(&dist, 0.2, 1.0, n).unwrap().point;
    assert!((series.value.value / general.value - 1.0).abs() < 0.01);
}

#[test]
fn intermediate_formula_close_to_exact_at_moderate_n() {
    let g = GammaMixture::new(1.0, 2.5, 1.0, 100.0).unwrap();
    let ratio =
        (g.p_asym_intermediate(1.0).unwrap().value.log_value - g.ln_p_exact(1.0).unwrap()).exp();
    assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
}

#[test]
fn truncation_jump_adds_the_boundary_term() {
    // 1/(α - 1) crosses 2 at α = 3/2, where the ξ_2 term has exponent 0.
    let n = 1e6;
    let below = GammaMixture::new(1.0, 2.5, 1.5 - 1e-9, n)
        .unwrap()
        .p_asym_fast(1.0)
        .unwrap();
    let above = GammaMixture::new(1.0, 2.5, 1.5 + 1e-9, n)
        .unwrap()
        .p_asym_fast(1.0)
        .unwrap();
    assert_eq!(below.coefficients.len(), 3);
    assert_eq!(above.coefficients.len(), 2);
    assert!(below.near_truncation_jump && above.near_truncation_jump);
    let jump = below.value.log_value - above.value.log_value;
    assert!((jump - below.coefficients[2]).abs() < 1e-3, "jump {jump}");
    assert!(below.coefficients[2].abs() > 1e-2);
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let h = (hi - lo) / panels as f64;
    let mut s = f(lo) + f(hi);
    for j in 1..panels {
        s += if j % 2 == 1 { 4.0 } else { 2.0 } * f(lo + h * j as f64);
    }
    s * h / 3.0
}

/// Test-local cumulant generating functions.
fn cgf(dist: &str, u: f64) -> f64 {
    match dist {
        "pois2" => 2.0 * u.exp_m1(),
        "exp2" => -(-u / 2.0).ln_1p(),
        "twopoint" => (0.75 * u.exp() + 0.25 * (5.0 * u).exp()).ln(),
        _ => unreachable!(),
    }
}

fn law(dist: &str) -> RateDistribution {
    match dist {
        "pois2" => RateDistribution::poisson(2.0).unwrap(),
        "exp2" => RateDistribution::exponential(2.0).unwrap(),
        "twopoint" => RateDistribution::two_point(0.75, 1.0, 5.0).unwrap(),
        _ => unreachable!(),
    }
}

/// `K(ϑ) = ∫_0^1 Λ(F̄(x)(e^ϑ - 1)) dx`.
fn k_of(dist: &str, svc: &ServiceTime, theta: f64) -> f64 {
    simpson(|x| cgf(dist, svc.sf(x) * theta.exp_m1()), 0.0, 1.0, 4000)
}

#[test]
fn queue_tilt_and_curvature_match_finite_differences() {
    for dist in ["pois2", "exp2", "twopoint"] {
        for svc in [
            ServiceTime::exponential(0.5).unwrap(),
            ServiceTime::pareto2(1.0).unwrap(),
        ] {
            let threshold = law(dist).mean() * svc.sf_integral(0.0, 1.0);
            let a = 1.3 * threshold;
            let q = queue_approx(&law(dist), &svc, 100.0, a).unwrap();
            let t = q.theta_star;
            let h = 1e-4;
            let (km, k0, kp) = (
                k_of(dist, &svc, t - h),
                k_of(dist, &svc, t),
                k_of(dist, &svc, t + h),
            );
            assert_relative_eq!(q.integral_cgf, k0, max_relative = 1e-10);
            assert_relative_eq!((kp - km) / (2.0 * h), a, max_relative = 1e-7);
            assert_relative_eq!(
                (kp - 2.0 * k0 + km) / (h * h),
                q.sigma2,
                max_relative = 1e-5
            );
        }
    }
}

/// Maximiser of a concave function on `[lo, hi]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(x1) < f(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    f(0.5 * (lo + hi))
}

#[test]
fn slow_queue_rate_matches_direct_legendre_transform() {
    for dist in ["pois2", "exp2", "twopoint"] {
        let svc = ServiceTime::exponential(0.5).unwrap();
        let load = svc.sf_integral(0.0, 1.0);
        let a = 1.4 * law(dist).mean() * load;
        let rate = log_asym_q(&law(dist), &svc, 0.5, a).unwrap();
        assert_eq!(rate.gamma_exponent, 0.5);
        let hi = if dist == "exp2" { 1.999 } else { 5.0 };
        let oracle = golden_max(
            |t| t * a - simpson(|x| cgf(dist, t * svc.sf(x)), 0.0, 1.0, 4000),
            0.0,
            hi,
        );
        assert_relative_eq!(rate.rate, oracle, max_relative = 1e-8);
    }
}

#[test]
fn intermediate_queue_rate_matches_direct_legendre_transform() {
    let svc = ServiceTime::pareto2(0.5).unwrap();
    for dist in ["pois2", "twopoint"] {
        let a = 1.5 * law(dist).mean() * svc.sf_integral(0.0, 1.0);
        let rate = log_asym_q(&law(dist), &svc, 1.0, a).unwrap();
        let oracle = golden_max(|t| t * a - k_of(dist, &svc, t), 0.0, 3.0);
        assert_relative_eq!(rate.rate, oracle, max_relative = 1e-8);
    }
}

#[test]
fn approximation_grows_as_level_nears_mean_load() {
    let dist = RateDistribution::poisson(2.0).unwrap();
    let svc = ServiceTime::exponential(0.5).unwrap();
    let threshold = dist.mean() * svc.sf_integral(0.0, 1.0);
    let mut last_theta = f64::INFINITY;
    let mut last_log_q = f64::NEG_INFINITY;
    for k in 1..=14 {
        let a = threshold * (1.0 + 0.5f64.powi(k));
        let q = queue_approx(&dist, &svc, 100.0, a).unwrap();
        assert!(q.theta_star > 0.0 && q.theta_star < last_theta);
        assert!(q.log_big_q_check > last_log_q);
        last_theta = q.theta_star;
        last_log_q = q.log_big_q_check;
    }
    assert!(last_theta < 1e-3);
    assert!(theta_star_queue(&dist, &svc, threshold).is_err());
}

#[test]
fn retention_weights_sum_to_integrated_survival() {
    for svc in [
        ServiceTime::exponential(0.3).unwrap(),
        ServiceTime::deterministic(0.37).unwrap(),
        ServiceTime::pareto2(2.0).unwrap(),
    ] {
        let n = 250;
        let w = omegas(n, &svc).unwrap();
        assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
        let numeric = simpson(|x| svc.sf(x), 0.0, 1.0, 20_000);
        let tol = if svc.breakpoints().is_empty() {
            1e-10
        } else {
            1e-3
        };
        assert_relative_eq!(
            w.iter().sum::<f64>() / n as f64,
            numeric,
            max_relative = tol
        );
    }
}
