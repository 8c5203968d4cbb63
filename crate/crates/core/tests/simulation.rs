//! Simulators against exact distributions.

use mixpois::gamma_exact::GammaMixture;
use mixpois::poisson_ldp::{pmf_exact, psi_exact};
use mixpois::queue::{mc_q, omegas};
use mixpois::sampling::{is_fast, is_slow, mc_p, EstimatorResult, RunPlan, Target};
use mixpois::{RateDistribution, ServiceTime};

fn within_4se(est: &EstimatorResult, exact: f64) {
    let se = est.standard_error();
    assert!(
        (est.estimate - exact).abs() <= 4.0 * se.max(1e-300),
        "estimate {} ± {} vs exact {exact}",
        est.estimate,
        se
    );
}

/// Count pmf of one slot: `Pois(ω X)` with `X` Poisson or exponential, up to `kmax`.
fn slot_pmf(rate: &str, w: f64, kmax: usize) -> Vec<f64> {
    match rate {
        "exp" => {
            // X ~ Exp(λ): geometric with success probability λ/(λ+ω).
            let lambda = 1.5;
            let q = w / (lambda + w);
            (0..=kmax).map(|j| (1.0 - q) * q.powi(j as i32)).collect()
        }
        "pois" => {
            let mut out = vec![0.0; kmax + 1];
            let mut pm = (-2.0f64).exp();
            for m in 0..80 {
                if m > 0 {
                    pm *= 2.0 / m as f64;
                }
                let mean = w * m as f64;
                let mut pj = (-mean).exp();
                for (j, slot) in out.iter_mut().enumerate() {
                    if j > 0 {
                        pj *= mean / j as f64;
                    }
                    *slot += pm * pj;
                }
            }
            out
        }
        _ => unreachable!(),
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate().take(a.len() - i) {
            out[i + j] += x * y;
        }
    }
    out
}

fn exact_queue_pmf(rate: &str, svc: &ServiceTime, n: u64, kmax: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; kmax + 1];
    pmf[0] = 1.0;
    for w in omegas(n, svc).unwrap() {
        pmf = convolve(&pmf, &slot_pmf(rate, w, kmax));
    }
    pmf
}

#[test]
fn queue_simulation_matches_convolution() {
    let n = 20;
    let plan = RunPlan::new(400_000, 3, 4);
    for (rate, dist) in [
        ("pois", RateDistribution::poisson(2.0).unwrap()),
        ("exp", RateDistribution::exponential(1.5).unwrap()),
    ] {
        for svc in [
            ServiceTime::exponential(0.5).unwrap(),
            ServiceTime::pareto2(1.0).unwrap(),
        ] {
            let pmf = exact_queue_pmf(rate, &svc, n, 300);
            let mean_load: f64 = dist.mean() * omegas(n, &svc).unwrap().iter().sum::<f64>();
            let k = (mean_load * 1.8).ceil() as usize;
            let a = k as f64 / n as f64;
            let tail: f64 = pmf[k..].iter().sum();
            within_4se(&mc_q(&dist, &svc, n, a, Target::Tail, &plan).unwrap(), tail);
            within_4se(
                &mc_q(&dist, &svc, n, a, Target::Point, &plan).unwrap(),
                pmf[k],
            );
        }
    }
}

#[test]
fn queue_simulation_with_constant_rate_is_poisson() {
    let dist = RateDistribution::deterministic(2.0).unwrap();
    let svc = ServiceTime::deterministic(0.4).unwrap();
    let n = 30;
    let x = 2.0 * omegas(n, &svc).unwrap().iter().sum::<f64>() / n as f64;
    let a = 1.2;
    let plan = RunPlan::new(300_000, 9, 2);
    within_4se(
        &mc_q(&dist, &svc, n, a, Target::Tail, &plan).unwrap(),
        psi_exact(n as f64, a, x).unwrap(),
    );
}

#[test]
fn crude_and_weighted_estimators_match_negative_binomial() {
    let plan = RunPlan::new(300_000, 5, 3);
    let dist = RateDistribution::exponential(1.0).unwrap();
    for &(alpha, n, a) in &[(2.0, 6.0, 2.0), (0.5, 16.0, 2.0), (1.0, 10.0, 1.6)] {
        let g = GammaMixture::new(1.0, 1.0, alpha, n).unwrap();
        let tail = g.tail_exact(a).unwrap();
        let point = g.p_exact(a).unwrap();
        within_4se(
            &mc_p(&dist, alpha, a, n, Target::Tail, &plan).unwrap(),
            tail,
        );
        within_4se(
            &mc_p(&dist, alpha, a, n, Target::Point, &plan).unwrap(),
            point,
        );
        within_4se(
            &is_fast(&dist, alpha, a, n, Target::Tail, &plan).unwrap(),
            tail,
        );
        within_4se(
            &is_fast(&dist, alpha, a, n, Target::Point, &plan).unwrap(),
            point,
        );
        within_4se(&is_slow(&dist, alpha, a, n, &plan).unwrap(), tail);
    }
}

#[test]
fn summed_point_estimates_reach_the_tail() {
    let dist = RateDistribution::exponential(1.0).unwrap();
    let g = GammaMixture::new(1.0, 1.0, 2.0, 8.0).unwrap();
    let upper = 160;
    let truncated: f64 = (16..=upper)
        .map(|k| g.ln_pmf_count(k as f64).unwrap().exp())
        .sum();
    let plan = RunPlan::new(100_000, 1, 2);
    let est = is_fast(&dist, 2.0, 2.0, 8.0, Target::TailBySum { upper }, &plan).unwrap();
    within_4se(&est, truncated);
}

#[test]
fn weighted_point_estimate_with_constant_rate_is_exact() {
    let dist = RateDistribution::deterministic(1.5).unwrap();
    let plan = RunPlan::new(200_000, 2, 2);
    let est = is_fast(&dist, 3.0, 1.5, 10.0, Target::Point, &plan).unwrap();
    within_4se(&est, pmf_exact(10.0, 1.5, 1.5).unwrap());
}

#[test]
fn two_point_rates_simulated_by_binomial_sums() {
    let dist = RateDistribution::two_point(0.75, 1.0, 5.0).unwrap();
    let (n, alpha, a) = (4.0, 1.0, 3.0);
    // Four slots: the number of high-rate slots is Binomial(4, 1/4).
    let mut tail = 0.0;
    for h in 0..=4u32 {
        let ph = [1.0, 4.0, 6.0, 4.0, 1.0][h as usize]
            * 0.25f64.powi(h as i32)
            * 0.75f64.powi(4 - h as i32);
        let mean_rate = (h as f64 * 5.0 + (4 - h) as f64) / 4.0;
        tail += ph * psi_exact(n, a, mean_rate).unwrap();
    }
    let plan = RunPlan::new(300_000, 8, 3);
    within_4se(
        &mc_p(&dist, alpha, a, n, Target::Tail, &plan).unwrap(),
        tail,
    );
    within_4se(&is_slow(&dist, alpha, a, n, &plan).unwrap(), tail);
}

#[test]
fn results_depend_only_on_seed_and_shards() {
    let dist = RateDistribution::gamma(2.0, 1.0).unwrap();
    let run = |seed, shards| {
        mc_p(
            &dist,
            0.7,
            3.0,
            12.0,
            Target::Tail,
            &RunPlan::new(50_000, seed, shards),
        )
        .unwrap()
    };
    assert_eq!(run(4, 3), run(4, 3));
    assert_ne!(run(4, 3).estimate, run(5, 3).estimate);
}

#[test]
fn budget_is_enforced() {
    let dist = RateDistribution::exponential(1.0).unwrap();
    let mut plan = RunPlan::new(1_000_000, 0, 1);
    plan.op_budget = 1e5;
    let err = mc_p(&dist, 2.0, 2.0, 10.0, Target::Tail, &plan).unwrap_err();
    assert!(matches!(err, mixpois::Error::Budget { .. }));
}
