//! Infinite-server queue fed by a mixed Poisson arrival stream.
//!
//! Time `[0, 1]` is cut into `N` slots. Slot `i` has its own rate `X_i`, and
//! an arrival in that slot is still in service at time 1 with probability
//! `ω_i(N) / N`. The number in system is then `Pois(Σ X_i ω_i(N))`, and
//! `Q_N(a)` is the probability that it reaches `Na`.

use std::fmt;
use std::str::FromStr;

use crate::error::{require_positive, Error, Result};
use crate::numerics::{
    find_root_increasing_with, integrate, ln_1m_exp, Interval, QuadratureSpec, RootOptions,
};
use crate::poisson_ldp::poisson_rate;
use crate::rates::{parse_numbers, RateDistribution};
use crate::sampling::{
    count_threshold, poisson_variate, run_sharded, EstimatorResult, RunPlan, Target,
};
use crate::tail_asymptotics::LogAsymptotics;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Service-time families, each parameterized by its mean `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceKind {
    /// `F̄(x) = e^{-x/E}`.
    Exponential,
    /// `F̄(x) = 1{x < E}`.
    Deterministic,
    /// `F̄(x) = (1 + x/E)^{-2}`.
    Pareto2,
}

/// A service-time distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceTime {
    pub kind: ServiceKind,
    pub mean: f64,
}

impl ServiceTime {
    pub fn new(kind: ServiceKind, mean: f64) -> Result<Self> {
        require_positive("E", mean)?;
        Ok(ServiceTime { kind, mean })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        Self::new(ServiceKind::Exponential, mean)
    }

    pub fn deterministic(mean: f64) -> Result<Self> {
        Self::new(ServiceKind::Deterministic, mean)
    }

    pub fn pareto2(mean: f64) -> Result<Self> {
        Self::new(ServiceKind::Pareto2, mean)
    }

    /// Survival function `F̄(x) = P(service > x)`.
    pub fn sf(&self, x: f64) -> f64 {
        let e = self.mean;
        match self.kind {
            ServiceKind::Exponential => (-x / e).exp(),
            ServiceKind::Deterministic => {
                if x < e {
                    1.0
                } else {
                    0.0
                }
            }
            ServiceKind::Pareto2 => {
                let s = 1.0 / (1.0 + x / e);
                s * s
            }
        }
    }

    /// `∫_u^v F̄(x) dx` in closed form, for `0 <= u <= v`.
    pub fn sf_integral(&self, u: f64, v: f64) -> f64 {
        let e = self.mean;
        match self.kind {
            ServiceKind::Exponential => e * ((-u / e).exp() - (-v / e).exp()),
            ServiceKind::Deterministic => (v.min(e) - u).max(0.0),
            ServiceKind::Pareto2 => e * (1.0 / (1.0 + u / e) - 1.0 / (1.0 + v / e)),
        }
    }

    /// `∫_0^1 F̄(x)² dx`.
    pub fn sf_sq_integral01(&self) -> f64 {
        let e = self.mean;
        match self.kind {
            ServiceKind::Exponential => 0.5 * e * (-(-2.0 / e).exp_m1()),
            ServiceKind::Deterministic => e.min(1.0),
            ServiceKind::Pareto2 => e / 3.0 * (1.0 - (1.0 + 1.0 / e).powi(-3)),
        }
    }

    /// `∫_0^∞ F̄(x)² dx`.
    pub fn sf_sq_integral_inf(&self) -> f64 {
        let e = self.mean;
        match self.kind {
            ServiceKind::Exponential => e / 2.0,
            ServiceKind::Deterministic => e,
            ServiceKind::Pareto2 => e / 3.0,
        }
    }

    /// Points in `(0, 1)` where `F̄` jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            ServiceKind::Deterministic if self.mean < 1.0 => vec![self.mean],
            _ => Vec::new(),
        }
    }

    /// False when `F̄` has a jump inside `[0, 1)`.
    pub fn twice_differentiable_on_01(&self) -> bool {
        self.breakpoints().is_empty()
    }

    fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec {
            breakpoints: self.breakpoints(),
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            ..QuadratureSpec::default()
        }
    }
}

impl fmt::Display for ServiceTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            ServiceKind::Exponential => "exp",
            ServiceKind::Deterministic => "det",
            ServiceKind::Pareto2 => "pareto",
        };
        write!(f, "{tag}:{}", self.mean)
    }
}

impl FromStr for ServiceTime {
    type Err = Error;

    /// Parses `exp:<E>`, `det:<E>` or `pareto:<E>`.
    fn from_str(s: &str) -> Result<Self> {
        let what = "service time";
        let (tag, body) = s.split_once(':').ok_or_else(|| Error::Parse {
            what,
            input: s.to_string(),
            reason: "expected <family>:<mean>".into(),
        })?;
        let kind = match tag.trim() {
            "exp" => ServiceKind::Exponential,
            "det" => ServiceKind::Deterministic,
            "pareto" => ServiceKind::Pareto2,
            other => {
                return Err(Error::Parse {
                    what,
                    input: s.to_string(),
                    reason: format!("unknown family {other:?}"),
                })
            }
        };
        Self::new(kind, parse_numbers(what, s, body, 1)?[0])
    }
}

fn check_slots(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::param("N", 0.0, "need at least one slot"));
    }
    Ok(())
}

/// `ω_i(N) = N ∫_{(i-1)/N}^{i/N} F̄(x) dx`, with slot 1 the most recent.
pub fn omega(i: u64, n: u64, service: &ServiceTime) -> Result<f64> {
    check_slots(n)?;
    if i == 0 || i > n {
        return Err(Error::param(
            "i",
            i as f64,
            format!("slot index must lie in 1..={n}"),
        ));
    }
    let nf = n as f64;
    if service.kind == ServiceKind::Deterministic {
        // Count in slot units so whole slots come out as exactly 1.
        return Ok((nf * service.mean - (i - 1) as f64).clamp(0.0, 1.0));
    }
    Ok(nf * service.sf_integral((i - 1) as f64 / nf, i as f64 / nf))
}

/// All of `ω_1(N), …, ω_N(N)`.
pub fn omegas(n: u64, service: &ServiceTime) -> Result<Vec<f64>> {
    check_slots(n)?;
    (1..=n).map(|i| omega(i, n, service)).collect()
}

/// The approximations `q̌_N(a)` and `Q̌_N(a)` and their ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueApprox {
    pub theta_star: f64,
    pub sigma2: f64,
    pub log_q_check: f64,
    pub log_big_q_check: f64,
    /// `∫_0^1 Λ_X(F̄(x)(e^{ϑ*} - 1)) dx`.
    pub integral_cgf: f64,
    /// Set when `F̄` is not twice differentiable on `[0, 1]`, so the formula
    /// is used outside the setting in which it was derived.
    pub hypothesis_violated: bool,
}

impl QueueApprox {
    pub fn q_check(&self) -> f64 {
        self.log_q_check.exp()
    }

    pub fn big_q_check(&self) -> f64 {
        self.log_big_q_check.exp()
    }
}

/// Mean load `ν ∫_0^1 F̄`; `Q_N(a)` is rare only above it.
pub fn load_threshold(dist: &RateDistribution, service: &ServiceTime) -> f64 {
    dist.mean() * service.sf_integral(0.0, 1.0)
}

fn theta_domain(dist: &RateDistribution) -> f64 {
    let sup = dist.mgf_domain_sup();
    if sup.is_finite() {
        sup.ln_1p()
    } else {
        f64::INFINITY
    }
}

/// Solves `∫_0^1 Λ_X'(F̄(x)(e^ϑ - 1)) F̄(x) e^ϑ dx = a`.
pub fn theta_star_queue(dist: &RateDistribution, service: &ServiceTime, a: f64) -> Result<f64> {
    require_positive("a", a)?;
    let threshold = load_threshold(dist, service);
    if a <= threshold {
        return Err(Error::infeasible(
            a,
            format!("must exceed the mean load {threshold}"),
        ));
    }
    let spec = service.quadrature();
    let unit = Interval { lo: 0.0, hi: 1.0 };
    let mut failure = None;
    let slope = |t: f64| {
        let c = t.exp_m1();
        let et = t.exp();
        match integrate(
            |x| {
                let f = service.sf(x);
                dist.cgf_unchecked(f * c).d1 * f * et
            },
            unit,
            &spec,
        ) {
            Ok(v) => v - a,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        }
    };
    let sup = theta_domain(dist);
    let hi = if sup.is_finite() { 0.5 * sup } else { 1.0 };
    let root = find_root_increasing_with(
        slope,
        Interval { lo: 0.0, hi },
        Interval { lo: 0.0, hi: sup },
        RootOptions {
            xtol: 1e-14,
            ..RootOptions::default()
        },
    );
    match (root, failure) {
        (Ok(r), _) => Ok(r.root),
        (Err(_), Some(e)) => Err(e),
        (Err(Error::NonConvergence { .. }), None) if sup.is_finite() => Err(Error::infeasible(
            a,
            format!("no tilt in the feasible interval [0, {sup}) reaches this level"),
        )),
        (Err(e), None) => Err(e),
    }
}

/// `q̌_N(a)` and `Q̌_N(a)` at `α = 1`.
///
/// `ln q̌ = -ϑ* N a + N ∫Λ_X(F̄(e^{ϑ*} - 1)) - ½ ln(2πN) - ln σ` with
/// `σ² = a + ∫Λ_X''(F̄(e^{ϑ*} - 1)) F̄² e^{2ϑ*}`, and
/// `ln Q̌ = ln q̌ - ln(1 - e^{-ϑ*})`.
pub fn queue_approx(
    dist: &RateDistribution,
    service: &ServiceTime,
    n: f64,
    a: f64,
) -> Result<QueueApprox> {
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::param("N", n, "must be at least 1"));
    }
    let theta = theta_star_queue(dist, service, a)?;
    let c = theta.exp_m1();
    let e2 = (2.0 * theta).exp();
    let spec = service.quadrature();
    let unit = Interval { lo: 0.0, hi: 1.0 };
    let integral_cgf = integrate(|x| dist.cgf_unchecked(service.sf(x) * c).value, unit, &spec)?;
    let curvature = integrate(
        |x| {
            let f = service.sf(x);
            dist.cgf_unchecked(f * c).d2 * f * f * e2
        },
        unit,
        &spec,
    )?;
    let sigma2 = a + curvature;
    let log_q = -theta * n * a + n * integral_cgf - 0.5 * (LN_2PI + n.ln()) - 0.5 * sigma2.ln();
    Ok(QueueApprox {
        theta_star: theta,
        sigma2,
        log_q_check: log_q,
        log_big_q_check: log_q - ln_1m_exp(-theta),
        integral_cgf,
        hypothesis_violated: !service.twice_differentiable_on_01(),
    })
}

/// Decay rate and speed of `Q_N(a)` when rates are resampled `N^α` times.
pub fn log_asym_q(
    dist: &RateDistribution,
    service: &ServiceTime,
    alpha: f64,
    a: f64,
) -> Result<LogAsymptotics> {
    require_positive("alpha", alpha)?;
    require_positive("a", a)?;
    let load = service.sf_integral(0.0, 1.0);
    let threshold = dist.mean() * load;
    if a <= threshold {
        return Err(Error::infeasible(
            a,
            format!("must exceed the mean load {threshold}"),
        ));
    }
    if (alpha - 1.0).abs() <= 1e-12 {
        let approx = queue_approx(dist, service, 1.0, a)?;
        return Ok(LogAsymptotics {
            rate: approx.theta_star * a - approx.integral_cgf,
            gamma_exponent: 1.0,
        });
    }
    if alpha > 1.0 {
        return Ok(LogAsymptotics {
            rate: poisson_rate(a, threshold)?.rate,
            gamma_exponent: 1.0,
        });
    }
    let ceiling = dist.support_sup() * load;
    if a >= ceiling {
        return Err(Error::infeasible(
            a,
            format!("the rate average cannot push the load above {ceiling}"),
        ));
    }
    let spec = service.quadrature();
    let unit = Interval { lo: 0.0, hi: 1.0 };
    let mut failure = None;
    let slope = |t: f64| match integrate(
        |x| {
            let f = service.sf(x);
            dist.cgf_unchecked(t * f).d1 * f
        },
        unit,
        &spec,
    ) {
        Ok(v) => v - a,
        Err(e) => {
            failure = Some(e);
            f64::NAN
        }
    };
    let sup = dist.mgf_domain_sup();
    let hi = if sup.is_finite() { 0.5 * sup } else { 1.0 };
    let root = find_root_increasing_with(
        slope,
        Interval { lo: 0.0, hi },
        Interval { lo: 0.0, hi: sup },
        RootOptions {
            xtol: 1e-14,
            ..RootOptions::default()
        },
    );
    let theta = match (root, failure) {
        (Ok(r), _) => r.root,
        (Err(_), Some(e)) => return Err(e),
        (Err(e), None) => return Err(e),
    };
    let integral = integrate(
        |x| dist.cgf_unchecked(theta * service.sf(x)).value,
        unit,
        &spec,
    )?;
    Ok(LogAsymptotics {
        rate: theta * a - integral,
        gamma_exponent: alpha,
    })
}

/// Crude Monte Carlo for `Q_N(a)` (or its point version) at `α = 1`.
///
/// Each run draws `X_1, …, X_N`, forms `Σ X_i ω_i(N)` and draws the count.
pub fn mc_q(
    dist: &RateDistribution,
    service: &ServiceTime,
    n: u64,
    a: f64,
    target: Target,
    plan: &RunPlan,
) -> Result<EstimatorResult> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::param("a", a, "must be non-negative and finite"));
    }
    let weights = omegas(n, service)?;
    let nf = n as f64;
    let (k, exact) = match target {
        Target::Tail => (count_threshold(nf, a) as u64, false),
        Target::Point => {
            let k = (nf * a).round();
            if (nf * a - k).abs() > 1e-9 * k.max(1.0) {
                return Err(Error::param(
                    "a",
                    a,
                    "N a must be an integer for point probabilities",
                ));
            }
            (k as u64, true)
        }
        Target::TailBySum { .. } => {
            return Err(Error::regime(
                "queue Monte Carlo",
                "summed point estimates are not supported",
            ))
        }
    };
    let dist = *dist;
    run_sharded(plan, nf + 1.0, move |rng| {
        let load: f64 = weights.iter().map(|w| w * dist.sample(rng)).sum();
        let z = poisson_variate(rng, load);
        let hit = if exact { z == k } else { z >= k };
        if hit {
            1.0
        } else {
            0.0
        }
    })
}

/// Mean and variance decomposition of the number in system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadVariance {
    /// `ν Σ ω_i(N)`, the mean number in system at time 1.
    pub m1: f64,
    /// `N ν E`, the stationary mean.
    pub m_inf: f64,
    /// `var_overdispersion + var_poisson`.
    pub var_total: f64,
    /// `N Var(X) ∫_0^∞ F̄²`, the part caused by random rates.
    pub var_overdispersion: f64,
    /// `N ν E`, the part a plain Poisson stream would have.
    pub var_poisson: f64,
    /// `Var(X) Σ ω_i² + ν Σ ω_i`, the exact variance at time 1.
    pub var_at_time_one: f64,
}

pub fn load_and_variance(
    dist: &RateDistribution,
    service: &ServiceTime,
    n: u64,
) -> Result<LoadVariance> {
    let w = omegas(n, service)?;
    let sum: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|x| x * x).sum();
    let nf = n as f64;
    let nu = dist.mean();
    let var_x = dist.variance();
    let var_overdispersion = nf * var_x * service.sf_sq_integral_inf();
    let var_poisson = nf * nu * service.mean;
    Ok(LoadVariance {
        m1: nu * sum,
        m_inf: nf * nu * service.mean,
        var_total: var_overdispersion + var_poisson,
        var_overdispersion,
        var_poisson,
        var_at_time_one: var_x * sum_sq + nu * sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn omega_examples() {
        let det1 = ServiceTime::deterministic(1.0).unwrap();
        for i in [1, 37, 100] {
            assert_eq!(omega(i, 100, &det1).unwrap(), 1.0);
        }
        let det = ServiceTime::deterministic(0.5).unwrap();
        let w = omegas(100, &det).unwrap();
        assert!(w[..50].iter().all(|&x| (x - 1.0).abs() < 1e-12));
        assert!(w[50..].iter().all(|&x| x == 0.0));
        let exp = ServiceTime::exponential(0.5).unwrap();
        let s: f64 = omegas(100, &exp).unwrap().iter().sum();
        assert_relative_eq!(
            s / 100.0,
            0.5 * (1.0 - (-2.0f64).exp()),
            max_relative = 1e-13
        );
        assert!(omega(0, 10, &exp).is_err());
        assert!(omega(11, 10, &exp).is_err());
    }

    #[test]
    fn service_parsing() {
        for s in ["exp:0.5", "det:1", "pareto:0.05"] {
            assert_eq!(s.parse::<ServiceTime>().unwrap().to_string(), s);
        }
        assert!("gamma:1".parse::<ServiceTime>().is_err());
        assert!("exp:-1".parse::<ServiceTime>().is_err());
    }

    #[test]
    fn sf_square_integrals_match_quadrature() {
        for s in [
            ServiceTime::exponential(0.5).unwrap(),
            ServiceTime::deterministic(0.3).unwrap(),
            ServiceTime::pareto2(0.5).unwrap(),
        ] {
            let q = integrate(
                |x| s.sf(x).powi(2),
                Interval::new(0.0, 1.0).unwrap(),
                &s.quadrature(),
            )
            .unwrap();
            assert_relative_eq!(q, s.sf_sq_integral01(), max_relative = 1e-11);
        }
    }

    #[test]
    fn theta_star_flat_service_matches_closed_form() {
        let d = RateDistribution::exponential(2.5).unwrap();
        let s = ServiceTime::deterministic(1.5).unwrap();
        let t = theta_star_queue(&d, &s, 1.0).unwrap();
        assert_relative_eq!(t, (1.0f64 * 3.5 / 2.0).ln(), max_relative = 1e-12);
        let q = queue_approx(&d, &s, 10.0, 1.0).unwrap();
        assert_relative_eq!(q.sigma2, 2.0, max_relative = 1e-11);
        assert!(!q.hypothesis_violated);
    }

    #[test]
    fn deterministic_rate_reduces_to_poisson() {
        let d = RateDistribution::deterministic(2.0).unwrap();
        let s = ServiceTime::exponential(0.5).unwrap();
        let rho = 2.0 * s.sf_integral(0.0, 1.0);
        let t = theta_star_queue(&d, &s, 1.3).unwrap();
        assert_relative_eq!(t, (1.3 / rho).ln(), max_relative = 1e-12);
    }

    #[test]
    fn rarity_enforced() {
        let d = RateDistribution::poisson(2.0).unwrap();
        let s = ServiceTime::exponential(0.5).unwrap();
        assert!(matches!(
            theta_star_queue(&d, &s, 0.8),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn det_service_flags_hypothesis() {
        let d = RateDistribution::poisson(2.0).unwrap();
        let s = ServiceTime::deterministic(0.5).unwrap();
        assert!(
            queue_approx(&d, &s, 100.0, 1.5)
                .unwrap()
                .hypothesis_violated
        );
    }

    #[test]
    fn load_variance_example() {
        let d = RateDistribution::poisson(2.0).unwrap();
        let s = ServiceTime::exponential(0.5).unwrap();
        let lv = load_and_variance(&d, &s, 100).unwrap();
        assert_relative_eq!(
            lv.m1,
            200.0 * 0.5 * (1.0 - (-2.0f64).exp()),
            max_relative = 1e-12
        );
        assert_eq!(lv.m1.ceil(), 87.0);
        assert_relative_eq!(lv.var_poisson, 100.0, max_relative = 1e-15);
        assert_relative_eq!(
            lv.var_overdispersion,
            100.0 * 2.0 * 0.25,
            max_relative = 1e-15
        );
        let det = RateDistribution::deterministic(2.0).unwrap();
        assert_eq!(
            load_and_variance(&det, &s, 100).unwrap().var_overdispersion,
            0.0
        );
    }

    #[test]
    fn mc_q_at_zero_level_is_one() {
        let d = RateDistribution::poisson(2.0).unwrap();
        let s = ServiceTime::exponential(0.5).unwrap();
        let r = mc_q(&d, &s, 20, 0.0, Target::Tail, &RunPlan::new(100, 0, 1)).unwrap();
        assert_eq!(r.estimate, 1.0);
    }
}
