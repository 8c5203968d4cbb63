//! Logarithmic and exact asymptotics of `P_N(a) = P(Pois(N X̄) >= Na)` and
//! of the point probability `p_N(a) = P(Pois(N X̄) = Na)`, where `X̄` is the
//! average of `N^α` independent copies of the rate `X`.
//!
//! Three regimes appear. When `α > 1` the rate average concentrates faster
//! than the Poisson noise and the count behaves like `Pois(Nν)`. When `α < 1`
//! the rate average is the bottleneck and the decay runs at speed `N^α`.
//! At `α = 1` both sources of randomness contribute through `I_Z`.

use crate::error::{require_positive, Error, Result};
use crate::poisson_ldp::{compound_z, poisson_rate};
use crate::rates::{RateDistribution, RateKind};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Which formula produced an approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `α > 3`: Poisson exact asymptotics around the mean rate.
    FastExact,
    /// `2 < α <= 3`: the fast formula is only a proven lower bound.
    FastLowerBound,
    /// `α < 1/3` with unbounded support above `a`.
    SlowIExact,
    /// `1/3 <= α < 1/2`: the slow formula is only a proven lower bound.
    SlowILowerBound,
    /// `α < 1` with the support of `X` ending below `a`.
    SlowIIExact,
    /// `α = 1`.
    Intermediate,
    /// Only the exponential decay rate is known.
    LogOnly,
}

/// How much trust the approximation deserves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Validity {
    Valid,
    LowerBoundOnly,
    OutsideProvenRange,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

impl std::fmt::Display for Validity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

/// One approximate probability, carried in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticValue {
    pub log_value: f64,
    pub value: f64,
    pub regime: Regime,
    pub validity: Validity,
    /// Speed exponent `γ` of the decay `exp(-rate N^γ)`.
    pub gamma_exponent: f64,
}

impl AsymptoticValue {
    fn new(log_value: f64, regime: Regime, validity: Validity, gamma_exponent: f64) -> Self {
        AsymptoticValue {
            log_value,
            value: log_value.exp(),
            regime,
            validity,
            gamma_exponent,
        }
    }
}

/// Tail `P̌` and point `p̌` approximations from the same formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticPair {
    pub tail: AsymptoticValue,
    pub point: AsymptoticValue,
}

/// Logarithmic asymptotics `ln P_N(a) ≈ -rate N^γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogAsymptotics {
    pub rate: f64,
    pub gamma_exponent: f64,
}

impl LogAsymptotics {
    pub fn log_value_at(&self, n: f64) -> f64 {
        -self.rate * n.powf(self.gamma_exponent)
    }

    pub fn at(&self, n: f64) -> AsymptoticValue {
        AsymptoticValue::new(
            self.log_value_at(n),
            Regime::LogOnly,
            Validity::OutsideProvenRange,
            self.gamma_exponent,
        )
    }
}

fn check_common(dist: &RateDistribution, alpha: f64, a: f64, n: f64) -> Result<()> {
    require_positive("alpha", alpha)?;
    require_positive("a", a)?;
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::param("N", n, "must be at least 1"));
    }
    let nu = dist.mean();
    if a <= nu {
        return Err(Error::param(
            "a",
            a,
            format!("must exceed the mean rate {nu}"),
        ));
    }
    Ok(())
}

fn is_intermediate(alpha: f64) -> bool {
    (alpha - 1.0).abs() <= 1e-12
}

/// Decay rate and speed of `P_N(a)`.
///
/// For `α < 1` and a bounded support ending below `a`, the leading decay is
/// the Poisson cost `I(a|b₊)` at speed `N`. A level exactly at `b₊` is rejected.
pub fn log_asym_p(dist: &RateDistribution, alpha: f64, a: f64) -> Result<LogAsymptotics> {
    check_common(dist, alpha, a, 1.0)?;
    if alpha > 1.0 && !is_intermediate(alpha) {
        return Ok(LogAsymptotics {
            rate: poisson_rate(a, dist.mean())?.rate,
            gamma_exponent: 1.0,
        });
    }
    if is_intermediate(alpha) {
        return Ok(LogAsymptotics {
            rate: compound_z(dist, a)?.rate,
            gamma_exponent: 1.0,
        });
    }
    let b_plus = dist.support_sup();
    if b_plus > a {
        Ok(LogAsymptotics {
            rate: dist.rate_function(a)?.value,
            gamma_exponent: alpha,
        })
    } else if b_plus < a {
        Ok(LogAsymptotics {
            rate: poisson_rate(a, b_plus)?.rate,
            gamma_exponent: 1.0,
        })
    } else {
        Err(Error::regime(
            "logarithmic asymptotics",
            format!("level a = {a} coincides with the support maximum"),
        ))
    }
}

fn fast_pair(
    nu: f64,
    a: f64,
    n: f64,
    regime: Regime,
    validity: Validity,
) -> Result<AsymptoticPair> {
    let ldp = poisson_rate(a, nu)?;
    let c = ldp.prefactor.expect("a > nu checked by caller");
    let log_tail = -n * ldp.rate + c.ln() - 0.5 * n.ln();
    let log_point = log_tail + (1.0 - nu / a).ln();
    Ok(AsymptoticPair {
        tail: AsymptoticValue::new(log_tail, regime, validity, 1.0),
        point: AsymptoticValue::new(log_point, regime, validity, 1.0),
    })
}

/// Exact asymptotics for `α > 2`.
///
/// `P̌ = e^{-N I(a|ν)} C(a|ν) / sqrt(N)` and `p̌ = P̌ (1 - ν/a)`. Proven
/// asymptotically exact for `α > 3` and a lower bound for `2 < α <= 3`.
pub fn approx_fast(dist: &RateDistribution, alpha: f64, a: f64, n: f64) -> Result<AsymptoticPair> {
    check_common(dist, alpha, a, n)?;
    if alpha <= 2.0 {
        return Err(Error::param(
            "alpha",
            alpha,
            "the fast formula needs alpha > 2",
        ));
    }
    let (regime, validity) = if alpha > 3.0 {
        (Regime::FastExact, Validity::Valid)
    } else {
        (Regime::FastLowerBound, Validity::LowerBoundOnly)
    };
    fast_pair(dist.mean(), a, n, regime, validity)
}

/// Exact asymptotics for `α < 1/2` when `ν < a < b₊` and `X` is non-lattice.
///
/// `P̌ = e^{-N^α I_X(a)} C_X(a) / N^{α/2}` and
/// `p̌ = e^{-N^α I_X(a)} C_X(a) I_X'(a) / N^{1-α/2}`. Proven exact for
/// `α < 1/3` and a lower bound for `1/3 <= α < 1/2`.
pub fn approx_slow_case1(
    dist: &RateDistribution,
    alpha: f64,
    a: f64,
    n: f64,
) -> Result<AsymptoticPair> {
    check_common(dist, alpha, a, n)?;
    if alpha >= 0.5 {
        return Err(Error::param(
            "alpha",
            alpha,
            "the slow formula needs alpha < 1/2",
        ));
    }
    if a >= dist.support_sup() {
        return Err(Error::infeasible(
            a,
            "the slow formula needs a below the support maximum",
        ));
    }
    let c_x = dist.bahadur_rao_constant(a)?;
    let rf = dist.rate_function(a)?;
    let (regime, validity) = if alpha < 1.0 / 3.0 {
        (Regime::SlowIExact, Validity::Valid)
    } else {
        (Regime::SlowILowerBound, Validity::LowerBoundOnly)
    };
    let speed = n.powf(alpha);
    let ln_n = n.ln();
    let log_tail = -speed * rf.value + c_x.ln() - 0.5 * alpha * ln_n;
    let log_point = -speed * rf.value + c_x.ln() + rf.theta_star.ln() - (1.0 - 0.5 * alpha) * ln_n;
    Ok(AsymptoticPair {
        tail: AsymptoticValue::new(log_tail, regime, validity, alpha),
        point: AsymptoticValue::new(log_point, regime, validity, alpha),
    })
}

/// Rate-function data at the support maximum `b₊`, needed when `a > b₊`.
///
/// None of the built-in families yields finite values here, so these are
/// supplied by the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseIIConstants {
    pub b_plus: f64,
    /// `I_X(b₊)`.
    pub rate_at_b: f64,
    /// `I_X'(b₊)`.
    pub slope_at_b: f64,
    /// `C_X(b₊)`.
    pub bahadur_rao_at_b: f64,
}

impl CaseIIConstants {
    /// Derives the constants from a distribution when they are finite.
    pub fn from_distribution(dist: &RateDistribution) -> Result<Self> {
        let b_plus = dist.support_sup();
        if !b_plus.is_finite() {
            return Err(Error::regime(
                "bounded-support constants",
                format!("{dist} has unbounded support"),
            ));
        }
        let rf = dist.rate_function(b_plus)?;
        if !rf.theta_star.is_finite() || !(rf.cgf_second_deriv > 0.0) {
            return Err(Error::regime(
                "bounded-support constants",
                format!("I_X'(b₊) or C_X(b₊) is not finite for {dist}"),
            ));
        }
        Ok(CaseIIConstants {
            b_plus,
            rate_at_b: rf.value,
            slope_at_b: rf.theta_star,
            bahadur_rao_at_b: dist.bahadur_rao_constant(b_plus)?,
        })
    }
}

/// Exact asymptotics for `α < 1` when the support of `X` ends at `b₊ < a`.
///
/// `P̌ = e^{-N I(a|b₊)} e^{-N^α I_X(b₊)} N^{-(α+1)/2} γ(a) b₊/(a - b₊)` with
/// `γ(a) = C(a|b₊) C_X(b₊) I_X'(b₊)`, and `p̌ = P̌ (1 - b₊/a)`.
pub fn approx_slow_case2(
    consts: &CaseIIConstants,
    alpha: f64,
    a: f64,
    n: f64,
) -> Result<AsymptoticPair> {
    require_positive("alpha", alpha)?;
    if alpha >= 1.0 {
        return Err(Error::param(
            "alpha",
            alpha,
            "the bounded-support formula needs alpha < 1",
        ));
    }
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::param("N", n, "must be at least 1"));
    }
    let b = require_positive("b_plus", consts.b_plus)?;
    require_positive("I_X'(b_plus)", consts.slope_at_b)?;
    require_positive("C_X(b_plus)", consts.bahadur_rao_at_b)?;
    if !(consts.rate_at_b >= 0.0) || !consts.rate_at_b.is_finite() {
        return Err(Error::param(
            "I_X(b_plus)",
            consts.rate_at_b,
            "must be finite and non-negative",
        ));
    }
    if a <= b {
        return Err(Error::param("a", a, format!("must exceed b₊ = {b}")));
    }
    let ldp = poisson_rate(a, b)?;
    let c = ldp.prefactor.expect("a > b₊");
    let ln_gamma_a = c.ln() + consts.bahadur_rao_at_b.ln() + consts.slope_at_b.ln();
    let log_tail = -n * ldp.rate - n.powf(alpha) * consts.rate_at_b - 0.5 * (alpha + 1.0) * n.ln()
        + ln_gamma_a
        + (b / (a - b)).ln();
    let log_point = log_tail + (1.0 - b / a).ln();
    Ok(AsymptoticPair {
        tail: AsymptoticValue::new(log_tail, Regime::SlowIIExact, Validity::Valid, 1.0),
        point: AsymptoticValue::new(log_point, Regime::SlowIIExact, Validity::Valid, 1.0),
    })
}

/// Exact asymptotics at `α = 1`.
///
/// `P̌ = e^{-N I_Z(a)} C_Z(a) / sqrt(N)` with
/// `C_Z = 1 / ((1 - e^{-ϑ*}) sqrt(2π σ²))`, and
/// `p̌ = e^{-N I_Z(a)} / sqrt(2π N σ²)`, where `σ²` is the curvature of the
/// compound cumulant generating function at the tilt.
pub fn approx_intermediate(dist: &RateDistribution, a: f64, n: f64) -> Result<AsymptoticPair> {
    check_common(dist, 1.0, a, n)?;
    let z = compound_z(dist, a)?;
    let log_point = -n * z.rate - 0.5 * (LN_2PI + n.ln() + z.variance_at_tilt.ln());
    let log_tail = log_point - crate::numerics::ln_1m_exp(-z.theta_star);
    Ok(AsymptoticPair {
        tail: AsymptoticValue::new(log_tail, Regime::Intermediate, Validity::Valid, 1.0),
        point: AsymptoticValue::new(log_point, Regime::Intermediate, Validity::Valid, 1.0),
    })
}

/// Picks the formula that matches `α` and the support of `X`.
///
/// `α` equal to 1 within `1e-12` selects the intermediate formula. Outside
/// the proven ranges only the logarithmic rate is returned, flagged as
/// [`Regime::LogOnly`]. A deterministic rate makes the count plain Poisson,
/// for which the fast formula is exact at every `α`.
pub fn approx_auto(dist: &RateDistribution, alpha: f64, a: f64, n: f64) -> Result<AsymptoticPair> {
    check_common(dist, alpha, a, n)?;
    if matches!(dist.kind(), RateKind::Deterministic { .. }) {
        return fast_pair(dist.mean(), a, n, Regime::FastExact, Validity::Valid);
    }
    if is_intermediate(alpha) {
        return approx_intermediate(dist, a, n);
    }
    if alpha > 2.0 {
        return approx_fast(dist, alpha, a, n);
    }
    let b_plus = dist.support_sup();
    if alpha < 0.5 && b_plus > a {
        return approx_slow_case1(dist, alpha, a, n);
    }
    if alpha < 1.0 && b_plus < a {
        let consts = CaseIIConstants::from_distribution(dist)?;
        return approx_slow_case2(&consts, alpha, a, n);
    }
    let log = log_asym_p(dist, alpha, a)?;
    let v = log.at(n);
    Ok(AsymptoticPair { tail: v, point: v })
}
