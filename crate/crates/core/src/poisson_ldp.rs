//! Large deviations of Poisson counts, with or without a random rate.
//!
//! `I(a|x) = a ln(a/x) - a + x` is the rate function of `Pois(Nx)/N`, and
//! `I_Z` is the rate function of the count whose rate is itself a sum of
//! `N` independent copies of `X` (the intermediate regime).

use crate::error::{require_positive, Error, Result};
use crate::numerics::{
    find_root_increasing_with, ln_gamma, ln_regularized_lower_gamma, Interval, RootOptions,
};
use crate::rates::RateDistribution;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Poisson large-deviation quantities at level `a` for mean `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonLdp {
    pub a: f64,
    pub x: f64,
    /// `I(a|x)`.
    pub rate: f64,
    /// `ϑ* = ln(a/x)`.
    pub theta_star: f64,
    /// Exact-asymptotics constant `C(a|x) = 1 / ((1 - x/a) sqrt(2πa))`, present when `a > x`.
    pub prefactor: Option<f64>,
}

/// Rate function, tilt and tail prefactor of a Poisson count at level `a`.
pub fn poisson_rate(a: f64, x: f64) -> Result<PoissonLdp> {
    require_positive("a", a)?;
    require_positive("x", x)?;
    let r = a / x;
    let rate = a * r.ln() - a + x;
    let prefactor = (a > x).then(|| 1.0 / ((1.0 - x / a) * (SQRT_2PI * a.sqrt())));
    Ok(PoissonLdp {
        a,
        x,
        rate,
        theta_star: r.ln(),
        prefactor,
    })
}

fn count_threshold(n: f64, a: f64) -> f64 {
    // Guard against products such as 100 * 2.07 landing just above an integer.
    let na = n * a;
    let nearest = na.round();
    if (na - nearest).abs() <= 1e-9 * na.max(1.0) {
        nearest
    } else {
        na.ceil()
    }
}

/// `ln P(Pois(Nx) >= ⌈Na⌉)`.
pub fn ln_psi_exact(n: f64, a: f64, x: f64) -> Result<f64> {
    require_positive("N", n)?;
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::param("a", a, "must be non-negative and finite"));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::param("x", x, "must be non-negative and finite"));
    }
    let k = count_threshold(n, a);
    if k <= 0.0 {
        return Ok(0.0);
    }
    if x == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    ln_regularized_lower_gamma(k, n * x)
}

/// `P(Pois(Nx) >= ⌈Na⌉)`.
pub fn psi_exact(n: f64, a: f64, x: f64) -> Result<f64> {
    Ok(ln_psi_exact(n, a, x)?.exp())
}

/// `ln P(Pois(Nx) = Na)`; `Na` must be an integer.
pub fn ln_pmf_exact(n: f64, a: f64, x: f64) -> Result<f64> {
    require_positive("N", n)?;
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::param("a", a, "must be non-negative and finite"));
    }
    let k = count_threshold(n, a);
    if (n * a - k).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::param(
            "a",
            a,
            format!("N a = {} is not an integer", n * a),
        ));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::param("x", x, "must be non-negative and finite"));
    }
    if x == 0.0 {
        return Ok(if k == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    let m = n * x;
    Ok(k * m.ln() - m - ln_gamma(k + 1.0)?)
}

/// `P(Pois(Nx) = Na)`; `Na` must be an integer.
pub fn pmf_exact(n: f64, a: f64, x: f64) -> Result<f64> {
    Ok(ln_pmf_exact(n, a, x)?.exp())
}

/// Rate function of the intermediate regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompoundZ {
    pub a: f64,
    /// `I_Z(a) = sup_ϑ [ϑa - Λ_X(e^ϑ - 1)]`.
    pub rate: f64,
    pub theta_star: f64,
    /// Second derivative of `ϑ ↦ Λ_X(e^ϑ - 1)` at `ϑ*`:
    /// `a + e^{2ϑ*} Λ_X''(e^{ϑ*} - 1)`.
    pub variance_at_tilt: f64,
}

/// `I_Z(a)` for `a` above the mean of `X`.
pub fn compound_z(dist: &RateDistribution, a: f64) -> Result<CompoundZ> {
    require_positive("a", a)?;
    let nu = dist.mean();
    if a <= nu {
        return Err(Error::param(
            "a",
            a,
            format!("must exceed the mean rate {nu}"),
        ));
    }
    let sup = dist.mgf_domain_sup();
    let theta_sup = if sup.is_finite() {
        sup.ln_1p()
    } else {
        f64::INFINITY
    };
    let slope = |t: f64| {
        let c = dist.cgf_unchecked(t.exp_m1());
        t.exp() * c.d1 - a
    };
    let hi0 = if theta_sup.is_finite() {
        0.5 * theta_sup
    } else {
        1.0
    };
    let root = find_root_increasing_with(
        slope,
        Interval { lo: 0.0, hi: hi0 },
        Interval {
            lo: 0.0,
            hi: theta_sup,
        },
        RootOptions {
            xtol: 1e-15,
            ..RootOptions::default()
        },
    )?;
    let t = root.root;
    let c = dist.cgf_unchecked(t.exp_m1());
    Ok(CompoundZ {
        a,
        rate: t * a - c.value,
        theta_star: t,
        variance_at_tilt: a + (2.0 * t).exp() * c.d2,
    })
}
