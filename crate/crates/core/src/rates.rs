//! Distributions of the resampled Poisson rate `X`.
//!
//! Each family exposes its cumulant generating function `Λ_X(θ) = ln E e^{θX}`
//! with two derivatives, the Legendre transform `I_X`, and samplers for sums
//! of i.i.d. copies under the original or an exponentially tilted law.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, Gamma};

use crate::error::{require_positive, Error, Result};
use crate::numerics::{find_root_increasing_with, Interval, RootOptions};
use crate::sampling::poisson_variate;

/// Parameters of a supported rate family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateKind {
    /// Exponential with rate `rate` (mean `1 / rate`).
    Exponential { rate: f64 },
    /// Gamma with shape `shape` and rate `rate`.
    Gamma { shape: f64, rate: f64 },
    /// The rate itself is Poisson with mean `mean`.
    PoissonRate { mean: f64 },
    /// `low` with probability `p`, otherwise `high`.
    TwoPoint { p: f64, low: f64, high: f64 },
    /// Constant rate; the count is then plain Poisson.
    Deterministic { value: f64 },
}

/// A validated rate distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateDistribution {
    kind: RateKind,
}

/// `Λ_X` and its first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgfValues {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// `I_X(a)` together with the tilt that attains it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFunctionPoint {
    pub a: f64,
    /// `I_X(a)`.
    pub value: f64,
    /// The maximizer `θ*` of `θa - Λ_X(θ)`, which is also `I_X'(a)`.
    pub theta_star: f64,
    /// `Λ_X''(θ*)`, equal to `1 / I_X''(a)`.
    pub cgf_second_deriv: f64,
}

impl RateDistribution {
    pub fn exponential(rate: f64) -> Result<Self> {
        require_positive("lambda", rate)?;
        Ok(Self::from_kind(RateKind::Exponential { rate }))
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        require_positive("beta", shape)?;
        require_positive("lambda", rate)?;
        Ok(Self::from_kind(RateKind::Gamma { shape, rate }))
    }

    pub fn poisson(mean: f64) -> Result<Self> {
        require_positive("lambda", mean)?;
        Ok(Self::from_kind(RateKind::PoissonRate { mean }))
    }

    pub fn two_point(p: f64, low: f64, high: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::param("p", p, "must lie strictly between 0 and 1"));
        }
        if !(low >= 0.0) || !low.is_finite() {
            return Err(Error::param(
                "lambda1",
                low,
                "must be non-negative and finite",
            ));
        }
        if !(high > low) || !high.is_finite() {
            return Err(Error::param(
                "lambda2",
                high,
                "must be finite and exceed lambda1",
            ));
        }
        Ok(Self::from_kind(RateKind::TwoPoint { p, low, high }))
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        require_positive("lambda", value)?;
        Ok(Self::from_kind(RateKind::Deterministic { value }))
    }

    fn from_kind(kind: RateKind) -> Self {
        RateDistribution { kind }
    }

    pub fn kind(&self) -> RateKind {
        self.kind
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            RateKind::Exponential { rate } => 1.0 / rate,
            RateKind::Gamma { shape, rate } => shape / rate,
            RateKind::PoissonRate { mean } => mean,
            RateKind::TwoPoint { p, low, high } => p * low + (1.0 - p) * high,
            RateKind::Deterministic { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            RateKind::Exponential { rate } => 1.0 / (rate * rate),
            RateKind::Gamma { shape, rate } => shape / (rate * rate),
            RateKind::PoissonRate { mean } => mean,
            RateKind::TwoPoint { p, low, high } => p * (1.0 - p) * (high - low).powi(2),
            RateKind::Deterministic { .. } => 0.0,
        }
    }

    /// Supremum of the set where `Λ_X` is finite.
    pub fn mgf_domain_sup(&self) -> f64 {
        match self.kind {
            RateKind::Exponential { rate } | RateKind::Gamma { rate, .. } => rate,
            _ => f64::INFINITY,
        }
    }

    /// Supremum `b₊` of the support of `X`.
    pub fn support_sup(&self) -> f64 {
        match self.kind {
            RateKind::TwoPoint { high, .. } => high,
            RateKind::Deterministic { value } => value,
            _ => f64::INFINITY,
        }
    }

    /// Infimum of the support of `X`.
    pub fn support_inf(&self) -> f64 {
        match self.kind {
            RateKind::TwoPoint { low, .. } => low,
            RateKind::Deterministic { value } => value,
            _ => 0.0,
        }
    }

    /// True when `X` lives on a lattice, which rules out the Bahadur-Rao constant.
    pub fn is_lattice(&self) -> bool {
        !matches!(
            self.kind,
            RateKind::Exponential { .. } | RateKind::Gamma { .. }
        )
    }

    /// `Λ_X(θ)`, `Λ_X'(θ)` and `Λ_X''(θ)`.
    pub fn cgf_all(&self, theta: f64) -> Result<CgfValues> {
        if theta.is_nan() || theta >= self.mgf_domain_sup() || theta == f64::NEG_INFINITY {
            return Err(Error::param(
                "theta",
                theta,
                format!("outside the domain of the cumulant generating function of {self}"),
            ));
        }
        Ok(self.cgf_unchecked(theta))
    }

    pub(crate) fn cgf_unchecked(&self, theta: f64) -> CgfValues {
        match self.kind {
            RateKind::Exponential { rate } => {
                let s = rate - theta;
                CgfValues {
                    value: -(-theta / rate).ln_1p(),
                    d1: 1.0 / s,
                    d2: 1.0 / (s * s),
                }
            }
            RateKind::Gamma { shape, rate } => {
                let s = rate - theta;
                CgfValues {
                    value: -shape * (-theta / rate).ln_1p(),
                    d1: shape / s,
                    d2: shape / (s * s),
                }
            }
            RateKind::PoissonRate { mean } => CgfValues {
                value: mean * theta.exp_m1(),
                d1: mean * theta.exp(),
                d2: mean * theta.exp(),
            },
            RateKind::TwoPoint { p, low, high } => {
                let d = high - low;
                // q is the tilted weight on `low`; both branches avoid overflow.
                let (value, q) = if theta >= 0.0 {
                    let w = p * (-theta * d).exp();
                    let z = (1.0 - p) + w;
                    (theta * high + z.ln(), w / z)
                } else {
                    let w = (1.0 - p) * (theta * d).exp();
                    let z = p + w;
                    (theta * low + z.ln(), p / z)
                };
                CgfValues {
                    value,
                    d1: q * low + (1.0 - q) * high,
                    d2: q * (1.0 - q) * d * d,
                }
            }
            RateKind::Deterministic { value } => CgfValues {
                value: value * theta,
                d1: value,
                d2: 0.0,
            },
        }
    }

    pub fn cgf(&self, theta: f64) -> Result<f64> {
        Ok(self.cgf_all(theta)?.value)
    }

    pub fn cgf_d1(&self, theta: f64) -> Result<f64> {
        Ok(self.cgf_all(theta)?.d1)
    }

    pub fn cgf_d2(&self, theta: f64) -> Result<f64> {
        Ok(self.cgf_all(theta)?.d2)
    }

    fn check_level(&self, a: f64) -> Result<()> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::param("a", a, "level must be positive and finite"));
        }
        let (lo, hi) = (self.support_inf(), self.support_sup());
        if a < lo || a > hi {
            return Err(Error::infeasible(
                a,
                format!("outside the support [{lo}, {hi}] of {self}"),
            ));
        }
        Ok(())
    }

    /// `I_X(a) = sup_θ [θa - Λ_X(θ)]`.
    ///
    /// Closed forms are used for the exponential, gamma and Poisson families;
    /// the two-point family is solved numerically. At the atoms of a
    /// two-point law the maximizer is infinite and the value is `-ln P(X = a)`.
    pub fn rate_function(&self, a: f64) -> Result<RateFunctionPoint> {
        self.check_level(a)?;
        let point = |value, theta_star, cgf_second_deriv| RateFunctionPoint {
            a,
            value,
            theta_star,
            cgf_second_deriv,
        };
        match self.kind {
            RateKind::Exponential { rate } => {
                let la = rate * a;
                Ok(point(la - 1.0 - la.ln(), rate - 1.0 / a, a * a))
            }
            RateKind::Gamma { shape, rate } => {
                let u = rate * a / shape;
                Ok(point(
                    shape * (u - 1.0 - u.ln()),
                    rate - shape / a,
                    a * a / shape,
                ))
            }
            RateKind::PoissonRate { mean } => {
                let r = a / mean;
                Ok(point(a * r.ln() - a + mean, r.ln(), a))
            }
            RateKind::TwoPoint { p, low, high } => {
                if a == low {
                    Ok(point(-p.ln(), f64::NEG_INFINITY, 0.0))
                } else if a == high {
                    Ok(point(-(1.0 - p).ln(), f64::INFINITY, 0.0))
                } else {
                    self.rate_function_numeric(a)
                }
            }
            RateKind::Deterministic { value } => {
                if (a - value).abs() <= 1e-12 * value {
                    Ok(point(0.0, 0.0, 0.0))
                } else {
                    Err(Error::infeasible(a, format!("{self} only attains {value}")))
                }
            }
        }
    }

    /// `I_X(a)` by solving `Λ_X'(θ) = a` numerically, whatever the family.
    pub fn rate_function_numeric(&self, a: f64) -> Result<RateFunctionPoint> {
        self.check_level(a)?;
        if a == self.support_inf() || a == self.support_sup() {
            return Err(Error::infeasible(
                a,
                "level sits on the boundary of the support",
            ));
        }
        let sup = self.mgf_domain_sup();
        let hi = if sup.is_finite() { 0.5 * sup } else { 1.0 };
        let domain = Interval {
            lo: f64::NEG_INFINITY,
            hi: sup,
        };
        let root = find_root_increasing_with(
            |t| self.cgf_unchecked(t).d1 - a,
            Interval { lo: hi - 1.0, hi },
            domain,
            RootOptions {
                xtol: 1e-15,
                ..RootOptions::default()
            },
        )?;
        let theta = root.root;
        let c = self.cgf_unchecked(theta);
        Ok(RateFunctionPoint {
            a,
            value: theta * a - c.value,
            theta_star: theta,
            cgf_second_deriv: c.d2,
        })
    }

    /// Bahadur-Rao constant `C_X(a) = 1 / (θ* sqrt(2π Λ_X''(θ*)))` for `a` above the mean.
    pub fn bahadur_rao_constant(&self, a: f64) -> Result<f64> {
        if self.is_lattice() {
            return Err(Error::Lattice {
                what: "the Bahadur-Rao constant",
                dist: self.to_string(),
            });
        }
        let rf = self.rate_function(a)?;
        if !(rf.theta_star > 0.0) {
            return Err(Error::param(
                "a",
                a,
                format!("must exceed the mean {}", self.mean()),
            ));
        }
        Ok(1.0 / (rf.theta_star * (2.0 * std::f64::consts::PI * rf.cgf_second_deriv).sqrt()))
    }

    /// The exponentially tilted law `dP_θ/dP = e^{θX - Λ_X(θ)}`, which stays in the family.
    pub fn twisted(&self, theta: f64) -> Result<RateDistribution> {
        let c = self.cgf_all(theta)?;
        match self.kind {
            RateKind::Exponential { rate } => Self::exponential(rate - theta),
            RateKind::Gamma { shape, rate } => Self::gamma(shape, rate - theta),
            RateKind::PoissonRate { mean } => Self::poisson(mean * theta.exp()),
            RateKind::TwoPoint { low, high, .. } => {
                let q = (high - c.d1) / (high - low);
                Self::two_point(q, low, high)
            }
            RateKind::Deterministic { value } => Self::deterministic(value),
        }
    }

    /// Draws one `X`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            RateKind::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            RateKind::TwoPoint { p, low, high } => {
                if rng.random::<f64>() < p {
                    low
                } else {
                    high
                }
            }
            _ => self.sample_sum(rng, 1.0),
        }
    }

    /// Draws the sum of `slots` i.i.d. copies of `X`.
    ///
    /// Exponential and gamma sums use a single gamma variate, so `slots` may
    /// be any positive real. Other families require an integer count and draw
    /// the sum in one step through the family's convolution closure.
    pub fn sample_sum<R: Rng + ?Sized>(&self, rng: &mut R, slots: f64) -> f64 {
        match self.kind {
            RateKind::Exponential { rate } => gamma_variate(rng, slots, rate),
            RateKind::Gamma { shape, rate } => gamma_variate(rng, slots * shape, rate),
            RateKind::PoissonRate { mean } => poisson_variate(rng, slots * mean) as f64,
            RateKind::TwoPoint { p, low, high } => {
                let n = slots as u64;
                let lows = Binomial::new(n, p).expect("valid binomial").sample(rng) as f64;
                lows * low + (n as f64 - lows) * high
            }
            RateKind::Deterministic { value } => slots * value,
        }
    }

    /// True when [`sample_sum`](Self::sample_sum) accepts a fractional number of slots.
    pub fn divisible_sums(&self) -> bool {
        matches!(
            self.kind,
            RateKind::Exponential { .. } | RateKind::Gamma { .. }
        )
    }
}

fn gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("shape and rate validated on construction")
        .sample(rng)
}

impl fmt::Display for RateDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RateKind::Exponential { rate } => write!(f, "exp:{rate}"),
            RateKind::Gamma { shape, rate } => write!(f, "gamma:{shape},{rate}"),
            RateKind::PoissonRate { mean } => write!(f, "pois:{mean}"),
            RateKind::TwoPoint { p, low, high } => write!(f, "twopoint:{p},{low},{high}"),
            RateKind::Deterministic { value } => write!(f, "det:{value}"),
        }
    }
}

pub(crate) fn parse_numbers(
    what: &'static str,
    input: &str,
    body: &str,
    count: usize,
) -> Result<Vec<f64>> {
    let parse_err = |reason: String| Error::Parse {
        what,
        input: input.to_string(),
        reason,
    };
    let values = body
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(format!("{t:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != count {
        return Err(parse_err(format!(
            "expected {count} parameter(s), got {}",
            values.len()
        )));
    }
    Ok(values)
}

impl FromStr for RateDistribution {
    type Err = Error;

    /// Parses `exp:<λ>`, `gamma:<β>,<λ>`, `pois:<λ>`, `twopoint:<p>,<λ1>,<λ2>` or `det:<λ>`.
    fn from_str(s: &str) -> Result<Self> {
        let (tag, body) = s.split_once(':').ok_or_else(|| Error::Parse {
            what: "rate distribution",
            input: s.to_string(),
            reason: "expected <family>:<parameters>".into(),
        })?;
        let what = "rate distribution";
        match tag.trim() {
            "exp" => Self::exponential(parse_numbers(what, s, body, 1)?[0]),
            "gamma" => {
                let v = parse_numbers(what, s, body, 2)?;
                Self::gamma(v[0], v[1])
            }
            "pois" => Self::poisson(parse_numbers(what, s, body, 1)?[0]),
            "twopoint" => {
                let v = parse_numbers(what, s, body, 3)?;
                Self::two_point(v[0], v[1], v[2])
            }
            "det" => Self::deterministic(parse_numbers(what, s, body, 1)?[0]),
            other => Err(Error::Parse {
                what,
                input: s.to_string(),
                reason: format!("unknown family {other:?}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_rate_function_example() {
        let d = RateDistribution::exponential(2.5).unwrap();
        let rf = d.rate_function(1.0).unwrap();
        assert_relative_eq!(rf.value, 2.5 - 1.0 - 2.5f64.ln(), max_relative = 1e-15);
        assert!((rf.value - 0.583_709).abs() < 1e-6);
        assert_relative_eq!(rf.theta_star, 1.5, max_relative = 1e-15);
    }

    #[test]
    fn poisson_rate_function_at_mean_is_zero() {
        let d = RateDistribution::poisson(2.0).unwrap();
        let rf = d.rate_function(2.0).unwrap();
        assert_eq!(rf.value, 0.0);
        assert_eq!(rf.theta_star, 0.0);
    }

    #[test]
    fn two_point_atoms() {
        let d = RateDistribution::two_point(0.75, 1.0, 5.0).unwrap();
        let top = d.rate_function(5.0).unwrap();
        assert_relative_eq!(top.value, 4f64.ln(), max_relative = 1e-15);
        assert_eq!(top.theta_star, f64::INFINITY);
        assert!(matches!(
            d.rate_function(5.5),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn two_point_numeric_matches_closed_form() {
        let (p, lo, hi) = (0.75, 1.0, 5.0);
        let d = RateDistribution::two_point(p, lo, hi).unwrap();
        for &a in &[1.2, 2.0, 3.3, 4.9] {
            let rf = d.rate_function(a).unwrap();
            let theta = ((a - lo) * p / ((hi - a) * (1.0 - p))).ln() / (hi - lo);
            assert_relative_eq!(rf.theta_star, theta, max_relative = 1e-10, epsilon = 1e-12);
            let w = (a - lo) / (hi - lo);
            let closed = w * (w / (1.0 - p)).ln() + (1.0 - w) * ((1.0 - w) / p).ln();
            assert_relative_eq!(rf.value, closed, max_relative = 1e-10, epsilon = 1e-13);
        }
    }

    #[test]
    fn numeric_matches_closed_forms() {
        let dists = [
            RateDistribution::exponential(2.5).unwrap(),
            RateDistribution::gamma(3.0, 1.5).unwrap(),
            RateDistribution::poisson(2.0).unwrap(),
        ];
        for d in dists {
            for &a in &[0.3, 1.0, 2.0, 4.5] {
                let c = d.rate_function(a).unwrap();
                let n = d.rate_function_numeric(a).unwrap();
                assert_relative_eq!(c.value, n.value, max_relative = 1e-10, epsilon = 1e-13);
                assert_relative_eq!(
                    c.theta_star,
                    n.theta_star,
                    max_relative = 1e-10,
                    epsilon = 1e-13
                );
                assert_relative_eq!(c.cgf_second_deriv, n.cgf_second_deriv, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn cgf_outside_domain_errors() {
        let d = RateDistribution::exponential(1.0).unwrap();
        assert!(d.cgf(1.0).is_err());
        assert!(d.cgf(f64::NAN).is_err());
        assert!(d.cgf(0.999).is_ok());
    }

    #[test]
    fn two_point_cgf_is_stable_for_large_arguments() {
        let d = RateDistribution::two_point(0.75, 1.0, 5.0).unwrap();
        let c = d.cgf_all(400.0).unwrap();
        assert!(c.value.is_finite());
        assert_relative_eq!(c.d1, 5.0, max_relative = 1e-12);
        let c = d.cgf_all(-400.0).unwrap();
        assert_relative_eq!(c.d1, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn lattice_families_have_no_bahadur_rao_constant() {
        let d = RateDistribution::poisson(2.0).unwrap();
        assert!(matches!(
            d.bahadur_rao_constant(3.0),
            Err(Error::Lattice { .. })
        ));
        let e = RateDistribution::exponential(2.5).unwrap();
        assert_relative_eq!(
            e.bahadur_rao_constant(1.0).unwrap(),
            1.0 / (1.5 * (2.0 * std::f64::consts::PI).sqrt()),
            max_relative = 1e-14
        );
        assert!(e.bahadur_rao_constant(0.2).is_err());
    }

    #[test]
    fn constructors_validate() {
        assert!(RateDistribution::exponential(0.0).is_err());
        assert!(RateDistribution::two_point(1.0, 1.0, 2.0).is_err());
        assert!(RateDistribution::two_point(0.5, 2.0, 2.0).is_err());
        assert!(RateDistribution::gamma(-1.0, 1.0).is_err());
    }

    #[test]
    fn parse_round_trip() {
        for s in [
            "exp:2.5",
            "gamma:1,2.5",
            "pois:2",
            "twopoint:0.75,1,5",
            "det:2",
        ] {
            let d: RateDistribution = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("exp".parse::<RateDistribution>().is_err());
        assert!("weibull:1".parse::<RateDistribution>().is_err());
        assert!("gamma:1".parse::<RateDistribution>().is_err());
        assert!("exp:x".parse::<RateDistribution>().is_err());
    }

    #[test]
    fn twisted_mean_matches_cgf_slope() {
        let dists = [
            RateDistribution::exponential(2.5).unwrap(),
            RateDistribution::gamma(2.0, 3.0).unwrap(),
            RateDistribution::poisson(2.0).unwrap(),
            RateDistribution::two_point(0.75, 1.0, 5.0).unwrap(),
        ];
        for d in dists {
            let t = d.twisted(0.7).unwrap();
            assert_relative_eq!(t.mean(), d.cgf_d1(0.7).unwrap(), max_relative = 1e-12);
            assert_relative_eq!(t.variance(), d.cgf_d2(0.7).unwrap(), max_relative = 1e-12);
        }
    }
}
