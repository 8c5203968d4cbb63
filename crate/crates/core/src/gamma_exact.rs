//! Closed forms when the rate is gamma distributed.
//!
//! With `X ~ Gamma(β, λ)` the sum of `N^α` copies is `Gamma(N^α β, λ)`, so the
//! count is negative binomial and `p_N(a)` is available exactly. For
//! exponential rates (`β = 1`) the log of `p_N` also has an explicit expansion
//! in powers of `N`, truncated where the powers stop growing.

use crate::error::{require_positive, Error, Result};
use crate::numerics::{ln_gamma, ln_gamma_ratio, LogSumExp};
use crate::tail_asymptotics::{AsymptoticValue, Regime, Validity};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MAX_SERIES_ORDER: usize = 1_000_000;
const JUMP_WINDOW: f64 = 0.05;

/// Gamma-distributed rates resampled `N^α` times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMixture {
    /// Shape `β` of one rate draw.
    pub beta: f64,
    /// Rate `λ` of one rate draw.
    pub lambda: f64,
    pub alpha: f64,
    pub n: f64,
}

/// Truncated expansion of `ln p_N(a)` with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesApprox {
    pub value: AsymptoticValue,
    /// Leading coefficient at index 0, then the correction coefficients.
    pub coefficients: Vec<f64>,
    /// The exponent of the boundary term is within a small window of zero,
    /// so a tiny change in `α` adds or drops an `O(1)` term.
    pub near_truncation_jump: bool,
}

fn integer_count(n: f64, a: f64) -> Result<f64> {
    let na = n * a;
    let k = na.round();
    if (na - k).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::param(
            "a",
            a,
            format!("N a = {na} is not an integer"),
        ));
    }
    Ok(k)
}

impl GammaMixture {
    pub fn new(beta: f64, lambda: f64, alpha: f64, n: f64) -> Result<Self> {
        require_positive("beta", beta)?;
        require_positive("lambda", lambda)?;
        require_positive("alpha", alpha)?;
        if !(n >= 1.0) || !n.is_finite() {
            return Err(Error::param("N", n, "must be at least 1"));
        }
        Ok(GammaMixture {
            beta,
            lambda,
            alpha,
            n,
        })
    }

    /// Negative binomial shape `r = N^α β`.
    pub fn shape(&self) -> f64 {
        self.n.powf(self.alpha) * self.beta
    }

    /// Scale `t = N^{1-α}` mapping the rate sum to the Poisson mean.
    pub fn poisson_scale(&self) -> f64 {
        self.n.powf(1.0 - self.alpha)
    }

    /// Mean count `N β / λ`.
    pub fn mean_count(&self) -> f64 {
        self.shape() * self.poisson_scale() / self.lambda
    }

    fn ln_q(&self) -> (f64, f64) {
        let t = self.poisson_scale();
        // ln(λ/(λ+t)) and ln(t/(λ+t)) without cancellation.
        (-(t / self.lambda).ln_1p(), -(self.lambda / t).ln_1p())
    }

    /// `ln P(count = k)`.
    pub fn ln_pmf_count(&self, k: f64) -> Result<f64> {
        if !(k >= 0.0) || k.fract() != 0.0 {
            return Err(Error::param("k", k, "count must be a non-negative integer"));
        }
        let r = self.shape();
        let (ln_fail, ln_succ) = self.ln_q();
        Ok(ln_gamma_ratio(r, k)? - ln_gamma(k + 1.0)? + r * ln_fail + k * ln_succ)
    }

    /// `ln p_N(a)`; `Na` must be an integer.
    pub fn ln_p_exact(&self, a: f64) -> Result<f64> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::param("a", a, "must be non-negative and finite"));
        }
        self.ln_pmf_count(integer_count(self.n, a)?)
    }

    pub fn p_exact(&self, a: f64) -> Result<f64> {
        Ok(self.ln_p_exact(a)?.exp())
    }

    /// `ln P_N(a)`, summing the upper tail in log space.
    ///
    /// The sum stops once a geometric bound on the remainder falls below
    /// `1e-17` of the running total.
    pub fn ln_tail_exact(&self, a: f64) -> Result<f64> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::param("a", a, "must be non-negative and finite"));
        }
        let na = self.n * a;
        let rounded = na.round();
        let k0 = if (na - rounded).abs() <= 1e-9 * rounded.max(1.0) {
            rounded
        } else {
            na.ceil()
        };
        if k0 == 0.0 {
            return Ok(0.0);
        }
        let r = self.shape();
        let (_, ln_succ) = self.ln_q();
        let q = ln_succ.exp();
        let mut acc = LogSumExp::new();
        let mut k = k0;
        let mut log_term = self.ln_pmf_count(k)?;
        let cap = 1e9;
        loop {
            acc.add(log_term);
            let ratio = (k + r) / (k + 1.0) * q;
            let m = ratio.max(q);
            if m < 1.0 {
                let remainder = log_term + (m / (1.0 - m)).ln();
                if remainder < acc.value() + (1e-17f64).ln() {
                    return Ok(acc.value());
                }
            }
            log_term += ratio.ln();
            k += 1.0;
            if k - k0 > cap {
                return Err(Error::no_convergence(
                    "negative binomial tail",
                    format!("more than {cap} terms"),
                ));
            }
        }
    }

    pub fn tail_exact(&self, a: f64) -> Result<f64> {
        Ok(self.ln_tail_exact(a)?.exp())
    }

    fn require_exponential(&self) -> Result<()> {
        if self.beta != 1.0 {
            return Err(Error::param(
                "beta",
                self.beta,
                "the series expansions need beta = 1",
            ));
        }
        Ok(())
    }

    /// Truncated expansion of `ln p_N(a)` for `α > 1`.
    pub fn p_asym_fast(&self, a: f64) -> Result<SeriesApprox> {
        self.require_exponential()?;
        require_positive("a", a)?;
        if !(self.alpha > 1.0) {
            return Err(Error::param(
                "alpha",
                self.alpha,
                "the fast expansion needs alpha > 1",
            ));
        }
        let order = series_order(1.0 / (self.alpha - 1.0))?;
        let coeffs = fast_series_coefficients(self.lambda, a, order);
        let n = self.n;
        let mut log_value = coeffs[0] * n;
        for (k, c) in coeffs.iter().enumerate().skip(1) {
            log_value += c * n.powf((1.0 - self.alpha) * k as f64 + 1.0);
        }
        log_value -= 0.5 * (LN_2PI + (a * n).ln());
        Ok(SeriesApprox {
            value: series_value(log_value, Regime::FastExact, 1.0),
            coefficients: coeffs,
            near_truncation_jump: near_jump(1.0 / (self.alpha - 1.0)),
        })
    }

    /// Truncated expansion of `ln p_N(a)` for `α < 1`.
    pub fn p_asym_slow(&self, a: f64) -> Result<SeriesApprox> {
        self.require_exponential()?;
        require_positive("a", a)?;
        if !(self.alpha < 1.0) {
            return Err(Error::param(
                "alpha",
                self.alpha,
                "the slow expansion needs alpha < 1",
            ));
        }
        let pivot = self.alpha / (1.0 - self.alpha);
        let order = series_order(pivot)?;
        let coeffs = slow_series_coefficients(self.lambda, a, order);
        let n = self.n;
        let mut log_value = coeffs[0] * n.powf(self.alpha);
        for (k, c) in coeffs.iter().enumerate().skip(1) {
            log_value += c * n.powf((self.alpha - 1.0) * k as f64 + self.alpha);
        }
        log_value += (0.5 * self.alpha - 1.0) * n.ln() - 0.5 * LN_2PI - a.ln();
        Ok(SeriesApprox {
            value: series_value(log_value, Regime::SlowIExact, self.alpha),
            coefficients: coeffs,
            near_truncation_jump: near_jump(pivot),
        })
    }

    /// Closed-form approximation of `p_N(a)` at `α = 1`.
    pub fn p_asym_intermediate(&self, a: f64) -> Result<SeriesApprox> {
        self.require_exponential()?;
        require_positive("a", a)?;
        if (self.alpha - 1.0).abs() > 1e-12 {
            return Err(Error::param(
                "alpha",
                self.alpha,
                "the intermediate formula needs alpha = 1",
            ));
        }
        let l = self.lambda;
        let n = self.n;
        let rate = a * (a * (1.0 + l) / (1.0 + a)).ln() + ((1.0 + l) / (l * (1.0 + a))).ln();
        let log_value = -n * rate - 0.5 * (LN_2PI + (n * a * (a + 1.0)).ln());
        Ok(SeriesApprox {
            value: series_value(log_value, Regime::Intermediate, 1.0),
            coefficients: vec![-rate],
            near_truncation_jump: false,
        })
    }

    /// Dispatches on `α` to the matching expansion.
    pub fn p_asym(&self, a: f64) -> Result<SeriesApprox> {
        if (self.alpha - 1.0).abs() <= 1e-12 {
            self.p_asym_intermediate(a)
        } else if self.alpha > 1.0 {
            self.p_asym_fast(a)
        } else {
            self.p_asym_slow(a)
        }
    }
}

fn series_order(pivot: f64) -> Result<usize> {
    let order = pivot.floor();
    if !(order < MAX_SERIES_ORDER as f64) {
        return Err(Error::param(
            "alpha",
            pivot,
            "alpha is too close to 1 for the truncated expansion",
        ));
    }
    Ok(order as usize)
}

fn near_jump(pivot: f64) -> bool {
    let nearest = pivot.round();
    nearest >= 1.0 && (pivot - nearest).abs() < JUMP_WINDOW
}

fn series_value(log_value: f64, regime: Regime, gamma_exponent: f64) -> AsymptoticValue {
    AsymptoticValue {
        log_value,
        value: log_value.exp(),
        regime,
        validity: Validity::Valid,
        gamma_exponent,
    }
}

/// `ξ_0, …, ξ_order` of the fast expansion for exponential rates with rate `λ`.
pub fn fast_series_coefficients(lambda: f64, a: f64, order: usize) -> Vec<f64> {
    let inv = 1.0 / lambda;
    let mut out = Vec::with_capacity(order + 1);
    out.push(-a * (lambda * a).ln() + a - inv);
    for k in 1..=order {
        let kf = k as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let first = inv.powi(k as i32) * (a / kf - inv / (kf + 1.0));
        let second = a.powi(k as i32 + 1) * (1.0 / kf - 1.0 / (kf + 1.0));
        out.push(sign * (first - second));
    }
    out
}

/// `ζ_0, …, ζ_order` of the slow expansion for exponential rates with rate `λ`.
pub fn slow_series_coefficients(lambda: f64, a: f64, order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    out.push((lambda * a).ln() + 1.0 - lambda * a);
    for k in 1..=order {
        let kf = k as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let first = lambda.powi(k as i32) * (1.0 / kf - a * lambda / (kf + 1.0));
        let second = a.powi(-(k as i32)) * (1.0 / kf - 1.0 / (kf + 1.0));
        out.push(sign * (first - second));
    }
    out
}
