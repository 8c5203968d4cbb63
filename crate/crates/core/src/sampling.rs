//! Monte Carlo and importance-sampling estimators of `P_N(a)` and `p_N(a)`.
//!
//! Runs are split into shards, each driven by its own ChaCha stream derived
//! from a base seed and the shard index, so results are reproducible for a
//! fixed `(seed, shards)` pair regardless of thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{require_positive, Error, Result};
use crate::numerics::ln_gamma;
use crate::rates::RateDistribution;

/// Draws one Poisson variate.
///
/// Sequential inversion for means below 30, otherwise Hörmann's transformed
/// rejection with squeeze (PTRD).
pub fn poisson_variate<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < 30.0 {
        poisson_inversion(rng, mean)
    } else {
        poisson_ptrd(rng, mean)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 && cdf < u {
            // Rounding left a sliver of mass unreachable; restart.
            return poisson_inversion(rng, mean);
        }
    }
    k
}

fn poisson_ptrd<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_gamma(k + 1.0).expect("k >= 0");
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Identifies the random stream of one shard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamPartition {
    pub base_seed: u64,
    pub shard_index: u32,
    pub shard_count: u32,
}

impl StreamPartition {
    /// Generator for this shard: seeded by `base_seed`, with the ChaCha
    /// stream id set to the shard index.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.shard_index as u64);
        rng
    }
}

/// Default cap on the number of elementary draws one estimate may use.
pub const DEFAULT_OP_BUDGET: f64 = 1e12;

/// How many runs to make and how to split them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPlan {
    pub runs: u64,
    pub base_seed: u64,
    pub shards: u32,
    pub op_budget: f64,
}

impl RunPlan {
    pub fn new(runs: u64, base_seed: u64, shards: u32) -> Self {
        RunPlan {
            runs,
            base_seed,
            shards,
            op_budget: DEFAULT_OP_BUDGET,
        }
    }

    fn validate(&self, draws_per_run: f64) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::param("runs", 0.0, "need at least one run"));
        }
        if self.shards == 0 {
            return Err(Error::param("shards", 0.0, "need at least one shard"));
        }
        let requested = self.runs as f64 * draws_per_run;
        if requested > self.op_budget {
            return Err(Error::Budget {
                requested,
                limit: self.op_budget,
            });
        }
        Ok(())
    }

    /// Number of runs assigned to shard `i`; the remainder goes to the first shards.
    pub fn shard_runs(&self, i: u32) -> u64 {
        let base = self.runs / self.shards as u64;
        let extra = (i as u64) < self.runs % self.shards as u64;
        base + extra as u64
    }
}

/// Mergeable running mean and variance (Welford, merged with Chan's rule).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    /// Number of non-zero observations.
    pub hits: u64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        if x != 0.0 {
            self.hits += 1;
        }
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
        self.hits += other.hits;
    }
}

/// Summary of one estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorResult {
    pub estimate: f64,
    pub sample_variance: f64,
    pub runs: u64,
    /// Half-width of the normal 95% confidence interval.
    pub ci_halfwidth_95: f64,
    /// Empirical `E[w²]`.
    pub second_moment: f64,
    /// Number of runs with a non-zero contribution.
    pub hits: u64,
    pub base_seed: u64,
}

impl EstimatorResult {
    pub fn from_accumulator(acc: &Accumulator, base_seed: u64) -> Self {
        let n = acc.count as f64;
        let sample_variance = if acc.count > 1 {
            acc.m2 / (n - 1.0)
        } else {
            0.0
        };
        EstimatorResult {
            estimate: acc.mean,
            sample_variance,
            runs: acc.count,
            ci_halfwidth_95: 1.959_963_984_540_054 * (sample_variance / n).sqrt(),
            second_moment: acc.mean * acc.mean + acc.m2 / n,
            hits: acc.hits,
            base_seed,
        }
    }

    pub fn log_estimate(&self) -> f64 {
        self.estimate.ln()
    }

    /// CI half-width over the estimate; infinite when nothing was hit.
    pub fn relative_ci(&self) -> f64 {
        if self.estimate > 0.0 {
            self.ci_halfwidth_95 / self.estimate
        } else {
            f64::INFINITY
        }
    }

    /// Standard error of the estimate.
    pub fn standard_error(&self) -> f64 {
        (self.sample_variance / self.runs as f64).sqrt()
    }
}

/// Runs `per_run` over every shard of the plan and merges in shard order.
pub fn run_sharded<F>(plan: &RunPlan, draws_per_run: f64, per_run: F) -> Result<EstimatorResult>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    plan.validate(draws_per_run)?;
    let parts: Vec<Accumulator> = (0..plan.shards)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamPartition {
                base_seed: plan.base_seed,
                shard_index: i,
                shard_count: plan.shards,
            }
            .rng();
            let mut acc = Accumulator::default();
            for _ in 0..plan.shard_runs(i) {
                acc.push(per_run(&mut rng));
            }
            acc
        })
        .collect();
    let mut total = Accumulator::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(EstimatorResult::from_accumulator(&total, plan.base_seed))
}

/// Which probability an estimator targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// `P_N(a) = P(count >= Na)`.
    Tail,
    /// `p_N(a) = P(count = Na)`; `Na` must be an integer.
    Point,
    /// `Σ_{k=Na}^{K} p_N(k/N)`, built from point estimates; fast sampler only.
    TailBySum { upper: u64 },
}

pub(crate) fn count_threshold(n: f64, a: f64) -> f64 {
    let na = n * a;
    let rounded = na.round();
    if (na - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded
    } else {
        na.ceil()
    }
}

fn integer_count(n: f64, a: f64) -> Result<u64> {
    let na = n * a;
    let k = na.round();
    if (na - k).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::param(
            "a",
            a,
            format!("N a = {na} must be an integer for point probabilities"),
        ));
    }
    Ok(k as u64)
}

/// Number of rate draws averaged: `N^α` for gamma-type rates, rounded otherwise.
pub fn slot_count(dist: &RateDistribution, alpha: f64, n: f64) -> f64 {
    let slots = n.powf(alpha);
    if dist.divisible_sums() {
        slots
    } else {
        slots.round().max(1.0)
    }
}

fn check_inputs(alpha: f64, a: f64, n: f64) -> Result<()> {
    require_positive("alpha", alpha)?;
    require_positive("a", a)?;
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::param("N", n, "must be at least 1"));
    }
    Ok(())
}

/// Crude Monte Carlo: draw `X̄`, then `Pois(N X̄)`, and record the indicator.
pub fn mc_p(
    dist: &RateDistribution,
    alpha: f64,
    a: f64,
    n: f64,
    target: Target,
    plan: &RunPlan,
) -> Result<EstimatorResult> {
    check_inputs(alpha, a, n)?;
    let slots = slot_count(dist, alpha, n);
    let (k, exact) = match target {
        Target::Tail => (count_threshold(n, a) as u64, false),
        Target::Point => (integer_count(n, a)?, true),
        Target::TailBySum { .. } => {
            return Err(Error::regime(
                "crude Monte Carlo",
                "summed point estimates need the fast sampler",
            ))
        }
    };
    let scale = n / slots;
    let dist = *dist;
    run_sharded(plan, 2.0, move |rng| {
        let s = dist.sample_sum(rng, slots);
        let z = poisson_variate(rng, scale * s);
        let hit = if exact { z == k } else { z >= k };
        if hit {
            1.0
        } else {
            0.0
        }
    })
}

// ln[pmf(z; N x̄) / pmf(z; c)] with c the sampling mean.
fn log_poisson_ratio(z: f64, mean_true: f64, mean_sampling: f64) -> f64 {
    if mean_true == 0.0 {
        return if z == 0.0 {
            mean_sampling
        } else {
            f64::NEG_INFINITY
        };
    }
    z * (mean_true / mean_sampling).ln() - (mean_true - mean_sampling)
}

/// Importance sampling for `α > 1`: the count is drawn from `Pois(Na)`
/// and reweighted by the likelihood ratio against `Pois(N X̄)`, with `X̄`
/// drawn under the original law.
pub fn is_fast(
    dist: &RateDistribution,
    alpha: f64,
    a: f64,
    n: f64,
    target: Target,
    plan: &RunPlan,
) -> Result<EstimatorResult> {
    check_inputs(alpha, a, n)?;
    let slots = slot_count(dist, alpha, n);
    let scale = n / slots;
    let dist = *dist;
    match target {
        Target::Tail => {
            let k = count_threshold(n, a);
            let mean = n * a;
            run_sharded(plan, 2.0, move |rng| {
                let m = scale * dist.sample_sum(rng, slots);
                let z = poisson_variate(rng, mean) as f64;
                if z >= k {
                    log_poisson_ratio(z, m, mean).exp()
                } else {
                    0.0
                }
            })
        }
        Target::Point => {
            let k = integer_count(n, a)? as f64;
            run_sharded(plan, 2.0, move |rng| {
                let m = scale * dist.sample_sum(rng, slots);
                let z = poisson_variate(rng, k) as f64;
                if z == k {
                    log_poisson_ratio(z, m, k).exp()
                } else {
                    0.0
                }
            })
        }
        Target::TailBySum { upper } => {
            let k0 = integer_count(n, a)?;
            if upper < k0 {
                return Err(Error::param(
                    "upper",
                    upper as f64,
                    format!("must be at least N a = {k0}"),
                ));
            }
            let terms = (upper - k0 + 1) as f64;
            run_sharded(plan, 1.0 + terms, move |rng| {
                let m = scale * dist.sample_sum(rng, slots);
                let mut total = 0.0;
                for k in k0..=upper {
                    let kf = k as f64;
                    let z = poisson_variate(rng, kf) as f64;
                    if z == kf {
                        total += log_poisson_ratio(z, m, kf).exp();
                    }
                }
                total
            })
        }
    }
}

/// Importance sampling for `α < 1`: the rates are drawn from the law tilted
/// by `θ_a = I_X'(a)` and reweighted by `exp(r Λ_X(θ_a) - θ_a Σ X_i)`, where
/// `r` is the number of rate draws. Requires `ν < a < b₊`.
pub fn is_slow(
    dist: &RateDistribution,
    alpha: f64,
    a: f64,
    n: f64,
    plan: &RunPlan,
) -> Result<EstimatorResult> {
    check_inputs(alpha, a, n)?;
    if a >= dist.support_sup() {
        return Err(Error::infeasible(
            a,
            "the tilted sampler needs a below the support maximum",
        ));
    }
    let rf = dist.rate_function(a)?;
    let theta = rf.theta_star;
    if !(theta > 0.0) {
        return Err(Error::param(
            "a",
            a,
            format!("must exceed the mean rate {}", dist.mean()),
        ));
    }
    let slots = slot_count(dist, alpha, n);
    let tilted = dist.twisted(theta)?;
    let log_norm = slots * dist.cgf(theta)?;
    let scale = n / slots;
    let k = count_threshold(n, a);
    run_sharded(plan, 2.0, move |rng| {
        let s = tilted.sample_sum(rng, slots);
        let z = poisson_variate(rng, scale * s) as f64;
        if z >= k {
            (log_norm - theta * s).exp()
        } else {
            0.0
        }
    })
}

/// Estimator choice for [`efficiency_diagnostic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    MonteCarlo(Target),
    IsFast(Target),
    IsSlow,
}

/// Everything needed to run one estimator at any `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub method: Method,
    pub dist: RateDistribution,
    pub alpha: f64,
    pub a: f64,
    pub plan: RunPlan,
}

impl EstimatorConfig {
    pub fn run(&self, n: f64) -> Result<EstimatorResult> {
        match self.method {
            Method::MonteCarlo(t) => mc_p(&self.dist, self.alpha, self.a, n, t, &self.plan),
            Method::IsFast(t) => is_fast(&self.dist, self.alpha, self.a, n, t, &self.plan),
            Method::IsSlow => is_slow(&self.dist, self.alpha, self.a, n, &self.plan),
        }
    }
}

/// One grid point of an efficiency study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyRow {
    pub n: f64,
    pub result: EstimatorResult,
    /// `ln E[w²] / N^γ`.
    pub log_second_moment_scaled: f64,
    /// `2 ln(estimate) / N^γ`.
    pub twice_log_estimate_scaled: f64,
    /// `ln E[w²] / (2 ln estimate)`; tends to 1 for an efficient estimator.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    pub rows: Vec<EfficiencyRow>,
    /// True when the ratio at the largest `N` is at least 0.9.
    pub pass: bool,
}

/// Runs the estimator over `n_grid` and compares `E[w²]` to the squared estimate
/// on the log scale, with `γ = min(α, 1)`.
pub fn efficiency_diagnostic(config: &EstimatorConfig, n_grid: &[f64]) -> Result<EfficiencyReport> {
    let gamma = config.alpha.min(1.0);
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let result = config.run(n)?;
        let speed = n.powf(gamma);
        let lm2 = result.second_moment.ln();
        let le = result.estimate.ln();
        rows.push(EfficiencyRow {
            n,
            result,
            log_second_moment_scaled: lm2 / speed,
            twice_log_estimate_scaled: 2.0 * le / speed,
            ratio: lm2 / (2.0 * le),
        });
    }
    let pass = rows.last().map(|r| r.ratio >= 0.9).unwrap_or(false);
    Ok(EfficiencyReport { rows, pass })
}
