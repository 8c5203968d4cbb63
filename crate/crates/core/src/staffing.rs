//! Server counts meeting a target overflow probability.
//!
//! The level `a(ε)` solves `Q̌_N(a) = ε` by bisection, and the staffing level
//! is `⌈N a(ε)⌉`. Monte Carlo can audit the result at the solved level.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::output::fmt_sig;
use crate::queue::{
    load_and_variance, load_threshold, mc_q, queue_approx, ServiceKind, ServiceTime,
};
use crate::rates::RateDistribution;
use crate::sampling::{EstimatorResult, RunPlan, Target};

/// Default stopping tolerance on `|Q̌_N(a) - ε|`.
pub const DEFAULT_TOL: f64 = 1e-9;

const MAX_BISECTIONS: usize = 500;

/// Solved staffing level for one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaffingResult {
    pub a_eps: f64,
    /// `⌊N a(ε)⌋`.
    pub servers_floor: u64,
    /// `⌈N a(ε)⌉`, the recommended number of servers.
    pub servers_ceil: u64,
    /// `Q̌_N(⌊N a⌋ / N)`; infinite when that level is at or below the mean load.
    pub q_at_floor: f64,
    /// `Q̌_N(⌈N a⌉ / N)`.
    pub q_at_ceil: f64,
    pub m1: f64,
    pub m_inf: f64,
    pub epsilon: f64,
    /// Set when the service law breaks the smoothness the approximation assumes.
    pub hypothesis_violated: bool,
}

fn big_q(dist: &RateDistribution, service: &ServiceTime, n: f64, a: f64) -> Result<f64> {
    Ok(queue_approx(dist, service, n, a)?.big_q_check())
}

/// Finds `a(ε)` with `|Q̌_N(a) - ε| < tol`.
///
/// The lower end starts just above the mean load; the upper end moves out
/// by doubling steps until `Q̌` falls below `ε`.
pub fn solve_staffing(
    dist: &RateDistribution,
    service: &ServiceTime,
    n: u64,
    epsilon: f64,
    tol: f64,
) -> Result<StaffingResult> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param(
            "eps",
            epsilon,
            "must lie strictly between 0 and 1",
        ));
    }
    if n == 0 {
        return Err(Error::param("N", 0.0, "must be at least 1"));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::param("tol", tol, "must be positive and finite"));
    }
    let nf = n as f64;
    let threshold = load_threshold(dist, service);
    let mut lo = threshold * (1.0 + 1e-6);
    if big_q(dist, service, nf, lo)? <= epsilon {
        return Err(Error::infeasible(
            lo,
            format!("Q̌ is already below eps = {epsilon} at the mean load"),
        ));
    }
    let mut step = 0.1 * threshold.max(0.1);
    let mut hi = lo + step;
    let mut q_hi = big_q(dist, service, nf, hi)?;
    while q_hi >= epsilon {
        lo = hi;
        step *= 2.0;
        hi += step;
        q_hi = big_q(dist, service, nf, hi).map_err(|e| match e {
            Error::Infeasible { .. } => Error::no_convergence(
                "staffing bracket",
                format!("eps = {epsilon} is not reachable inside the tilt domain"),
            ),
            other => other,
        })?;
        if !hi.is_finite() {
            return Err(Error::no_convergence(
                "staffing bracket",
                "upper bracket diverged",
            ));
        }
    }
    let mut a = 0.5 * (lo + hi);
    let mut converged = (q_hi - epsilon).abs() < tol;
    if converged {
        a = hi;
    }
    for _ in 0..MAX_BISECTIONS {
        if converged {
            break;
        }
        a = 0.5 * (lo + hi);
        let q = big_q(dist, service, nf, a)?;
        if (q - epsilon).abs() < tol {
            converged = true;
        } else if q > epsilon {
            lo = a;
        } else {
            hi = a;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    if !converged {
        return Err(Error::no_convergence(
            "staffing bisection",
            format!("bracket [{lo}, {hi}] collapsed before |Q̌ - eps| < {tol}"),
        ));
    }
    let servers_floor = (nf * a).floor() as u64;
    let servers_ceil = (nf * a).ceil() as u64;
    let level_q = |servers: u64| -> Result<f64> {
        let level = servers as f64 / nf;
        if level <= threshold {
            Ok(f64::INFINITY)
        } else {
            big_q(dist, service, nf, level)
        }
    };
    let lv = load_and_variance(dist, service, n)?;
    Ok(StaffingResult {
        a_eps: a,
        servers_floor,
        servers_ceil,
        q_at_floor: level_q(servers_floor)?,
        q_at_ceil: level_q(servers_ceil)?,
        m1: lv.m1,
        m_inf: lv.m_inf,
        epsilon,
        hypothesis_violated: !service.twice_differentiable_on_01(),
    })
}

/// Monte Carlo estimate of `Q_N(a(ε))` for a solved scenario.
pub fn verify_staffing(
    dist: &RateDistribution,
    service: &ServiceTime,
    n: u64,
    result: &StaffingResult,
    plan: &RunPlan,
) -> Result<EstimatorResult> {
    mc_q(dist, service, n, result.a_eps, Target::Tail, plan)
}

/// One row of a staffing table; failures are kept per row.
#[derive(Debug, Clone, PartialEq)]
pub struct StaffingRow {
    pub service: ServiceTime,
    pub epsilon: f64,
    pub result: Result<StaffingResult>,
    pub verification: Option<Result<EstimatorResult>>,
}

/// Solves every `(service, ε)` combination, in service-major order.
///
/// When `verify` is given, each solved row is audited by Monte Carlo with
/// that plan.
pub fn staffing_table(
    dist: &RateDistribution,
    services: &[ServiceTime],
    n: u64,
    epsilons: &[f64],
    tol: f64,
    verify: Option<&RunPlan>,
) -> Result<Vec<StaffingRow>> {
    if services.is_empty() {
        return Err(Error::param(
            "service",
            0.0,
            "need at least one service time",
        ));
    }
    if epsilons.is_empty() {
        return Err(Error::param("eps", 0.0, "need at least one target"));
    }
    let jobs: Vec<(ServiceTime, f64)> = services
        .iter()
        .flat_map(|s| epsilons.iter().map(move |&e| (*s, e)))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(service, epsilon)| {
            let result = solve_staffing(dist, &service, n, epsilon, tol);
            let verification = match (&result, verify) {
                (Ok(r), Some(plan)) => Some(verify_staffing(dist, &service, n, r, plan)),
                _ => None,
            };
            StaffingRow {
                service,
                epsilon,
                result,
                verification,
            }
        })
        .collect())
}

fn family_name(kind: ServiceKind) -> &'static str {
    match kind {
        ServiceKind::Exponential => "exponential",
        ServiceKind::Deterministic => "deterministic",
        ServiceKind::Pareto2 => "pareto2",
    }
}

/// Column names written by [`write_staffing_csv`].
pub const STAFFING_COLUMNS: [&str; 18] = [
    "F",
    "eps",
    "E",
    "a_eps",
    "servers_floor",
    "servers_ceil",
    "m1_ceil",
    "m1",
    "m_inf",
    "q_floor_over_eps",
    "q_ceil_over_eps",
    "log_q_floor",
    "log_q_ceil",
    "hypothesis_violated",
    "mc_over_eps",
    "mc_ci_halfwidth_over_eps",
    "mc_runs",
    "error",
];

/// Writes rows as CSV with a header.
pub fn write_staffing_csv<W: Write>(rows: &[StaffingRow], out: W) -> Result<()> {
    let io_err = |e: csv::Error| Error::Parse {
        what: "CSV output",
        input: String::new(),
        reason: e.to_string(),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(STAFFING_COLUMNS).map_err(io_err)?;
    for row in rows {
        let mut rec = vec![
            family_name(row.service.kind).to_string(),
            fmt_sig(row.epsilon),
            fmt_sig(row.service.mean),
        ];
        match &row.result {
            Ok(r) => {
                rec.extend([
                    fmt_sig(r.a_eps),
                    r.servers_floor.to_string(),
                    r.servers_ceil.to_string(),
                    fmt_sig(r.m1.ceil()),
                    fmt_sig(r.m1),
                    fmt_sig(r.m_inf),
                    fmt_sig(r.q_at_floor / r.epsilon),
                    fmt_sig(r.q_at_ceil / r.epsilon),
                    fmt_sig(r.q_at_floor.ln()),
                    fmt_sig(r.q_at_ceil.ln()),
                    r.hypothesis_violated.to_string(),
                ]);
                let (mc, ci, runs, err) = match &row.verification {
                    Some(Ok(v)) => (
                        fmt_sig(v.estimate / r.epsilon),
                        fmt_sig(v.ci_halfwidth_95 / r.epsilon),
                        v.runs.to_string(),
                        String::new(),
                    ),
                    Some(Err(e)) => (String::new(), String::new(), String::new(), e.to_string()),
                    None => (String::new(), String::new(), String::new(), String::new()),
                };
                rec.extend([mc, ci, runs, err]);
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 14));
                rec.push(e.to_string());
            }
        }
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Parse {
        what: "CSV output",
        input: String::new(),
        reason: e.to_string(),
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_headline_row() {
        let d = RateDistribution::poisson(2.0).unwrap();
        let s = ServiceTime::exponential(0.5).unwrap();
        let r = solve_staffing(&d, &s, 100, 1e-3, DEFAULT_TOL).unwrap();
        assert!((r.a_eps - 1.2602).abs() < 1e-4, "a = {}", r.a_eps);
        assert_eq!(r.servers_ceil, 127);
        assert!((r.q_at_floor / 1e-3 - 1.0053).abs() < 0.01);
        assert!((r.q_at_ceil / 1e-3 - 0.7802).abs() < 0.01);
        assert!(r.q_at_ceil <= r.epsilon && r.epsilon <= r.q_at_floor);
    }

    #[test]
    fn validation() {
        let d = RateDistribution::poisson(2.0).unwrap();
        let s = ServiceTime::exponential(0.5).unwrap();
        assert!(solve_staffing(&d, &s, 100, 0.0, DEFAULT_TOL).is_err());
        assert!(solve_staffing(&d, &s, 100, 1.0, DEFAULT_TOL).is_err());
        assert!(solve_staffing(&d, &s, 0, 1e-3, DEFAULT_TOL).is_err());
        assert!(staffing_table(&d, &[s], 100, &[], DEFAULT_TOL, None).is_err());
        assert!(staffing_table(&d, &[], 100, &[1e-3], DEFAULT_TOL, None).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let d = RateDistribution::poisson(2.0).unwrap();
        let s = ServiceTime::exponential(0.5).unwrap();
        let rows = staffing_table(&d, &[s], 100, &[1e-3, 1e-4], DEFAULT_TOL, None).unwrap();
        let mut buf = Vec::new();
        write_staffing_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("F,eps,E,a_eps"));
        assert!(lines[1].starts_with("exponential,0.001,0.5,1.2602"));
    }
}
