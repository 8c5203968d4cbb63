use std::fs::File;
use std::io::{self, Write};

use mixpois::gamma_exact::GammaMixture;
use mixpois::queue::{mc_q, omegas, queue_approx};
use mixpois::sampling::{is_fast, is_slow, mc_p, RunPlan, Target};
use mixpois::staffing::{staffing_table, write_staffing_csv};
use mixpois::tail_asymptotics::approx_auto;
use mixpois::{Error, RateDistribution, RateKind, ServiceTime};

use crate::table::{Cell, Table};
use crate::{
    ApproxArgs, Command, ExactGammaArgs, MethodArg, OmegaArgs, Quantity, QueueApproxArgs,
    QueueSimArgs, ReproArgs, SimulateArgs, StaffArgs,
};

/// A failure reported on stderr together with the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NON_CONVERGENCE: u8 = 3;

impl CliError {
    fn validation(flag: &str, message: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_VALIDATION,
            message: format!("error: {flag}: {message}"),
        }
    }

    pub fn io(flag: &str, e: io::Error) -> Self {
        Self::validation(flag, e)
    }

    pub fn csv(e: csv::Error) -> Self {
        Self::validation("--output", e)
    }
}

fn flag_for(name: &str) -> &'static str {
    match name {
        "alpha" => "--alpha",
        "a" | "theta" => "--a",
        "N" | "i" => "--N",
        "lambda" | "beta" | "p" | "lambda1" | "lambda2" => "--dist",
        "E" => "--service",
        "eps" => "--eps",
        "tol" => "--tol",
        "runs" => "--runs",
        "shards" => "--shards",
        _ => "input",
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_non_convergence() {
            return CliError {
                code: EXIT_NON_CONVERGENCE,
                message: format!("error: non-convergence: {e}"),
            };
        }
        let flag = match &e {
            Error::Parse { what, .. } if *what == "service time" => "--service",
            Error::Parse { what, .. } if *what == "rate distribution" => "--dist",
            Error::Budget { .. } => "--runs",
            Error::Lattice { .. } => "--dist",
            Error::Regime { .. } => "--alpha",
            other => other.parameter().map(flag_for).unwrap_or("input"),
        };
        CliError::validation(flag, e)
    }
}

type CliResult = Result<(), CliError>;

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Approx(args) => approx(args),
        Command::ExactGamma(args) => exact_gamma(args),
        Command::Simulate(args) => simulate(args),
        Command::QueueApprox(args) => queue_approx_cmd(args),
        Command::QueueSim(args) => queue_sim(args),
        Command::Omega(args) => omega(args),
        Command::Staff(args) => staff(args),
        Command::Repro(args) => repro(args),
    }
}

fn parse_dist(s: &str) -> Result<RateDistribution, CliError> {
    Ok(s.parse::<RateDistribution>()?)
}

fn parse_service(s: &str) -> Result<ServiceTime, CliError> {
    Ok(s.parse::<ServiceTime>()?)
}

fn approx(args: ApproxArgs) -> CliResult {
    let dist = parse_dist(&args.dist)?;
    let (log_col, lin_col) = match args.quantity {
        Quantity::Point => ("log_p", "p"),
        Quantity::Tail => ("log_P", "P"),
    };
    let mut rows = Vec::new();
    for &n in &args.n {
        let pair = approx_auto(&dist, args.alpha, args.a, n)?;
        rows.push((
            n,
            match args.quantity {
                Quantity::Point => pair.point,
                Quantity::Tail => pair.tail,
            },
        ));
    }
    let mut t = Table::create(
        args.out.output.as_deref(),
        &[
            "N", "alpha", "a", "regime", "validity", "gamma", log_col, lin_col,
        ],
    )?;
    for (n, v) in rows {
        t.row(&[
            n.into(),
            args.alpha.into(),
            args.a.into(),
            v.regime.to_string().into(),
            v.validity.to_string().into(),
            v.gamma_exponent.into(),
            v.log_value.into(),
            v.value.into(),
        ])?;
    }
    t.finish()
}

fn exact_gamma(args: ExactGammaArgs) -> CliResult {
    let dist = parse_dist(&args.dist)?;
    let (beta, lambda) = match dist.kind() {
        RateKind::Exponential { rate } => (1.0, rate),
        RateKind::Gamma { shape, rate } => (shape, rate),
        _ => {
            return Err(CliError::validation(
                "--dist",
                "exact-gamma needs exp:<λ> or gamma:1,<λ>",
            ))
        }
    };
    if beta != 1.0 {
        return Err(CliError::validation(
            "--dist",
            "the expansions need gamma shape 1",
        ));
    }
    let mut rows = Vec::new();
    for &n in &args.n {
        let g = GammaMixture::new(beta, lambda, args.alpha, n)?;
        let exact = g.ln_p_exact(args.a)?;
        let asym = g.p_asym(args.a)?;
        rows.push((n, exact, asym));
    }
    let mut t = Table::create(
        args.out.output.as_deref(),
        &[
            "N",
            "alpha",
            "a",
            "p_exact",
            "log_p_exact",
            "p_asym",
            "log_p_asym",
            "ratio",
            "near_truncation_jump",
        ],
    )?;
    for (n, exact, asym) in rows {
        t.row(&[
            n.into(),
            args.alpha.into(),
            args.a.into(),
            exact.exp().into(),
            exact.into(),
            asym.value.value.into(),
            asym.value.log_value.into(),
            (asym.value.log_value - exact).exp().into(),
            asym.near_truncation_jump.into(),
        ])?;
    }
    t.finish()
}

fn target(q: Quantity) -> Target {
    match q {
        Quantity::Point => Target::Point,
        Quantity::Tail => Target::Tail,
    }
}

fn simulate(args: SimulateArgs) -> CliResult {
    let dist = parse_dist(&args.dist)?;
    let plan = RunPlan::new(args.run.runs, args.run.seed, args.run.shards);
    let name = match args.method {
        MethodArg::Mc => "mc",
        MethodArg::IsFast => "is-fast",
        MethodArg::IsSlow => "is-slow",
    };
    if args.method == MethodArg::IsSlow && args.quantity == Quantity::Point {
        return Err(CliError::validation(
            "--quantity",
            "is-slow estimates the tail probability P only",
        ));
    }
    let mut rows = Vec::new();
    for &n in &args.n {
        let r = match args.method {
            MethodArg::Mc => mc_p(&dist, args.alpha, args.a, n, target(args.quantity), &plan)?,
            MethodArg::IsFast => {
                is_fast(&dist, args.alpha, args.a, n, target(args.quantity), &plan)?
            }
            MethodArg::IsSlow => is_slow(&dist, args.alpha, args.a, n, &plan)?,
        };
        rows.push((n, r));
    }
    let mut t = Table::create(
        args.out.output.as_deref(),
        &[
            "method",
            "N",
            "alpha",
            "a",
            "estimate",
            "log_estimate",
            "ci_halfwidth",
            "runs",
            "seed",
            "hits",
        ],
    )?;
    for (n, r) in rows {
        t.row(&[
            name.into(),
            n.into(),
            args.alpha.into(),
            args.a.into(),
            r.estimate.into(),
            r.log_estimate().into(),
            r.ci_halfwidth_95.into(),
            r.runs.into(),
            r.base_seed.into(),
            r.hits.into(),
        ])?;
    }
    t.finish()
}

fn queue_approx_cmd(args: QueueApproxArgs) -> CliResult {
    let dist = parse_dist(&args.dist)?;
    let service = parse_service(&args.service)?;
    let mut rows = Vec::new();
    for &n in &args.n {
        for &a in &args.a {
            rows.push((n, a, queue_approx(&dist, &service, n, a)?));
        }
    }
    let mut t = Table::create(
        args.out.output.as_deref(),
        &[
            "N",
            "a",
            "theta_star",
            "sigma2",
            "log_q",
            "log_Q",
            "Q",
            "q",
            "hypothesis_violated",
        ],
    )?;
    for (n, a, q) in rows {
        t.row(&[
            n.into(),
            a.into(),
            q.theta_star.into(),
            q.sigma2.into(),
            q.log_q_check.into(),
            q.log_big_q_check.into(),
            q.big_q_check().into(),
            q.q_check().into(),
            q.hypothesis_violated.into(),
        ])?;
    }
    t.finish()
}

fn queue_sim(args: QueueSimArgs) -> CliResult {
    let dist = parse_dist(&args.dist)?;
    let service = parse_service(&args.service)?;
    let plan = RunPlan::new(args.run.runs, args.run.seed, args.run.shards);
    let mut rows = Vec::new();
    for &n in &args.n {
        for &a in &args.a {
            rows.push((
                n,
                a,
                mc_q(&dist, &service, n, a, target(args.quantity), &plan)?,
            ));
        }
    }
    let mut t = Table::create(
        args.out.output.as_deref(),
        &[
            "N",
            "a",
            "estimate",
            "log_estimate",
            "ci_halfwidth",
            "runs",
            "seed",
            "hits",
        ],
    )?;
    for (n, a, r) in rows {
        t.row(&[
            n.into(),
            a.into(),
            r.estimate.into(),
            r.log_estimate().into(),
            r.ci_halfwidth_95.into(),
            r.runs.into(),
            r.base_seed.into(),
            r.hits.into(),
        ])?;
    }
    t.finish()
}

fn omega(args: OmegaArgs) -> CliResult {
    let service = parse_service(&args.service)?;
    let w = omegas(args.n, &service)?;
    let mut t = Table::create(args.out.output.as_deref(), &["i", "omega_i"])?;
    for (i, x) in w.iter().enumerate() {
        t.row(&[(i as u64 + 1).into(), (*x).into()])?;
    }
    t.finish()
}

fn staff(args: StaffArgs) -> CliResult {
    let dist = parse_dist(&args.dist)?;
    let services = args
        .service
        .iter()
        .map(|s| parse_service(s))
        .collect::<Result<Vec<_>, _>>()?;
    for &e in &args.eps {
        if !(e > 0.0 && e < 1.0) {
            return Err(CliError::validation(
                "--eps",
                format!("{e} must lie strictly between 0 and 1"),
            ));
        }
    }
    if !(args.tol > 0.0) {
        return Err(CliError::validation("--tol", "must be positive"));
    }
    if args.n == 0 {
        return Err(CliError::validation("--N", "must be at least 1"));
    }
    let plan = RunPlan::new(args.verify_runs, args.seed, args.shards);
    let verify = (args.verify_runs > 0).then_some(&plan);
    let rows = staffing_table(&dist, &services, args.n, &args.eps, args.tol, verify)?;
    let sink: Box<dyn Write> = match &args.out.output {
        Some(p) => Box::new(File::create(p).map_err(|e| CliError::io("--output", e))?),
        None => Box::new(io::stdout().lock()),
    };
    write_staffing_csv(&rows, sink)?;
    let failed = rows.iter().find_map(|r| r.result.as_ref().err());
    match failed {
        Some(e) if e.is_non_convergence() => Err(CliError::from(e.clone())),
        _ => Ok(()),
    }
}

fn repro(args: ReproArgs) -> CliResult {
    let runs = args.runs;
    let seed = args.seed;
    let shards = args.shards;
    let mut lines: Vec<(&str, String)> = Vec::new();
    for alpha in ["5", "1.5", "1", "0.5", "0.2"] {
        lines.push((
            "fig1",
            format!(
                "mixpois exact-gamma --dist exp:2.5 --a 1 --alpha {alpha} --N 5,10,20,40,80,160"
            ),
        ));
    }
    let fast_grid = "2,4,6,8,10,12,14,16,18,20,22,24,26,28,30,32,34,36,38,40";
    let slow_grid = "4,8,16,32,64,128,256,512,1024";
    for method in ["mc", "is-fast"] {
        lines.push((
            "fig2a",
            format!(
                "mixpois simulate --method {method} --dist exp:1 --alpha 2 --a 2 --N {fast_grid} \
                 --runs {runs} --seed {seed} --shards {shards}"
            ),
        ));
    }
    for method in ["mc", "is-slow"] {
        lines.push((
            "fig2b",
            format!(
                "mixpois simulate --method {method} --dist exp:2.5 --alpha 0.5 --a 2 --N {slow_grid} \
                 --runs {runs} --seed {seed} --shards {shards}"
            ),
        ));
    }
    let queue_grid = "50,100,150,200,250,300,350,400,450,500";
    lines.push((
        "fig4",
        format!("mixpois queue-approx --dist pois:0.1 --service exp:1 --a 0.2 --N {queue_grid}"),
    ));
    lines.push((
        "fig4",
        format!(
            "mixpois queue-sim --dist pois:0.1 --service exp:1 --a 0.2 --N {queue_grid} \
             --runs {runs} --seed {seed} --shards {shards}"
        ),
    ));
    let services = "exp:0.05,exp:0.5,exp:1,det:0.05,det:0.5,det:1,pareto:0.05,pareto:0.5,pareto:1";
    for (name, dist) in [("table1", "pois:2"), ("table2", "twopoint:0.75,1,5")] {
        lines.push((
            name,
            format!(
                "mixpois staff --dist {dist} --service {services} --N 100 --eps 1e-3,1e-4 \
                 --verify-runs {runs} --seed {seed} --shards {shards}"
            ),
        ));
    }
    let mut t = Table::create(args.out.output.as_deref(), &["artifact", "command"])?;
    for (name, cmd) in lines {
        t.row(&[Cell::from(name), Cell::from(cmd)])?;
    }
    t.finish()
}
