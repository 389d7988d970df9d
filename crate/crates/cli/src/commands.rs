//! Command implementations: parse the parameters, call the library, tabulate.

use crate::config::*;
use crate::output::{num, Table};
use num_complex::Complex;
use qtazrp::contour::{self, ExactProbability};
use qtazrp::fredholm::{self, NystromGrid};
use qtazrp::model::{ParticleConfig, StepConfig};
use qtazrp::qalgebra;
use qtazrp::simulator::{self, Initial, SimRun};
use qtazrp::validation::{self, Suite, SuiteOptions};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use std::fmt;

/// Failure of a command, classified by exit status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(qtazrp::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use qtazrp::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::Domain(_) | E::Config(_)) => 2,
            CliError::Core(E::Singular(_) | E::Numeric(_)) => 3,
            CliError::Core(E::Invariant(_) | E::Infeasible(_)) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<qtazrp::Error> for CliError {
    fn from(e: qtazrp::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Run-wide settings from the command line and the configuration file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Context {
    pub seed: Option<u64>,
    pub nodes: Option<usize>,
    pub samples: Option<u64>,
}

/// Output of a command plus any values that failed certification.
pub struct Outcome {
    pub table: Table,
    pub violations: Vec<String>,
}

fn parse<T: DeserializeOwned>(params: &Value) -> Result<T, CliError> {
    // A missing parameters object means "all defaults" for commands that allow it.
    let v = if params.is_null() { json!({}) } else { params.clone() };
    serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
}

fn config_check(r: Result<(), String>) -> Result<(), CliError> {
    r.map_err(CliError::Config)
}

fn nodes(ctx: &Context, own: Option<usize>, default: usize) -> usize {
    ctx.nodes.or(own).unwrap_or(default)
}

fn certify(p: &ExactProbability, tol: f64, what: String, violations: &mut Vec<String>) {
    if let Err(e) = p.certify(tol) {
        violations.push(format!("{what}: {e}"));
    }
}

fn prob_cells(p: &ExactProbability) -> [Value; 3] {
    [num(p.value), num(p.node_doubling_delta), num(p.imag_residual)]
}

pub const SIMULATE_SAMPLES: u64 = 10_000;

pub fn simulate(params: &Value, ctx: &Context) -> Result<Outcome, CliError> {
    let cfg: SimulateConfig = parse(params)?;
    config_check(cfg.m.check("m"))?;
    let samples = ctx.samples.or(cfg.samples).unwrap_or(SIMULATE_SAMPLES);
    let seed = ctx.seed.unwrap_or(0);
    let (initial, count) = match &cfg.initial {
        InitialSpec::Finite(y) => {
            let y = ParticleConfig::new(y.clone())?;
            let n = y.len();
            (Initial::Finite(y), n)
        }
        InitialSpec::Step { tracked } => (Initial::Step(StepConfig::new(*tracked)?), *tracked),
    };
    let ms = cfg.m.values();
    let pairs: Vec<(usize, i64)> = (1..=count).flat_map(|n| ms.iter().map(move |&m| (n, m))).collect();
    let keys: Vec<i64> = (0..pairs.len() as i64).collect();
    let run = SimRun { seed, profile: cfg.profile.clone(), initial, horizon: cfg.t };
    let table = simulator::estimate_distribution(
        samples,
        seed,
        &keys,
        |s| {
            let r = SimRun { seed: s, ..run.clone() };
            match &r.initial {
                Initial::Finite(_) => Ok(simulator::simulate_finite(&r, false)?.config.positions().to_vec()),
                Initial::Step(_) => Ok(simulator::simulate_step(&r, count, false)?.tracked),
            }
        },
        |x, k| {
            let (n, m) = pairs[k as usize];
            x[n - 1] > m
        },
    )?;
    let mut out = Table::new(&["particle", "M", "p_hat", "stderr", "samples", "method"]);
    for (k, &(n, m)) in pairs.iter().enumerate() {
        let k = k as i64;
        out.push(vec![json!(n), json!(m), num(table.p_hat(k)), num(table.standard_error(k)), json!(samples), json!("monte_carlo")]);
    }
    Ok(Outcome { table: out, violations: Vec::new() })
}

pub fn exact(params: &Value, ctx: &Context) -> Result<Outcome, CliError> {
    let cfg: ExactConfig = parse(params)?;
    let y = ParticleConfig::new(cfg.y.clone())?;
    let big_n = y.len();
    let p = &cfg.profile;
    let tol = validation::tol::DOUBLING_CIRCLE;
    let mut violations = Vec::new();
    if cfg.formula == Formula::Transition {
        let xs = cfg.x.as_ref().ok_or_else(|| CliError::Config("formula \"transition\" needs \"x\"".into()))?;
        let xs = xs.iter().map(|x| ParticleConfig::new(x.clone())).collect::<Result<Vec<_>, _>>()?;
        let lo = xs.iter().map(|x| x.x(x.len())).chain([y.x(big_n)]).min().unwrap_or(0);
        let hi = xs.iter().map(|x| x.x(1)).chain([y.x(1)]).max().unwrap_or(0);
        let c = contour::default_circle(p, lo, hi, nodes(ctx, cfg.nodes, 64))?;
        let mut out = Table::new(&["x", "value", "node_doubling_delta", "imag_residual", "method"]);
        for x in &xs {
            let v = contour::transition_probability(&y, x, cfg.t, p, &c)?;
            let label = x.positions().iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
            certify(&v, tol, format!("x = [{label}]"), &mut violations);
            let [a, b, d] = prob_cells(&v);
            out.push(vec![json!(label), a, b, d, json!("contour_transition")]);
        }
        return Ok(Outcome { table: out, violations });
    }
    let range = cfg.m.ok_or_else(|| CliError::Config("this formula needs \"m\"".into()))?;
    config_check(range.check("m"))?;
    let needs_n = matches!(cfg.formula, Formula::TaggedRight | Formula::TaggedLeft);
    let n = match (needs_n, cfg.n) {
        (true, Some(n)) if (1..=big_n).contains(&n) => n,
        (true, _) => return Err(CliError::Config(format!("\"n\" must lie in 1..={big_n}"))),
        (false, _) => big_n,
    };
    let lo = range.from.min(y.x(big_n)) - 1;
    let hi = range.to.max(y.x(1));
    let nested = matches!(cfg.formula, Formula::TaggedLeft | Formula::Rightmost);
    let (circle, fam) = if nested {
        (None, Some(contour::nested_family_for(p, lo, hi, big_n, nodes(ctx, cfg.nodes, 128))?))
    } else {
        (Some(contour::default_circle(p, lo, hi, nodes(ctx, cfg.nodes, 64))?), None)
    };
    let method = match cfg.formula {
        Formula::TaggedRight => "contour_right_tail",
        Formula::TaggedLeft => "contour_left_tail",
        Formula::Leftmost => "contour_leftmost",
        Formula::Rightmost => "contour_rightmost",
        Formula::Transition => unreachable!(),
    };
    let mut out = Table::new(&["M", "value", "node_doubling_delta", "imag_residual", "method"]);
    for m in range.values() {
        let v = match cfg.formula {
            Formula::TaggedRight => contour::dist_tagged_right(&y, n, m, cfg.t, p, circle.as_ref().expect("circle"))?,
            Formula::Leftmost => contour::dist_leftmost(&y, m, cfg.t, p, circle.as_ref().expect("circle"))?,
            Formula::TaggedLeft => contour::dist_tagged_left(&y, n, m, cfg.t, p, fam.as_ref().expect("family"))?,
            Formula::Rightmost => contour::dist_rightmost(&y, m, cfg.t, p, fam.as_ref().expect("family"))?,
            Formula::Transition => unreachable!(),
        };
        certify(&v, tol, format!("M = {m}"), &mut violations);
        let [a, b, d] = prob_cells(&v);
        out.push(vec![json!(m), a, b, d, json!(method)]);
    }
    if needs_n {
        out.summary.insert("n".into(), json!(n));
    }
    Ok(Outcome { table: out, violations })
}

pub fn step_dist(params: &Value, ctx: &Context) -> Result<Outcome, CliError> {
    let cfg: StepDistConfig = parse(params)?;
    config_check(cfg.m.check("m"))?;
    let zc = fredholm::zeta_circle(cfg.particle, cfg.profile.q())?;
    let mut violations = Vec::new();
    let mut out = Table::new(&["M", "p", "delta", "imag_residual", "method"]);
    for m in cfg.m.values() {
        let g = NystromGrid::Circle(fredholm::finite_time_circle(&cfg.profile, m, nodes(ctx, cfg.nodes, 64))?);
        let v = fredholm::step_distribution(cfg.particle, m, cfg.t, &cfg.profile, &g, &zc)?;
        certify(&v, validation::tol::DOUBLING_CIRCLE, format!("M = {m}"), &mut violations);
        let [a, b, d] = prob_cells(&v);
        out.push(vec![json!(m), a, b, d, json!("fredholm_zeta_quadrature")]);
    }
    Ok(Outcome { table: out, violations })
}

pub fn limit_dist(params: &Value, ctx: &Context) -> Result<Outcome, CliError> {
    let cfg: LimitDistConfig = parse(params)?;
    let taus = cfg.tau.values().map_err(CliError::Config)?;
    let zc = fredholm::zeta_circle(cfg.particle, cfg.q)?;
    let g = fredholm::line_grid().with_nodes(nodes(ctx, cfg.nodes, fredholm::LINE_NODES));
    let mut violations = Vec::new();
    let mut out = Table::new(&["tau", "p", "delta", "imag_residual", "method"]);
    for tau in taus {
        let v = fredholm::limiting_step_distribution(cfg.particle, tau, &cfg.betas, cfg.q, &g, &zc)?;
        certify(&v, validation::tol::DOUBLING_LINE, format!("tau = {tau}"), &mut violations);
        let [a, b, d] = prob_cells(&v);
        out.push(vec![num(tau), a, b, d, json!("limit_kernel_vertical_line")]);
    }
    Ok(Outcome { table: out, violations })
}

pub fn converge(params: &Value, ctx: &Context) -> Result<Outcome, CliError> {
    let cfg: ConvergeConfig = parse(params)?;
    if cfg.n.is_empty() {
        return Err(CliError::Config("\"n\" must list at least one scale".into()));
    }
    let zeta = Complex::new(cfg.zeta[0], cfg.zeta[1]);
    let rows = fredholm::asymptotic_convergence_study(&cfg.n, cfg.tau, &cfg.betas, zeta, cfg.q, nodes(ctx, cfg.nodes, fredholm::SADDLE_NODES))?;
    let mut violations = Vec::new();
    let mut out = Table::new(&["n", "deviation", "det_n_re", "det_n_im", "det_limit_re", "det_limit_im", "node_doubling_delta"]);
    for r in &rows {
        if !(r.det_n_delta < validation::tol::DOUBLING_CIRCLE) {
            violations.push(format!("n = {}: node doubling changed det_n by {:.3e}", r.n, r.det_n_delta));
        }
        out.push(vec![json!(r.n), num(r.deviation), num(r.det_n.re), num(r.det_n.im), num(r.det_limit.re), num(r.det_limit.im), num(r.det_n_delta)]);
    }
    if rows.len() >= 2 {
        out.summary.insert("loglog_slope".into(), num(fredholm::loglog_slope(&rows)));
        out.summary.insert("strictly_decreasing".into(), json!(rows.windows(2).all(|w| w[1].deviation < w[0].deviation)));
    }
    Ok(Outcome { table: out, violations })
}

pub fn validate(params: &Value, ctx: &Context) -> Result<Outcome, CliError> {
    let cfg: ValidateConfig = parse(params)?;
    let defaults = SuiteOptions::default();
    let opts = SuiteOptions { seed: ctx.seed.unwrap_or(defaults.seed), samples: ctx.samples.or(cfg.samples).unwrap_or(defaults.samples) };
    let checks = Suite::new(opts).run_all()?;
    let mut out = Table::new(&["id", "name", "passed", "detail"]);
    let mut violations = Vec::new();
    for c in &checks {
        eprintln!("{}", c.line());
        if !c.passed {
            violations.push(format!("check {} failed: {}", c.id, c.name));
        }
        out.push(vec![json!(c.id), json!(c.name), json!(c.passed), json!(c.detail)]);
    }
    out.summary.insert("passed".into(), json!(checks.iter().filter(|c| c.passed).count()));
    out.summary.insert("total".into(), json!(checks.len()));
    Ok(Outcome { table: out, violations })
}

pub fn constants(params: &Value, _ctx: &Context) -> Result<Outcome, CliError> {
    let cfg: ConstantsConfig = parse(params)?;
    let thetas = cfg.theta.values().map_err(CliError::Config)?;
    let mut out = Table::new(&["theta", "kappa", "f", "chi", "g", "sigma"]);
    for th in thetas {
        let c = qalgebra::scaling_constants(th, cfg.alpha, cfg.q)?;
        let opt = |x: Option<f64>| x.map(num).unwrap_or(Value::Null);
        out.push(vec![num(th), num(c.kappa), num(c.f), num(c.chi), opt(c.g), opt(c.sigma)]);
    }
    Ok(Outcome { table: out, violations: Vec::new() })
}
