//! `qtazrp`: command-line front end for the q-TAZRP library.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use commands::{CliError, Context, Outcome};
use config::ExperimentConfig;
use output::{envelope_rows, Envelope};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const BUILD: &str = env!("QTAZRP_BUILD_ID");

#[derive(Debug, Parser)]
#[command(name = "qtazrp", version = BUILD, about = "Exact formulas, Fredholm determinants and simulation for the q-TAZRP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file (see docs/config.md).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// CSV output path; the JSON envelope is written next to it. Without it, CSV goes to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Quadrature nodes, overriding the configuration.
    #[arg(long, global = true, value_name = "N")]
    nodes: Option<usize>,
    /// Monte Carlo samples, overriding the configuration.
    #[arg(long, global = true, value_name = "N")]
    samples: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Monte Carlo tail probabilities of tagged particles.
    Simulate,
    /// Contour-integral formulas for a finite system.
    Exact,
    /// Fredholm determinant law of x_m(t) from the step initial condition.
    StepDist,
    /// Large-time limiting law of the m-th particle.
    LimitDist,
    /// Distance between finite-n and limiting determinants.
    Converge,
    /// Run the acceptance battery.
    Validate,
    /// KPZ scaling constants over a grid of densities.
    Constants,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Exact => "exact",
            Command::StepDist => "step-dist",
            Command::LimitDist => "limit-dist",
            Command::Converge => "converge",
            Command::Validate => "validate",
            Command::Constants => "constants",
        }
    }

    fn run(self, params: &Value, ctx: &Context) -> Result<Outcome, CliError> {
        match self {
            Command::Simulate => commands::simulate(params, ctx),
            Command::Exact => commands::exact(params, ctx),
            Command::StepDist => commands::step_dist(params, ctx),
            Command::LimitDist => commands::limit_dist(params, ctx),
            Command::Converge => commands::converge(params, ctx),
            Command::Validate => commands::validate(params, ctx),
            Command::Constants => commands::constants(params, ctx),
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None if matches!(cli.command, Command::Validate) => ExperimentConfig { command: None, seed: None, out: None, parameters: Value::Null },
        None => return Err(CliError::Config(format!("`{}` needs --config", cli.command.name()))),
    };
    if let Some(c) = &file.command {
        if c != cli.command.name() {
            return Err(CliError::Config(format!("configuration is for `{c}`, not `{}`", cli.command.name())));
        }
    }
    Ok(file)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let file = load(cli)?;
    if cli.workers == Some(0) || cli.nodes == Some(0) || cli.samples == Some(0) {
        return Err(CliError::Config("--workers, --nodes and --samples must be positive".into()));
    }
    let ctx = Context { seed: cli.seed.or(file.seed), nodes: cli.nodes, samples: cli.samples };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.workers.unwrap_or(0)).build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let out = cli.out.clone().or(file.out.as_ref().map(PathBuf::from));
    if let (Some(out), Some(cfg)) = (&out, &cli.config) {
        let same = |p: &Path| p.canonicalize().ok().zip(cfg.canonicalize().ok()).is_some_and(|(a, b)| a == b);
        if same(out) || same(&output::envelope_path(out)) {
            return Err(CliError::Config(format!("output would overwrite the configuration {}", cfg.display())));
        }
    }
    let Outcome { table, violations } = pool.install(|| cli.command.run(&file.parameters, &ctx))?;

    match out {
        Some(path) => {
            let env = Envelope {
                command: cli.command.name(),
                build: BUILD,
                seed: ctx.seed.unwrap_or(0),
                inputs: &file.parameters,
                columns: &table.columns,
                rows: envelope_rows(&table),
                summary: &table.summary,
                wall_time_seconds: started.elapsed().as_secs_f64(),
            };
            let env = serde_json::to_value(&env).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
            let mut env = env;
            env["violations"] = json!(violations);
            output::write_files(&path, &table, &env)?;
        }
        None => {
            table.write_csv(std::io::stdout().lock()).map_err(std::io::Error::other)?;
            for (k, v) in &table.summary {
                eprintln!("{k} = {v}");
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        for v in &violations {
            eprintln!("certification failed: {v}");
        }
        Err(CliError::Core(qtazrp::Error::Invariant(format!("{} value(s) failed certification", violations.len()))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qtazrp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
