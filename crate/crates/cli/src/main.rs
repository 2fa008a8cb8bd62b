mod artifacts;
mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use artifacts::{now_ms, Artifacts, RunManifest};
use commands::{Ctx, Kind};
use error::CliError;

/// Coupling, optimal-transport and contraction-rate experiments for SDEs.
///
/// Scenario keys can be overridden with dotted flags placed anywhere on the
/// command line, e.g. `--model.params.K=2` or `--grid.dt=0.001`.
#[derive(Parser)]
#[command(name = "contraction-lab", version)]
struct Cli {
    /// Directory for artifacts and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    output_dir: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate condition constants (K_p, EB constants, EP) of a model.
    CheckConditions(ConfigArgs),
    /// Lyapunov constants N, ε, c1, c from (K1, K2, r0).
    Rates {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        k2: Option<f64>,
        #[arg(long)]
        r0: Option<f64>,
    },
    /// Simulate coupled pairs and dump paths and distance moments.
    Simulate(ConfigArgs),
    /// Exact Wasserstein or Orlicz distance between two point clouds.
    Wasserstein(ConfigArgs),
    /// Contraction curves, rate fit and envelope check.
    Contraction(ConfigArgs),
    /// Survival function of the coupling time.
    CouplingTime(ConfigArgs),
    /// Gradient estimate check at probe points.
    Kuwada(ConfigArgs),
    /// W2 distance to a sample of the invariant law.
    Equilibrium(ConfigArgs),
    /// Orlicz level g_Φ of a point cloud over time.
    Gphi(ConfigArgs),
    /// Parse and check a scenario without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Scenario kind; taken from the `command` key or inferred when absent.
        #[arg(long, value_enum)]
        command: Option<Kind>,
    },
}

/// Pulls `--a.b=value` overrides out of the arguments before clap sees them.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        match config::parse_override(&a) {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => rest.push(a),
        }
    }
    (rest, overrides)
}

/// File, then overrides, then the seed variable; strips and checks `command`.
fn load(path: Option<&Path>, overrides: &[(String, String)], expected: Option<Kind>) -> Result<(Kind, Value), CliError> {
    let mut value = match path {
        Some(p) => config::read(p)?,
        None => Value::Object(Map::new()),
    };
    for (k, v) in overrides {
        config::apply_override(&mut value, k, v)?;
    }
    let named = match value.as_object_mut().and_then(|m| m.remove("command")) {
        None => None,
        Some(Value::String(s)) => {
            Some(Kind::from_name(&s).ok_or_else(|| CliError::config("/command", format!("unknown command {s:?}")))?)
        }
        Some(_) => return Err(CliError::config("/command", "expected a string")),
    };
    let kind = match (expected, named) {
        (Some(e), Some(n)) if e != n => {
            return Err(CliError::config(
                "/command",
                format!("scenario is for `{}`, not `{}`", n.name(), e.name()),
            ))
        }
        (Some(e), _) => e,
        (None, Some(n)) => n,
        (None, None) => Kind::infer(&value),
    };
    if kind.has_seed() {
        if let Some(seed) = config::seed_from_env()? {
            if let Value::Object(m) = &mut value {
                m.insert("seed".into(), json!(seed));
            }
        }
    }
    Ok((kind, value))
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<bool, CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::config("", "--workers must be positive"));
        }
        // Fails only if a pool exists already, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (kind, path, rates_flags) = match cli.command {
        Command::Validate { config, command } => {
            let (kind, value) = load(Some(&config), overrides, command)?;
            let ctx = Ctx {
                base_dir: commands::base_dir(Some(&config)),
            };
            let summary = commands::dispatch(kind, value, &ctx, None)?;
            println!(
                "{} scenario {} is valid (config sha256 {})",
                kind.name(),
                config.display(),
                config::config_digest(&summary.resolved)
            );
            return Ok(true);
        }
        Command::Rates { config, k1, k2, r0 } => (Kind::Rates, config, vec![("k1", k1), ("k2", k2), ("r0", r0)]),
        Command::CheckConditions(a) => (Kind::CheckConditions, Some(a.config), vec![]),
        Command::Simulate(a) => (Kind::Simulate, Some(a.config), vec![]),
        Command::Wasserstein(a) => (Kind::Wasserstein, Some(a.config), vec![]),
        Command::Contraction(a) => (Kind::Contraction, Some(a.config), vec![]),
        Command::CouplingTime(a) => (Kind::CouplingTime, Some(a.config), vec![]),
        Command::Kuwada(a) => (Kind::Kuwada, Some(a.config), vec![]),
        Command::Equilibrium(a) => (Kind::Equilibrium, Some(a.config), vec![]),
        Command::Gphi(a) => (Kind::Gphi, Some(a.config), vec![]),
    };
    let (kind, mut value) = load(path.as_deref(), overrides, Some(kind))?;
    for (key, v) in rates_flags {
        if let (Some(v), Value::Object(m)) = (v, &mut value) {
            m.insert(key.into(), json!(v));
        }
    }
    let ctx = Ctx {
        base_dir: commands::base_dir(path.as_deref()),
    };
    let started = now_ms();
    let mut out = Artifacts::new(&cli.output_dir)?;
    let summary = commands::dispatch(kind, value, &ctx, Some(&mut out))?;
    let n_files = out.files().len();
    let manifest = out.finish(RunManifest {
        tool: env!("CARGO_BIN_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: kind.name().into(),
        config_sha256: config::config_digest(&summary.resolved),
        seed: summary.seed,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        passed: summary.passed,
        files: Vec::new(),
    })?;
    println!(
        "{}: {} ({n_files} files, manifest {})",
        kind.name(),
        if summary.passed { "passed" } else { "FAILED" },
        manifest.display()
    );
    Ok(summary.passed)
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    // Usage errors exit 1 like any other error; 2 means a failed check.
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, &overrides) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
