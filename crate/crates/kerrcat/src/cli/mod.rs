//! The `kerrcat` command line: `list`, `validate <file>` and `<experiment> --config <file>`.
//!
//! Exit codes: 0 success, 2 physics or numerical failure, 3 fit failure, 64 usage or
//! configuration error, 74 I/O error.

pub mod config;
pub mod experiments;
pub mod registry;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::KerrcatError;
pub use config::{validate, Diagnostic, Level, RunConfig};
pub use registry::{find_experiment, listing, Experiment, REGISTRY};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PHYSICS: i32 = 2;
pub const EXIT_FIT: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

pub const RESULTS_SCHEMA: &str = "kerrcat.run/1";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration")]
    Config(Vec<Diagnostic>),
    #[error(transparent)]
    Physics(#[from] KerrcatError),
    #[error("{0}")]
    Io(String),
}

impl From<Diagnostic> for CliError {
    fn from(d: Diagnostic) -> Self {
        CliError::Config(vec![d])
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Physics(e) if e.is_fit_failure() => EXIT_FIT,
            CliError::Physics(KerrcatError::InvalidParams { .. } | KerrcatError::MissingStarkInput) => EXIT_USAGE,
            CliError::Physics(_) => EXIT_PHYSICS,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "kerrcat",
    version,
    about = "Kerr-cat qubit simulator",
    after_help = "Run an experiment with `kerrcat <experiment> --config <file.ini> [--out DIR] [--seed N] [--jobs N] [--fock-dim N]`."
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List experiments with their figure tags.
    List,
    /// Check a configuration file without running it.
    Validate { config: PathBuf },
    /// Run an experiment (see `list`).
    #[command(external_subcommand)]
    Run(Vec<OsString>),
}

#[derive(Parser, Debug)]
#[command(name = "kerrcat", no_binary_name = true)]
struct RunArgs {
    /// Experiment name, as printed by `kerrcat list`.
    experiment: String,
    /// INI file; its `experiment` key must match.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for results.json and CSV tables.
    #[arg(long, default_value = "kerrcat-out")]
    out: PathBuf,
    /// Overrides the config's `seed` (default 7).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parameter sweeps.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the config's Fock-space truncation.
    #[arg(long = "fock-dim")]
    fock_dim: Option<usize>,
}

/// Parse `argv` (including the program name), run, print, and return the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("KERRCAT_LOG", "error")).try_init();
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => return clap_exit(e),
    };
    let res = match args.command {
        Command::List => {
            print!("{}", listing());
            Ok(())
        }
        Command::Validate { config } => cmd_validate(&config),
        Command::Run(rest) => match RunArgs::try_parse_from(rest) {
            Ok(r) => cmd_run(&r),
            Err(e) => return clap_exit(e),
        },
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(e) => {
            report(&e);
            e.exit_code()
        }
    }
}

fn clap_exit(e: clap::Error) -> i32 {
    let _ = e.print();
    if e.use_stderr() {
        EXIT_USAGE
    } else {
        EXIT_OK
    }
}

fn report(e: &CliError) {
    match e {
        CliError::Config(ds) => {
            for d in ds {
                eprintln!("{d}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(path).map_err(CliError::Config)?;
    let ds = validate(&cfg);
    for d in &ds {
        println!("{d}");
    }
    if ds.iter().any(|d| d.level == Level::Error) {
        return Err(CliError::Config(Vec::new()));
    }
    if ds.is_empty() {
        println!("ok: {}", cfg.experiment().unwrap_or(""));
    }
    Ok(())
}

/// Load, check and execute one run, returning the results document without writing it.
pub fn execute(name: &str, cfg: RunConfig, seed: Option<u64>, fock_dim: Option<usize>) -> Result<(serde_json::Value, Vec<(String, String)>), CliError> {
    let exp = find_experiment(name).ok_or_else(|| CliError::Usage(format!("unknown experiment `{name}`; try `kerrcat list`")))?;
    if let Some(declared) = cfg.experiment() {
        if declared != name {
            return Err(Diagnostic::error(Some("experiment"), format!("config is for `{declared}`, not `{name}`")).into());
        }
    }
    let mut cfg = cfg;
    cfg.set("experiment", name);
    // A run is strict: unknown keys are errors here, warnings under `validate`.
    let ds: Vec<Diagnostic> = validate(&cfg)
        .into_iter()
        .map(|mut d| {
            d.level = Level::Error;
            d
        })
        .collect();
    if !ds.is_empty() {
        return Err(CliError::Config(ds));
    }
    let seed = match seed {
        Some(s) => s,
        None => cfg.usize("seed")? as u64,
    };
    let ctx = experiments::Context { cfg, seed, fock_dim };
    let t0 = Instant::now();
    let out = (exp.run)(&ctx)?;
    let doc = json!({
        "schema": RESULTS_SCHEMA,
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": exp.name,
        "figure": exp.figure,
        "config": ctx.cfg.entries,
        "seed": seed,
        "results": out.results,
        "diagnostics": out.diagnostics,
        "wall_time_s": t0.elapsed().as_secs_f64(),
    });
    Ok((doc, out.tables))
}

fn cmd_run(r: &RunArgs) -> Result<(), CliError> {
    if let Some(j) = r.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let cfg = RunConfig::load(&r.config).map_err(|ds| {
        if ds.iter().any(|d| d.key.is_none() && d.message.contains("cannot read")) {
            CliError::Io(ds[0].message.clone())
        } else {
            CliError::Config(ds)
        }
    })?;
    let (doc, tables) = execute(&r.experiment, cfg, r.seed, r.fock_dim)?;
    let io = |e: std::io::Error, p: &Path| CliError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(&r.out).map_err(|e| io(e, &r.out))?;
    let path = r.out.join("results.json");
    let text = serde_json::to_string_pretty(&doc).expect("json values serialize");
    std::fs::write(&path, text + "\n").map_err(|e| io(e, &path))?;
    for (name, body) in &tables {
        let p = r.out.join(name);
        std::fs::write(&p, body).map_err(|e| io(e, &p))?;
    }
    println!("{}", path.display());
    Ok(())
}
