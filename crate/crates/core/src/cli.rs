//! Command-line entry point.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::check::run_check;
use crate::experiments::{parse_config, run, ExperimentKind, ResolvedConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

const SCHEMA_HINT: &str = "expected a JSON object with optional keys: schema_version (1), seed, \
grid {n, depth, d, quad_refine}, kernel {label: hilbert | power {n, gamma} | zero {n}}, ensemble, \
field (iid | multiscale), threshold_multiple, s, i, p, m, lattice {size, period}, tolerances; \
see docs/config.md";

#[derive(Debug, Parser)]
#[command(name = "nccz", version, about = "Noncommutative Calderon-Zygmund experiments on dyadic grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for report files.
    #[arg(long, global = true, env = "NCCZ_OUTPUT_DIR", default_value = "reports")]
    pub output_dir: PathBuf,

    /// Overrides the configured seed; echoed in the report.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Run every module's invariant suite and print a pass/fail table.
    Check,
    /// L_2 pseudo-localisation decay in the shift s.
    Pseudoloc,
    /// L_p pseudo-localisation decay exponents.
    PseudolocLp,
    /// Weak (1,1) ratios and their stability under refinement.
    Weaktype,
    /// Operator norms of the Phi_i / Psi_i blocks.
    Phipsi,
    /// Littlewood-Paley C_p growth counterexample.
    Lpgrowth,
}

impl Command {
    fn kind(self) -> Option<ExperimentKind> {
        match self {
            Command::Check => None,
            Command::Pseudoloc => Some(ExperimentKind::Pseudoloc),
            Command::PseudolocLp => Some(ExperimentKind::PseudolocLp),
            Command::Weaktype => Some(ExperimentKind::Weaktype),
            Command::Phipsi => Some(ExperimentKind::Phipsi),
            Command::Lpgrowth => Some(ExperimentKind::Lpgrowth),
        }
    }
}

fn load_config(kind: ExperimentKind, path: Option<&Path>, seed: Option<u64>) -> Result<ResolvedConfig> {
    let path = path.ok_or_else(|| Error::Config(format!("--config is required; {SCHEMA_HINT}")))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}; {SCHEMA_HINT}", path.display())))?;
    let cfg = parse_config(&text).map_err(|e| Error::Config(format!("{}: {e}; {SCHEMA_HINT}", path.display())))?;
    ResolvedConfig::resolve(kind, &cfg, seed)
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return EXIT_PASS;
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            let _ = writeln!(err, "error: --jobs must be >= 1");
            return EXIT_CONFIG;
        }
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e @ (Error::Config(_) | Error::Json(_) | Error::InvalidGrid(_) | Error::InvalidKernel(_))) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAIL
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let Some(kind) = cli.command.kind() else {
        let rep = run_check(cli.seed.unwrap_or(1))?;
        write!(out, "{}", rep.render())?;
        let ok = rep.passed();
        writeln!(out, "{}", if ok { "all checks passed" } else { "some checks FAILED" })?;
        return Ok(if ok { EXIT_PASS } else { EXIT_FAIL });
    };
    let config = load_config(kind, cli.config.as_deref(), cli.seed)?;
    if cli.verbose > 0 {
        writeln!(out, "{}", serde_json::to_string_pretty(&config)?)?;
    }
    let report = run(&config)?;
    let files = report.write_to(&cli.output_dir)?;
    for v in &report.verdicts {
        writeln!(out, "{:<28} {:>14.6} {:<24} {}", v.name, v.value, v.bound, v.status)?;
    }
    if cli.verbose > 0 {
        for n in &report.notes {
            writeln!(out, "note: {n}")?;
        }
        for f in &files {
            writeln!(out, "wrote {}", f.display())?;
        }
    }
    writeln!(out, "{} finished in {:.2} s", report.experiment, report.wall_time_s)?;
    Ok(if report.passed() { EXIT_PASS } else { EXIT_FAIL })
}
