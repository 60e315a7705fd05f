use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use qteleport::harness::{self, BetaSpec, CoeffsSpec, HarnessError, RawConfig, Summary};

/// Controlled multi-qudit teleportation simulator.
#[derive(Parser)]
#[command(name = "qteleport", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exhaustively enumerate every outcome branch.
    Enumerate(RunArgs),
    /// Sample protocol runs.
    Montecarlo(RunArgs),
    /// Run a decoy-state eavesdropping detection campaign.
    Decoy(RunArgs),
    /// Enumerate over a grid of copy and controller counts.
    Sweep(RunArgs),
    /// Run the built-in checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file. Results go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv
    #[arg(long)]
    format: Option<String>,
    /// Trials (montecarlo) or rounds (decoy).
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// uniform, random:SEED, or comma-separated reals
    #[arg(long, value_parser = CoeffsSpec::parse_cli)]
    coeffs: Option<CoeffsSpec>,
    /// random:SEED, basis:K, K, or comma-separated reals
    #[arg(long, value_parser = BetaSpec::parse_cli)]
    beta: Option<BetaSpec>,
    /// none, measure_z_resend, measure_x_resend or random_basis_resend
    #[arg(long)]
    eve: Option<String>,
    /// structured or dense
    #[arg(long)]
    engine: Option<String>,
    /// Controllers (1-based) whose outcomes are withheld, comma-separated.
    #[arg(long, value_delimiter = ',')]
    withheld: Option<Vec<usize>>,
    #[arg(long)]
    abort_min_checks: Option<u64>,
    #[arg(long)]
    abort_max_rate: Option<f64>,
}

impl RunArgs {
    fn overrides(self, kind: &str) -> (Option<PathBuf>, RawConfig) {
        let raw = RawConfig {
            kind: Some(kind.to_string()),
            d: self.d,
            m: self.m,
            n: self.n,
            coeffs: self.coeffs,
            beta: self.beta,
            trials: self.trials,
            seed: self.seed,
            output: self.out,
            format: self.format,
            engine: self.engine,
            eve: self.eve,
            withheld: self.withheld,
            abort_min_checks: self.abort_min_checks,
            abort_max_rate: self.abort_max_rate,
        };
        (self.config, raw)
    }
}

fn describe(summary: &Summary) -> String {
    let opt = |v: &Option<f64>| v.map_or("n/a".to_string(), |x| x.to_string());
    match summary {
        Summary::Enumerate { rows, success_probability, theoretical_success_probability, min_success_fidelity, .. } => format!(
            "{rows} branches, P_success {success_probability} (theory {theoretical_success_probability}), min fidelity {}",
            opt(min_success_fidelity)
        ),
        Summary::Montecarlo { trials, successes, theoretical_success_probability, z_score, .. } => format!(
            "{successes}/{trials} succeeded (theory {theoretical_success_probability}), z {}",
            opt(z_score)
        ),
        Summary::Decoy { rounds, detections, expected_rate, abort, .. } => format!(
            "{detections}/{rounds} detections (expected rate {expected_rate}), abort {abort}"
        ),
        Summary::Sweep { rows, max_abs_deviation, .. } => {
            format!("{rows} grid points, max |P - P_theory| {max_abs_deviation:.2e}")
        }
    }
}

fn run(kind: &str, args: RunArgs) -> Result<(), HarnessError> {
    let started = Instant::now();
    let (path, overrides) = args.overrides(kind);
    let (base, text) = match &path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| HarnessError::Io {
                path: p.clone(),
                source,
            })?;
            (harness::parse_raw(&text)?, Some(text))
        }
        None => (RawConfig::default(), None),
    };
    let cfg = base.merge(overrides).validate(text.as_deref())?;
    let record = harness::run_campaign(&cfg)?;
    match &cfg.output {
        Some(out) => harness::write_record(&record, cfg.format, out)?,
        None => {
            let bytes = harness::render(&record, cfg.format)?;
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|source| HarnessError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })?;
        }
    }
    eprintln!(
        "{kind}: {} [{:.3}s]",
        describe(&record.summary),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn selftest() -> ExitCode {
    let checks = harness::run_selftest();
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (kind, args) = match cli.command {
        Command::Selftest => return selftest(),
        Command::Enumerate(a) => ("enumerate", a),
        Command::Montecarlo(a) => ("montecarlo", a),
        Command::Decoy(a) => ("decoy", a),
        Command::Sweep(a) => ("sweep", a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
