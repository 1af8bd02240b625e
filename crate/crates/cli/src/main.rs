use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tqfi::fidelity::{bures_sq_from_fidelity, generalized_fidelity_truncated};
use tqfi::fisher::{self, FisherResult, QfiMethod, DEFAULT_DELTAS};
use tqfi::states::{self, Instance, UnitaryFamily};
use tqfi::verify::{self, SuiteConfig};
use tqfi::Error;

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(
    name = "tqfi",
    version,
    about = "Quantum Fisher information and its truncated lower bound"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one Fisher quantity and print it as JSON.
    Compute {
        #[arg(long)]
        instance: PathBuf,
        /// Truncation rank; omit for the untruncated QFI.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Finite-difference shift, repeatable.
        #[arg(long = "delta")]
        deltas: Vec<f64>,
    },
    /// Tabulate every route for m = 1..=d as CSV.
    SweepM {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long = "delta")]
        deltas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the generalized fidelity and its quotient over a grid of shifts.
    SweepDelta {
        #[arg(long)]
        instance: PathBuf,
        /// Truncation rank, defaults to d.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long = "delta")]
        deltas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a random instance.
    Random {
        #[arg(long)]
        d: usize,
        /// Defaults to d.
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suite and write its report.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Closed,
    Tsld,
    Fd,
    Eigenbasis,
    Sld,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::NonConvergent { .. }
            | Error::DeltaTooLarge { .. }
            | Error::RouteMismatch { .. }
            | Error::TruncationNotStrict { .. } => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(err: io::Error) -> Self {
        Failure::input(err.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(err: csv::Error) -> Self {
        Failure::input(err.to_string())
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Compute {
            instance,
            m,
            method,
            deltas,
        } => compute(&instance, m, method, &deltas),
        Command::SweepM { instance, deltas, out } => sweep_m(&instance, &deltas, out.as_deref()),
        Command::SweepDelta {
            instance,
            m,
            deltas,
            out,
        } => sweep_delta(&instance, m, &deltas, out.as_deref()),
        Command::Random { d, rank, seed, out } => random(d, rank.unwrap_or(d), seed, out.as_deref()),
        Command::Verify { config, out } => run_verify(config.as_deref(), out.as_deref()),
    }
}

fn load(path: &Path) -> Result<(UnitaryFamily, f64), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let instance = Instance::from_json(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok((instance.to_family()?, instance.theta))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// The user's grid, or the default grid scaled down until the trace guard admits it.
fn shift_grid(family: &UnitaryFamily, theta: f64, m: usize, user: &[f64], count: usize) -> Result<Vec<f64>, Failure> {
    if !user.is_empty() {
        return Ok(user.to_vec());
    }
    let deficit = 1.0 - family.truncate_pair(theta, 0.0, m)?.kept_weight();
    let start = match fisher::max_admissible_delta(deficit) {
        Some(max) if max < DEFAULT_DELTAS[0] => 0.99 * max,
        _ => DEFAULT_DELTAS[0],
    };
    Ok(verify::halving_grid(start, count))
}

fn require_m(m: Option<usize>, method: &str) -> Result<usize, Failure> {
    m.ok_or_else(|| Failure::input(format!("--method {method} requires --m")))
}

fn compute(path: &Path, m: Option<usize>, method: Option<MethodArg>, deltas: &[f64]) -> CmdResult {
    let (family, theta) = load(path)?;
    let result: FisherResult = match (method, m) {
        (None, Some(m)) => fisher::tqfi(&family, theta, m)?,
        (None, None) | (Some(MethodArg::Eigenbasis), None) => fisher::qfi(&family, theta, QfiMethod::Eigenbasis)?,
        (Some(MethodArg::Sld), None) => fisher::qfi(&family, theta, QfiMethod::Sld)?,
        (Some(MethodArg::Eigenbasis | MethodArg::Sld), Some(_)) => {
            return Err(Failure::input(
                "--method eigenbasis and sld compute the untruncated QFI; drop --m",
            ))
        }
        (Some(MethodArg::Closed), m) => fisher::tqfi_closed(&family, require_m(m, "closed")?)?,
        (Some(MethodArg::Tsld), m) => fisher::tqfi_tsld(&family, theta, require_m(m, "tsld")?)?,
        (Some(MethodArg::Fd), Some(m)) => {
            let grid = shift_grid(&family, theta, m, deltas, DEFAULT_DELTAS.len())?;
            fisher::tqfi_fd(&family, theta, m, &grid)?
        }
        (Some(MethodArg::Fd), None) => {
            let grid = if deltas.is_empty() {
                DEFAULT_DELTAS.to_vec()
            } else {
                deltas.to_vec()
            };
            fisher::qfi_fd(&family, theta, &grid)?
        }
    };
    let json = serde_json::to_string_pretty(&result).map_err(|e| Failure::input(e.to_string()))?;
    println!("{json}");
    Ok(0)
}

fn sweep_m(path: &Path, deltas: &[f64], out: Option<&Path>) -> CmdResult {
    let (family, theta) = load(path)?;
    let rank = family.rank();
    let qfi = fisher::qfi(&family, theta, QfiMethod::Eigenbasis)?.value;
    let mut rows = Vec::with_capacity(family.dim());
    for m in 1..=family.dim() {
        let dispatched = fisher::tqfi(&family, theta, m)?;
        let (closed, tsld) = if m < rank {
            (
                Some(fisher::tqfi_closed(&family, m)?.value),
                Some(fisher::tqfi_tsld(&family, theta, m)?.value),
            )
        } else {
            (None, None)
        };
        let grid = shift_grid(&family, theta, m, deltas, DEFAULT_DELTAS.len())?;
        let fd = fisher::tqfi_fd(&family, theta, m, &grid)?.value;
        rows.push([
            m.to_string(),
            closed.map(real).unwrap_or_default(),
            tsld.map(real).unwrap_or_default(),
            real(fd),
            real(qfi),
            real(qfi - dispatched.value),
            dispatched.degenerate_flag.to_string(),
        ]);
    }
    let mut writer = csv::Writer::from_writer(sink(out)?);
    writer.write_record(["m", "tqfi_closed", "tqfi_tsld", "tqfi_fd", "qfi", "gap", "degenerate"])?;
    for row in &rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(0)
}

fn sweep_delta(path: &Path, m: Option<usize>, deltas: &[f64], out: Option<&Path>) -> CmdResult {
    let (family, theta) = load(path)?;
    let m = m.unwrap_or(family.dim());
    let grid = shift_grid(&family, theta, m, deltas, 6)?;
    if grid.iter().any(|d| !d.is_finite() || *d <= 0.0) {
        return Err(Failure::input("shifts must be positive and finite"));
    }
    let deficit = 1.0 - family.truncate_pair(theta, 0.0, m)?.kept_weight();
    fisher::check_delta_guard(deficit, &grid)?;
    let mut rows = Vec::with_capacity(grid.len());
    for &delta in &grid {
        let f = generalized_fidelity_truncated(&family, theta, delta, m)?.value;
        rows.push([
            real(delta),
            real(f),
            real(8.0 * (1.0 - f) / (delta * delta)),
            real(bures_sq_from_fidelity(f)),
        ]);
    }
    let mut writer = csv::Writer::from_writer(sink(out)?);
    writer.write_record(["delta", "fstar", "eight_one_minus_f_over_d2", "bures_sq"])?;
    for row in &rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(0)
}

fn random(d: usize, rank: usize, seed: u64, out: Option<&Path>) -> CmdResult {
    let mut rng = states::seeded_rng(seed);
    let rho = states::random_density_with(&mut rng, d, rank)?;
    let generator = states::random_generator_with(&mut rng, d);
    let instance = Instance::from_family(&UnitaryFamily::new(rho, generator)?, 0.0);
    match out {
        Some(path) => instance.save(path)?,
        None => println!("{}", instance.to_json()?),
    }
    Ok(0)
}

fn run_verify(config: Option<&Path>, out: Option<&Path>) -> CmdResult {
    let config = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            SuiteConfig::from_json(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?
        }
        None => SuiteConfig::default(),
    };
    let reports = verify::run_suite(&config);
    let mut w = sink(out)?;
    writeln!(w, "{}", verify::report_json(&reports)?)?;
    w.flush()?;
    for r in reports.iter().filter(|r| !r.passed()) {
        eprintln!(
            "FAIL {}: {} of {} trials, worst slack {:e}",
            r.property_id, r.failures, r.trials, r.worst_slack
        );
    }
    Ok(if verify::suite_passed(&reports) {
        0
    } else {
        EXIT_VERIFY_FAILED
    })
}
