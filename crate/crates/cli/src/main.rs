//! Command line front end: validates channel description files, evaluates
//! identification-rate bounds, builds and simulates identification codes,
//! and emits the bundled binary adder example.
//!
//! Exit codes: 0 on success, 1 on domain errors (invalid channel,
//! infeasible budget, packing failure, I/O) with a single machine-readable
//! line on standard error, 2 on usage errors. All file outputs are
//! byte-deterministic given the same flags and seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use idsense_core::binary_adder::{
    build as build_adder, distortion_sweep_csv, extreme_points, BinaryAdderParams,
};
use idsense_core::fmt::sig9;
use idsense_core::idf::{build_idf_code, CodeMode};
use idsense_core::region::{region_csv, region_sweep, BoundKind};
use idsense_core::sim::{run_trials, TrialPlan};
use idsense_core::{BuildParams64, OptConfig64, SdMacSpec64};

/// Seed applied when `--seed` is absent, fixed so that repeated
/// invocations reproduce identical outputs.
const DEFAULT_SEED: u64 = 20240817;

/// Largest number of sweep points a `start:stop:step` grid may expand to.
const MAX_GRID_POINTS: usize = 10_000;

#[derive(Parser)]
#[command(
    name = "idsense",
    version,
    about = "Identification and state sensing over state-dependent multiple access channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    /// Best admissible joint symbol tuple.
    Det,
    /// Best admissible product input distribution.
    Rand,
    /// Time-sharing of sensing and unconstrained identification.
    Sep,
}

impl From<KindArg> for BoundKind {
    fn from(kind: KindArg) -> Self {
        match kind {
            KindArg::Det => BoundKind::Deterministic,
            KindArg::Rand => BoundKind::Randomized,
            KindArg::Sep => BoundKind::Separation,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Hold the best admissible symbol tuple during the feedback phase.
    Det,
    /// Sample the best admissible product distribution each use.
    Rand,
}

impl From<ModeArg> for CodeMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Det => CodeMode::Deterministic,
            ModeArg::Rand => CodeMode::Randomized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleName {
    /// Two-sender binary adder channel with multiplicative Bernoulli states.
    BinaryAdder,
}

#[derive(Subcommand)]
enum Command {
    /// Check a channel description file and print its dimensions.
    Validate {
        /// Channel description JSON.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Evaluate identification-rate bounds at one or more budgets.
    Region {
        /// Channel description JSON.
        #[arg(long)]
        spec: PathBuf,
        /// Bound to evaluate; all three when omitted.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// One budget as a comma separated list, one value per sender.
        #[arg(long = "D", value_name = "LIST")]
        budget: Option<String>,
        /// Shared-budget sweep `start:stop:step` applied to every sender.
        #[arg(long, value_name = "RANGE")]
        grid: Option<String>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an identification code and measure its error statistics.
    Simulate {
        /// Channel description JSON.
        #[arg(long)]
        spec: PathBuf,
        /// Feedback phase length in channel uses.
        #[arg(long)]
        n: usize,
        /// Typicality tolerance of the feedback test.
        #[arg(long)]
        eps: f64,
        /// Colors per sender, comma separated.
        #[arg(long = "M", value_name = "LIST")]
        colors: String,
        /// Identities per sender, comma separated.
        #[arg(long = "N", value_name = "LIST")]
        identities: String,
        /// Distortion budgets, comma separated.
        #[arg(long = "D", value_name = "LIST")]
        budget: String,
        /// Feedback phase input selection.
        #[arg(long, value_enum, default_value_t = ModeArg::Det)]
        mode: ModeArg,
        /// Monte Carlo trials.
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Root seed for code construction and simulation.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Write the statistics JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-sender statistics as CSV.
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Run a bundled example end to end.
    Example {
        /// Which example to run.
        #[arg(value_enum)]
        name: ExampleName,
        /// Bernoulli state parameter.
        #[arg(long, default_value_t = 0.2)]
        p: f64,
        /// Budget sweep `start:stop:step` shared by both senders.
        #[arg(long, default_value = "0:0.2:0.00625")]
        grid: String,
        /// Write the sweep CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the channel description as JSON.
        #[arg(long)]
        spec_out: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Domain(String),
}

impl From<idsense_core::Error> for CliError {
    fn from(e: idsense_core::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Domain(format!("IoError path={} detail={e}", path.display()))
}

fn parse_f64_list(text: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|_| {
                CliError::Usage(format!(
                    "{flag} expects a comma separated list of numbers, got {text:?}"
                ))
            })
        })
        .collect()
}

fn parse_usize_list(text: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim().parse::<usize>().map_err(|_| {
                CliError::Usage(format!(
                    "{flag} expects a comma separated list of counts, got {text:?}"
                ))
            })
        })
        .collect()
}

fn parse_u64_list(text: &str, flag: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim().parse::<u64>().map_err(|_| {
                CliError::Usage(format!(
                    "{flag} expects a comma separated list of counts, got {text:?}"
                ))
            })
        })
        .collect()
}

fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let usage = || {
        CliError::Usage(format!(
            "--grid expects start:stop:step with step > 0 and stop >= start, got {text:?}"
        ))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        return Err(usage());
    };
    let start: f64 = start.trim().parse().map_err(|_| usage())?;
    let stop: f64 = stop.trim().parse().map_err(|_| usage())?;
    let step: f64 = step.trim().parse().map_err(|_| usage())?;
    if !step.is_finite() || step <= 0.0 || !start.is_finite() || stop < start {
        return Err(usage());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > MAX_GRID_POINTS {
        return Err(CliError::Usage(format!(
            "--grid expands to {count} points, the limit is {MAX_GRID_POINTS}"
        )));
    }
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

fn read_spec(path: &Path) -> Result<SdMacSpec64, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(SdMacSpec64::from_json_str(&text)?)
}

/// Prints to standard output or writes the file, always ending with a
/// newline.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut body = text.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    match out {
        Some(path) => fs::write(path, body).map_err(|e| io_error(path, e)),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn join_counts(counts: &[usize]) -> String {
    counts
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_validate(spec: &Path) -> Result<(), CliError> {
    let spec = read_spec(spec)?;
    spec.validate()?;
    println!(
        "OK senders={} inputs={} states={} output={}",
        spec.num_senders(),
        join_counts(spec.input_alphabets()),
        join_counts(spec.state_alphabets()),
        spec.output_alphabet()
    );
    Ok(())
}

fn cmd_region(
    spec: &Path,
    kind: Option<KindArg>,
    budget: Option<&str>,
    grid: Option<&str>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let spec = read_spec(spec)?;
    let budgets: Vec<Vec<f64>> = match (budget, grid) {
        (Some(list), None) => vec![parse_f64_list(list, "--D")?],
        (None, Some(range)) => parse_grid(range)?
            .into_iter()
            .map(|d| vec![d; spec.num_senders()])
            .collect(),
        _ => {
            return Err(CliError::Usage(
                "region needs exactly one of --D and --grid".into(),
            ))
        }
    };
    let kinds: Vec<BoundKind> = match kind {
        Some(k) => vec![k.into()],
        None => vec![
            BoundKind::Randomized,
            BoundKind::Deterministic,
            BoundKind::Separation,
        ],
    };
    let points = region_sweep(&spec, &budgets, &kinds, &OptConfig64::default())?;
    emit(out, &region_csv(&points, spec.num_senders()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    spec: &Path,
    n: usize,
    eps: f64,
    colors: &str,
    identities: &str,
    budget: &str,
    mode: ModeArg,
    trials: u64,
    seed: u64,
    out: Option<&Path>,
    out_csv: Option<&Path>,
) -> Result<(), CliError> {
    let spec = read_spec(spec)?;
    let budget = parse_f64_list(budget, "--D")?;
    let params = BuildParams64::new(
        n,
        eps,
        parse_usize_list(colors, "--M")?,
        parse_u64_list(identities, "--N")?,
        seed,
        mode.into(),
    );
    let code = build_idf_code(&spec, &budget, &params)?;
    for warning in code.warnings() {
        eprintln!("warning: {warning}");
    }
    let stats = run_trials(&spec, &code, &TrialPlan::new(trials, seed))?;
    if let Some(path) = out_csv {
        emit(Some(path), &stats.to_csv())?;
    }
    emit(out, &stats.to_json_string())
}

fn cmd_example(
    name: ExampleName,
    p: f64,
    grid: &str,
    out: Option<&Path>,
    spec_out: Option<&Path>,
) -> Result<(), CliError> {
    let ExampleName::BinaryAdder = name;
    let params = BinaryAdderParams { p_s: p };
    if let Some(path) = spec_out {
        let spec = build_adder(params)?;
        emit(Some(path), &spec.to_json_string())?;
    }
    let csv = distortion_sweep_csv(params, &parse_grid(grid)?, &OptConfig64::default())?;
    match out {
        Some(path) => {
            emit(Some(path), &csv)?;
            for point in extreme_points(params)? {
                println!(
                    "x=({},{}) distortions=({},{}) rate={}",
                    point.input[0],
                    point.input[1],
                    sig9(point.distortions[0]),
                    sig9(point.distortions[1]),
                    sig9(point.rate)
                );
            }
            Ok(())
        }
        None => emit(None, &csv),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { spec } => cmd_validate(&spec),
        Command::Region {
            spec,
            kind,
            budget,
            grid,
            out,
        } => cmd_region(
            &spec,
            kind,
            budget.as_deref(),
            grid.as_deref(),
            out.as_deref(),
        ),
        Command::Simulate {
            spec,
            n,
            eps,
            colors,
            identities,
            budget,
            mode,
            trials,
            seed,
            out,
            out_csv,
        } => cmd_simulate(
            &spec,
            n,
            eps,
            &colors,
            &identities,
            &budget,
            mode,
            trials,
            seed,
            out.as_deref(),
            out_csv.as_deref(),
        ),
        Command::Example {
            name,
            p,
            grid,
            out,
            spec_out,
        } => cmd_example(name, p, &grid, out.as_deref(), spec_out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}
