//! `sqkd`: key-rate bounds, simulations, sweeps and thresholds for the
//! single-state semi-quantum key distribution protocol.
//!
//! Exit codes: 0 success, 1 tool or input error, 2 the analysis says the
//! protocol must abort (or `validate` found a violated condition).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use sqkd_core::attack::{AttackFile, AttackSpec};
use sqkd_core::bound::{self, KeyRateReport};
use sqkd_core::depol::DepolScenario;
use sqkd_core::sim::{self, BalanceMode, SimulationConfig};
use sqkd_core::sweep::{self, SweepGrid};
use sqkd_core::{ChannelStatistics64, Error};

const THREADS_ENV: &str = "SQKD_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "sqkd",
    version,
    about = "Key-rate analysis for single-state semi-quantum key distribution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Key-rate bound from a depolarizing scenario, a statistics file or an attack file.
    Keyrate(KeyrateArgs),
    /// Monte-Carlo simulation followed by estimation and the bound from the estimates.
    Simulate(SimulateArgs),
    /// Key-rate table over a (b, q) grid of the depolarizing scenario.
    Sweep(SweepArgs),
    /// Noise threshold tau(b) for each bias.
    Threshold(ThresholdArgs),
    /// Check the unitarity conditions of an attack file.
    Validate(ValidateArgs),
    /// Write the depolarizing-channel attack for (q, b) as an attack file.
    Dilate(DilateArgs),
}

#[derive(Args, Debug)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Depolarization parameter.
    #[arg(long, requires = "b", allow_negative_numbers = true)]
    q: Option<f64>,
    /// Bias of the forward state.
    #[arg(long, requires = "q", allow_negative_numbers = true)]
    b: Option<f64>,
    /// Attack file (JSON).
    #[arg(long, conflicts_with_all = ["q", "b"])]
    attack: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct KeyrateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Channel statistics file (JSON).
    #[arg(long, conflicts_with_all = ["q", "b", "attack"])]
    stats: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Balance {
    Analytic,
    Empirical,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    iterations: u64,
    #[arg(long)]
    seed: u64,
    /// Independent RNG streams; the result depends on this count.
    #[arg(long, default_value_t = 1)]
    shards: usize,
    #[arg(long, value_enum, default_value_t = Balance::Empirical)]
    balance: Balance,
    #[command(flatten)]
    out: Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct BiasGrid {
    /// Comma-separated bias values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["b_min", "b_max", "b_step"])]
    b_list: Vec<f64>,
    #[arg(long, allow_negative_numbers = true, requires_all = ["b_max", "b_step"])]
    b_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires_all = ["b_min", "b_step"])]
    b_max: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires_all = ["b_min", "b_max"])]
    b_step: Option<f64>,
}

impl BiasGrid {
    fn values(&self) -> Result<Vec<f64>, Error> {
        match (self.b_min, self.b_max, self.b_step) {
            (Some(min), Some(max), Some(step)) => sweep::stepped_range("b", min, max, step),
            _ if !self.b_list.is_empty() => Ok(self.b_list.clone()),
            _ => Err(Error::Validation(
                "give --b-list or all of --b-min/--b-max/--b-step".into(),
            )),
        }
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    bias: BiasGrid,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    q_min: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    q_max: f64,
    #[arg(long, default_value_t = 0.001, allow_negative_numbers = true)]
    q_step: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    #[command(flatten)]
    bias: BiasGrid,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    attack: PathBuf,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Debug)]
struct DilateArgs {
    #[arg(long, allow_negative_numbers = true)]
    q: f64,
    #[arg(long, allow_negative_numbers = true)]
    b: f64,
    #[command(flatten)]
    out: Output,
}

/// Failure of a subcommand, mapped to exit code 1.
#[derive(Debug)]
struct CliError(String);

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn fail<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError(msg.into()))
}

/// Success carries whether the analysis flagged an abort (exit code 2).
type Outcome = CliResult<bool>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {}", e.0);
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Keyrate(a) => cmd_keyrate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Threshold(a) => cmd_threshold(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Dilate(a) => cmd_dilate(a),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {}", e.0);
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            return fail(format!(
                "{THREADS_ENV} must be a positive integer, got {raw:?}"
            ))
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .or_else(|e| fail(format!("cannot configure thread pool: {e}")))
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).or_else(|e| fail(format!("cannot read {}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = read_file(path)?;
    serde_json::from_str(&text)
        .or_else(|e| fail(format!("malformed {what} file {}: {e}", path.display())))
}

fn load_attack(path: &Path) -> CliResult<AttackSpec<f64>> {
    let file: AttackFile<f64> = parse_json(path, "attack")?;
    AttackSpec::try_from(file)
        .or_else(|e| fail(format!("invalid attack file {}: {e}", path.display())))
}

fn load_stats(path: &Path) -> CliResult<ChannelStatistics64> {
    let s: ChannelStatistics64 = parse_json(path, "statistics")?;
    s.validate()
        .or_else(|e| fail(format!("invalid statistics file {}: {e}", path.display())))?;
    Ok(s)
}

fn emit_text(out: &Output, text: &str) -> CliResult<()> {
    match &out.output {
        Some(path) => {
            fs::write(path, text).or_else(|e| fail(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .or_else(|e| fail(format!("cannot write to stdout: {e}")))
        }
    }
}

fn emit_json<T: Serialize>(out: &Output, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .or_else(|e| fail(format!("cannot serialize output: {e}")))?;
    text.push('\n');
    emit_text(out, &text)
}

fn report_abort(rep: &KeyRateReport<f64>) -> bool {
    if let Some(reason) = &rep.abort_reason {
        eprintln!("abort: {reason}");
    }
    rep.aborted
}

fn cmd_keyrate(a: KeyrateArgs) -> Outcome {
    let report = if let Some(path) = &a.stats {
        bound::key_rate(&load_stats(path)?)?
    } else if let Some(path) = &a.scenario.attack {
        let attack = load_attack(path)?;
        let v = attack.validate();
        if !v.passed {
            return fail(format!(
                "attack {} violates unitarity (max residual {:e})",
                path.display(),
                v.max_residual()
            ));
        }
        bound::key_rate_with_weights(&attack.exact_statistics()?, &attack.joint_distribution()?)?
    } else if let (Some(q), Some(b)) = (a.scenario.q, a.scenario.b) {
        sweep::depol_report(q, b)?
    } else {
        return fail("give --q and --b, --stats, or --attack");
    };
    emit_json(&a.out, &report)?;
    Ok(report_abort(&report))
}

fn scenario_attack(s: &ScenarioArgs) -> CliResult<AttackSpec<f64>> {
    if let Some(path) = &s.attack {
        load_attack(path)
    } else if let (Some(q), Some(b)) = (s.q, s.b) {
        Ok(DepolScenario::new(q, b)?.dilation())
    } else {
        fail("give --q and --b, or --attack")
    }
}

fn cmd_simulate(a: SimulateArgs) -> Outcome {
    let attack = scenario_attack(&a.scenario)?;
    let mode = match a.balance {
        Balance::Analytic => BalanceMode::Analytic,
        Balance::Empirical => BalanceMode::Empirical,
    };
    let config = SimulationConfig::new(attack, a.iterations, a.seed)
        .with_shards(a.shards)
        .with_balance(mode);
    let tally = sim::run(&config)?;
    let estimate = sim::estimate::<f64>(&tally);
    let report = match estimate.statistics() {
        Ok(stats) => Some(bound::key_rate(&stats)?),
        Err(e) => {
            eprintln!("warning: no bound from estimates: {e}");
            None
        }
    };
    let joint = estimate.joint().ok();
    let out = json!({
        "seed": a.seed,
        "generator": sim::GENERATOR,
        "iterations": a.iterations,
        "shards": a.shards,
        "balance_mode": mode,
        "raw_key_errors": tally.raw_key_errors(),
        "tally": tally,
        "estimate": estimate,
        "empirical_distribution": joint,
        "report": report,
    });
    emit_json(&a.out, &out)?;
    Ok(report.as_ref().is_some_and(report_abort))
}

fn cmd_sweep(a: SweepArgs) -> Outcome {
    let grid = SweepGrid::new(a.bias.values()?, a.q_min, a.q_max, a.q_step)?;
    let rows = sweep::sweep_keyrate(&grid)?;
    match a.format {
        Format::Csv => emit_text(&a.out, &sweep::sweep_csv(&rows))?,
        Format::Json => emit_json(&a.out, &rows)?,
    }
    Ok(false)
}

fn cmd_threshold(a: ThresholdArgs) -> Outcome {
    let rows = sweep::thresholds(&a.bias.values()?)?;
    match a.format {
        Format::Csv => emit_text(&a.out, &sweep::threshold_csv(&rows))?,
        Format::Json => {
            let rows: Vec<_> = rows
                .iter()
                .map(|(b, tau)| json!({ "b": b, "tau_q": tau }))
                .collect();
            emit_json(&a.out, &rows)?
        }
    }
    Ok(false)
}

fn cmd_validate(a: ValidateArgs) -> Outcome {
    let report = load_attack(&a.attack)?.validate();
    emit_json(&a.out, &report)?;
    if !report.passed {
        eprintln!(
            "attack fails validation: max residual {:e}, bias in range: {}",
            report.max_residual(),
            report.bias_in_range
        );
    }
    Ok(!report.passed)
}

fn cmd_dilate(a: DilateArgs) -> Outcome {
    let attack = DepolScenario::new(a.q, a.b)?.dilation();
    emit_json(&a.out, &AttackFile::from(&attack))?;
    Ok(false)
}
