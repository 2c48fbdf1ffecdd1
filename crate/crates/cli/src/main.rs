//! `qmf`: matched filtering, quantum counting and retrieval experiments.
//!
//! Every subcommand takes its parameters as flags or from a `--config` JSON
//! object with the same keys in snake_case; flags win. Output files start
//! with a provenance record and are written atomically. Exit codes: 0 on
//! success, 2 for bad input, 3 when a resource cap is hit, 4 when a numeric
//! self-check fails.

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use qmf_core::bank::BankSpec;
use qmf_core::pipeline::RetrievalStrategy;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "qmf",
    version,
    about = "Quantum-assisted matched filtering toolkit"
)]
struct Cli {
    /// JSON object supplying any of the subcommand's options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Matched-filter SNR series of one bank template against strain data.
    MfSnr(MfSnrArgs),
    /// Closed-form counting-register distribution.
    CountDist(CountDistArgs),
    /// State-vector run of the counting circuit.
    QsimCount(QsimCountArgs),
    /// State-vector run of the Grover search circuit.
    QsimSearch(QsimSearchArgs),
    /// Monte Carlo oracle-cost benchmark of detection plus retrieval.
    McBench(McBenchArgs),
    /// Retrieval failure bound, maximised over ε_p, for r = 1..r_max.
    FailBound(FailBoundArgs),
    /// Continuous-wave template counts and quantum cost.
    CwCost(CwCostArgs),
    /// Signal detection on strain data against a template bank.
    Detect(SearchArgs),
    /// Detection followed by template retrieval.
    Retrieve(SearchArgs),
}

/// Bank layout given inline as JSON or as a path to a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum BankArg {
    Inline(BankSpec),
    Path(PathBuf),
}

impl FromStr for BankArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim_start().starts_with('{') {
            serde_json::from_str(s)
                .map(BankArg::Inline)
                .map_err(|e| e.to_string())
        } else {
            Ok(BankArg::Path(PathBuf::from(s)))
        }
    }
}

fn parse_strategy(s: &str) -> Result<RetrievalStrategy, String> {
    s.parse().map_err(|e: qmf_core::Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MfSnrArgs {
    /// Strain file: `.csv` with `t,strain`, otherwise raw f64 with a `.json` sidecar.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Bank layout (JSON file or inline object).
    #[arg(long)]
    bank: Option<BankArg>,
    /// Template index within the bank.
    #[arg(long)]
    index: Option<u64>,
    /// One-sided PSD CSV `f_hz,sn`.
    #[arg(long)]
    psd: Option<PathBuf>,
    /// Estimate the PSD from the data with Welch segments of this length.
    #[arg(long)]
    estimate_psd: Option<usize>,
    /// SNR CSV `t,rho`; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary `{rho_max, t_max}`; stderr when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountDistArgs {
    /// Bank size N.
    #[arg(long)]
    n: Option<u64>,
    /// Number of matching templates r.
    #[arg(long)]
    r: Option<u64>,
    /// Counting qubits; smallest p with 2^p > π√N when absent.
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QsimCountArgs {
    /// Data bit string, most significant bit first.
    #[arg(long)]
    data: Option<String>,
    /// Template qubits; must equal the data length when given.
    #[arg(long)]
    n: Option<usize>,
    /// Low-order bits ignored by the oracle.
    #[arg(long)]
    q: Option<usize>,
    /// Counting qubits.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shot CSV `outcome_bits,count,probability`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exact marginal CSV `outcome_int,probability`.
    #[arg(long)]
    marginal_out: Option<PathBuf>,
    /// Qubit ceiling.
    #[arg(long)]
    max_qubits: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QsimSearchArgs {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Grover iterations; the optimal count when absent.
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    marginal_out: Option<PathBuf>,
    #[arg(long)]
    max_qubits: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct McBenchArgs {
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    r: Option<u64>,
    #[arg(long)]
    p: Option<u32>,
    /// `reuse-k` or `recount-each-try`.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<RetrievalStrategy>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_attempts: Option<u64>,
    /// Summary JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram CSV `evals,count`.
    #[arg(long)]
    histogram_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FailBoundArgs {
    #[arg(long)]
    r_max: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CwCostArgs {
    /// Signal frequency, kHz.
    #[arg(long)]
    f: Option<f64>,
    /// Observation time, years.
    #[arg(long, allow_negative_numbers = true)]
    t_obs: Option<f64>,
    /// Frequency band, Hz.
    #[arg(long)]
    delta_f: Option<f64>,
    /// Spin-down range, Hz/s.
    #[arg(long)]
    delta_f1: Option<f64>,
    /// Acceptable false-negative probability.
    #[arg(long)]
    delta_target: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    bank: Option<BankArg>,
    #[arg(long)]
    psd: Option<PathBuf>,
    #[arg(long)]
    estimate_psd: Option<usize>,
    /// SNR threshold of the match predicate.
    #[arg(long)]
    rho_thr: Option<f64>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Retrieval only: `reuse-k` or `recount-each-try`.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<RetrievalStrategy>,
    /// Retrieval only.
    #[arg(long)]
    max_attempts: Option<u64>,
    /// Result JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Resource(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Resource(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<qmf_core::Error> for CliError {
    fn from(e: qmf_core::Error) -> Self {
        match e {
            qmf_core::Error::ResourceCap { .. } => CliError::Resource(e.to_string()),
            qmf_core::Error::Numeric(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command, cli.config.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qmf: {e}");
            ExitCode::from(e.code())
        }
    }
}
