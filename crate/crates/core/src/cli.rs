//! Batch front-end: source ingestion, command dispatch, and structured run
//! reports on standard output.
//!
//! Every run emits one self-describing JSON document: the command line, the
//! fully resolved configuration (defaults materialized), the display units,
//! the results payload, and the wall time. Re-running the echoed command
//! reproduces the payload byte-for-byte; all randomness hangs off explicit
//! `--seed` flags (default 0).

use crate::hyperc::{self, HcPoint};
use crate::oneshot::{self, OneShotParams};
use crate::probkit::{neumaier_sum, Channel, JointPmf};
use crate::protosim::{self, SimBudget};
use crate::regions::{self, AuxScheme, SourceSpec};
use crate::search::SearchConfig;
use crate::{Error, ErrorClass};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Instant;
use thiserror::Error as ThisError;

const LN_2: f64 = std::f64::consts::LN_2;

/// Source document: alphabet shape plus a flat row-major pmf over
/// (Z, X_1, ..., X_m).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceFile {
    #[serde(default)]
    pub name: Option<String>,
    pub m: usize,
    pub z_size: usize,
    pub x_sizes: Vec<usize>,
    #[serde(default)]
    pub omniscient: bool,
    pub pmf: Vec<f64>,
}

/// Conditional pmf document; `rows[input][output]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    pub input_sizes: Vec<usize>,
    pub output_size: usize,
    pub rows: Vec<Vec<f64>>,
}

/// Auxiliary scheme document: the Z -> U channel rows plus one (U, Z) -> S_l
/// channel per receiver, S-rows indexed u-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuxFile {
    pub u_size: usize,
    pub q_u_given_z: Vec<Vec<f64>>,
    pub s_channels: Vec<SChannelFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SChannelFile {
    pub s_size: usize,
    pub rows: Vec<Vec<f64>>,
}

/// Distinct diagnostics for source-document rejection.
#[derive(Debug, ThisError)]
pub enum SourceError {
    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("negative mass {value} at cell {index}")]
    NegativeMass { index: usize, value: f64 },

    #[error("pmf sums to {sum}, outside [1 - 1e-9, 1 + 1e-9]")]
    SumOutOfTolerance { sum: f64 },

    #[error("omniscient flag inconsistent with the pmf: {0}")]
    InconsistentOmniscient(String),

    #[error("shape error: {0}")]
    Shape(String),
}

/// Parses and validates a source document. Entry sums within 1e-9 of one are
/// normalized exactly; anything further off is rejected.
pub fn parse_source(text: &str) -> Result<SourceSpec, SourceError> {
    let file: SourceFile =
        serde_json::from_str(text).map_err(|e| SourceError::Malformed(e.to_string()))?;
    if file.m == 0 {
        return Err(SourceError::Shape("m must be at least 1".into()));
    }
    if file.x_sizes.len() != file.m {
        return Err(SourceError::Shape(format!(
            "{} receiver alphabets listed for m = {}",
            file.x_sizes.len(),
            file.m
        )));
    }
    if file.z_size == 0 || file.x_sizes.contains(&0) {
        return Err(SourceError::Shape("alphabet sizes must be positive".into()));
    }
    let cells = file.z_size * file.x_sizes.iter().product::<usize>();
    if file.pmf.len() != cells {
        return Err(SourceError::Shape(format!(
            "pmf has {} entries, expected {cells}",
            file.pmf.len()
        )));
    }
    for (i, &v) in file.pmf.iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(SourceError::NegativeMass { index: i, value: v });
        }
    }
    let sum = neumaier_sum(file.pmf.iter().copied());
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SourceError::SumOutOfTolerance { sum });
    }
    let probs: Vec<f64> = file.pmf.iter().map(|&v| v / sum).collect();
    let mut sizes = vec![file.z_size];
    sizes.extend_from_slice(&file.x_sizes);
    let pmf = JointPmf::new(sizes, probs).map_err(|e| SourceError::Shape(e.to_string()))?;
    SourceSpec::new(file.m, pmf, file.omniscient).map_err(|e| match e {
        Error::InvalidInput(msg) if msg.contains("omniscient") => {
            SourceError::InconsistentOmniscient(msg)
        }
        other => SourceError::Shape(other.to_string()),
    })
}

pub fn parse_channel(text: &str) -> Result<Channel, SourceError> {
    let file: ChannelFile =
        serde_json::from_str(text).map_err(|e| SourceError::Malformed(e.to_string()))?;
    let flat: Vec<f64> = file.rows.iter().flatten().copied().collect();
    Channel::new(file.input_sizes, file.output_size, flat)
        .map_err(|e| SourceError::Shape(e.to_string()))
}

pub fn parse_aux(text: &str, source: &SourceSpec) -> Result<AuxScheme, SourceError> {
    let file: AuxFile =
        serde_json::from_str(text).map_err(|e| SourceError::Malformed(e.to_string()))?;
    let z = source.z_size();
    let q_u = Channel::new(
        vec![z],
        file.u_size,
        file.q_u_given_z.iter().flatten().copied().collect(),
    )
    .map_err(|e| SourceError::Shape(format!("U-channel: {e}")))?;
    if file.s_channels.len() != source.receivers() {
        return Err(SourceError::Shape(format!(
            "{} S-channels for {} receivers",
            file.s_channels.len(),
            source.receivers()
        )));
    }
    let mut s_channels = Vec::with_capacity(file.s_channels.len());
    for (l, sc) in file.s_channels.iter().enumerate() {
        let ch = Channel::new(
            vec![file.u_size, z],
            sc.s_size,
            sc.rows.iter().flatten().copied().collect(),
        )
        .map_err(|e| SourceError::Shape(format!("S-channel {l}: {e}")))?;
        s_channels.push(ch);
    }
    Ok(AuxScheme {
        q_u_given_z: q_u,
        q_s_given_uz: s_channels,
    })
}

/// Errors carrying their process exit status: 2 usage, 3 validation,
/// 4 resource; help/version render with status 0.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{0}")]
    Help(String),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help(_) => 0,
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Resource(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e.class() {
            ErrorClass::Usage => CliError::Usage(e.to_string()),
            ErrorClass::Validation => CliError::Validation(e.to_string()),
            ErrorClass::Resource => CliError::Resource(e.to_string()),
        }
    }
}

impl From<SourceError> for CliError {
    fn from(e: SourceError) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// One self-describing run record; `payload` is deterministic given the
/// command and seeds.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub config: Value,
    pub units: String,
    pub payload: Value,
    pub wall_time_ms: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "skgen",
    version,
    about = "Workbench for multi-terminal secret key generation with one communicator"
)]
struct Cli {
    /// Print rate-like quantities in nats (default: bits).
    #[arg(long, global = true)]
    nats: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rate-region evaluation and key-rate optimization.
    Region {
        #[command(subcommand)]
        cmd: RegionCmd,
    },
    /// One-shot achievability bounds and asymptotic codebook sizes.
    Oneshot {
        #[command(subcommand)]
        cmd: OneshotCmd,
    },
    /// Coding-scheme simulation, exact or Monte Carlo.
    Simulate {
        #[command(subcommand)]
        cmd: SimulateCmd,
    },
    /// Hypercontractivity checks and the strong data-processing coefficient.
    Hc {
        #[command(subcommand)]
        cmd: HcCmd,
    },
    /// Converse bounds from hypercontractivity.
    Converse {
        #[command(subcommand)]
        cmd: ConverseCmd,
    },
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 64)]
    restarts: u64,
    #[arg(long, default_value_t = 500)]
    iterations: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Auxiliary alphabet size override.
    #[arg(long)]
    u_size: Option<usize>,
}

impl SearchArgs {
    fn to_config(&self, s_sizes: Option<Vec<usize>>) -> SearchConfig {
        SearchConfig {
            restarts: self.restarts,
            iterations: self.iterations,
            u_size: self.u_size,
            s_sizes,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Subcommand)]
enum RegionCmd {
    /// Extreme point of the general region for a given auxiliary scheme.
    Theorem1 {
        #[arg(long)]
        source: String,
        #[arg(long)]
        aux: String,
    },
    /// Omniscient-helper region point for a channel U given all sources.
    Theorem2 {
        #[arg(long)]
        source: String,
        #[arg(long)]
        u: String,
    },
    /// One-way (m = 1) region point.
    Oneway {
        #[arg(long)]
        source: String,
        #[arg(long)]
        u: String,
    },
    /// Common-randomness region point.
    Cr {
        #[arg(long)]
        source: String,
        #[arg(long)]
        u: String,
    },
    /// Best key rate under per-receiver communication budgets.
    Maximize {
        #[arg(long)]
        source: String,
        /// Per-receiver budgets, comma separated, in display units.
        #[arg(long, value_delimiter = ',')]
        budgets: Vec<f64>,
        /// Per-receiver S-alphabet overrides.
        #[arg(long, value_delimiter = ',')]
        s_sizes: Option<Vec<usize>>,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Debug, Subcommand)]
enum OneshotCmd {
    /// Error and secrecy bounds for given codebook sizes.
    Bounds {
        #[arg(long)]
        source: String,
        #[arg(long)]
        aux: String,
        /// I_0, I_1, ..., I_m.
        #[arg(long, value_delimiter = ',')]
        i_sizes: Vec<u64>,
        /// J_1, ..., J_m.
        #[arg(long, value_delimiter = ',')]
        j_sizes: Vec<u64>,
        /// Blocklength (block spectra are convolved per letter).
        #[arg(long, default_value_t = 1)]
        n: usize,
    },
    /// Asymptotic codebook sizes for blocklength n and slack beta.
    Params {
        #[arg(long)]
        source: String,
        #[arg(long)]
        aux: String,
        #[arg(long)]
        n: u64,
        /// Rate slack, in display units per symbol.
        #[arg(long)]
        beta: f64,
    },
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    source: String,
    #[arg(long)]
    aux: String,
    #[arg(long, value_delimiter = ',')]
    i_sizes: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    j_sizes: Vec<u64>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    codebook_seed: u64,
    /// Stored-table budget (codewords plus decode memos).
    #[arg(long, default_value_t = 10_000_000)]
    max_table_cells: u64,
    /// Enumeration-state budget for exact evaluation.
    #[arg(long, default_value_t = 10_000_000)]
    max_states: u64,
}

impl SimArgs {
    fn budget(&self) -> SimBudget {
        SimBudget {
            max_table_cells: self.max_table_cells,
            max_states: self.max_states,
        }
    }
}

#[derive(Debug, Subcommand)]
enum SimulateCmd {
    /// Exact enumeration of the operational metrics for one codebook.
    Exact {
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Monte Carlo estimation with Wilson standard errors.
    Mc {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        source_seed: u64,
    },
}

#[derive(Debug, Subcommand)]
enum HcCmd {
    /// Search for a hypercontractivity violation over channels.
    Check {
        #[arg(long)]
        source: String,
        /// Exponents p_1, ..., p_m.
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Evaluate the functional form for explicit value tables.
    Functional {
        #[arg(long)]
        source: String,
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        /// One table per receiver: comma-separated values over X_l.
        #[arg(long = "f")]
        functions: Vec<String>,
    },
    /// Strong data-processing coefficient of the (X_1, X_2) pair.
    Sdpi {
        #[arg(long)]
        source: String,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Debug, Subcommand)]
enum ConverseCmd {
    /// Zero-rate lower bound on half the key-law total variation.
    Theorem4 {
        #[arg(long = "K")]
        k: u64,
        #[arg(long = "W", value_delimiter = ',')]
        w: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
    },
    /// ln|K| - sum (1/p_l)(ln|K| - ln|W_l|), the degradation margin.
    Margin {
        #[arg(long = "K")]
        k: f64,
        #[arg(long = "W", value_delimiter = ',')]
        w: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
    },
}

#[derive(Clone, Copy)]
struct Units {
    bits: bool,
}

impl Units {
    fn name(self) -> &'static str {
        if self.bits {
            "bits"
        } else {
            "nats"
        }
    }

    /// Converts an internal nats quantity for display.
    fn rate(self, nats: f64) -> f64 {
        if self.bits {
            nats / LN_2
        } else {
            nats
        }
    }

    fn rates(self, nats: &[f64]) -> Vec<f64> {
        nats.iter().map(|&v| self.rate(v)).collect()
    }

    /// Converts a display-unit input to nats.
    fn to_nats(self, value: f64) -> f64 {
        if self.bits {
            value * LN_2
        } else {
            value
        }
    }
}

/// Parses and executes one command line, returning the full run report.
pub fn dispatch(argv: &[String]) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        ErrorKind::DisplayHelp
        | ErrorKind::DisplayVersion
        | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => CliError::Help(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })?;
    let units = Units { bits: !cli.nats };
    let (config, payload) = execute(&cli.command, units)?;
    Ok(RunReport {
        command: argv.to_vec(),
        config,
        units: units.name().to_string(),
        payload,
        wall_time_ms: start.elapsed().as_secs_f64() * 1000.0,
    })
}

fn read_file(path: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {path}: {e}")))
}

fn load_source(path: &str) -> Result<SourceSpec, CliError> {
    Ok(parse_source(&read_file(path)?)?)
}

fn load_aux(path: &str, source: &SourceSpec) -> Result<AuxScheme, CliError> {
    Ok(parse_aux(&read_file(path)?, source)?)
}

/// Loads a channel and reshapes its input coordinates to the expected shape
/// when the flattened row count matches.
fn load_channel(path: &str, expected_inputs: &[usize]) -> Result<Channel, CliError> {
    let ch = parse_channel(&read_file(path)?)?;
    if ch.input_sizes() == expected_inputs {
        return Ok(ch);
    }
    ch.reshape_inputs(expected_inputs.to_vec())
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn rate_point_payload(point: &regions::RatePoint, units: Units) -> Value {
    json!({
        "key_rate": units.rate(point.key_rate),
        "comm_rates": units.rates(&point.comm_rates),
    })
}

fn hc_point(p: &[f64]) -> Result<HcPoint, CliError> {
    Ok(HcPoint::new(p.to_vec())?)
}

fn execute(command: &Command, units: Units) -> Result<(Value, Value), CliError> {
    match command {
        Command::Region { cmd } => region(cmd, units),
        Command::Oneshot { cmd } => oneshot_cmd(cmd, units),
        Command::Simulate { cmd } => simulate(cmd, units),
        Command::Hc { cmd } => hc(cmd, units),
        Command::Converse { cmd } => converse(cmd, units),
    }
}

fn region(cmd: &RegionCmd, units: Units) -> Result<(Value, Value), CliError> {
    match cmd {
        RegionCmd::Theorem1 { source, aux } => {
            let src = load_source(source)?;
            let scheme = load_aux(aux, &src)?;
            let point = regions::achievable_point(&src, &scheme)?;
            let config = json!({ "source": source, "aux": aux });
            Ok((config, rate_point_payload(&point, units)))
        }
        RegionCmd::Theorem2 { source, u } => {
            let src = load_source(source)?;
            let q_u = load_channel(u, src.x_sizes())?;
            let point = regions::omniscient_point(&src, &q_u)?;
            let config = json!({ "source": source, "u": u });
            Ok((config, rate_point_payload(&point, units)))
        }
        RegionCmd::Oneway { source, u } => {
            let src = load_source(source)?;
            let q_u = load_channel(u, &[src.z_size()])?;
            let point = regions::one_way_point(&src, &q_u)?;
            let config = json!({ "source": source, "u": u });
            Ok((config, rate_point_payload(&point, units)))
        }
        RegionCmd::Cr { source, u } => {
            let src = load_source(source)?;
            let q_u = load_channel(u, &[src.z_size()])?;
            let point = regions::cr_point(&src, &q_u)?;
            let config = json!({ "source": source, "u": u });
            Ok((config, rate_point_payload(&point, units)))
        }
        RegionCmd::Maximize {
            source,
            budgets,
            s_sizes,
            search,
        } => {
            let src = load_source(source)?;
            let budgets_nats: Vec<f64> = budgets.iter().map(|&b| units.to_nats(b)).collect();
            let cfg = search.to_config(s_sizes.clone());
            let resolved_u = cfg.u_size.unwrap_or(src.z_size() + src.receivers() + 1);
            let resolved_s: Vec<usize> = cfg
                .s_sizes
                .clone()
                .unwrap_or_else(|| vec![resolved_u * src.z_size(); src.receivers()]);
            let (point, aux) = regions::maximize_key_rate(&src, &budgets_nats, &cfg)?;
            let config = json!({
                "source": source,
                "budgets": budgets,
                "restarts": cfg.restarts,
                "iterations": cfg.iterations,
                "seed": cfg.seed,
                "u_size": resolved_u,
                "s_sizes": resolved_s,
            });
            let mut payload = rate_point_payload(&point, units);
            payload["aux"] = serde_json::to_value(&aux).expect("aux serializes");
            payload["unconstrained_capacity"] =
                json!(units.rate(regions::unconstrained_capacity(&src)));
            Ok((config, payload))
        }
    }
}

fn oneshot_cmd(cmd: &OneshotCmd, units: Units) -> Result<(Value, Value), CliError> {
    match cmd {
        OneshotCmd::Bounds {
            source,
            aux,
            i_sizes,
            j_sizes,
            n,
        } => {
            let src = load_source(source)?;
            let scheme = load_aux(aux, &src)?;
            let params = OneShotParams::new(i_sizes.clone(), j_sizes.clone())?;
            let b = oneshot::bounds_for_blocklength(&src, &scheme, &params, *n)?;
            let config = json!({
                "source": source, "aux": aux,
                "i_sizes": i_sizes, "j_sizes": j_sizes, "n": n,
            });
            let payload = json!({
                "t": b.t,
                "t_list": b.t_list,
                "epsilon": b.epsilon,
                "error_raw": b.error_raw,
                "error_effective": b.error_effective,
                "secrecy_raw": units.rates(&b.secrecy_raw),
                "secrecy_effective": units.rates(&b.secrecy_effective),
            });
            Ok((config, payload))
        }
        OneshotCmd::Params {
            source,
            aux,
            n,
            beta,
        } => {
            let src = load_source(source)?;
            let scheme = load_aux(aux, &src)?;
            let rates = oneshot::rates_for(&src, &scheme)?;
            let assignment = oneshot::asymptotic_parameters(&rates, *n, units.to_nats(*beta))?;
            let config = json!({ "source": source, "aux": aux, "n": n, "beta": beta });
            let payload = json!({
                "i_sizes": assignment.params.i_sizes(),
                "j_sizes": assignment.params.j_sizes(),
                "order": assignment.order,
                "rates": {
                    "i_u_z": units.rate(rates.i_u_z),
                    "i_us_x": units.rates(&rates.i_us_x),
                    "i_s_x_given_u": units.rates(&rates.i_s_x_given_u),
                },
            });
            Ok((config, payload))
        }
    }
}

fn sim_payload(r: &protosim::SimResult, units: Units) -> Value {
    json!({
        "mode": r.mode,
        "errors": r.errors,
        "error_std_errs": r.error_std_errs,
        "leakages": units.rates(&r.leakages),
        "pair_tvs": r.pair_tvs,
        "joint_tv": r.joint_tv,
        "trials": r.trials,
        "encoder_fallback": r.encoder_fallback,
        "estimates_biased": r.estimates_biased,
    })
}

fn simulate(cmd: &SimulateCmd, units: Units) -> Result<(Value, Value), CliError> {
    match cmd {
        SimulateCmd::Exact { sim } => {
            let src = load_source(&sim.source)?;
            let scheme = load_aux(&sim.aux, &src)?;
            let params = OneShotParams::new(sim.i_sizes.clone(), sim.j_sizes.clone())?;
            let r = protosim::exact_evaluate(
                &src,
                &scheme,
                &params,
                sim.n,
                sim.codebook_seed,
                &sim.budget(),
            )?;
            let config = json!({
                "source": sim.source, "aux": sim.aux,
                "i_sizes": sim.i_sizes, "j_sizes": sim.j_sizes, "n": sim.n,
                "codebook_seed": sim.codebook_seed,
                "max_table_cells": sim.max_table_cells, "max_states": sim.max_states,
            });
            Ok((config, sim_payload(&r, units)))
        }
        SimulateCmd::Mc {
            sim,
            trials,
            source_seed,
        } => {
            let src = load_source(&sim.source)?;
            let scheme = load_aux(&sim.aux, &src)?;
            let params = OneShotParams::new(sim.i_sizes.clone(), sim.j_sizes.clone())?;
            let r = protosim::run_monte_carlo(
                &src,
                &scheme,
                &params,
                sim.n,
                *trials,
                sim.codebook_seed,
                *source_seed,
                &sim.budget(),
            )?;
            let config = json!({
                "source": sim.source, "aux": sim.aux,
                "i_sizes": sim.i_sizes, "j_sizes": sim.j_sizes, "n": sim.n,
                "trials": trials, "codebook_seed": sim.codebook_seed,
                "source_seed": source_seed,
                "max_table_cells": sim.max_table_cells, "max_states": sim.max_states,
            });
            Ok((config, sim_payload(&r, units)))
        }
    }
}

fn hc(cmd: &HcCmd, units: Units) -> Result<(Value, Value), CliError> {
    match cmd {
        HcCmd::Check { source, p, search } => {
            let src = load_source(source)?;
            let pmf = src.x_marginal();
            let point = hc_point(p)?;
            let cfg = search.to_config(None);
            let resolved_u = cfg.u_size.unwrap_or(pmf.len() + 1);
            let verdict = hyperc::check_hypercontractive(&pmf, &point, &cfg)?;
            let config = json!({
                "source": source, "p": p,
                "restarts": cfg.restarts, "iterations": cfg.iterations,
                "seed": cfg.seed, "u_size": resolved_u,
            });
            let payload = json!({
                "status": verdict.status,
                "margin": units.rate(verdict.margin),
                "witness": verdict.witness,
                "evaluations": verdict.evaluations,
            });
            Ok((config, payload))
        }
        HcCmd::Functional {
            source,
            p,
            functions,
        } => {
            let src = load_source(source)?;
            let pmf = src.x_marginal();
            let point = hc_point(p)?;
            let tables: Vec<Vec<f64>> = functions
                .iter()
                .map(|s| {
                    s.split(',')
                        .map(|v| {
                            v.trim()
                                .parse::<f64>()
                                .map_err(|e| CliError::Usage(format!("bad function value: {e}")))
                        })
                        .collect()
                })
                .collect::<Result<_, _>>()?;
            let r = hyperc::functional_check(&pmf, &point, &tables)?;
            let config = json!({ "source": source, "p": p, "functions": functions });
            let payload = json!({ "lhs": r.lhs, "rhs": r.rhs, "satisfied": r.satisfied });
            Ok((config, payload))
        }
        HcCmd::Sdpi { source, search } => {
            let src = load_source(source)?;
            if src.receivers() != 2 {
                return Err(CliError::Usage(format!(
                    "sdpi needs a source with m = 2 receivers, got m = {}",
                    src.receivers()
                )));
            }
            let pmf = src.x_marginal();
            let cfg = search.to_config(None);
            let resolved_u = cfg.u_size.unwrap_or(pmf.sizes()[0] + 1);
            let s = hyperc::sdpi_coefficient(&pmf, &cfg)?;
            let config = json!({
                "source": source,
                "restarts": cfg.restarts, "iterations": cfg.iterations,
                "seed": cfg.seed, "u_size": resolved_u,
            });
            Ok((config, json!({ "coefficient": s })))
        }
    }
}

fn converse(cmd: &ConverseCmd, units: Units) -> Result<(Value, Value), CliError> {
    match cmd {
        ConverseCmd::Theorem4 { k, w, p } => {
            let point = hc_point(p)?;
            let bound = hyperc::zero_rate_tv_bound(*k, w, &point)?;
            let config = json!({ "K": k, "W": w, "p": p });
            Ok((config, json!({ "bound": bound })))
        }
        ConverseCmd::Margin { k, w, p } => {
            let point = hc_point(p)?;
            let margin = hyperc::zero_rate_margin(*k, w, &point)?;
            let config = json!({ "K": k, "W": w, "p": p });
            Ok((config, json!({ "margin": units.rate(margin) })))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_fair_coins_doc() -> String {
        let mut pmf = vec![0.0; 16];
        for x1 in 0..2 {
            for x2 in 0..2 {
                let z = x1 * 2 + x2;
                pmf[(z * 2 + x1) * 2 + x2] = 0.25;
            }
        }
        serde_json::to_string(&SourceFile {
            name: Some("two-fair-coins".into()),
            m: 2,
            z_size: 4,
            x_sizes: vec![2, 2],
            omniscient: true,
            pmf,
        })
        .unwrap()
    }

    #[test]
    fn parse_source_golden_document() {
        let src = parse_source(&two_fair_coins_doc()).unwrap();
        assert_eq!(src.receivers(), 2);
        assert!(src.omniscient());
        assert_eq!(src.z_size(), 4);
    }

    #[test]
    fn parse_source_distinct_diagnostics() {
        assert!(matches!(
            parse_source("not json").unwrap_err(),
            SourceError::Malformed(_)
        ));

        let half = r#"{"m":1,"z_size":2,"x_sizes":[1],"pmf":[0.25,0.25]}"#;
        assert!(matches!(
            parse_source(half).unwrap_err(),
            SourceError::SumOutOfTolerance { .. }
        ));

        let neg = r#"{"m":1,"z_size":2,"x_sizes":[1],"pmf":[1.5,-0.5]}"#;
        assert!(matches!(
            parse_source(neg).unwrap_err(),
            SourceError::NegativeMass { index: 1, .. }
        ));

        // Off-diagonal mass contradicts the omniscient flag.
        let bad = r#"{"m":1,"z_size":2,"x_sizes":[2],"omniscient":true,
                      "pmf":[0.25,0.25,0.25,0.25]}"#;
        assert!(matches!(
            parse_source(bad).unwrap_err(),
            SourceError::InconsistentOmniscient(_)
        ));

        let shape = r#"{"m":2,"z_size":2,"x_sizes":[2],"pmf":[0.5,0.5,0,0]}"#;
        assert!(matches!(
            parse_source(shape).unwrap_err(),
            SourceError::Shape(_)
        ));
    }

    #[test]
    fn parse_source_normalizes_small_drift() {
        let doc = r#"{"m":1,"z_size":2,"x_sizes":[1],"pmf":[0.5000000001,0.4999999999]}"#;
        let src = parse_source(doc).unwrap();
        let total: f64 = src.pmf().probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    fn argv(parts: &[&str]) -> Vec<String> {
        parts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn converse_theorem4_worked_value() {
        let report = dispatch(&argv(&[
            "skgen", "converse", "theorem4", "--K", "100", "--W", "2,2", "--p", "1,1",
        ]))
        .unwrap();
        let bound = report.payload["bound"].as_f64().unwrap();
        assert!((bound - 0.79).abs() < 1e-12);
        assert_eq!(report.units, "bits");
    }

    #[test]
    fn dispatch_is_deterministic_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let src_path = dir.path().join("source.json");
        std::fs::write(&src_path, two_fair_coins_doc()).unwrap();
        let cmd = argv(&[
            "skgen",
            "region",
            "maximize",
            "--source",
            src_path.to_str().unwrap(),
            "--budgets",
            "0,1",
            "--restarts",
            "6",
            "--iterations",
            "30",
            "--seed",
            "0",
        ]);
        let a = dispatch(&cmd).unwrap();
        let b = dispatch(&cmd).unwrap();
        assert_eq!(
            serde_json::to_string(&a.payload).unwrap(),
            serde_json::to_string(&b.payload).unwrap()
        );
        // The echoed command re-executes to the same payload.
        let c = dispatch(&a.command).unwrap();
        assert_eq!(
            serde_json::to_string(&a.payload).unwrap(),
            serde_json::to_string(&c.payload).unwrap()
        );
        // The XOR-helper instance reaches one bit within two percent.
        assert!(a.payload["key_rate"].as_f64().unwrap() >= 0.98);
    }

    #[test]
    fn units_flag_scales_rate_fields() {
        let dir = tempfile::tempdir().unwrap();
        let src_path = dir.path().join("source.json");
        std::fs::write(&src_path, two_fair_coins_doc()).unwrap();
        let u_path = dir.path().join("u.json");
        let u = ChannelFile {
            input_sizes: vec![2, 2],
            output_size: 2,
            rows: vec![
                vec![1.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, 1.0],
            ],
        };
        std::fs::write(&u_path, serde_json::to_string(&u).unwrap()).unwrap();
        let base = [
            "skgen",
            "region",
            "theorem2",
            "--source",
            src_path.to_str().unwrap(),
            "--u",
            u_path.to_str().unwrap(),
        ];
        let bits = dispatch(&argv(&base)).unwrap();
        let mut with_nats: Vec<&str> = base.to_vec();
        with_nats.push("--nats");
        let nats = dispatch(&argv(&with_nats)).unwrap();
        assert_eq!(bits.units, "bits");
        assert_eq!(nats.units, "nats");
        let kb = bits.payload["key_rate"].as_f64().unwrap();
        let kn = nats.payload["key_rate"].as_f64().unwrap();
        assert!((kb - kn / LN_2).abs() < 1e-12);
        assert!((kb - 1.0).abs() < 1e-9);
        for l in 0..2 {
            let cb = bits.payload["comm_rates"][l].as_f64().unwrap();
            let cn = nats.payload["comm_rates"][l].as_f64().unwrap();
            assert!((cb - cn / LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn hc_functional_via_cli() {
        let dir = tempfile::tempdir().unwrap();
        let src_path = dir.path().join("corr.json");
        // Z = X_1 = X_2 fair bit (perfectly correlated receiver pair).
        std::fs::write(
            &src_path,
            r#"{"m":2,"z_size":2,"x_sizes":[2,2],
                "pmf":[0.5,0,0,0, 0,0,0,0.5]}"#,
        )
        .unwrap();
        let run = |p: &str| {
            dispatch(&argv(&[
                "skgen",
                "hc",
                "functional",
                "--source",
                src_path.to_str().unwrap(),
                "--p",
                p,
                "--f",
                "1,0",
                "--f",
                "1,0",
            ]))
            .unwrap()
        };
        let at_2 = run("2,2");
        assert_eq!(at_2.payload["satisfied"], true);
        assert!((at_2.payload["lhs"].as_f64().unwrap() - 0.5).abs() < 1e-12);
        let at_18 = run("1.8,1.8");
        assert_eq!(at_18.payload["satisfied"], false);
    }

    #[test]
    fn usage_errors_are_flagged() {
        let err = dispatch(&argv(&["skgen", "region", "nonsense"])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = dispatch(&argv(&["skgen", "--help"])).unwrap_err();
        assert_eq!(err.exit_code(), 0);
    }

    #[test]
    fn validation_errors_are_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, r#"{"m":1,"z_size":2,"x_sizes":[1],"pmf":[0.3,0.3]}"#).unwrap();
        let err = dispatch(&argv(&[
            "skgen",
            "hc",
            "sdpi",
            "--source",
            bad.to_str().unwrap(),
        ]))
        .unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
