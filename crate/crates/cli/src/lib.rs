//! Command implementations for the `poa` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use poa_core::experiments::{oracle_check, robustness, sweep_blind, write_sweep_csv, OracleConfig};
use poa_core::index_sets::{IndexSetKind, DEFAULT_CAP};
use poa_core::mechanisms::{basis_power, basis_set_covering, marginal_contribution, BasisFunction, Mechanism};
use poa_core::network::{partition_into_classes, validate_partition, ClassPartition, NetworkFile};
use poa_core::oracle::{RandomGameParams, DEFAULT_PROFILE_CAP};
use poa_core::poa::{optimize_mechanism, optimize_two_class, poa_dual, poa_primal, PoaOptions, TwoClassModel};
use poa_core::PoaError;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;
pub const EXIT_LP: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "poa", version, about = "Exact price of anarchy and optimal utility design over information networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// PoA of a mechanism on a network, via the primal and/or dual program.
    Poa(PoaArgs),
    /// Optimal mechanism for a network or a two-class failure model.
    Optimize(OptimizeArgs),
    /// Marginal contribution vs optimal PoA for 0..=n blind agents (CSV).
    SweepBlind(SweepArgs),
    /// PoA of the full-information optimum under agent failures (CSV).
    Robustness(RobustnessArgs),
    /// Random-game soundness trials and the tight-instance check.
    OracleCheck(OracleArgs),
    /// Similarity classes of a network and the partition conditions.
    Partition(PartitionArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Method {
    Primal,
    Dual,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IndexKind {
    Full,
    Reduced,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FailureMode {
    Blind,
    Isolated,
}

impl From<FailureMode> for TwoClassModel {
    fn from(m: FailureMode) -> Self {
        match m {
            FailureMode::Blind => TwoClassModel::Blind,
            FailureMode::Isolated => TwoClassModel::Isolated,
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Index-set size cap.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoaArgs {
    /// Network JSON: {"n": .., "obs": [[1-based agents], ..]}.
    #[arg(long)]
    pub network: PathBuf,
    /// `setcover`, `power:<d>` or `file:<path>`.
    #[arg(long, default_value = "setcover")]
    pub basis: String,
    /// Mechanism JSON {"per_class": [[f(0), .., f(|N_j|+1)], ..]}; marginal contribution when absent.
    #[arg(long)]
    pub mechanism: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Both)]
    pub method: Method,
    /// Index set for the dual program.
    #[arg(long, value_enum, default_value_t = IndexKind::Reduced)]
    pub index: IndexKind,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Network JSON; alternatively use --blind or --isolated with --n.
    #[arg(long, conflicts_with_all = ["blind", "isolated"])]
    pub network: Option<PathBuf>,
    /// Number of blind agents.
    #[arg(long, conflicts_with = "isolated", requires = "n")]
    pub blind: Option<usize>,
    /// Number of isolated agents.
    #[arg(long, requires = "n")]
    pub isolated: Option<usize>,
    /// Total agents; without --blind/--isolated this means full information.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value = "setcover")]
    pub basis: String,
    /// Writes the normalized mechanism as mechanism JSON.
    #[arg(long)]
    pub save_mechanism: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 15)]
    pub n: usize,
    #[arg(long, default_value = "setcover")]
    pub basis: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[arg(long, default_value_t = 15)]
    pub n: usize,
    #[arg(long, default_value = "power:0.5")]
    pub basis: String,
    #[arg(long, value_enum, default_value_t = FailureMode::Blind)]
    pub mode: FailureMode,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, default_value = "setcover")]
    pub basis: String,
    #[arg(long)]
    pub mechanism: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Resources per random game.
    #[arg(long, default_value_t = 4)]
    pub resources: usize,
    /// Action profile cap for enumeration.
    #[arg(long, default_value_t = DEFAULT_PROFILE_CAP)]
    pub profile_cap: u128,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<PoaError> for CliError {
    fn from(e: PoaError) -> Self {
        let code = match e {
            PoaError::Validation(_) => EXIT_VALIDATION,
            PoaError::Capacity { .. } => EXIT_CAPACITY,
            PoaError::Invariant(_) => EXIT_INVARIANT,
            PoaError::LpStatus { .. } | PoaError::Solver(_) => EXIT_LP,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_VALIDATION,
        message: msg.into(),
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| validation(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| validation(format!("invalid {what} {}: {e}", path.display())))
}

/// Parses `setcover`, `power:<d>` or `file:<path>` for multiplicities up to `n`.
pub fn parse_basis(spec: &str, n: usize) -> CliResult<BasisFunction> {
    if spec == "setcover" {
        return Ok(basis_set_covering(n)?);
    }
    if let Some(d) = spec.strip_prefix("power:") {
        let d: f64 = d
            .parse()
            .map_err(|_| validation(format!("invalid power exponent {d:?}")))?;
        return Ok(basis_power(n, d)?);
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let w: BasisFunction = read_json(Path::new(path), "basis file")?;
        w.require(n)?;
        return Ok(w);
    }
    Err(validation(format!(
        "unknown basis {spec:?}; expected setcover, power:<d> or file:<path>"
    )))
}

fn load_partition(path: &Path) -> CliResult<ClassPartition> {
    let file: NetworkFile = read_json(path, "network file")?;
    let net = file.into_network()?;
    Ok(partition_into_classes(&net))
}

fn load_mechanism(path: Option<&Path>, part: &ClassPartition, w: &BasisFunction) -> CliResult<Mechanism> {
    match path {
        Some(p) => read_json(p, "mechanism file"),
        None => Ok(marginal_contribution(w, part)?),
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| validation(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| validation(format!("cannot write output: {e}")))
        }
    }
}

fn emit_json(out: Option<&Path>, v: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    text.push('\n');
    emit(out, &text)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types always serialize")
}

/// Runs a parsed command and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Poa(a) => cmd_poa(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::SweepBlind(a) => cmd_sweep_blind(a),
        Command::Robustness(a) => cmd_robustness(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
        Command::Partition(a) => cmd_partition(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn cmd_poa(a: PoaArgs) -> CliResult<i32> {
    let part = load_partition(&a.network)?;
    let w = parse_basis(&a.basis, part.n())?;
    let f = load_mechanism(a.mechanism.as_deref(), &part, &w)?;
    let opts = PoaOptions {
        index_kind: match a.index {
            IndexKind::Full => IndexSetKind::Full,
            IndexKind::Reduced => IndexSetKind::Reduced,
        },
        cap: a.common.cap,
        ..PoaOptions::default()
    };
    let primal = match a.method {
        Method::Primal | Method::Both => Some(poa_primal(&part, &w, &f, &opts)?),
        Method::Dual => None,
    };
    let dual = match a.method {
        Method::Dual | Method::Both => Some(poa_dual(&part, &w, &f, &opts)?),
        Method::Primal => None,
    };
    let main = dual.as_ref().or(primal.as_ref()).expect("at least one method runs");
    let mut v = json!({
        "poa": main.poa,
        "lp_value": main.lp_value,
        "gate_failed": main.gate_failed.map(|j| j + 1),
        "lambda": main.lambda,
        "mu": main.mu,
        "mechanism": to_value(&f),
        "classes": to_value(&part.to_file()),
    });
    if let Some(p) = &primal {
        v["primal"] = to_value(p);
    }
    if let Some(d) = &dual {
        let mut d = to_value(d);
        if let Some(obj) = d.as_object_mut() {
            obj.remove("theta");
        }
        v["dual"] = d;
    }
    if let (Some(p), Some(d)) = (&primal, &dual) {
        if let (Some(x), Some(y)) = (p.lp_value, d.lp_value) {
            v["delta"] = json!((x - y).abs());
        }
    }
    emit_json(a.common.out.as_deref(), &v)?;
    Ok(EXIT_OK)
}

fn cmd_optimize(a: OptimizeArgs) -> CliResult<i32> {
    let opts = PoaOptions {
        cap: a.common.cap,
        ..PoaOptions::default()
    };
    let (v, normalized) = if let Some(path) = &a.network {
        let part = load_partition(path)?;
        let w = parse_basis(&a.basis, part.n())?;
        let d = optimize_mechanism(&part, &w, &opts)?;
        let v = json!({
            "poa_opt": d.poa_opt,
            "mu_opt": d.mu_opt,
            "mechanism": to_value(&d.mechanism),
            "normalized": to_value(&d.normalized),
            "classes": to_value(&part.to_file()),
        });
        (v, d.normalized)
    } else {
        let n = a.n.ok_or_else(|| validation("optimize needs --network or --n"))?;
        let w = parse_basis(&a.basis, n)?;
        let failure = match (a.blind, a.isolated) {
            (Some(k), _) => Some((TwoClassModel::Blind, k)),
            (None, Some(k)) => Some((TwoClassModel::Isolated, k)),
            (None, None) => None,
        };
        match failure {
            None => {
                let part = ClassPartition::single_class(n)?;
                let d = optimize_mechanism(&part, &w, &opts)?;
                let v = json!({
                    "n": n,
                    "poa_opt": d.poa_opt,
                    "mu_opt": d.mu_opt,
                    "mechanism": to_value(&d.mechanism),
                    "normalized": to_value(&d.normalized),
                });
                (v, d.normalized)
            }
            Some((model, kappa)) => {
                let d = optimize_two_class(model, n, kappa, &w, &opts)?;
                let mut per_class = Vec::new();
                if kappa > 0 {
                    per_class.push(vec![0.0, w.at(1), 0.0]);
                }
                if let Some(f) = &d.f_obs_normalized {
                    per_class.push(f.clone());
                }
                (to_value(&d), Mechanism::new(per_class))
            }
        }
    };
    if let Some(path) = &a.save_mechanism {
        emit_json(Some(path), &to_value(&normalized))?;
    }
    emit_json(a.common.out.as_deref(), &v)?;
    Ok(EXIT_OK)
}

fn csv_text(rows: &[poa_core::experiments::SweepRow]) -> String {
    let mut buf = Vec::new();
    write_sweep_csv(rows, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}

fn cmd_sweep_blind(a: SweepArgs) -> CliResult<i32> {
    let w = parse_basis(&a.basis, a.n)?;
    let opts = PoaOptions {
        cap: a.common.cap,
        ..PoaOptions::default()
    };
    let rows = sweep_blind(a.n, &w, &opts)?;
    emit(a.common.out.as_deref(), &csv_text(&rows))?;
    Ok(EXIT_OK)
}

fn cmd_robustness(a: RobustnessArgs) -> CliResult<i32> {
    let w = parse_basis(&a.basis, a.n)?;
    let opts = PoaOptions {
        cap: a.common.cap,
        ..PoaOptions::default()
    };
    let rows = robustness(a.n, &w, a.mode.into(), &opts)?;
    emit(a.common.out.as_deref(), &csv_text(&rows))?;
    Ok(EXIT_OK)
}

fn cmd_oracle_check(a: OracleArgs) -> CliResult<i32> {
    let part = load_partition(&a.network)?;
    let w = parse_basis(&a.basis, part.n())?;
    let f = load_mechanism(a.mechanism.as_deref(), &part, &w)?;
    let opts = PoaOptions {
        cap: a.common.cap,
        ..PoaOptions::default()
    };
    let cfg = OracleConfig {
        seed: a.seed,
        trials: a.trials,
        params: RandomGameParams {
            resources: a.resources,
            ..RandomGameParams::default()
        },
        profile_cap: a.profile_cap,
    };
    let report = oracle_check(&part, &w, &f, &cfg, &opts)?;
    let mut v = to_value(&report);
    v["passed"] = json!(report.passed());
    emit_json(a.common.out.as_deref(), &v)?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_INVARIANT })
}

fn cmd_partition(a: PartitionArgs) -> CliResult<i32> {
    let file: NetworkFile = read_json(&a.network, "network file")?;
    let net = file.into_network()?;
    let part = partition_into_classes(&net);
    let report = validate_partition(&net, &part);
    let v = json!({
        "n": part.n(),
        "classes": to_value(&part.to_file()),
        "kappa": part.kappas(),
        "repaired_agents": net.repaired_agents().iter().map(|a| a + 1).collect::<Vec<_>>(),
        "conditions": to_value(&report),
    });
    emit_json(a.out.as_deref(), &v)?;
    Ok(EXIT_OK)
}
