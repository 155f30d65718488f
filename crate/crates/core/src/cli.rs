//! The `steercost` command line.
//!
//! Every subcommand prints one JSON document (or CSV for sweeps) carrying
//! `"schema": "v1"`. A flat JSON config file given with `--config` supplies
//! defaults; flags override it. Exit codes: 0 success, 1 computational
//! failure, 2 bad usage.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundKind, BoundReport};
use crate::protocol::{self, ScanResult, SimulationReport};
use crate::quantum::{
    self, sampling, Assemblage, AssemblageDoc, DensityMatrix, MeasurementSet, SCHEMA_VERSION,
};
use crate::sdp::SolverConfig;
use crate::steering::{self, RobustnessDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    /// V|φ⁺⟩⟨φ⁺| + (1−V)𝟙/d²
    Isotropic,
    /// cos θ|00⟩ + sin θ|11⟩
    Pure,
    /// normalised projector onto the antisymmetric subspace
    Antisym,
    /// random mixture of product states (needs --seed)
    RandomSeparable,
    /// V·(random pure) + (1−V)·(random mixed) (needs --seed)
    RandomEntangled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasKind {
    /// all d+1 mutually unbiased bases (prime d)
    Mub,
    /// dichotomic measurements of k anticommuting observables (d = 2^k)
    Clifford,
    /// qubit σ_z and σ_x
    Xz,
    /// qubit σ_x, σ_y and σ_z
    Xyz,
    /// random qubit Bloch directions (needs --seed, --settings)
    RandomBloch,
    /// random orthonormal bases (needs --seed, --settings)
    RandomBases,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideArg {
    Primal,
    Dual,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// sends (x, a); works for any assemblage
    Copy,
    /// zero bits from an LHS witness; LHS assemblages only
    Lhs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// Fibonacci dictionaries of 2^t states against ψ_θ
    Net,
    /// distance from steered states of ψ_θ to a fixed candidate set
    Impossibility,
    /// orthogonality of steered states of the antisymmetric state
    Antisym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionKind {
    Random,
    Fibonacci,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsKindArg {
    Mub,
    Clifford,
    Approx,
    /// every combination of the given --d/--m/--V/--eps values
    Sweep,
}

#[derive(Debug, Parser)]
#[command(
    name = "steercost",
    version,
    about = "Classical communication cost of quantum steering"
)]
pub struct Cli {
    /// Flat JSON file with defaults for any flag (snake_case keys)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for sweeps and scans
    #[arg(long, global = true, env = "STEERCOST_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an assemblage from a state and measurements and print it
    Assemblage(ScenarioArgs),
    /// Decide whether an assemblage admits an LHS model
    Membership {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// LHS robustness ν (primal/dual SDP) and the bound t ≥ log₂(ν+1)
    Robustness {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum)]
        side: Option<SideArg>,
    },
    /// Closed-form communication bounds
    Bounds {
        #[arg(value_enum)]
        kind: BoundsKindArg,
        #[arg(long, value_delimiter = ',')]
        d: Option<Vec<usize>>,
        /// number of anticommuting observables
        #[arg(long, visible_alias = "k", value_delimiter = ',')]
        m: Option<Vec<usize>>,
        #[arg(long = "V", value_delimiter = ',')]
        v: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Simulate finite-message protocols and scans against pure steering
    Simulate(SimulateArgs),
    /// Build σ* from an exact protocol and verify it is LHS
    SigmaStar {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolKind>,
    },
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Read the assemblage from a JSON document instead of building one
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    state: Option<StateKind>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "V")]
    v: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, value_enum)]
    meas: Option<MeasKind>,
    #[arg(long)]
    k: Option<usize>,
    /// number of random measurement settings
    #[arg(long)]
    settings: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long)]
    eps_abs: Option<f64>,
    #[arg(long)]
    eps_feas: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    penalty: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    mode: Option<SimMode>,
    #[arg(long)]
    theta: Option<f64>,
    /// message lengths in bits
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<u32>>,
    /// number of sampled measurement directions (or bases)
    #[arg(long)]
    dirs: Option<usize>,
    #[arg(long, value_enum)]
    directions: Option<DirectionKind>,
    /// size of the Fibonacci candidate set for --mode impossibility
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Contents of a `--config` file. Every key is optional and unknown keys
/// are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub state: Option<StateKind>,
    pub d: Option<OneOrMany<usize>>,
    #[serde(rename = "V")]
    pub v: Option<OneOrMany<f64>>,
    pub theta: Option<f64>,
    pub meas: Option<MeasKind>,
    pub k: Option<OneOrMany<usize>>,
    pub m: Option<OneOrMany<usize>>,
    pub settings: Option<usize>,
    pub t: Option<OneOrMany<u32>>,
    pub eps: Option<OneOrMany<f64>>,
    pub dirs: Option<usize>,
    pub directions: Option<DirectionKind>,
    pub candidates: Option<usize>,
    pub seed: Option<u64>,
    pub side: Option<SideArg>,
    pub protocol: Option<ProtocolKind>,
    pub mode: Option<SimMode>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub jobs: Option<usize>,
    pub eps_abs: Option<f64>,
    pub eps_feas: Option<f64>,
    pub max_iter: Option<usize>,
    pub penalty: Option<f64>,
    pub adapt_interval: Option<usize>,
    pub relaxation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Compute(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn compute(e: impl std::fmt::Display) -> CliError {
    CliError::Compute(e.to_string())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}\n\nRun `steercost --help` for usage."),
                CliError::Compute(m) => eprintln!("computation failed: {m}"),
            }
            e.code()
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.config)?;
    let format = cli.format.or(cfg.format).unwrap_or(Format::Json);
    let out = cli.out.clone().or(cfg.out.clone());
    let jobs = cli.jobs.or(cfg.jobs);
    let body = match jobs {
        Some(0) => return usage("--jobs must be at least 1"),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(compute)?;
            pool.install(|| dispatch(&cli.command, &cfg, format))?
        }
        None => dispatch(&cli.command, &cfg, format)?,
    };
    match out {
        Some(path) => std::fs::write(&path, body)
            .map_err(|e| CliError::Compute(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(compute)?;
    s.push('\n');
    Ok(s)
}

fn json_only(format: Format, what: &str) -> Result<(), CliError> {
    match format {
        Format::Json => Ok(()),
        Format::Csv => usage(format!("{what} output is only available as JSON")),
    }
}

fn dispatch(cmd: &Command, cfg: &RunConfig, format: Format) -> Result<String, CliError> {
    match cmd {
        Command::Assemblage(s) => {
            json_only(format, "assemblage")?;
            let asm = scenario(s, cfg)?;
            json(&asm.to_document())
        }
        Command::Membership { scenario: s, solver } => {
            json_only(format, "membership")?;
            let asm = scenario(s, cfg)?;
            let sc = solver_config(solver, cfg)?;
            let m = steering::lhs_membership(&asm, &sc).map_err(compute)?;
            json(&MembershipDoc {
                schema: SCHEMA_VERSION.into(),
                is_lhs: m.is_lhs,
                nu: m.nu,
                t_lower_bound: steering::comm_lower_bound(m.nu).map_err(compute)?,
                witness_residual: m.witness_residual,
                certificate_violation: m.certificate.map(|c| c.violation),
            })
        }
        Command::Robustness {
            scenario: s,
            solver,
            side,
        } => {
            json_only(format, "robustness")?;
            let asm = scenario(s, cfg)?;
            let sc = solver_config(solver, cfg)?;
            let side = side.or(cfg.side).unwrap_or(SideArg::Both);
            let primal = match side {
                SideArg::Primal | SideArg::Both => {
                    Some(steering::robustness_primal(&asm, &sc).map_err(compute)?)
                }
                SideArg::Dual => None,
            };
            let dual = match side {
                SideArg::Dual | SideArg::Both => {
                    Some(steering::robustness_dual(&asm, &sc).map_err(compute)?)
                }
                SideArg::Primal => None,
            };
            let main = primal.as_ref().or(dual.as_ref()).expect("at least one side");
            json(&RobustnessOutput {
                schema: SCHEMA_VERSION.into(),
                nu: main.nu,
                t_lower_bound: main.t_lower_bound,
                duality_gap: match (&primal, &dual) {
                    (Some(p), Some(d)) => Some((p.nu - d.nu).abs()),
                    _ => None,
                },
                primal: primal.as_ref().map(|r| r.to_document()),
                dual: dual.as_ref().map(|r| r.to_document()),
            })
        }
        Command::Bounds { kind, d, m, v, eps } => {
            let pick = |flag: &Option<Vec<usize>>, conf: &Option<OneOrMany<usize>>| {
                flag.clone().or_else(|| conf.as_ref().map(|c| c.to_vec()))
            };
            let d = pick(d, &cfg.d);
            let m = pick(m, &cfg.m).or_else(|| cfg.k.as_ref().map(|c| c.to_vec()));
            let v = v.clone().or_else(|| cfg.v.as_ref().map(|c| c.to_vec()));
            let eps = eps.clone().or_else(|| cfg.eps.as_ref().map(|c| c.to_vec()));
            let reports = bound_reports(*kind, d, m, v, eps)?;
            match format {
                Format::Csv => {
                    let mut s = String::from(bounds::csv_header());
                    s.push('\n');
                    for r in &reports {
                        s.push_str(&bounds::csv_row(r));
                        s.push('\n');
                    }
                    Ok(s)
                }
                Format::Json => {
                    let docs: Vec<BoundDoc> = reports.iter().map(BoundDoc::from_report).collect();
                    if docs.len() == 1 && *kind != BoundsKindArg::Sweep {
                        json(&docs[0])
                    } else {
                        json(&BoundsList {
                            schema: SCHEMA_VERSION.into(),
                            bounds: docs,
                        })
                    }
                }
            }
        }
        Command::Simulate(a) => simulate(a, cfg, format),
        Command::SigmaStar {
            scenario: s,
            solver,
            protocol,
        } => {
            json_only(format, "sigma-star")?;
            let asm = scenario(s, cfg)?;
            let sc = solver_config(solver, cfg)?;
            let kind = protocol.or(cfg.protocol).unwrap_or(ProtocolKind::Copy);
            sigma_star(&asm, &sc, kind)
        }
    }
}

fn solver_config(a: &SolverArgs, cfg: &RunConfig) -> Result<SolverConfig, CliError> {
    let base = SolverConfig::default();
    let sc = SolverConfig {
        eps_abs: a.eps_abs.or(cfg.eps_abs).unwrap_or(base.eps_abs),
        eps_feas: a.eps_feas.or(cfg.eps_feas).unwrap_or(base.eps_feas),
        max_iter: a.max_iter.or(cfg.max_iter).unwrap_or(base.max_iter),
        penalty: a.penalty.or(cfg.penalty).unwrap_or(base.penalty),
        adapt_interval: cfg.adapt_interval.unwrap_or(base.adapt_interval),
        relaxation: cfg.relaxation.unwrap_or(base.relaxation),
    };
    sc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(sc)
}

fn single<T: Clone>(name: &str, v: &Option<OneOrMany<T>>) -> Result<Option<T>, CliError> {
    match v {
        None => Ok(None),
        Some(OneOrMany::One(x)) => Ok(Some(x.clone())),
        Some(OneOrMany::Many(xs)) if xs.len() == 1 => Ok(Some(xs[0].clone())),
        Some(_) => usage(format!("config key {name} must be a single value here")),
    }
}

fn need<T>(name: &str, v: Option<T>) -> Result<T, CliError> {
    match v {
        Some(x) => Ok(x),
        None => usage(format!("missing required --{name}")),
    }
}

fn scenario(s: &ScenarioArgs, cfg: &RunConfig) -> Result<Assemblage, CliError> {
    if let Some(path) = s.input.clone().or(cfg.input.clone()) {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        return Assemblage::from_json(&text)
            .map_err(|e| CliError::Usage(format!("invalid assemblage {}: {e}", path.display())));
    }
    let state_kind = need("state", s.state.or(cfg.state))?;
    let meas_kind = need("meas", s.meas.or(cfg.meas))?;
    let d = s.d.or(single("d", &cfg.d)?);
    let v = s.v.or(single("V", &cfg.v)?);
    let theta = s.theta.or(cfg.theta);
    let k = s.k.or(single("k", &cfg.k)?);
    let settings = s.settings.or(cfg.settings);
    let seed = s.seed.or(cfg.seed);
    let random_state = matches!(
        state_kind,
        StateKind::RandomSeparable | StateKind::RandomEntangled
    );
    let random_meas = matches!(meas_kind, MeasKind::RandomBloch | MeasKind::RandomBases);
    let mut rng = if random_state || random_meas {
        ChaCha8Rng::seed_from_u64(need("seed", seed)?)
    } else {
        ChaCha8Rng::seed_from_u64(0)
    };
    let bad = |e: quantum::QuantumError| CliError::Usage(e.to_string());

    let state: DensityMatrix = match state_kind {
        StateKind::Isotropic => {
            quantum::isotropic_state(need("d", d)?, need("V", v)?).map_err(bad)?
        }
        StateKind::Pure => quantum::pure_theta_state(need("theta", theta)?).map_err(bad)?,
        StateKind::Antisym => quantum::antisymmetric_state(need("d", d)?).map_err(bad)?,
        StateKind::RandomSeparable => {
            let d = need("d", d)?;
            sampling::random_separable_state(d, d, 4, &mut rng)
        }
        StateKind::RandomEntangled => {
            let d = need("d", d)?;
            let v = v.unwrap_or(0.9);
            if !(0.0..=1.0).contains(&v) {
                return usage(format!("V = {v} outside [0, 1]"));
            }
            sampling::random_entangled_state(d, 1.0 - v, &mut rng)
        }
    };
    let da = (state.dim() as f64).sqrt().round() as usize;
    let z = [0.0, 0.0, 1.0];
    let x = [1.0, 0.0, 0.0];
    let y = [0.0, 1.0, 0.0];
    let meas: MeasurementSet = match meas_kind {
        MeasKind::Mub => quantum::mub_bases(da).map_err(bad)?,
        MeasKind::Clifford => {
            let k = need("k", k)?;
            let obs = quantum::clifford_observables(k).map_err(bad)?;
            quantum::dichotomic_povm_from_observables(&obs).map_err(bad)?
        }
        MeasKind::Xz => quantum::bloch_measurements(&[z, x]).map_err(bad)?,
        MeasKind::Xyz => quantum::bloch_measurements(&[x, y, z]).map_err(bad)?,
        MeasKind::RandomBloch => {
            sampling::random_bloch_measurements(need("settings", settings)?, &mut rng)
        }
        MeasKind::RandomBases => {
            let n = need("settings", settings)?;
            let bases: Vec<_> = (0..n).map(|_| sampling::random_basis(da, &mut rng)).collect();
            quantum::projective_measurements(&bases)
        }
    };
    quantum::compute_assemblage(&state, &meas).map_err(bad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MembershipDoc {
    pub schema: String,
    #[serde(rename = "isLHS")]
    pub is_lhs: bool,
    pub nu: f64,
    pub t_lower_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RobustnessOutput {
    pub schema: String,
    pub nu: f64,
    pub t_lower_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duality_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primal: Option<RobustnessDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual: Option<RobustnessDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundDoc {
    pub schema: String,
    pub kind: BoundKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub t_bound: f64,
    pub raw: f64,
    pub vacuous: bool,
    pub intermediate: BTreeMap<String, f64>,
}

impl BoundDoc {
    fn from_report(r: &BoundReport) -> Self {
        Self {
            schema: SCHEMA_VERSION.into(),
            kind: r.kind,
            d: r.param("d"),
            m: r.param("m"),
            v: r.param("V"),
            eps: r.param("eps"),
            t_bound: r.value,
            raw: r.raw,
            vacuous: r.vacuous,
            intermediate: r.intermediate.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsList {
    pub schema: String,
    pub bounds: Vec<BoundDoc>,
}

fn bound_reports(
    kind: BoundsKindArg,
    d: Option<Vec<usize>>,
    m: Option<Vec<usize>>,
    v: Option<Vec<f64>>,
    eps: Option<Vec<f64>>,
) -> Result<Vec<BoundReport>, CliError> {
    let bad = |e: bounds::BoundsError| CliError::Usage(e.to_string());
    let mut out = Vec::new();
    let mub = |out: &mut Vec<BoundReport>, d: &[usize], v: &[f64]| -> Result<(), CliError> {
        for &di in d {
            for &vi in v {
                out.push(bounds::mub_bound(di, vi).map_err(bad)?);
            }
        }
        Ok(())
    };
    let cliff = |out: &mut Vec<BoundReport>, m: &[usize], v: &[f64]| -> Result<(), CliError> {
        for &mi in m {
            for &vi in v {
                out.push(bounds::clifford_bound(mi, vi).map_err(bad)?);
            }
        }
        Ok(())
    };
    let approx = |out: &mut Vec<BoundReport>, eps: &[f64]| -> Result<(), CliError> {
        for &e in eps {
            out.push(bounds::approx_t_bound(e).map_err(bad)?);
        }
        Ok(())
    };
    match kind {
        BoundsKindArg::Mub => mub(&mut out, &need("d", d)?, &v.unwrap_or(vec![1.0]))?,
        BoundsKindArg::Clifford => cliff(&mut out, &need("m", m)?, &v.unwrap_or(vec![1.0]))?,
        BoundsKindArg::Approx => approx(&mut out, &need("eps", eps)?)?,
        BoundsKindArg::Sweep => {
            let v = v.unwrap_or(vec![1.0]);
            if d.is_none() && m.is_none() && eps.is_none() {
                return usage("bounds sweep needs at least one of --d, --m, --eps");
            }
            if let Some(d) = d {
                mub(&mut out, &d, &v)?;
            }
            if let Some(m) = m {
                cliff(&mut out, &m, &v)?;
            }
            if let Some(eps) = eps {
                approx(&mut out, &eps)?;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimulateOutput {
    pub schema: String,
    pub reports: Vec<SimulationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ImpossibilityOutput {
    pub schema: String,
    pub theta: f64,
    pub scan: ScanResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AntisymOutput {
    pub schema: String,
    pub d: usize,
    pub n_bases: usize,
    pub seed: u64,
    pub max_residual: f64,
}

fn simulate(a: &SimulateArgs, cfg: &RunConfig, format: Format) -> Result<String, CliError> {
    let mode = a.mode.or(cfg.mode).unwrap_or(SimMode::Net);
    let seed = need("seed", a.seed.or(cfg.seed))?;
    let dirs = a.dirs.or(cfg.dirs).unwrap_or(10_000);
    if dirs == 0 {
        return usage("--dirs must be positive");
    }
    let theta = a.theta.or(cfg.theta).unwrap_or(std::f64::consts::FRAC_PI_4);
    let bad = |e: protocol::ProtocolError| CliError::Usage(e.to_string());
    let directions = || match a.directions.or(cfg.directions).unwrap_or(DirectionKind::Random) {
        DirectionKind::Random => protocol::random_net(dirs, seed),
        DirectionKind::Fibonacci => protocol::fibonacci_net(dirs),
    };
    match mode {
        SimMode::Net => {
            let ts = a
                .t
                .clone()
                .or_else(|| cfg.t.as_ref().map(|t| t.to_vec()))
                .unwrap_or_else(|| (1..=8).collect());
            if ts.iter().any(|&t| t > 16) {
                return usage("--t values above 16 are not supported");
            }
            let dir_net = directions().map_err(bad)?;
            let mut reports = protocol::net_sweep(&ts, theta, &dir_net).map_err(bad)?;
            for r in &mut reports {
                r.seed = Some(seed);
            }
            match format {
                Format::Csv => {
                    let mut s = String::from(SimulationReport::csv_header());
                    s.push('\n');
                    for r in &reports {
                        s.push_str(&r.csv_row());
                        s.push('\n');
                    }
                    Ok(s)
                }
                Format::Json => json(&SimulateOutput {
                    schema: SCHEMA_VERSION.into(),
                    reports,
                }),
            }
        }
        SimMode::Impossibility => {
            json_only(format, "impossibility scan")?;
            let n = a.candidates.or(cfg.candidates).unwrap_or(256);
            let cands: Vec<DensityMatrix> = protocol::fibonacci_net(n)
                .map_err(bad)?
                .points()
                .iter()
                .map(|p| DensityMatrix::from_bloch(*p).map_err(compute))
                .collect::<Result<_, _>>()?;
            let dir_net = directions().map_err(bad)?;
            let scan = protocol::impossibility_scan_on(&cands, theta, &dir_net, seed).map_err(bad)?;
            json(&ImpossibilityOutput {
                schema: SCHEMA_VERSION.into(),
                theta,
                scan,
            })
        }
        SimMode::Antisym => {
            json_only(format, "antisymmetric scan")?;
            let d = a.d.or(single("d", &cfg.d)?).unwrap_or(3);
            let r = protocol::antisym_orthogonality_scan(d, dirs, seed).map_err(bad)?;
            json(&AntisymOutput {
                schema: SCHEMA_VERSION.into(),
                d,
                n_bases: dirs,
                seed,
                max_residual: r,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SigmaStarDoc {
    pub schema: String,
    pub protocol: ProtocolKind,
    pub t_bits: u32,
    pub nu_target: f64,
    pub t_lower_bound: f64,
    pub bound_holds: bool,
    pub nu_star: f64,
    #[serde(rename = "isLHS")]
    pub is_lhs: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilde_no_signalling_defect: Option<f64>,
    pub sigma_star: AssemblageDoc,
}

fn sigma_star(asm: &Assemblage, sc: &SolverConfig, kind: ProtocolKind) -> Result<String, CliError> {
    let target = steering::robustness_primal(asm, sc).map_err(compute)?;
    let proto = match kind {
        ProtocolKind::Copy => steering::copy_protocol(asm).map_err(compute)?,
        ProtocolKind::Lhs => {
            let m = steering::lhs_membership(asm, sc).map_err(compute)?;
            let Some(w) = m.witness else {
                return Err(CliError::Compute(format!(
                    "assemblage is steerable (ν = {:.3e}); no zero-bit protocol exists",
                    m.nu
                )));
            };
            steering::lhs_protocol(asm.n_settings(), asm.n_outcomes(), &w).map_err(compute)?
        }
    };
    let star = steering::sigma_star(asm, &proto, None).map_err(compute)?;
    let tilde = steering::tilde_component(asm, &star, proto.t_bits).map_err(compute)?;
    let mem = steering::lhs_membership(&star, sc).map_err(compute)?;
    json(&SigmaStarDoc {
        schema: SCHEMA_VERSION.into(),
        protocol: kind,
        t_bits: proto.t_bits,
        nu_target: target.nu,
        t_lower_bound: target.t_lower_bound,
        bound_holds: proto.t_bits as f64 >= target.t_lower_bound - 1e-6,
        nu_star: mem.nu,
        is_lhs: mem.is_lhs,
        tilde_no_signalling_defect: tilde.map(|t| t.no_signalling_defect()),
        sigma_star: star.to_document(),
    })
}
