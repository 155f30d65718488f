//! LHS membership, LHS robustness and its communication bound, and finite
//! protocols with the `σ*` construction.
//!
//! Hidden variables are identified with deterministic response strategies
//! `D(a|x,λ) = δ_{a, λ_x}`, so every SDP here has one block per strategy.
//! The robustness primal is
//!
//! ```text
//!   min  Σ tr ϱ_λ + Σ tr ϱ̃_λ
//!   s.t. σ_{a|x} + Σ_λ D(a|x,λ) ϱ_λ = Σ_λ D(a|x,λ) ϱ̃_λ,   ϱ_λ, ϱ̃_λ ⪰ 0
//! ```
//!
//! with `ν = (value − 1)/2`, and its dual maximises `Σ tr(F_{a,x} σ_{a|x})`
//! subject to `−𝟙 ⪯ Σ_{a,x} D(a|x,λ) F_{a,x} ⪯ 𝟙` for every `λ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CMat, TOL};
use crate::quantum::{self, mat_to_pairs, Assemblage, DensityMatrix, QuantumError, SCHEMA_VERSION};
use crate::sdp::{
    self, BlockId, BlockKind, FarkasCertificate, Multiplier, SdpError, SdpProblem, SdpSolution,
    SdpStatus, Sense, SolverConfig, WarmStart,
};

/// Largest number of deterministic strategies an SDP may enumerate.
pub const MAX_STRATEGIES: usize = 1_000_000;

/// Tolerance for "this protocol reproduces that assemblage".
pub const PROTOCOL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteeringError {
    #[error("{n_outcomes}^{n_settings} deterministic strategies exceed the limit of {MAX_STRATEGIES}")]
    TooManyStrategies { n_settings: usize, n_outcomes: usize },
    #[error("robustness must be nonnegative, got {0}")]
    NegativeNu(f64),
    #[error("protocol does not reproduce the assemblage (distance {0:.3e})")]
    ProtocolMismatch(f64),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("solver did not converge after {iterations} iterations (primal residual {primal:.3e}, dual residual {dual:.3e})")]
    NotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
    },
    #[error("robustness problem reported infeasible, which cannot happen for a valid assemblage")]
    UnexpectedInfeasible,
    #[error(transparent)]
    Solver(#[from] SdpError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// `λ ↦ (λ_0, …, λ_{n−1})`: outcome `λ_x` is returned for setting `x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub responses: Vec<usize>,
}

impl DeterministicStrategy {
    /// `D(a|x,λ)`.
    pub fn d(&self, a: usize, x: usize) -> f64 {
        if self.responses[x] == a {
            1.0
        } else {
            0.0
        }
    }
}

pub fn strategy_count(n_settings: usize, n_outcomes: usize) -> Result<usize, SteeringError> {
    let too_many = SteeringError::TooManyStrategies {
        n_settings,
        n_outcomes,
    };
    let mut count = 1usize;
    for _ in 0..n_settings {
        count = count.checked_mul(n_outcomes).ok_or(too_many.clone())?;
        if count > MAX_STRATEGIES {
            return Err(too_many);
        }
    }
    Ok(count)
}

/// All `n_outcomes^n_settings` strategies in lexicographic order (setting 0
/// is the most significant digit).
pub fn enumerate_strategies(
    n_settings: usize,
    n_outcomes: usize,
) -> Result<Vec<DeterministicStrategy>, SteeringError> {
    let count = strategy_count(n_settings, n_outcomes)?;
    let mut out = Vec::with_capacity(count);
    let mut digits = vec![0usize; n_settings];
    for _ in 0..count {
        out.push(DeterministicStrategy {
            responses: digits.clone(),
        });
        for pos in (0..n_settings).rev() {
            digits[pos] += 1;
            if digits[pos] < n_outcomes {
                break;
            }
            digits[pos] = 0;
        }
    }
    Ok(out)
}

fn converged(sol: &SdpSolution) -> Result<(), SteeringError> {
    match sol.status {
        SdpStatus::Optimal => Ok(()),
        SdpStatus::Infeasible => Err(SteeringError::UnexpectedInfeasible),
        SdpStatus::MaxIterations => Err(SteeringError::NotConverged {
            iterations: sol.iterations,
            primal: sol.primal_residual,
            dual: sol.dual_residual,
        }),
    }
}

/// Membership SDP: `Σ_λ D(a|x,λ) ϱ_λ = σ_{a|x}`, `ϱ_λ ⪰ 0`, zero objective.
pub fn membership_problem(asm: &Assemblage) -> Result<SdpProblem, SteeringError> {
    let strategies = enumerate_strategies(asm.n_settings(), asm.n_outcomes())?;
    let mut p = SdpProblem::new(Sense::Minimize);
    let rho: Vec<BlockId> = (0..strategies.len())
        .map(|l| p.add_block(format!("rho_{l}"), asm.dim_b(), BlockKind::Psd))
        .collect();
    for x in 0..asm.n_settings() {
        for a in 0..asm.n_outcomes() {
            let terms = strategies
                .iter()
                .zip(&rho)
                .filter(|(s, _)| s.responses[x] == a)
                .map(|(_, &b)| (b, 1.0))
                .collect();
            p.add_matrix_constraint(terms, asm.get(a, x).clone());
        }
    }
    Ok(p)
}

/// Robustness primal; blocks `rho_λ` come first, then `rhotilde_λ`.
pub fn robustness_primal_problem(asm: &Assemblage) -> Result<SdpProblem, SteeringError> {
    let strategies = enumerate_strategies(asm.n_settings(), asm.n_outcomes())?;
    let db = asm.dim_b();
    let mut p = SdpProblem::new(Sense::Minimize);
    let rho: Vec<BlockId> = (0..strategies.len())
        .map(|l| p.add_block(format!("rho_{l}"), db, BlockKind::Psd))
        .collect();
    let tilde: Vec<BlockId> = (0..strategies.len())
        .map(|l| p.add_block(format!("rhotilde_{l}"), db, BlockKind::Psd))
        .collect();
    for &b in rho.iter().chain(&tilde) {
        p.set_objective(b, CMat::identity(db));
    }
    for x in 0..asm.n_settings() {
        for a in 0..asm.n_outcomes() {
            let mut terms = Vec::new();
            for (l, s) in strategies.iter().enumerate() {
                if s.responses[x] == a {
                    terms.push((tilde[l], 1.0));
                    terms.push((rho[l], -1.0));
                }
            }
            p.add_matrix_constraint(terms, asm.get(a, x).clone());
        }
    }
    Ok(p)
}

/// Robustness dual with free blocks `F_{a,x}` (setting-major) followed by
/// the slack blocks `𝟙 ∓ Σ F D` for every strategy.
pub fn robustness_dual_problem(asm: &Assemblage) -> Result<SdpProblem, SteeringError> {
    let strategies = enumerate_strategies(asm.n_settings(), asm.n_outcomes())?;
    let db = asm.dim_b();
    let (ns, no) = (asm.n_settings(), asm.n_outcomes());
    let mut p = SdpProblem::new(Sense::Maximize);
    let f: Vec<BlockId> = (0..ns * no)
        .map(|i| p.add_block(format!("F_{}_{}", i % no, i / no), db, BlockKind::Free))
        .collect();
    for (i, &b) in f.iter().enumerate() {
        p.set_objective(b, asm.members()[i].clone());
    }
    for (l, s) in strategies.iter().enumerate() {
        let upper = p.add_block(format!("upper_{l}"), db, BlockKind::Psd);
        let lower = p.add_block(format!("lower_{l}"), db, BlockKind::Psd);
        let mut up = vec![(upper, 1.0)];
        let mut lo = vec![(lower, 1.0)];
        for (x, &a) in s.responses.iter().enumerate() {
            up.push((f[x * no + a], 1.0));
            lo.push((f[x * no + a], -1.0));
        }
        p.add_matrix_constraint(up, CMat::identity(db));
        p.add_matrix_constraint(lo, CMat::identity(db));
    }
    Ok(p)
}

/// Which side of the robustness SDP produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Primal,
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    /// `‖A x − b‖₂` of the returned blocks.
    pub constraint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolverStats {
    pub status: SdpStatus,
    pub iterations: usize,
    pub n_strategies: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessResult {
    pub side: Side,
    pub nu: f64,
    pub t_lower_bound: f64,
    /// `Σ tr(F σ)` of the certificate, or the primal value `1 + 2ν`.
    pub objective: f64,
    /// `F_{a,x}`, setting-major; always present on the dual side.
    pub certificate: Option<Vec<CMat>>,
    /// `(ϱ_λ, ϱ̃_λ)`; present on the primal side.
    pub primal_witness: Option<(Vec<CMat>, Vec<CMat>)>,
    pub residuals: Residuals,
    pub stats: SolverStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RobustnessDoc {
    pub schema: String,
    pub side: Side,
    pub nu: f64,
    pub t_lower_bound: f64,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<Vec<[f64; 2]>>>,
    pub residuals: Residuals,
    pub solver_stats: SolverStats,
}

impl RobustnessResult {
    pub fn to_document(&self) -> RobustnessDoc {
        RobustnessDoc {
            schema: SCHEMA_VERSION.into(),
            side: self.side,
            nu: self.nu,
            t_lower_bound: self.t_lower_bound,
            objective: self.objective,
            certificate: self
                .certificate
                .as_ref()
                .map(|fs| fs.iter().map(mat_to_pairs).collect()),
            residuals: self.residuals,
            solver_stats: self.stats.clone(),
        }
    }
}

/// `t ≥ log₂(ν + 1)`.
pub fn comm_lower_bound(nu: f64) -> Result<f64, SteeringError> {
    if nu < 0.0 || nu.is_nan() {
        return Err(SteeringError::NegativeNu(nu));
    }
    Ok((nu + 1.0).log2())
}

/// Rounds values in `[−tol, 0)` up to zero; anything more negative is an error.
/// `tol` is the solver's feasibility tolerance, at least 1e−8.
fn clamp_nu(nu: f64, tol: f64) -> Result<f64, SteeringError> {
    if nu >= 0.0 {
        Ok(nu)
    } else if nu >= -tol.max(1e-8) {
        Ok(0.0)
    } else {
        Err(SteeringError::NegativeNu(nu))
    }
}

pub fn robustness_primal(asm: &Assemblage, cfg: &SolverConfig) -> Result<RobustnessResult, SteeringError> {
    let p = robustness_primal_problem(asm)?;
    let sol = sdp::solve(&p, cfg)?;
    converged(&sol)?;
    let n = sol.block_values.len() / 2;
    let nu = clamp_nu((sol.objective - 1.0) / 2.0, cfg.eps_feas)?;
    Ok(RobustnessResult {
        side: Side::Primal,
        nu,
        t_lower_bound: comm_lower_bound(nu)?,
        objective: sol.objective,
        certificate: None,
        primal_witness: Some((sol.block_values[..n].to_vec(), sol.block_values[n..].to_vec())),
        residuals: Residuals {
            primal: sol.primal_residual,
            dual: sol.dual_residual,
            constraint: sol.constraint_residual,
        },
        stats: SolverStats {
            status: sol.status,
            iterations: sol.iterations,
            n_strategies: n,
        },
    })
}

pub fn robustness_dual(asm: &Assemblage, cfg: &SolverConfig) -> Result<RobustnessResult, SteeringError> {
    let p = robustness_dual_problem(asm)?;
    let sol = sdp::solve(&p, cfg)?;
    converged(&sol)?;
    let nf = asm.n_settings() * asm.n_outcomes();
    let raw = sol.block_values[..nf].to_vec();
    let f = polish_certificate(&raw, asm.n_settings(), asm.n_outcomes())?;
    let objective = dual_objective(asm, &f);
    let nu = clamp_nu((objective - 1.0) / 2.0, cfg.eps_feas)?;
    Ok(RobustnessResult {
        side: Side::Dual,
        nu,
        t_lower_bound: comm_lower_bound(nu)?,
        objective,
        certificate: Some(f),
        primal_witness: None,
        residuals: Residuals {
            primal: sol.primal_residual,
            dual: sol.dual_residual,
            constraint: sol.constraint_residual,
        },
        stats: SolverStats {
            status: sol.status,
            iterations: sol.iterations,
            n_strategies: (sol.block_values.len() - nf) / 2,
        },
    })
}

/// `Σ_{a,x} tr(F_{a,x} σ_{a|x})`.
pub fn dual_objective(asm: &Assemblage, f: &[CMat]) -> f64 {
    asm.members().iter().zip(f).map(|(s, f)| f.inner_re(s)).sum()
}

/// `Σ_x F_{λ_x, x}` for one strategy.
fn strategy_sum(f: &[CMat], s: &DeterministicStrategy, n_outcomes: usize) -> CMat {
    let d = f[0].rows();
    let mut acc = CMat::zeros(d, d);
    for (x, &a) in s.responses.iter().enumerate() {
        acc += &f[x * n_outcomes + a];
    }
    acc
}

/// Largest amount by which `−𝟙 ⪯ Σ F D ⪯ 𝟙` fails over all strategies
/// (zero when the certificate is feasible).
pub fn certificate_violation(
    f: &[CMat],
    n_settings: usize,
    n_outcomes: usize,
) -> Result<f64, SteeringError> {
    if f.len() != n_settings * n_outcomes {
        return Err(SteeringError::InvalidProtocol(format!(
            "{} certificate operators for {n_settings}x{n_outcomes}",
            f.len()
        )));
    }
    let mut worst = 0.0f64;
    for s in enumerate_strategies(n_settings, n_outcomes)? {
        let ev = linalg::eigenvalues(&strategy_sum(f, &s, n_outcomes).hermitian_part())
            .map_err(QuantumError::from)?;
        worst = worst.max(ev[0] - 1.0).max(-1.0 - ev[ev.len() - 1]);
    }
    Ok(worst)
}

/// Hermitises `F` and rescales it by `1/max(1, max_λ ‖Σ F D‖)`, which makes
/// it exactly feasible.
pub fn polish_certificate(
    f: &[CMat],
    n_settings: usize,
    n_outcomes: usize,
) -> Result<Vec<CMat>, SteeringError> {
    let herm: Vec<CMat> = f.iter().map(CMat::hermitian_part).collect();
    let mut norm = 1.0f64;
    for s in enumerate_strategies(n_settings, n_outcomes)? {
        let op = linalg::operator_norm(&strategy_sum(&herm, &s, n_outcomes))
            .map_err(QuantumError::from)?;
        norm = norm.max(op);
    }
    Ok(herm.iter().map(|m| m.scale(1.0 / norm)).collect())
}

/// Farkas certificate for the membership SDP built from a robustness
/// certificate: `Y_{a,x} = F_{a,x} − 𝟙/n_settings`, normalised so that
/// `Σ tr(Y σ) = 1`. Requires `Σ tr(F σ) > 1`.
pub fn membership_certificate(asm: &Assemblage, f: &[CMat]) -> Option<FarkasCertificate> {
    let m = asm.n_settings() as f64;
    let d = asm.dim_b();
    let y: Vec<CMat> = f
        .iter()
        .map(|fi| {
            let mut yi = fi.clone();
            yi.add_scaled(-1.0 / m, &CMat::identity(d));
            yi
        })
        .collect();
    let gain = dual_objective(asm, &y);
    if !(gain > 0.0) {
        return None;
    }
    let y: Vec<CMat> = y.iter().map(|yi| yi.scale(1.0 / gain)).collect();
    let mut violation = 0.0f64;
    for s in enumerate_strategies(asm.n_settings(), asm.n_outcomes()).ok()? {
        let top = linalg::eigenvalues(&strategy_sum(&y, &s, asm.n_outcomes())).ok()?[0];
        violation = violation.max(top);
    }
    Some(FarkasCertificate {
        multipliers: y.into_iter().map(Multiplier::Matrix).collect(),
        violation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub is_lhs: bool,
    pub nu: f64,
    /// LHS model `ϱ_λ` (one per strategy) when `is_lhs`.
    pub witness: Option<Vec<CMat>>,
    /// `max_{a,x} ‖σ_{a|x} − Σ_λ D ϱ_λ‖_F` of the witness.
    pub witness_residual: Option<f64>,
    /// Membership Farkas certificate when the assemblage is steerable.
    pub certificate: Option<FarkasCertificate>,
}

/// Maximal Frobenius deviation between `asm` and the LHS model `rho`.
pub fn lhs_model_residual(asm: &Assemblage, rho: &[CMat]) -> Result<f64, SteeringError> {
    let strategies = enumerate_strategies(asm.n_settings(), asm.n_outcomes())?;
    let mut worst = 0.0f64;
    for x in 0..asm.n_settings() {
        for a in 0..asm.n_outcomes() {
            let mut r = asm.get(a, x).clone();
            for (s, m) in strategies.iter().zip(rho) {
                if s.responses[x] == a {
                    r -= m;
                }
            }
            worst = worst.max(r.frobenius_norm());
        }
    }
    Ok(worst)
}

/// Decides LHS membership through the robustness: `ν ≤ eps_feas ⇔ LHS`.
pub fn lhs_membership(asm: &Assemblage, cfg: &SolverConfig) -> Result<Membership, SteeringError> {
    let primal = robustness_primal(asm, cfg)?;
    if primal.nu > cfg.eps_feas {
        let dual = robustness_dual(asm, cfg)?;
        let certificate = dual
            .certificate
            .as_deref()
            .and_then(|f| membership_certificate(asm, f));
        return Ok(Membership {
            is_lhs: false,
            nu: primal.nu,
            witness: None,
            witness_residual: None,
            certificate,
        });
    }
    let (_, tilde) = primal.primal_witness.expect("primal side carries a witness");
    let fallback = lhs_model_residual(asm, &tilde)?;
    let p = membership_problem(asm)?;
    let warm = WarmStart::from_blocks(&p, &tilde, cfg.penalty)?;
    let (witness, residual) = match sdp::solve_warm(&p, cfg, Some(&warm)) {
        Ok(sol) if sol.status == SdpStatus::Optimal => {
            let r = lhs_model_residual(asm, &sol.block_values)?;
            if r <= fallback {
                (sol.block_values, r)
            } else {
                (tilde, fallback)
            }
        }
        _ => (tilde, fallback),
    };
    Ok(Membership {
        is_lhs: true,
        nu: primal.nu,
        witness: Some(witness),
        witness_residual: Some(residual),
        certificate: None,
    })
}

/// Value `Σ tr(F σ)` and feasibility defect of a fixed dual point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualPoint {
    pub objective: f64,
    pub violation: f64,
}

pub fn evaluate_dual_point(asm: &Assemblage, f: &[CMat]) -> Result<DualPoint, SteeringError> {
    Ok(DualPoint {
        objective: dual_objective(asm, f),
        violation: certificate_violation(f, asm.n_settings(), asm.n_outcomes())?,
    })
}

/// Isotropic state with all `d+1` MUB measurements and the feasible point
/// `F_{a,x} = Π^T_{a|x}/(1 + (m−1)/√d)`.
pub fn mub_dual_point(d: usize, v: f64) -> Result<(Assemblage, Vec<CMat>), SteeringError> {
    let meas = quantum::mub_bases(d)?;
    let asm = quantum::compute_assemblage(&quantum::isotropic_state(d, v)?, &meas)?;
    let m = meas.n_settings() as f64;
    let scale = 1.0 / (1.0 + (m - 1.0) / (d as f64).sqrt());
    let f = meas
        .settings()
        .iter()
        .flat_map(|s| s.effects.iter().map(|e| e.transpose().scale(scale)))
        .collect();
    Ok((asm, f))
}

/// Isotropic `2^k`-dimensional state with dichotomic measurements of `k`
/// anticommuting observables and `F_{a,x} = (−1)^{a+1} A_x/√(2k)`.
pub fn clifford_dual_point(k: usize, v: f64) -> Result<(Assemblage, Vec<CMat>), SteeringError> {
    let obs = quantum::clifford_observables(k)?;
    let meas = quantum::dichotomic_povm_from_observables(&obs)?;
    let d = 1usize << k;
    let asm = quantum::compute_assemblage(&quantum::isotropic_state(d, v)?, &meas)?;
    let s = 1.0 / (2.0 * k as f64).sqrt();
    let f = obs
        .iter()
        .flat_map(|a| [a.scale(-s), a.scale(s)])
        .collect();
    Ok((asm, f))
}

/// A finite LHS model augmented with a `t`-bit message.
///
/// Under hidden variable `λ` (probability `lambda_weights[λ]`) and setting
/// `x`, Alice sends `messages[x][λ]`, answers `a` with probability
/// `responses[x][λ][a]`, and Bob outputs `bob_states[m][λ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub t_bits: u32,
    pub lambda_weights: Vec<f64>,
    pub messages: Vec<Vec<usize>>,
    pub responses: Vec<Vec<Vec<f64>>>,
    pub bob_states: Vec<Vec<DensityMatrix>>,
}

impl Protocol {
    pub fn n_messages(&self) -> usize {
        1usize << self.t_bits
    }

    pub fn n_settings(&self) -> usize {
        self.messages.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.responses[0][0].len()
    }

    pub fn validate(&self) -> Result<(), SteeringError> {
        let bad = |m: String| Err(SteeringError::InvalidProtocol(m));
        if self.t_bits > 20 {
            return bad(format!("{} message bits is too many to tabulate", self.t_bits));
        }
        let nl = self.lambda_weights.len();
        if nl == 0 || self.messages.is_empty() || self.responses.len() != self.messages.len() {
            return bad("empty or inconsistent tables".into());
        }
        if self.lambda_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("negative hidden-variable weight".into());
        }
        let total: f64 = self.lambda_weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return bad(format!("hidden-variable weights sum to {total}"));
        }
        if self.bob_states.len() != self.n_messages() {
            return bad(format!(
                "{} Bob-state rows for {} messages",
                self.bob_states.len(),
                self.n_messages()
            ));
        }
        let dim = self.bob_states[0].first().map(|s| s.dim()).unwrap_or(0);
        for row in &self.bob_states {
            if row.len() != nl || row.iter().any(|s| s.dim() != dim) {
                return bad("Bob-state table has the wrong shape".into());
            }
        }
        let no = self.responses[0].first().map(|r| r.len()).unwrap_or(0);
        for (msgs, resp) in self.messages.iter().zip(&self.responses) {
            if msgs.len() != nl || resp.len() != nl {
                return bad("message or response table has the wrong shape".into());
            }
            if msgs.iter().any(|&m| m >= self.n_messages()) {
                return bad("message index out of range".into());
            }
            for row in resp {
                if row.len() != no || no == 0 || row.iter().any(|p| !(*p >= 0.0)) {
                    return bad("response row has the wrong shape or a negative entry".into());
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-10 {
                    return bad(format!("response row sums to {s}"));
                }
            }
        }
        Ok(())
    }

    /// `σ^sim_{a|x} = Σ_λ μ(λ) p(a|x,λ) ϱ_{m(x,λ),λ}`.
    pub fn simulated_assemblage(&self) -> Result<Assemblage, SteeringError> {
        self.validate()?;
        let (ns, no) = (self.n_settings(), self.n_outcomes());
        let dim = self.bob_states[0][0].dim();
        let mut sigma = vec![CMat::zeros(dim, dim); ns * no];
        for x in 0..ns {
            for (l, &mu) in self.lambda_weights.iter().enumerate() {
                let st = self.bob_states[self.messages[x][l]][l].mat();
                for a in 0..no {
                    let w = mu * self.responses[x][l][a];
                    if w != 0.0 {
                        sigma[x * no + a].add_scaled(w, st);
                    }
                }
            }
        }
        Ok(Assemblage::new(ns, no, dim, sigma)?)
    }
}

/// Zero-bit protocol realising the LHS model `σ_{a|x} = Σ_λ D(a|x,λ) ϱ_λ`
/// with unnormalised `ϱ_λ` (one per enumerated strategy).
pub fn lhs_protocol(
    n_settings: usize,
    n_outcomes: usize,
    rho: &[CMat],
) -> Result<Protocol, SteeringError> {
    let strategies = enumerate_strategies(n_settings, n_outcomes)?;
    if rho.len() != strategies.len() {
        return Err(SteeringError::InvalidProtocol(format!(
            "{} hidden states for {} strategies",
            rho.len(),
            strategies.len()
        )));
    }
    let mut weights = Vec::new();
    let mut states = Vec::new();
    let mut kept = Vec::new();
    for (s, r) in strategies.iter().zip(rho) {
        let w = r.trace().re;
        if w > TOL.zero_probability {
            weights.push(w);
            states.push(DensityMatrix::from_unnormalized(r)?);
            kept.push(s);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let nl = weights.len();
    Ok(Protocol {
        t_bits: 0,
        lambda_weights: weights,
        messages: vec![vec![0; nl]; n_settings],
        responses: (0..n_settings)
            .map(|x| {
                kept.iter()
                    .map(|s| (0..n_outcomes).map(|a| s.d(a, x)).collect())
                    .collect()
            })
            .collect(),
        bob_states: vec![states],
    })
}

/// Exact protocol that sends `(x, a)`: `λ = (a_0, …, a_{n−1})` is drawn from
/// `Π_x p(a_x|x)`, Alice answers `a_x` and sends the codeword of `(x, a_x)`,
/// Bob prepares `ϱ_{a_x|x}`. Uses `⌈log₂(n·k)⌉` bits.
pub fn copy_protocol(asm: &Assemblage) -> Result<Protocol, SteeringError> {
    let (ns, no, db) = (asm.n_settings(), asm.n_outcomes(), asm.dim_b());
    let strategies = enumerate_strategies(ns, no)?;
    let t_bits = (ns * no).next_power_of_two().trailing_zeros();
    let n_messages = 1usize << t_bits;
    let mixed = DensityMatrix::maximally_mixed(db);
    let mut codebook = vec![mixed.clone(); n_messages];
    for x in 0..ns {
        for a in 0..no {
            if let Some(st) = asm.conditional_state(a, x) {
                codebook[x * no + a] = st;
            }
        }
    }
    let mut kept = Vec::new();
    let mut weights = Vec::new();
    for s in &strategies {
        let w: f64 = s
            .responses
            .iter()
            .enumerate()
            .map(|(x, &a)| asm.probability(a, x).max(0.0))
            .product();
        if w > 0.0 {
            weights.push(w);
            kept.push(s);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let nl = kept.len();
    Ok(Protocol {
        t_bits,
        lambda_weights: weights,
        messages: (0..ns)
            .map(|x| kept.iter().map(|s| x * no + s.responses[x]).collect())
            .collect(),
        responses: (0..ns)
            .map(|x| {
                kept.iter()
                    .map(|s| (0..no).map(|a| s.d(a, x)).collect())
                    .collect()
            })
            .collect(),
        bob_states: codebook.into_iter().map(|st| vec![st; nl]).collect(),
    })
}

/// Uniform `p̃(a|x)`.
pub fn uniform_ptilde(n_settings: usize, n_outcomes: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0 / n_outcomes as f64; n_outcomes]; n_settings]
}

/// The LHS assemblage obtained when Bob guesses the message uniformly:
///
/// `σ*_{a|x} = 2^{−t} Σ_λ μ(λ) [p(a|x,λ) ϱ_{m,λ} + p̃(a|x) Σ_{m̃≠m} ϱ_{m̃,λ}]`
/// with `m = m(x,λ)`.
pub fn sigma_star(
    asm: &Assemblage,
    proto: &Protocol,
    ptilde: Option<&[Vec<f64>]>,
) -> Result<Assemblage, SteeringError> {
    let sim = proto.simulated_assemblage()?;
    if sim.n_settings() != asm.n_settings()
        || sim.n_outcomes() != asm.n_outcomes()
        || sim.dim_b() != asm.dim_b()
    {
        return Err(SteeringError::InvalidProtocol(
            "protocol and assemblage have different shapes".into(),
        ));
    }
    let dist = sim.distance(asm);
    if dist > PROTOCOL_TOL {
        return Err(SteeringError::ProtocolMismatch(dist));
    }
    let (ns, no, db) = (asm.n_settings(), asm.n_outcomes(), asm.dim_b());
    let uniform = uniform_ptilde(ns, no);
    let ptilde = ptilde.unwrap_or(&uniform);
    if ptilde.len() != ns
        || ptilde.iter().any(|row| {
            row.len() != no
                || row.iter().any(|p| !(*p >= 0.0))
                || (row.iter().sum::<f64>() - 1.0).abs() > 1e-10
        })
    {
        return Err(SteeringError::InvalidProtocol(
            "p̃ must hold one probability row per setting".into(),
        ));
    }
    let scale = 1.0 / proto.n_messages() as f64;
    // Σ_m̃ ϱ_{m̃,λ}, shared by every setting
    let totals: Vec<CMat> = (0..proto.lambda_weights.len())
        .map(|l| {
            let mut acc = CMat::zeros(db, db);
            for row in &proto.bob_states {
                acc += row[l].mat();
            }
            acc
        })
        .collect();
    let mut sigma = vec![CMat::zeros(db, db); ns * no];
    for x in 0..ns {
        for (l, &mu) in proto.lambda_weights.iter().enumerate() {
            let sent = proto.bob_states[proto.messages[x][l]][l].mat();
            let others = &totals[l] - sent;
            for a in 0..no {
                let out = &mut sigma[x * no + a];
                out.add_scaled(scale * mu * proto.responses[x][l][a], sent);
                out.add_scaled(scale * mu * ptilde[x][a], &others);
            }
        }
    }
    Ok(Assemblage::new(ns, no, db, sigma)?)
}

/// `σ̃ = (σ* − 2^{−t} σ)/(1 − 2^{−t})`; `None` for `t = 0`, where `σ* = σ`.
pub fn tilde_component(
    asm: &Assemblage,
    star: &Assemblage,
    t_bits: u32,
) -> Result<Option<Assemblage>, SteeringError> {
    if t_bits == 0 {
        return Ok(None);
    }
    let w = (0.5f64).powi(t_bits as i32);
    let sigma = star
        .members()
        .iter()
        .zip(asm.members())
        .map(|(s, a)| {
            let mut m = s.clone();
            m.add_scaled(-w, a);
            m.scale(1.0 / (1.0 - w))
        })
        .collect();
    Ok(Some(Assemblage::new(
        asm.n_settings(),
        asm.n_outcomes(),
        asm.dim_b(),
        sigma,
    )?))
}
