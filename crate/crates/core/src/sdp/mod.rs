//! A small ADMM solver for semidefinite programs over Hermitian blocks.
//!
//! Problems have the form
//!
//! ```text
//!   min / max   Σ_j tr(C_j X_j)
//!   s.t.        Σ_j c_kj X_j = R_k            (matrix equality constraints)
//!               Σ_j tr(A_kj X_j) = r_k        (scalar equality constraints)
//!               X_j ⪰ 0 for PSD blocks, X_j free Hermitian otherwise
//! ```
//!
//! The iteration splits the variables into an affine copy `x` (projected onto
//! the equality constraints) and a cone copy `z` (projected block-wise onto
//! the PSD cone):
//!
//! ```text
//!   x ← Π_aff(z − u − c/ρ)
//!   z ← Π_K(x + u)
//!   u ← u + x − z
//! ```
//!
//! The affine projection only depends on the constraint operator, so its
//! factorisation is computed once and residual balancing can move `ρ` freely.
//! Primal infeasibility shows up as a persistent gap `x − z`; when that gap
//! yields a verified Farkas certificate the solve stops with
//! [`SdpStatus::Infeasible`].

mod linsys;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CMat, C64};
use linsys::{independent_rows, Cholesky, Csr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("ill-formed problem: {0}")]
    IllFormedProblem(String),
    #[error("numerical breakdown after {iterations} iterations (non-finite iterate)")]
    NumericalBreakdown { iterations: usize },
    #[error("inconclusive: residuals stalled at primal {primal:.3e}, dual {dual:.3e}")]
    Inconclusive { primal: f64, dual: f64 },
}

/// Solver parameters. Field names double as keys in the CLI config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Absolute tolerance on both residuals.
    pub eps_abs: f64,
    /// Robustness threshold below which an assemblage counts as LHS.
    pub eps_feas: f64,
    pub max_iter: usize,
    /// Initial ADMM penalty ρ.
    pub penalty: f64,
    /// Iterations between residual-balancing updates of ρ.
    pub adapt_interval: usize,
    /// Over-relaxation factor α ∈ (0, 2).
    pub relaxation: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_abs: 1e-8,
            eps_feas: 1e-6,
            max_iter: 200_000,
            penalty: 1.0,
            adapt_interval: 100,
            relaxation: 1.6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SdpError> {
        let ok = self.eps_abs > 0.0
            && self.eps_feas > 0.0
            && self.max_iter > 0
            && self.penalty > 0.0
            && self.penalty.is_finite()
            && self.adapt_interval > 0
            && self.relaxation > 0.0
            && self.relaxation < 2.0;
        if ok {
            Ok(())
        } else {
            Err(SdpError::IllFormedProblem(format!(
                "invalid solver configuration {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Hermitian positive semidefinite.
    Psd,
    /// Unconstrained Hermitian.
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub dim: usize,
    pub kind: BlockKind,
}

/// Index of a block inside its problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `Σ coeff · X_block = rhs`; every referenced block has the size of `rhs`.
    Matrix { terms: Vec<(BlockId, f64)>, rhs: CMat },
    /// `Σ tr(coeff · X_block) = rhs` with Hermitian coefficients.
    Scalar { terms: Vec<(BlockId, CMat)>, rhs: f64 },
}

/// Multiplier attached to one constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum Multiplier {
    Matrix(CMat),
    Scalar(f64),
}

impl Multiplier {
    pub fn as_matrix(&self) -> Option<&CMat> {
        match self {
            Multiplier::Matrix(m) => Some(m),
            Multiplier::Scalar(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub sense: Sense,
    blocks: Vec<Block>,
    objective: Vec<Option<CMat>>,
    constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            blocks: Vec::new(),
            objective: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn add_block(&mut self, name: impl Into<String>, dim: usize, kind: BlockKind) -> BlockId {
        self.blocks.push(Block {
            name: name.into(),
            dim,
            kind,
        });
        self.objective.push(None);
        BlockId(self.blocks.len() - 1)
    }

    /// Sets the objective coefficient `C_j` of a block.
    pub fn set_objective(&mut self, block: BlockId, coeff: CMat) {
        self.objective[block.0] = Some(coeff);
    }

    pub fn add_matrix_constraint(&mut self, terms: Vec<(BlockId, f64)>, rhs: CMat) {
        self.constraints.push(Constraint::Matrix { terms, rhs });
    }

    pub fn add_scalar_constraint(&mut self, terms: Vec<(BlockId, CMat)>, rhs: f64) {
        self.constraints.push(Constraint::Scalar { terms, rhs });
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Same feasible set with a zero objective.
    pub fn feasibility_version(&self) -> Self {
        Self {
            sense: Sense::Minimize,
            blocks: self.blocks.clone(),
            objective: vec![None; self.blocks.len()],
            constraints: self.constraints.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let bad = |msg: String| Err(SdpError::IllFormedProblem(msg));
        if self.blocks.is_empty() {
            return bad("no variable blocks".into());
        }
        for b in &self.blocks {
            if b.dim == 0 {
                return bad(format!("block {} has dimension 0", b.name));
            }
        }
        for (b, c) in self.blocks.iter().zip(&self.objective) {
            if let Some(c) = c {
                if c.rows() != b.dim || c.cols() != b.dim {
                    return bad(format!("objective coefficient of {} has wrong size", b.name));
                }
                if !c.is_hermitian(linalg::TOL.hermitian) || !c.all_finite() {
                    return bad(format!("objective coefficient of {} is not Hermitian", b.name));
                }
            }
        }
        for (k, con) in self.constraints.iter().enumerate() {
            match con {
                Constraint::Matrix { terms, rhs } => {
                    if !rhs.is_hermitian(linalg::TOL.hermitian) || !rhs.all_finite() {
                        return bad(format!("constraint {k}: right-hand side is not Hermitian"));
                    }
                    for (id, coeff) in terms {
                        let Some(b) = self.blocks.get(id.0) else {
                            return bad(format!("constraint {k}: unknown block {}", id.0));
                        };
                        if b.dim != rhs.rows() {
                            return bad(format!(
                                "constraint {k}: block {} has dimension {}, rhs {}",
                                b.name,
                                b.dim,
                                rhs.rows()
                            ));
                        }
                        if !coeff.is_finite() {
                            return bad(format!("constraint {k}: non-finite coefficient"));
                        }
                    }
                }
                Constraint::Scalar { terms, rhs } => {
                    if !rhs.is_finite() {
                        return bad(format!("constraint {k}: non-finite right-hand side"));
                    }
                    for (id, coeff) in terms {
                        let Some(b) = self.blocks.get(id.0) else {
                            return bad(format!("constraint {k}: unknown block {}", id.0));
                        };
                        if coeff.rows() != b.dim || coeff.cols() != b.dim {
                            return bad(format!("constraint {k}: coefficient size mismatch"));
                        }
                        if !coeff.is_hermitian(linalg::TOL.hermitian) || !coeff.all_finite() {
                            return bad(format!("constraint {k}: coefficient not Hermitian"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

/// Verified certificate `y` with `Aᵀy ⪯ 0` on PSD blocks, `Aᵀy = 0` on free
/// blocks, and `bᵀy = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub multipliers: Vec<Multiplier>,
    /// Largest violation of `Aᵀy ⪯ 0` (positive eigenvalue or free-block norm).
    pub violation: f64,
}

/// Iterate state for warm starts.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    z: Vec<f64>,
    u: Vec<f64>,
    rho: f64,
}

impl WarmStart {
    /// Starts the cone iterate at the given block values (zero multipliers).
    pub fn from_blocks(p: &SdpProblem, blocks: &[CMat], rho: f64) -> Result<Self, SdpError> {
        if blocks.len() != p.blocks.len() {
            return Err(SdpError::IllFormedProblem(format!(
                "{} block values for {} blocks",
                blocks.len(),
                p.blocks.len()
            )));
        }
        let n: usize = p.blocks.iter().map(|b| b.dim * b.dim).sum();
        let mut z = vec![0.0; n];
        let mut off = 0;
        for (b, m) in p.blocks.iter().zip(blocks) {
            if m.rows() != b.dim || m.cols() != b.dim {
                return Err(SdpError::IllFormedProblem(format!(
                    "warm value for {} has the wrong size",
                    b.name
                )));
            }
            herm_to_vec(m, &mut z[off..off + b.dim * b.dim]);
            off += b.dim * b.dim;
        }
        Ok(Self {
            z,
            u: vec![0.0; n],
            rho,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Objective in the problem's own sense, evaluated at the PSD-projected point.
    pub objective: f64,
    /// Dual objective `bᵀy` recovered from the scaled multipliers.
    pub dual_objective: f64,
    pub block_values: Vec<CMat>,
    pub block_names: Vec<String>,
    /// Dual slack per block (PSD blocks only; zero on free blocks).
    pub dual_slacks: Vec<CMat>,
    /// Equality-constraint multipliers, one per constraint.
    pub multipliers: Vec<Multiplier>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `‖A z − b‖₂` at the returned point.
    pub constraint_residual: f64,
    pub iterations: usize,
    pub certificate: Option<FarkasCertificate>,
    pub warm_start: WarmStart,
}

impl SdpSolution {
    pub fn block(&self, name: &str) -> Option<&CMat> {
        self.block_names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.block_values[i])
    }
}

/// Real isometric coordinates of a Hermitian `n x n` matrix: diagonal
/// entries, then `√2 Re`, `√2 Im` of each upper off-diagonal entry.
fn herm_to_vec(m: &CMat, out: &mut [f64]) {
    let n = m.rows();
    let s = std::f64::consts::SQRT_2;
    let mut k = 0;
    for i in 0..n {
        out[k] = m[(i, i)].re;
        k += 1;
    }
    for i in 0..n {
        for j in i + 1..n {
            let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[k] = s * z.re;
            out[k + 1] = s * z.im;
            k += 2;
        }
    }
}

fn vec_to_herm(v: &[f64], n: usize) -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMat::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        m[(i, i)] = C64::new(v[k], 0.0);
        k += 1;
    }
    for i in 0..n {
        for j in i + 1..n {
            let z = C64::new(h * v[k], h * v[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The vectorised problem `min cᵀx, A x = b, x ∈ K` plus the affine projector.
struct Compiled {
    block_offsets: Vec<usize>,
    block_dims: Vec<usize>,
    block_kinds: Vec<BlockKind>,
    n_vars: usize,
    constraint_rows: Vec<(usize, usize)>,
    a: Csr,
    b: Vec<f64>,
    c: Vec<f64>,
    /// Independent subset of rows and its operator, transpose and Gram factor.
    a_ind: Csr,
    at_ind: Csr,
    b_ind: Vec<f64>,
    gram: Option<Cholesky>,
    sign: f64,
}

impl Compiled {
    fn new(p: &SdpProblem) -> Self {
        let mut block_offsets = Vec::with_capacity(p.blocks.len());
        let mut n_vars = 0;
        for b in &p.blocks {
            block_offsets.push(n_vars);
            n_vars += b.dim * b.dim;
        }
        let sign = match p.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut c = vec![0.0; n_vars];
        for (j, coeff) in p.objective.iter().enumerate() {
            if let Some(coeff) = coeff {
                let d = p.blocks[j].dim;
                let off = block_offsets[j];
                herm_to_vec(coeff, &mut c[off..off + d * d]);
            }
        }
        c.iter_mut().for_each(|x| *x *= sign);

        let mut triplets = Vec::new();
        let mut b = Vec::new();
        let mut constraint_rows = Vec::with_capacity(p.constraints.len());
        for con in &p.constraints {
            let start = b.len();
            match con {
                Constraint::Matrix { terms, rhs } => {
                    let m = rhs.rows();
                    let mut rv = vec![0.0; m * m];
                    herm_to_vec(rhs, &mut rv);
                    for (id, coeff) in terms {
                        let off = block_offsets[id.0];
                        for k in 0..m * m {
                            triplets.push((start + k, off + k, *coeff));
                        }
                    }
                    b.extend(rv);
                }
                Constraint::Scalar { terms, rhs } => {
                    for (id, coeff) in terms {
                        let d = coeff.rows();
                        let off = block_offsets[id.0];
                        let mut cv = vec![0.0; d * d];
                        herm_to_vec(coeff, &mut cv);
                        for (k, v) in cv.into_iter().enumerate() {
                            triplets.push((start, off + k, v));
                        }
                    }
                    b.push(*rhs);
                }
            }
            constraint_rows.push((start, b.len()));
        }
        let a = Csr::from_triplets(b.len(), n_vars, triplets);
        let rows = independent_rows(&a.gram(), a.rows, 1e-12);
        let a_ind = a.select_rows(&rows);
        let b_ind: Vec<f64> = rows.iter().map(|&r| b[r]).collect();
        let gram = if rows.is_empty() {
            None
        } else {
            Cholesky::factor(&a_ind.gram(), rows.len())
        };
        let at_ind = a_ind.transpose();
        Self {
            block_offsets,
            block_dims: p.blocks.iter().map(|b| b.dim).collect(),
            block_kinds: p.blocks.iter().map(|b| b.kind).collect(),
            n_vars,
            constraint_rows,
            a,
            b,
            c,
            a_ind,
            at_ind,
            b_ind,
            gram,
            sign,
        }
    }

    /// Least-squares multipliers `y` (on the independent rows) with `Aᵀy ≈ w`.
    fn range_coefficients(&self, w: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.a_ind.rows];
        if let Some(g) = &self.gram {
            self.a_ind.mul(w, &mut y);
            g.solve_in_place(&mut y);
        }
        y
    }

    /// `x ← x − Aᵀ(AAᵀ)⁻¹(A x − b)` over the independent rows.
    fn project_affine(&self, x: &mut [f64], scratch: &mut [f64], back: &mut [f64]) {
        let Some(g) = &self.gram else {
            return;
        };
        self.a_ind.mul(x, scratch);
        for (s, bi) in scratch.iter_mut().zip(&self.b_ind) {
            *s -= bi;
        }
        g.solve_in_place(scratch);
        self.at_ind.mul(scratch, back);
        for (xi, bi) in x.iter_mut().zip(back.iter()) {
            *xi -= bi;
        }
    }

    fn project_cone(&self, x: &mut [f64]) {
        for (j, &off) in self.block_offsets.iter().enumerate() {
            if self.block_kinds[j] == BlockKind::Free {
                continue;
            }
            let d = self.block_dims[j];
            let seg = &mut x[off..off + d * d];
            if d == 1 {
                seg[0] = seg[0].max(0.0);
                continue;
            }
            let m = vec_to_herm(seg, d);
            let p = linalg::psd_project_unchecked(&m);
            herm_to_vec(&p, seg);
        }
    }

    fn constraint_residual(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.a.rows];
        self.a.mul(x, &mut ax);
        ax.iter()
            .zip(&self.b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    }

    fn blocks_of(&self, x: &[f64]) -> Vec<CMat> {
        self.block_offsets
            .iter()
            .zip(&self.block_dims)
            .map(|(&off, &d)| vec_to_herm(&x[off..off + d * d], d))
            .collect()
    }

    /// Expands independent-row multipliers to one multiplier per constraint.
    fn multipliers_from(&self, y_ind: &[f64], rows: &[usize], p: &SdpProblem) -> Vec<Multiplier> {
        let mut y = vec![0.0; self.a.rows];
        for (&r, &v) in rows.iter().zip(y_ind) {
            y[r] = v;
        }
        p.constraints
            .iter()
            .zip(&self.constraint_rows)
            .map(|(con, &(s, e))| match con {
                Constraint::Matrix { rhs, .. } => Multiplier::Matrix(vec_to_herm(&y[s..e], rhs.rows())),
                Constraint::Scalar { .. } => Multiplier::Scalar(y[s]),
            })
            .collect()
    }

    /// Largest violation of `w ⪯ 0` (PSD blocks) / `w = 0` (free blocks).
    fn cone_violation(&self, w: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &off) in self.block_offsets.iter().enumerate() {
            let d = self.block_dims[j];
            let seg = &w[off..off + d * d];
            match self.block_kinds[j] {
                BlockKind::Free => worst = worst.max(norm2(seg)),
                BlockKind::Psd => {
                    let top = linalg::jacobi_eig(&vec_to_herm(seg, d)).eigenvalues[0];
                    worst = worst.max(top);
                }
            }
        }
        worst
    }

    /// Tries to turn the persistent gap `delta = x − z` into a Farkas
    /// certificate; polishes it with a strictly negative direction when one
    /// exists in the range of `Aᵀ`.
    fn farkas_from(&self, delta: &[f64], ind_rows: &[usize], p: &SdpProblem) -> Option<FarkasCertificate> {
        const TOL: f64 = 1e-8;
        let mut y = self.range_coefficients(delta);
        let mut aty = vec![0.0; self.n_vars];
        self.at_ind.mul(&y, &mut aty);
        let by = dot(&self.b_ind, &y);
        if !(by > 0.0) || !by.is_finite() {
            return None;
        }
        y.iter_mut().for_each(|v| *v /= by);
        aty.iter_mut().for_each(|v| *v /= by);
        let mut violation = self.cone_violation(&aty);

        if violation > 0.0 {
            // direction with Aᵀy₀ ≈ −𝟙 on PSD blocks and 0 on free blocks
            let mut target = vec![0.0; self.n_vars];
            for (j, &off) in self.block_offsets.iter().enumerate() {
                if self.block_kinds[j] == BlockKind::Psd {
                    for i in 0..self.block_dims[j] {
                        target[off + i] = -1.0;
                    }
                }
            }
            let y0 = self.range_coefficients(&target);
            let mut aty0 = vec![0.0; self.n_vars];
            self.at_ind.mul(&y0, &mut aty0);
            let mut margin = f64::INFINITY;
            for (j, &off) in self.block_offsets.iter().enumerate() {
                let d = self.block_dims[j];
                let seg = &aty0[off..off + d * d];
                match self.block_kinds[j] {
                    BlockKind::Free => {
                        if norm2(seg) > 1e-12 {
                            margin = -1.0;
                        }
                    }
                    BlockKind::Psd => {
                        let top = linalg::jacobi_eig(&vec_to_herm(seg, d)).eigenvalues[0];
                        margin = margin.min(-top);
                    }
                }
            }
            if margin > 1e-9 && margin.is_finite() {
                let step = violation / margin;
                for (yi, y0i) in y.iter_mut().zip(&y0) {
                    *yi += step * y0i;
                }
                self.at_ind.mul(&y, &mut aty);
                let by = dot(&self.b_ind, &y);
                if !(by > 0.0) {
                    return None;
                }
                y.iter_mut().for_each(|v| *v /= by);
                aty.iter_mut().for_each(|v| *v /= by);
                violation = self.cone_violation(&aty).max(0.0);
            }
        }
        if violation > TOL {
            return None;
        }
        Some(FarkasCertificate {
            multipliers: self.multipliers_from(&y, ind_rows, p),
            violation,
        })
    }
}

/// Solves `p` from a cold start.
pub fn solve(p: &SdpProblem, cfg: &SolverConfig) -> Result<SdpSolution, SdpError> {
    solve_warm(p, cfg, None)
}

/// Solves `p`, optionally starting from a previous solution's iterate state.
pub fn solve_warm(
    p: &SdpProblem,
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<SdpSolution, SdpError> {
    p.validate()?;
    cfg.validate()?;
    let compiled = Compiled::new(p);
    let ind_rows = {
        let rows = independent_rows(&compiled.a.gram(), compiled.a.rows, 1e-12);
        debug_assert_eq!(rows.len(), compiled.a_ind.rows);
        rows
    };
    let n = compiled.n_vars;
    let m_ind = compiled.a_ind.rows;

    let mut scratch = vec![0.0; m_ind];
    let mut back = vec![0.0; n];

    let (mut z, mut u, mut rho) = match warm {
        Some(w) if w.z.len() == n && w.u.len() == n => (w.z.clone(), w.u.clone(), w.rho),
        Some(_) => {
            return Err(SdpError::IllFormedProblem(
                "warm start does not match the problem size".into(),
            ))
        }
        None => (vec![0.0; n], vec![0.0; n], cfg.penalty),
    };

    // An empty affine set is detected up front.
    {
        let mut x0 = vec![0.0; n];
        compiled.project_affine(&mut x0, &mut scratch, &mut back);
        let res = compiled.constraint_residual(&x0);
        if res > 1e-8 * (1.0 + norm2(&compiled.b)) {
            return Ok(finish(
                p,
                &compiled,
                &ind_rows,
                SdpStatus::Infeasible,
                &x0,
                &x0,
                &u,
                rho,
                res,
                0.0,
                0,
                None,
            ));
        }
    }

    let alpha = cfg.relaxation;
    let mut x = vec![0.0; n];
    let mut xh = vec![0.0; n];
    let mut z_old = vec![0.0; n];
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut iterations = 0;
    let mut status = SdpStatus::MaxIterations;
    let mut certificate = None;

    for k in 1..=cfg.max_iter {
        iterations = k;
        for i in 0..n {
            x[i] = z[i] - u[i] - compiled.c[i] / rho;
        }
        compiled.project_affine(&mut x, &mut scratch, &mut back);
        z_old.copy_from_slice(&z);
        for i in 0..n {
            xh[i] = alpha * x[i] + (1.0 - alpha) * z_old[i];
            z[i] = xh[i] + u[i];
        }
        compiled.project_cone(&mut z);
        let mut rp = 0.0;
        let mut rd = 0.0;
        for i in 0..n {
            u[i] += xh[i] - z[i];
            rp += (x[i] - z[i]) * (x[i] - z[i]);
            rd += (z[i] - z_old[i]) * (z[i] - z_old[i]);
        }
        primal = rp.sqrt();
        dual = rho * rd.sqrt();
        if !primal.is_finite() || !dual.is_finite() {
            return Err(SdpError::NumericalBreakdown { iterations: k });
        }
        if primal <= cfg.eps_abs && dual <= cfg.eps_abs {
            status = SdpStatus::Optimal;
            break;
        }
        if k % cfg.adapt_interval == 0 {
            // persistent primal gap: test for a Farkas certificate
            if primal > 10.0 * cfg.eps_abs && dual < primal {
                let delta: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - b).collect();
                if let Some(cert) = compiled.farkas_from(&delta, &ind_rows, p) {
                    status = SdpStatus::Infeasible;
                    certificate = Some(cert);
                    break;
                }
            }
            const MU: f64 = 10.0;
            const TAU: f64 = 2.0;
            if primal > MU * dual && rho < 1e8 {
                rho *= TAU;
                u.iter_mut().for_each(|v| *v /= TAU);
            } else if dual > MU * primal && rho > 1e-8 {
                rho /= TAU;
                u.iter_mut().for_each(|v| *v *= TAU);
            }
        }
    }

    let res = compiled.constraint_residual(&z);
    Ok(finish(
        p,
        &compiled,
        &ind_rows,
        status,
        &z,
        &x,
        &u,
        rho,
        primal,
        dual,
        iterations,
        certificate,
    )
    .with_constraint_residual(res))
}

impl SdpSolution {
    fn with_constraint_residual(mut self, r: f64) -> Self {
        self.constraint_residual = r;
        self
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &SdpProblem,
    compiled: &Compiled,
    ind_rows: &[usize],
    status: SdpStatus,
    z: &[f64],
    _x: &[f64],
    u: &[f64],
    rho: f64,
    primal: f64,
    dual: f64,
    iterations: usize,
    certificate: Option<FarkasCertificate>,
) -> SdpSolution {
    let n = compiled.n_vars;
    // dual slack s = −ρu on PSD blocks, zero on free blocks
    let mut s = vec![0.0; n];
    for (j, &off) in compiled.block_offsets.iter().enumerate() {
        if compiled.block_kinds[j] == BlockKind::Psd {
            let d = compiled.block_dims[j];
            for i in off..off + d * d {
                s[i] = -rho * u[i];
            }
        }
    }
    let cs: Vec<f64> = compiled.c.iter().zip(&s).map(|(c, s)| c - s).collect();
    let y = compiled.range_coefficients(&cs);
    let dual_objective = compiled.sign * dot(&compiled.b_ind, &y);
    let objective = compiled.sign * dot(&compiled.c, z);
    let mut dual_slacks = compiled.blocks_of(&s);
    if compiled.sign < 0.0 {
        dual_slacks.iter_mut().for_each(|m| *m = m.scale(-1.0));
    }
    let mut multipliers = compiled.multipliers_from(&y, ind_rows, p);
    if compiled.sign < 0.0 {
        for m in &mut multipliers {
            *m = match m {
                Multiplier::Matrix(x) => Multiplier::Matrix(x.scale(-1.0)),
                Multiplier::Scalar(v) => Multiplier::Scalar(-*v),
            };
        }
    }
    SdpSolution {
        status,
        objective,
        dual_objective,
        block_values: compiled.blocks_of(z),
        block_names: p.blocks.iter().map(|b| b.name.clone()).collect(),
        dual_slacks,
        multipliers,
        primal_residual: primal,
        dual_residual: dual,
        constraint_residual: 0.0,
        iterations,
        certificate,
        warm_start: WarmStart {
            z: z.to_vec(),
            u: u.to_vec(),
            rho,
        },
    }
}

/// Decides feasibility of the constraint set of `p` (its objective is
/// ignored). Returns `None` when a feasible point is found and a verified
/// Farkas certificate when the constraints are infeasible.
pub fn detect_infeasibility(
    p: &SdpProblem,
    cfg: &SolverConfig,
) -> Result<Option<FarkasCertificate>, SdpError> {
    let sol = solve(&p.feasibility_version(), cfg)?;
    match sol.status {
        SdpStatus::Optimal => Ok(None),
        SdpStatus::Infeasible => match sol.certificate {
            Some(c) => Ok(Some(c)),
            None => Err(SdpError::Inconclusive {
                primal: sol.primal_residual,
                dual: sol.dual_residual,
            }),
        },
        SdpStatus::MaxIterations => Err(SdpError::Inconclusive {
            primal: sol.primal_residual,
            dual: sol.dual_residual,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn herm_vectorisation_is_isometric() {
        let mut m = CMat::zeros(3, 3);
        m[(0, 0)] = c(1.0, 0.0);
        m[(1, 1)] = c(-2.0, 0.0);
        m[(0, 1)] = c(0.3, 0.4);
        m[(1, 0)] = c(0.3, -0.4);
        m[(1, 2)] = c(-1.0, 2.0);
        m[(2, 1)] = c(-1.0, -2.0);
        let mut v = vec![0.0; 9];
        herm_to_vec(&m, &mut v);
        assert!((norm2(&v) - m.frobenius_norm()).abs() < 1e-14);
        assert!((&vec_to_herm(&v, 3) - &m).max_abs() < 1e-15);
    }

    #[test]
    fn minimise_trace_with_unit_trace() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_block("X", 2, BlockKind::Psd);
        p.set_objective(x, CMat::identity(2));
        p.add_scalar_constraint(vec![(x, CMat::identity(2))], 1.0);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-7);
        assert!(sol.primal_residual <= 1e-8 && sol.dual_residual <= 1e-8);
    }

    #[test]
    fn smallest_eigenvalue_by_sdp() {
        // min tr(C X), tr X = 1, X ⪰ 0 has value λ_min(C)
        let mut cm = CMat::zeros(3, 3);
        cm[(0, 0)] = c(2.0, 0.0);
        cm[(1, 1)] = c(1.0, 0.0);
        cm[(2, 2)] = c(-0.5, 0.0);
        cm[(0, 2)] = c(0.3, 0.7);
        cm[(2, 0)] = c(0.3, -0.7);
        cm[(1, 2)] = c(0.0, -0.2);
        cm[(2, 1)] = c(0.0, 0.2);
        let lmin = *linalg::eigenvalues(&cm).unwrap().last().unwrap();
        for sense in [Sense::Minimize, Sense::Maximize] {
            let mut p = SdpProblem::new(sense);
            let x = p.add_block("X", 3, BlockKind::Psd);
            let obj = if sense == Sense::Minimize { cm.clone() } else { cm.scale(-1.0) };
            p.set_objective(x, obj);
            p.add_scalar_constraint(vec![(x, CMat::identity(3))], 1.0);
            let sol = solve(&p, &SolverConfig::default()).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal);
            let want = if sense == Sense::Minimize { lmin } else { -lmin };
            assert!((sol.objective - want).abs() < 1e-6, "{} vs {want}", sol.objective);
            assert!((sol.dual_objective - want).abs() < 1e-6);
            assert!(linalg::min_eigenvalue(&sol.block_values[0]).unwrap() >= -1e-8);
        }
    }

    #[test]
    fn negative_identity_is_infeasible() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_block("X", 2, BlockKind::Psd);
        p.add_matrix_constraint(vec![(x, 1.0)], CMat::identity(2).scale(-1.0));
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        let cert = detect_infeasibility(&p, &SolverConfig::default()).unwrap().unwrap();
        assert!(cert.violation <= 1e-8);
        // Aᵀy = Y ⪯ 0 and ⟨−𝟙, Y⟩ = 1
        let y = cert.multipliers[0].as_matrix().unwrap();
        assert!(linalg::eigenvalues(y).unwrap()[0] <= 1e-8);
        assert!((-y.trace().re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_block("X", 1, BlockKind::Free);
        p.add_scalar_constraint(vec![(x, CMat::identity(1))], 1.0);
        p.add_scalar_constraint(vec![(x, CMat::identity(1))], 2.0);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn free_blocks_and_redundant_rows() {
        // X free, Y ⪰ 0, X + Y = diag(1, -1), X = X (duplicate constraint),
        // minimise tr(Y): optimum X = diag(1,-1) - Y with Y = 0
        let mut p = SdpProblem::new(Sense::Minimize);
        let xb = p.add_block("X", 2, BlockKind::Free);
        let yb = p.add_block("Y", 2, BlockKind::Psd);
        p.set_objective(yb, CMat::identity(2));
        let rhs = CMat::from_diag(&[1.0, -1.0]);
        p.add_matrix_constraint(vec![(xb, 1.0), (yb, 1.0)], rhs.clone());
        p.add_matrix_constraint(vec![(xb, 2.0), (yb, 2.0)], rhs.scale(2.0));
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.objective.abs() < 1e-7);
        assert!((sol.block("X").unwrap() - &rhs).max_abs() < 1e-7);
        assert!(sol.constraint_residual < 1e-7);
    }

    #[test]
    fn warm_start_does_not_worsen() {
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block("X", 2, BlockKind::Psd);
        p.set_objective(x, CMat::from_diag(&[0.2, 0.9]));
        p.add_scalar_constraint(vec![(x, CMat::identity(2))], 1.0);
        let cfg = SolverConfig::default();
        let first = solve(&p, &cfg).unwrap();
        let second = solve_warm(&p, &cfg, Some(&first.warm_start)).unwrap();
        assert!(second.objective >= first.objective - 1e-7);
        assert!(second.iterations <= first.iterations);
    }

    #[test]
    fn rejects_ill_formed() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_block("X", 2, BlockKind::Psd);
        p.add_matrix_constraint(vec![(x, 1.0)], CMat::identity(3));
        assert!(matches!(
            solve(&p, &SolverConfig::default()),
            Err(SdpError::IllFormedProblem(_))
        ));
        let empty = SdpProblem::new(Sense::Minimize);
        assert!(solve(&empty, &SolverConfig::default()).is_err());
        let cfg = SolverConfig {
            relaxation: 2.5,
            ..SolverConfig::default()
        };
        let mut ok = SdpProblem::new(Sense::Minimize);
        ok.add_block("X", 1, BlockKind::Psd);
        assert!(solve(&ok, &cfg).is_err());
    }
}
