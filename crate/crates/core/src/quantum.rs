//! States, measurements and assemblages.
//!
//! An assemblage is the family `σ_{a|x} = tr_A[ρ_AB (M_{a|x} ⊗ 𝟙)]` of
//! unnormalised conditional states Bob holds after Alice measures setting `x`
//! and obtains outcome `a`. The special families used throughout the crate
//! live here too: partially entangled two-qubit pure states, isotropic and
//! antisymmetric two-qudit states, qubit projectors from Bloch vectors,
//! mutually unbiased bases in prime dimension and anticommuting observables.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, kron, CMat, LinalgError, C64, TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("theta = {0} outside (0, π/4]")]
    ThetaOutOfRange(f64),
    #[error("visibility V = {0} outside [0, 1]")]
    VOutOfRange(f64),
    #[error("dimension d = {0} must be at least 2")]
    DimensionTooSmall(usize),
    #[error("Bloch vector has norm {0}, expected 1")]
    NotUnitVector(f64),
    #[error("d = {0} is not prime")]
    NotPrime(usize),
    #[error("number of anticommuting observables k = {0} outside 1..=8")]
    KOutOfRange(usize),
    #[error("observable {index} does not square to the identity (defect {defect:.3e})")]
    NotInvolution { index: usize, defect: f64 },
    #[error("probability {0:.3e} too small for a conditional state")]
    ZeroProbability(f64),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error("invalid assemblage: {0}")]
    InvalidAssemblage(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A validated density operator: Hermitian, positive, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self, QuantumError> {
        if !mat.is_square() {
            return Err(QuantumError::InvalidState(format!(
                "{}x{} is not square",
                mat.rows(),
                mat.cols()
            )));
        }
        if !mat.all_finite() {
            return Err(QuantumError::InvalidState("non-finite entries".into()));
        }
        let defect = mat.hermiticity_defect().unwrap_or(f64::INFINITY);
        if defect > TOL.hermitian {
            return Err(QuantumError::InvalidState(format!(
                "not Hermitian (defect {defect:.3e})"
            )));
        }
        let mat = mat.hermitian_part();
        let tr = mat.trace().re;
        if (tr - 1.0).abs() > TOL.trace {
            return Err(QuantumError::InvalidState(format!("trace {tr}")));
        }
        let min = linalg::min_eigenvalue(&mat)?;
        if min < -TOL.psd_slack {
            return Err(QuantumError::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self { mat })
    }

    /// Normalises a nonzero PSD operator to unit trace.
    pub fn from_unnormalized(mat: &CMat) -> Result<Self, QuantumError> {
        let tr = mat.trace().re;
        if tr <= TOL.zero_probability {
            return Err(QuantumError::ZeroProbability(tr));
        }
        Self::new(mat.hermitian_part().scale(1.0 / tr))
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn pure(psi: &[C64]) -> Result<Self, QuantumError> {
        let norm_sqr: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm_sqr <= TOL.zero_probability {
            return Err(QuantumError::InvalidState("zero vector".into()));
        }
        Self::new(CMat::outer(psi).scale(1.0 / norm_sqr))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            mat: CMat::identity(dim).scale(1.0 / dim as f64),
        }
    }

    /// Qubit state `(𝟙 + r·σ)/2` for `|r| ≤ 1`.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self, QuantumError> {
        Self::new(bloch_operator(r, 1.0))
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn into_mat(self) -> CMat {
        self.mat
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        self.mat.trace_product(&self.mat).re
    }

    /// Bloch vector of a qubit state.
    pub fn bloch_vector(&self) -> Option<[f64; 3]> {
        if self.dim() != 2 {
            return None;
        }
        let m = &self.mat;
        Some([2.0 * m[(0, 1)].re, -2.0 * m[(0, 1)].im, (m[(0, 0)] - m[(1, 1)]).re])
    }
}

/// `(𝟙 + s·(r·σ))/2` on a qubit.
fn bloch_operator(r: [f64; 3], s: f64) -> CMat {
    let [x, y, z] = r;
    CMat::from_vec(
        2,
        2,
        vec![
            c(0.5 * (1.0 + s * z), 0.0),
            c(0.5 * s * x, -0.5 * s * y),
            c(0.5 * s * x, 0.5 * s * y),
            c(0.5 * (1.0 - s * z), 0.0),
        ],
    )
    .expect("2x2")
}

pub fn pauli_x() -> CMat {
    CMat::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).expect("2x2")
}

pub fn pauli_y() -> CMat {
    CMat::from_vec(2, 2, vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]).expect("2x2")
}

pub fn pauli_z() -> CMat {
    CMat::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).expect("2x2")
}

/// One measurement setting: its effects and, for qubit projective
/// measurements, the Bloch direction it measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub effects: Vec<CMat>,
    pub label: Option<[f64; 3]>,
}

/// A family of POVMs acting on Alice's system, one per setting.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    settings: Vec<Setting>,
}

impl MeasurementSet {
    pub fn new(settings: Vec<Setting>) -> Result<Self, QuantumError> {
        let first = settings
            .first()
            .ok_or_else(|| QuantumError::InvalidMeasurement("no settings".into()))?;
        let n_out = first.effects.len();
        let dim = first
            .effects
            .first()
            .ok_or_else(|| QuantumError::InvalidMeasurement("setting without effects".into()))?
            .rows();
        for (x, s) in settings.iter().enumerate() {
            if s.effects.len() != n_out {
                return Err(QuantumError::InvalidMeasurement(format!(
                    "setting {x} has {} outcomes, expected {n_out}",
                    s.effects.len()
                )));
            }
            let mut sum = CMat::zeros(dim, dim);
            for (a, e) in s.effects.iter().enumerate() {
                if e.rows() != dim || e.cols() != dim {
                    return Err(QuantumError::InvalidMeasurement(format!(
                        "effect ({a},{x}) is {}x{}, expected {dim}x{dim}",
                        e.rows(),
                        e.cols()
                    )));
                }
                if !linalg::is_psd(e, TOL.psd_slack) {
                    return Err(QuantumError::InvalidMeasurement(format!(
                        "effect ({a},{x}) is not Hermitian PSD"
                    )));
                }
                sum += e;
            }
            let defect = (&sum - &CMat::identity(dim)).max_abs();
            if defect > TOL.psd_slack {
                return Err(QuantumError::InvalidMeasurement(format!(
                    "effects of setting {x} sum to identity only within {defect:.3e}"
                )));
            }
        }
        Ok(Self { settings })
    }

    /// Concatenates single-setting measurement sets.
    pub fn concat(parts: impl IntoIterator<Item = MeasurementSet>) -> Result<Self, QuantumError> {
        Self::new(parts.into_iter().flat_map(|m| m.settings).collect())
    }

    pub fn settings(&self) -> &[Setting] {
        &self.settings
    }

    pub fn n_settings(&self) -> usize {
        self.settings.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.settings[0].effects.len()
    }

    pub fn dim(&self) -> usize {
        self.settings[0].effects[0].rows()
    }

    pub fn effect(&self, a: usize, x: usize) -> &CMat {
        &self.settings[x].effects[a]
    }
}

/// Unnormalised conditional states `σ_{a|x}`, stored setting-major
/// (index `x·n_outcomes + a`).
#[derive(Debug, Clone, PartialEq)]
pub struct Assemblage {
    n_settings: usize,
    n_outcomes: usize,
    dim_b: usize,
    sigma: Vec<CMat>,
}

impl Assemblage {
    /// Validates Hermiticity, positivity, unit total trace and no-signalling.
    pub fn new(
        n_settings: usize,
        n_outcomes: usize,
        dim_b: usize,
        sigma: Vec<CMat>,
    ) -> Result<Self, QuantumError> {
        let asm = Self::from_parts(n_settings, n_outcomes, dim_b, sigma)?;
        asm.validate()?;
        Ok(asm)
    }

    /// Shape checks only; used for intermediate objects like noise terms.
    pub(crate) fn from_parts(
        n_settings: usize,
        n_outcomes: usize,
        dim_b: usize,
        sigma: Vec<CMat>,
    ) -> Result<Self, QuantumError> {
        if n_settings == 0 || n_outcomes == 0 || dim_b == 0 {
            return Err(QuantumError::InvalidAssemblage("empty shape".into()));
        }
        if sigma.len() != n_settings * n_outcomes {
            return Err(QuantumError::InvalidAssemblage(format!(
                "{} members for {n_settings} settings x {n_outcomes} outcomes",
                sigma.len()
            )));
        }
        for (i, s) in sigma.iter().enumerate() {
            if s.rows() != dim_b || s.cols() != dim_b {
                return Err(QuantumError::InvalidAssemblage(format!(
                    "member {i} is {}x{}, expected {dim_b}x{dim_b}",
                    s.rows(),
                    s.cols()
                )));
            }
            if !s.all_finite() {
                return Err(QuantumError::InvalidAssemblage(format!(
                    "member {i} has non-finite entries"
                )));
            }
        }
        Ok(Self {
            n_settings,
            n_outcomes,
            dim_b,
            sigma,
        })
    }

    fn validate(&self) -> Result<(), QuantumError> {
        for x in 0..self.n_settings {
            for a in 0..self.n_outcomes {
                let s = self.get(a, x);
                if !s.is_hermitian(TOL.hermitian) {
                    return Err(QuantumError::InvalidAssemblage(format!(
                        "σ[{a}|{x}] not Hermitian"
                    )));
                }
                if linalg::min_eigenvalue(&s.hermitian_part())? < -TOL.psd_slack {
                    return Err(QuantumError::InvalidAssemblage(format!(
                        "σ[{a}|{x}] not PSD"
                    )));
                }
            }
        }
        let tr = self.reduced_state().trace().re;
        if (tr - 1.0).abs() > TOL.consistency {
            return Err(QuantumError::InvalidAssemblage(format!(
                "total trace {tr}, expected 1"
            )));
        }
        let defect = self.no_signalling_defect();
        if defect > TOL.consistency {
            return Err(QuantumError::InvalidAssemblage(format!(
                "Σ_a σ[a|x] depends on x (defect {defect:.3e})"
            )));
        }
        Ok(())
    }

    pub fn n_settings(&self) -> usize {
        self.n_settings
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn get(&self, a: usize, x: usize) -> &CMat {
        &self.sigma[x * self.n_outcomes + a]
    }

    pub fn members(&self) -> &[CMat] {
        &self.sigma
    }

    /// `p(a|x) = tr σ_{a|x}`.
    pub fn probability(&self, a: usize, x: usize) -> f64 {
        self.get(a, x).trace().re
    }

    /// Normalised conditional state, or `None` when `p(a|x)` vanishes.
    pub fn conditional_state(&self, a: usize, x: usize) -> Option<DensityMatrix> {
        DensityMatrix::from_unnormalized(self.get(a, x)).ok()
    }

    /// `Σ_a σ_{a|0}`.
    pub fn reduced_state(&self) -> CMat {
        self.marginal(0)
    }

    pub fn marginal(&self, x: usize) -> CMat {
        let mut sum = CMat::zeros(self.dim_b, self.dim_b);
        for a in 0..self.n_outcomes {
            sum += self.get(a, x);
        }
        sum
    }

    /// Largest Frobenius deviation of `Σ_a σ_{a|x}` from the setting-0 marginal.
    pub fn no_signalling_defect(&self) -> f64 {
        let base = self.marginal(0);
        (1..self.n_settings)
            .map(|x| (&self.marginal(x) - &base).frobenius_norm())
            .fold(0.0, f64::max)
    }

    /// Largest Frobenius distance between corresponding members.
    pub fn distance(&self, other: &Assemblage) -> f64 {
        if (self.n_settings, self.n_outcomes, self.dim_b)
            != (other.n_settings, other.n_outcomes, other.dim_b)
        {
            return f64::INFINITY;
        }
        self.sigma
            .iter()
            .zip(&other.sigma)
            .map(|(a, b)| (a - b).frobenius_norm())
            .fold(0.0, f64::max)
    }

    /// Convex combination `w·self + (1-w)·other`.
    pub fn mix(&self, w: f64, other: &Assemblage) -> Result<Assemblage, QuantumError> {
        if (self.n_settings, self.n_outcomes, self.dim_b)
            != (other.n_settings, other.n_outcomes, other.dim_b)
        {
            return Err(QuantumError::DimensionMismatch("assemblage shapes differ".into()));
        }
        let sigma = self
            .sigma
            .iter()
            .zip(&other.sigma)
            .map(|(a, b)| {
                let mut m = a.scale(w);
                m.add_scaled(1.0 - w, b);
                m
            })
            .collect();
        Assemblage::new(self.n_settings, self.n_outcomes, self.dim_b, sigma)
    }

    pub fn to_document(&self) -> AssemblageDoc {
        AssemblageDoc {
            schema: Some(SCHEMA_VERSION.to_string()),
            dim_b: self.dim_b,
            n_settings: self.n_settings,
            n_outcomes: self.n_outcomes,
            sigma: self.sigma.iter().map(mat_to_pairs).collect(),
        }
    }

    pub fn from_document(doc: &AssemblageDoc) -> Result<Self, QuantumError> {
        if let Some(s) = &doc.schema {
            if s != SCHEMA_VERSION {
                return Err(QuantumError::InvalidAssemblage(format!(
                    "unsupported schema {s:?}"
                )));
            }
        }
        let sigma = doc
            .sigma
            .iter()
            .map(|m| pairs_to_mat(doc.dim_b, m))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(doc.n_settings, doc.n_outcomes, doc.dim_b, sigma)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("assemblage serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, QuantumError> {
        let doc: AssemblageDoc = serde_json::from_str(s)
            .map_err(|e| QuantumError::InvalidAssemblage(format!("JSON: {e}")))?;
        Self::from_document(&doc)
    }
}

/// Version tag written into every JSON document.
pub const SCHEMA_VERSION: &str = "v1";

/// Wire form of an assemblage. `sigma` lists the members setting-major
/// (`x·nOutcomes + a`), each a row-major list of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AssemblageDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub dim_b: usize,
    pub n_settings: usize,
    pub n_outcomes: usize,
    pub sigma: Vec<Vec<[f64; 2]>>,
}

pub fn mat_to_pairs(m: &CMat) -> Vec<[f64; 2]> {
    m.as_slice().iter().map(|z| [z.re, z.im]).collect()
}

pub fn pairs_to_mat(dim: usize, pairs: &[[f64; 2]]) -> Result<CMat, QuantumError> {
    Ok(CMat::from_vec(
        dim,
        dim,
        pairs.iter().map(|p| c(p[0], p[1])).collect(),
    )?)
}

/// `cos θ|00⟩ + sin θ|11⟩` for `0 < θ ≤ π/4`.
pub fn pure_theta_state(theta: f64) -> Result<DensityMatrix, QuantumError> {
    if !(theta > 0.0 && theta <= FRAC_PI_4 + 1e-12) {
        return Err(QuantumError::ThetaOutOfRange(theta));
    }
    DensityMatrix::pure(&pure_theta_vector(theta))
}

pub fn pure_theta_vector(theta: f64) -> Vec<C64> {
    vec![
        c(theta.cos(), 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        c(theta.sin(), 0.0),
    ]
}

/// Normalised maximally entangled vector `Σ_i |ii⟩/√d`.
pub fn max_entangled_vector(d: usize) -> Vec<C64> {
    let mut v = vec![c(0.0, 0.0); d * d];
    let amp = 1.0 / (d as f64).sqrt();
    for i in 0..d {
        v[i * d + i] = c(amp, 0.0);
    }
    v
}

/// `V|φ⁺_d⟩⟨φ⁺_d| + (1-V)𝟙/d²` with `|φ⁺_d⟩` normalised.
pub fn isotropic_state(d: usize, v: f64) -> Result<DensityMatrix, QuantumError> {
    if d < 2 {
        return Err(QuantumError::DimensionTooSmall(d));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(QuantumError::VOutOfRange(v));
    }
    let n = d * d;
    let mut m = CMat::outer(&max_entangled_vector(d)).scale(v);
    m.add_scaled((1.0 - v) / n as f64, &CMat::identity(n));
    DensityMatrix::new(m)
}

/// Projector `A_d = ½(𝟙 - SWAP)` onto the antisymmetric subspace of two qudits.
pub fn antisymmetric_projector(d: usize) -> CMat {
    let n = d * d;
    let mut m = CMat::identity(n).scale(0.5);
    for i in 0..d {
        for j in 0..d {
            // SWAP |ij⟩ = |ji⟩
            m[(j * d + i, i * d + j)] -= c(0.5, 0.0);
        }
    }
    m
}

/// Normalised antisymmetric projector `2A_d / (d(d-1))`.
pub fn antisymmetric_state(d: usize) -> Result<DensityMatrix, QuantumError> {
    if d < 2 {
        return Err(QuantumError::DimensionTooSmall(d));
    }
    let norm = 2.0 / (d * (d - 1)) as f64;
    DensityMatrix::new(antisymmetric_projector(d).scale(norm))
}

fn check_unit(xhat: [f64; 3]) -> Result<(), QuantumError> {
    let n = (xhat[0] * xhat[0] + xhat[1] * xhat[1] + xhat[2] * xhat[2]).sqrt();
    if (n - 1.0).abs() > 1e-10 {
        return Err(QuantumError::NotUnitVector(n));
    }
    Ok(())
}

/// Qubit projective measurement along `x̂`: outcome 0 is `(𝟙 + x̂·σ)/2`.
pub fn bloch_projectors(xhat: [f64; 3]) -> Result<MeasurementSet, QuantumError> {
    check_unit(xhat)?;
    MeasurementSet::new(vec![Setting {
        effects: vec![bloch_operator(xhat, 1.0), bloch_operator(xhat, -1.0)],
        label: Some(xhat),
    }])
}

/// One projective setting per Bloch direction.
pub fn bloch_measurements(directions: &[[f64; 3]]) -> Result<MeasurementSet, QuantumError> {
    let parts = directions
        .iter()
        .map(|&d| bloch_projectors(d))
        .collect::<Result<Vec<_>, _>>()?;
    MeasurementSet::concat(parts)
}

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut k = 2;
    while k * k <= n {
        if n % k == 0 {
            return false;
        }
        k += 1;
    }
    true
}

/// The `d+1` mutually unbiased bases in prime dimension `d`, as rank-1
/// projective measurements.
///
/// For `d = 2` these are the eigenbases of σ_x, σ_y and σ_z (in that order).
/// For odd prime `d` the first `d` settings are the quadratic-phase bases
/// `|e^j_k⟩ = Σ_l ω^{j l² + k l}|l⟩/√d` (`ω = e^{2πi/d}`) and the last is
/// the computational basis.
pub fn mub_bases(d: usize) -> Result<MeasurementSet, QuantumError> {
    Ok(projective_measurements(&mub_vectors(d)?))
}

/// Basis vectors behind [`mub_bases`]: `[setting][outcome] -> vector`.
pub fn mub_vectors(d: usize) -> Result<Vec<Vec<Vec<C64>>>, QuantumError> {
    if !is_prime(d) {
        return Err(QuantumError::NotPrime(d));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    if d == 2 {
        return Ok(vec![
            vec![vec![c(h, 0.0), c(h, 0.0)], vec![c(h, 0.0), c(-h, 0.0)]],
            vec![vec![c(h, 0.0), c(0.0, h)], vec![c(h, 0.0), c(0.0, -h)]],
            vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]],
        ]);
    }
    let amp = 1.0 / (d as f64).sqrt();
    let mut bases = Vec::with_capacity(d + 1);
    for j in 0..d {
        let basis = (0..d)
            .map(|k| {
                (0..d)
                    .map(|l| {
                        let exponent = (j * l * l + k * l) % d;
                        Complex64::from_polar(amp, 2.0 * PI * exponent as f64 / d as f64)
                    })
                    .collect()
            })
            .collect();
        bases.push(basis);
    }
    let computational = (0..d)
        .map(|k| (0..d).map(|l| c(if l == k { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    bases.push(computational);
    Ok(bases)
}

/// Rank-1 projective measurements from orthonormal bases.
pub fn projective_measurements(bases: &[Vec<Vec<C64>>]) -> MeasurementSet {
    MeasurementSet {
        settings: bases
            .iter()
            .map(|b| Setting {
                effects: b.iter().map(|v| CMat::outer(v)).collect(),
                label: None,
            })
            .collect(),
    }
}

/// `k` pairwise anticommuting involutions on `k` qubits:
/// `A_j = Z^{⊗(j-1)} ⊗ X ⊗ 𝟙^{⊗(k-j)}`. All are real symmetric.
pub fn clifford_observables(k: usize) -> Result<Vec<CMat>, QuantumError> {
    if !(1..=8).contains(&k) {
        return Err(QuantumError::KOutOfRange(k));
    }
    let id = CMat::identity(2);
    let (x, z) = (pauli_x(), pauli_z());
    Ok((0..k)
        .map(|j| {
            (0..k).fold(CMat::identity(1), |acc, q| {
                let factor = match q.cmp(&j) {
                    std::cmp::Ordering::Less => &z,
                    std::cmp::Ordering::Equal => &x,
                    std::cmp::Ordering::Greater => &id,
                };
                kron(&acc, factor)
            })
        })
        .collect())
}

/// Two-outcome measurements `M_{a|x} = (𝟙 + (-1)^{a+1} A_x)/2` for `a ∈ {0, 1}`.
pub fn dichotomic_povm_from_observables(obs: &[CMat]) -> Result<MeasurementSet, QuantumError> {
    let mut settings = Vec::with_capacity(obs.len());
    for (index, a) in obs.iter().enumerate() {
        if !a.is_hermitian(TOL.hermitian) {
            return Err(QuantumError::InvalidMeasurement(format!(
                "observable {index} is not Hermitian"
            )));
        }
        let n = a.rows();
        let id = CMat::identity(n);
        let defect = (&(a * a) - &id).max_abs();
        if defect > TOL.hermitian {
            return Err(QuantumError::NotInvolution { index, defect });
        }
        let mut minus = id.scale(0.5);
        minus.add_scaled(-0.5, a);
        let mut plus = id.scale(0.5);
        plus.add_scaled(0.5, a);
        settings.push(Setting {
            effects: vec![minus, plus],
            label: None,
        });
    }
    MeasurementSet::new(settings)
}

/// `tr_A[ρ (M ⊗ 𝟙)]` for an effect `M` on the first factor.
pub fn steer(state: &CMat, effect: &CMat, da: usize, db: usize) -> CMat {
    let mut out = CMat::zeros(db, db);
    for k in 0..da {
        for l in 0..da {
            let m = effect[(l, k)];
            if m == c(0.0, 0.0) {
                continue;
            }
            for i in 0..db {
                for j in 0..db {
                    out[(i, j)] += m * state[(k * db + i, l * db + j)];
                }
            }
        }
    }
    out.hermitian_part()
}

/// Assemblage `σ_{a|x} = tr_A[ρ (M_{a|x} ⊗ 𝟙)]`.
pub fn compute_assemblage(
    state: &DensityMatrix,
    meas: &MeasurementSet,
) -> Result<Assemblage, QuantumError> {
    let da = meas.dim();
    let n = state.dim();
    if da == 0 || n % da != 0 {
        return Err(QuantumError::DimensionMismatch(format!(
            "state of dimension {n} does not factor with Alice dimension {da}"
        )));
    }
    let db = n / da;
    let mut sigma = Vec::with_capacity(meas.n_settings() * meas.n_outcomes());
    for s in meas.settings() {
        for e in &s.effects {
            sigma.push(steer(state.mat(), e, da, db));
        }
    }
    Assemblage::new(meas.n_settings(), meas.n_outcomes(), db, sigma)
}

/// Probability and normalised conditional state after Alice observes the
/// rank-1 effect `effect` on a pure bipartite state.
pub fn steered_state(
    state: &DensityMatrix,
    effect: &CMat,
) -> Result<(f64, DensityMatrix), QuantumError> {
    let top = linalg::herm_eig(state.mat())?.eigenvalues[0];
    if (top - 1.0).abs() > 1e-8 {
        return Err(QuantumError::InvalidState(format!(
            "state is not pure (largest eigenvalue {top})"
        )));
    }
    let da = effect.rows();
    if !effect.is_square() || da == 0 || state.dim() % da != 0 {
        return Err(QuantumError::DimensionMismatch(format!(
            "effect {}x{} vs state dimension {}",
            effect.rows(),
            effect.cols(),
            state.dim()
        )));
    }
    let idempotency = (&(effect * effect) - effect).max_abs();
    let tr = effect.trace().re;
    if idempotency > 1e-8 || (tr - 1.0).abs() > 1e-8 {
        return Err(QuantumError::InvalidMeasurement(
            "effect is not a rank-1 projector".into(),
        ));
    }
    let db = state.dim() / da;
    let sigma = steer(state.mat(), effect, da, db);
    let p = sigma.trace().re;
    if p < TOL.zero_probability {
        return Err(QuantumError::ZeroProbability(p));
    }
    Ok((p, DensityMatrix::new(sigma.scale(1.0 / p))?))
}

/// Seeded sampling helpers shared by tests, scans and the CLI.
pub mod sampling {
    use super::*;

    /// Uniformly distributed point on the unit sphere.
    pub fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
        loop {
            let v: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-9 {
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }

    /// Haar-random unit vector in `C^d`.
    pub fn random_pure_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
        loop {
            let v: Vec<C64> = (0..d)
                .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n > 1e-9 {
                return v.into_iter().map(|z| z / n).collect();
            }
        }
    }

    /// Haar-random orthonormal basis of `C^d` (Gram–Schmidt on Gaussian vectors).
    pub fn random_basis<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<Vec<C64>> {
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(d);
        while basis.len() < d {
            let mut v = random_pure_vector(d, rng);
            for b in &basis {
                let ov: C64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= ov * bi;
                }
            }
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n > 1e-6 {
                basis.push(v.into_iter().map(|z| z / n).collect());
            }
        }
        basis
    }

    /// Random full-rank density matrix from a Ginibre matrix `G G†/tr`.
    pub fn random_density_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
        let g = CMat::from_vec(
            d,
            d,
            (0..d * d)
                .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect(),
        )
        .expect("square");
        let rho = &g * &g.adjoint();
        let tr = rho.trace().re;
        DensityMatrix::new(rho.scale(1.0 / tr)).expect("Ginibre states are valid")
    }

    /// Random separable state `Σ_i p_i ρ^A_i ⊗ ρ^B_i` with `terms` product terms.
    pub fn random_separable_state<R: Rng + ?Sized>(
        da: usize,
        db: usize,
        terms: usize,
        rng: &mut R,
    ) -> DensityMatrix {
        let weights: Vec<f64> = (0..terms).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = weights.iter().sum();
        let mut m = CMat::zeros(da * db, da * db);
        for w in weights {
            let a = random_density_matrix(da, rng);
            let b = random_density_matrix(db, rng);
            m.add_scaled(w / total, &kron(a.mat(), b.mat()));
        }
        DensityMatrix::new(m).expect("mixture of product states")
    }

    /// Mixture `(1-p)|ψ⟩⟨ψ| + p·G G†/tr` of a random pure and a random mixed state.
    pub fn random_entangled_state<R: Rng + ?Sized>(d: usize, noise: f64, rng: &mut R) -> DensityMatrix {
        let psi = random_pure_vector(d * d, rng);
        let mut m = CMat::outer(&psi).scale(1.0 - noise);
        m.add_scaled(noise, random_density_matrix(d * d, rng).mat());
        DensityMatrix::new(m).expect("convex mixture of states")
    }

    /// Projective qubit measurements along random Bloch directions.
    pub fn random_bloch_measurements<R: Rng + ?Sized>(
        settings: usize,
        rng: &mut R,
    ) -> MeasurementSet {
        let dirs: Vec<[f64; 3]> = (0..settings).map(|_| random_direction(rng)).collect();
        bloch_measurements(&dirs).expect("unit directions")
    }
}

#[cfg(test)]
mod tests {
    use super::sampling::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        (a - b).max_abs() <= tol
    }

    #[test]
    fn pure_theta_examples() {
        let s = pure_theta_state(FRAC_PI_4).unwrap();
        let rb = linalg::partial_trace_a(s.mat(), 2, 2).unwrap();
        assert!(close(&rb, &CMat::identity(2).scale(0.5), 1e-15));
        assert!((s.mat()[(0, 0)].re - 0.5).abs() < 1e-15);

        let s = pure_theta_state(PI / 6.0).unwrap();
        let rb = linalg::partial_trace_a(s.mat(), 2, 2).unwrap();
        assert!(close(&rb, &CMat::from_diag(&[0.75, 0.25]), 1e-15));

        assert_eq!(pure_theta_state(0.0), Err(QuantumError::ThetaOutOfRange(0.0)));
        assert!(pure_theta_state(1.0).is_err());
    }

    #[test]
    fn isotropic_examples() {
        let s = isotropic_state(3, 0.0).unwrap();
        assert!(close(s.mat(), &CMat::identity(9).scale(1.0 / 9.0), 1e-15));

        let s = isotropic_state(2, 1.0).unwrap();
        assert!(close(s.mat(), &CMat::outer(&max_entangled_vector(2)), 1e-15));

        let e = linalg::eigenvalues(isotropic_state(2, 0.5).unwrap().mat()).unwrap();
        let expected = [0.625, 0.125, 0.125, 0.125];
        for (got, want) in e.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(matches!(isotropic_state(2, 1.5), Err(QuantumError::VOutOfRange(_))));
    }

    #[test]
    fn antisymmetric_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let singlet = CMat::outer(&[c(0.0, 0.0), c(h, 0.0), c(-h, 0.0), c(0.0, 0.0)]);
        assert!(close(antisymmetric_state(2).unwrap().mat(), &singlet, 1e-15));

        let s3 = antisymmetric_state(3).unwrap();
        let e = linalg::eigenvalues(s3.mat()).unwrap();
        assert_eq!(e.iter().filter(|&&l| l > 1e-9).count(), 3);
        assert!((s3.mat().trace().re - 1.0).abs() < 1e-14);

        for d in 2..=4 {
            let a = antisymmetric_projector(d);
            assert!(close(&(&a * &a), &a, 1e-14));
        }
    }

    #[test]
    fn bloch_projector_examples() {
        let z = bloch_projectors([0.0, 0.0, 1.0]).unwrap();
        assert!(close(z.effect(0, 0), &CMat::from_diag(&[1.0, 0.0]), 1e-15));
        assert!(close(z.effect(1, 0), &CMat::from_diag(&[0.0, 1.0]), 1e-15));

        let x = bloch_projectors([1.0, 0.0, 0.0]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(x.effect(0, 0), &CMat::outer(&[c(h, 0.0), c(h, 0.0)]), 1e-15));
        assert!(close(x.effect(1, 0), &CMat::outer(&[c(h, 0.0), c(-h, 0.0)]), 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = bloch_projectors(random_direction(&mut rng)).unwrap();
            let (p0, p1) = (m.effect(0, 0), m.effect(1, 0));
            assert!(close(&(p0 * p0), p0, 1e-14));
            assert!((p0.trace().re - 1.0).abs() < 1e-14);
            assert!((p0 * p1).max_abs() < 1e-14);
        }
        assert!(matches!(
            bloch_projectors([1.0, 1.0, 0.0]),
            Err(QuantumError::NotUnitVector(_))
        ));
    }

    fn check_mub(d: usize) {
        let vecs = mub_vectors(d).unwrap();
        assert_eq!(vecs.len(), d + 1);
        for (i, bi) in vecs.iter().enumerate() {
            for (j, bj) in vecs.iter().enumerate() {
                for (k, u) in bi.iter().enumerate() {
                    for (l, v) in bj.iter().enumerate() {
                        let ov: C64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
                        let want = if i != j {
                            1.0 / d as f64
                        } else if k == l {
                            1.0
                        } else {
                            0.0
                        };
                        assert!(
                            (ov.norm_sqr() - want).abs() < 1e-10,
                            "d={d} bases ({i},{j}) vectors ({k},{l}): {}",
                            ov.norm_sqr()
                        );
                    }
                }
            }
        }
        let m = mub_bases(d).unwrap();
        for x in 0..m.n_settings() {
            let mut sum = CMat::zeros(d, d);
            for a in 0..d {
                sum += m.effect(a, x);
            }
            assert!(close(&sum, &CMat::identity(d), 1e-12));
        }
    }

    #[test]
    fn mub_qubit_are_pauli_eigenbases() {
        check_mub(2);
        let m = mub_bases(2).unwrap();
        let paulis = [pauli_x(), pauli_y(), pauli_z()];
        for (x, p) in paulis.iter().enumerate() {
            // outcome 0 is the +1 eigenvector
            let diff = m.effect(0, x) - m.effect(1, x);
            assert!(close(&diff, p, 1e-14));
        }
    }

    #[test]
    fn mub_odd_primes() {
        for d in [3, 5, 7] {
            check_mub(d);
        }
        assert_eq!(mub_bases(4).unwrap_err(), QuantumError::NotPrime(4));
        assert_eq!(mub_bases(1).unwrap_err(), QuantumError::NotPrime(1));
    }

    #[test]
    fn clifford_algebra() {
        let k2 = clifford_observables(2).unwrap();
        assert!(close(&k2[0], &kron(&pauli_x(), &CMat::identity(2)), 0.0));
        assert!(close(&k2[1], &kron(&pauli_z(), &pauli_x()), 0.0));
        for k in 1..=6 {
            let obs = clifford_observables(k).unwrap();
            let n = 1 << k;
            for (i, a) in obs.iter().enumerate() {
                assert_eq!(a.rows(), n);
                assert!(a.is_hermitian(1e-15));
                assert!(a.trace().norm() < 1e-10);
                assert!(close(&(a * a), &CMat::identity(n), 1e-10));
                for b in &obs[i + 1..] {
                    assert!((&(a * b) + &(b * a)).max_abs() < 1e-10);
                }
            }
        }
        let e = linalg::eigenvalues(&clifford_observables(3).unwrap()[2]).unwrap();
        assert_eq!(e.iter().filter(|&&l| (l - 1.0).abs() < 1e-10).count(), 4);
        assert_eq!(e.iter().filter(|&&l| (l + 1.0).abs() < 1e-10).count(), 4);
        assert!(matches!(clifford_observables(0), Err(QuantumError::KOutOfRange(0))));
        assert!(matches!(clifford_observables(9), Err(QuantumError::KOutOfRange(9))));
    }

    #[test]
    fn dichotomic_measurements() {
        let m = dichotomic_povm_from_observables(&[pauli_z(), pauli_x()]).unwrap();
        assert!(close(m.effect(1, 0), &CMat::from_diag(&[1.0, 0.0]), 1e-15));
        assert!(close(m.effect(0, 0), &CMat::from_diag(&[0.0, 1.0]), 1e-15));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(m.effect(1, 1), &CMat::outer(&[c(h, 0.0), c(h, 0.0)]), 1e-15));
        let sum = m.effect(0, 1) + m.effect(1, 1);
        assert!(close(&sum, &CMat::identity(2), 1e-15));
        assert!(matches!(
            dichotomic_povm_from_observables(&[CMat::from_diag(&[1.0, 0.5])]),
            Err(QuantumError::NotInvolution { .. })
        ));
    }

    #[test]
    fn assemblage_examples() {
        // product state: σ_{a|x} = p(a|x) ρ_B
        let rho_b = DensityMatrix::from_bloch([0.3, -0.2, 0.5]).unwrap();
        let state = DensityMatrix::new(kron(&CMat::from_diag(&[1.0, 0.0]), rho_b.mat())).unwrap();
        let meas = bloch_measurements(&[[0.0, 0.0, 1.0], [0.6, 0.0, 0.8]]).unwrap();
        let asm = compute_assemblage(&state, &meas).unwrap();
        for x in 0..2 {
            for a in 0..2 {
                let p = asm.probability(a, x);
                assert!(close(asm.get(a, x), &rho_b.mat().scale(p), 1e-14));
            }
        }

        let psi = pure_theta_state(FRAC_PI_4).unwrap();
        let asm = compute_assemblage(&psi, &bloch_projectors([0.0, 0.0, 1.0]).unwrap()).unwrap();
        assert!(close(asm.get(0, 0), &CMat::from_diag(&[0.5, 0.0]), 1e-15));
        assert!(close(asm.get(1, 0), &CMat::from_diag(&[0.0, 0.5]), 1e-15));

        let wrong = bloch_projectors([0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            compute_assemblage(&isotropic_state(3, 0.5).unwrap(), &wrong),
            Err(QuantumError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn isotropic_mub_closed_form() {
        for (d, v) in [(2, 1.0), (2, 0.4), (3, 0.7), (5, 0.3)] {
            let state = isotropic_state(d, v).unwrap();
            let meas = mub_bases(d).unwrap();
            let asm = compute_assemblage(&state, &meas).unwrap();
            for x in 0..=d {
                for a in 0..d {
                    let mut want = meas.effect(a, x).transpose().scale(v / d as f64);
                    want.add_scaled((1.0 - v) / (d * d) as f64, &CMat::identity(d));
                    assert!(close(asm.get(a, x), &want, 1e-10));
                }
            }
        }
    }

    #[test]
    fn steered_state_examples() {
        let zero = CMat::from_diag(&[1.0, 0.0]);
        let (p, s) = steered_state(&pure_theta_state(FRAC_PI_4).unwrap(), &zero).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(close(s.mat(), &zero, 1e-15));

        let theta = 0.3;
        let (p, s) = steered_state(&pure_theta_state(theta).unwrap(), &zero).unwrap();
        assert!((p - theta.cos().powi(2)).abs() < 1e-15);
        assert!(close(s.mat(), &zero, 1e-15));

        let (p, s) = steered_state(&antisymmetric_state(2).unwrap(), &zero).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(close(s.mat(), &CMat::from_diag(&[0.0, 1.0]), 1e-15));

        // |00⟩ measured with |1⟩⟨1| never happens
        let prod = DensityMatrix::new(CMat::from_diag(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(matches!(
            steered_state(&prod, &CMat::from_diag(&[0.0, 1.0])),
            Err(QuantumError::ZeroProbability(_))
        ));
        assert!(steered_state(&isotropic_state(2, 0.5).unwrap(), &zero).is_err());
    }

    #[test]
    fn no_signalling_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..120 {
            let d = 2 + i % 2;
            let state = random_entangled_state(d, 0.3, &mut rng);
            let bases: Vec<_> = (0..3).map(|_| random_basis(d, &mut rng)).collect();
            let asm = compute_assemblage(&state, &projective_measurements(&bases)).unwrap();
            assert!(asm.no_signalling_defect() <= 1e-8);
            let rb = linalg::partial_trace_a(state.mat(), d, d).unwrap();
            assert!(close(&asm.reduced_state(), &rb, 1e-12));
        }
    }

    #[test]
    fn pure_states_steer_to_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let psi = DensityMatrix::pure(&random_pure_vector(4, &mut rng)).unwrap();
            let asm = compute_assemblage(&psi, &random_bloch_measurements(2, &mut rng)).unwrap();
            for m in asm.members() {
                let e = linalg::eigenvalues(m).unwrap();
                assert!(e[1].abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn antisymmetric_steered_states_avoid_the_measured_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for d in [2, 3] {
            let state = antisymmetric_state(d).unwrap();
            for _ in 0..20 {
                let basis = random_basis(d, &mut rng);
                let asm =
                    compute_assemblage(&state, &projective_measurements(&[basis.clone()])).unwrap();
                for (a, phi) in basis.iter().enumerate() {
                    assert!(asm.get(a, 0).expectation(phi).re.abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn assemblage_json_roundtrip_and_rejection() {
        let asm = compute_assemblage(
            &isotropic_state(2, 0.8).unwrap(),
            &mub_bases(2).unwrap(),
        )
        .unwrap();
        let json = asm.to_json();
        assert!(json.contains("\"dimB\":2"));
        assert!(json.contains("\"schema\":\"v1\""));
        let back = Assemblage::from_json(&json).unwrap();
        assert_eq!(back, asm);

        let bad = json.replace("\"nOutcomes\":2", "\"nOutcomes\":2,\"extra\":1");
        assert!(Assemblage::from_json(&bad).is_err());

        // signalling assemblage is rejected
        let mut sigma = asm.members().to_vec();
        sigma[0] = CMat::from_diag(&[0.5, 0.0]);
        sigma[1] = CMat::from_diag(&[0.5, 0.0]);
        assert!(matches!(
            Assemblage::new(3, 2, 2, sigma),
            Err(QuantumError::InvalidAssemblage(_))
        ));
    }
}
