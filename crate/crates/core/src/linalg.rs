//! Dense complex matrices and the spectral primitives built on them.
//!
//! Everything in the crate carries operators as [`CMat`]: states, effects,
//! assemblage members, SDP blocks and steering-inequality coefficients.
//! Matrices are small (dimension a few hundred at most), dense and row-major.
//!
//! The Hermitian eigensolver is a cyclic complex Jacobi iteration with a fixed
//! sweep order, so identical inputs give bit-identical outputs.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use thiserror::Error;

/// Double-precision complex scalar.
pub type C64 = Complex64;

/// Numerical tolerances shared by the library, its solver and the tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Maximum entrywise deviation `|m - m†|` accepted as Hermitian.
    pub hermitian: f64,
    /// Slack on the smallest eigenvalue for a matrix to count as PSD.
    pub psd_slack: f64,
    /// Unit-trace tolerance for density matrices.
    pub trace: f64,
    /// Consistency (no-signalling) tolerance across assemblage settings.
    pub consistency: f64,
    /// Probabilities below this are treated as zero.
    pub zero_probability: f64,
}

/// The crate-wide tolerance record.
pub const TOL: Tolerances = Tolerances {
    hermitian: 1e-10,
    psd_slack: 1e-9,
    trace: 1e-10,
    consistency: 1e-8,
    zero_probability: 1e-12,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (max |m - m†| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self, LinalgError> {
        Self::from_vec(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Projector `|v⟩⟨v|` (not normalised).
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = v[i] * v[j].conj();
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)];
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &CMat) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Real part of the Hilbert–Schmidt inner product `tr(self† other)`.
    pub fn inner_re(&self, other: &CMat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &CMat) -> C64 {
        debug_assert_eq!(self.cols, other.rows);
        debug_assert_eq!(self.rows, other.cols);
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    /// Largest entrywise deviation from Hermiticity, or `None` when not square.
    pub fn hermiticity_defect(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        Some(worst)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect().is_some_and(|d| d <= tol)
    }

    /// `(m + m†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            out[(i, i)] = C64::new(self[(i, i)].re, 0.0);
            for j in i + 1..n {
                let z = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                out[(i, j)] = z;
                out[(j, i)] = z.conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &CMat) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `⟨v|self|v⟩`.
    pub fn expectation(&self, v: &[C64]) -> C64 {
        let mv = self.matvec(v);
        v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Add<&CMat> for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add dimension mismatch");
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub<&CMat> for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub dimension mismatch");
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<&CMat> for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        self.matmul(rhs)
    }
}

impl Neg for &CMat {
    type Output = CMat;
    fn neg(self) -> CMat {
        self.scale(-1.0)
    }
}

impl AddAssign<&CMat> for CMat {
    fn add_assign(&mut self, rhs: &CMat) {
        self.add_scaled(1.0, rhs);
    }
}

impl SubAssign<&CMat> for CMat {
    fn sub_assign(&mut self, rhs: &CMat) {
        self.add_scaled(-1.0, rhs);
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = CMat::zeros(rows, cols);
    for ar in 0..a.rows {
        for ac in 0..a.cols {
            let s = a[(ar, ac)];
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            for br in 0..b.rows {
                for bc in 0..b.cols {
                    out[(ar * b.rows + br, ac * b.cols + bc)] = s * b[(br, bc)];
                }
            }
        }
    }
    out
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermEig {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, matching `eigenvalues`.
    pub eigenvectors: CMat,
}

impl HermEig {
    /// `V f(Λ) V†`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut out = CMat::zeros(n, n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * w;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        out.hermitian_part()
    }

    pub fn reconstruct(&self) -> CMat {
        self.reconstruct_with(|x| x)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

fn check_square(m: &CMat) -> Result<(), LinalgError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(LinalgError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        })
    }
}

fn check_hermitian(m: &CMat) -> Result<(), LinalgError> {
    check_square(m)?;
    let deviation = m.hermiticity_defect().unwrap_or(f64::INFINITY);
    if deviation > TOL.hermitian {
        return Err(LinalgError::NotHermitian { deviation });
    }
    Ok(())
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
pub fn herm_eig(m: &CMat) -> Result<HermEig, LinalgError> {
    check_hermitian(m)?;
    Ok(jacobi_eig(&m.hermitian_part()))
}

/// Jacobi on an input already known to be Hermitian (only its Hermitian
/// part is read).
pub(crate) fn jacobi_eig(m: &CMat) -> HermEig {
    let n = m.rows;
    let mut a = m.hermitian_part();
    let mut v = CMat::identity(n);
    let scale = a.frobenius_norm();

    if n > 1 && scale > 0.0 {
        let threshold = f64::EPSILON * scale;
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[(p, q)].norm_sqr();
                }
            }
            if off.sqrt() <= threshold {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));

    let mut eigenvectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, dst)] = v[(r, src)];
        }
    }
    HermEig {
        eigenvalues: order.iter().map(|&i| diag[i]).collect(),
        eigenvectors,
    }
}

/// One complex Jacobi rotation annihilating `a[p,q]`.
fn rotate(a: &mut CMat, v: &mut CMat, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let n = a.rows;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    // Phase e^{-iφ} turns the pivot real; the remaining 2x2 problem is the
    // classical symmetric rotation.
    let phase = (apq / r).conj();
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // J = [[c, s], [-s·phase, c·phase]] acting on columns (p, q).
    let jqp = -phase * s;
    let jqq = phase * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c + akq * jqp;
        a[(k, q)] = akp * s + akq * jqq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c + aqk * jqp.conj();
        a[(q, k)] = apk * s + aqk * jqq.conj();
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c + vkq * jqp;
        v[(k, q)] = vkp * s + vkq * jqq;
    }
}

/// Eigenvalues only, descending.
pub fn eigenvalues(m: &CMat) -> Result<Vec<f64>, LinalgError> {
    herm_eig(m).map(|e| e.eigenvalues)
}

/// Trace distance `½ Σ |λ_i(r - s)|`.
pub fn trace_distance(r: &CMat, s: &CMat) -> Result<f64, LinalgError> {
    if (r.rows, r.cols) != (s.rows, s.cols) {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            r.rows, r.cols, s.rows, s.cols
        )));
    }
    let e = herm_eig(&(r - s))?;
    Ok(0.5 * e.eigenvalues.iter().map(|x| x.abs()).sum::<f64>())
}

/// Trace norm `Σ |λ_i|` of a Hermitian matrix.
pub fn trace_norm(m: &CMat) -> Result<f64, LinalgError> {
    Ok(herm_eig(m)?.eigenvalues.iter().map(|x| x.abs()).sum())
}

/// Largest absolute eigenvalue of a Hermitian matrix.
pub fn operator_norm(m: &CMat) -> Result<f64, LinalgError> {
    Ok(herm_eig(m)?
        .eigenvalues
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max))
}

/// Partial trace over the first tensor factor of a `dA·dB` square matrix.
pub fn partial_trace_a(m: &CMat, da: usize, db: usize) -> Result<CMat, LinalgError> {
    let n = da * db;
    if m.rows != n || m.cols != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} matrix is not ({da}·{db})-square",
            m.rows, m.cols
        )));
    }
    let mut out = CMat::zeros(db, db);
    for k in 0..da {
        for i in 0..db {
            for j in 0..db {
                out[(i, j)] += m[(k * db + i, k * db + j)];
            }
        }
    }
    Ok(out)
}

/// Partial trace over the second tensor factor.
pub fn partial_trace_b(m: &CMat, da: usize, db: usize) -> Result<CMat, LinalgError> {
    let n = da * db;
    if m.rows != n || m.cols != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} matrix is not ({da}·{db})-square",
            m.rows, m.cols
        )));
    }
    let mut out = CMat::zeros(da, da);
    for i in 0..da {
        for j in 0..da {
            for k in 0..db {
                out[(i, j)] += m[(i * db + k, j * db + k)];
            }
        }
    }
    Ok(out)
}

/// Projection onto the PSD cone in Frobenius norm: negative eigenvalues clipped.
pub fn psd_project(m: &CMat) -> Result<CMat, LinalgError> {
    check_hermitian(m)?;
    Ok(psd_project_unchecked(m))
}

pub(crate) fn psd_project_unchecked(m: &CMat) -> CMat {
    let e = jacobi_eig(m);
    if e.eigenvalues.last().is_none_or(|&l| l >= 0.0) {
        return m.hermitian_part();
    }
    e.reconstruct_with(|x| x.max(0.0))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> Result<f64, LinalgError> {
    Ok(herm_eig(m)?.eigenvalues.last().copied().unwrap_or(0.0))
}

/// Whether `m` is Hermitian with all eigenvalues `≥ -slack`.
pub fn is_psd(m: &CMat, slack: f64) -> bool {
    match herm_eig(m) {
        Ok(e) => e.eigenvalues.last().is_none_or(|&l| l >= -slack),
        Err(_) => false,
    }
}
