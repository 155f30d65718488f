//! Closed-form communication bounds.
//!
//! Exact simulation of isotropic-state assemblages:
//!
//! - all `d+1` MUB measurements: `1 + 2ν ≥ B = (1+d)/(1+√d)·[1/d + V(1−1/d)]`,
//!   so `t ≥ log₂(B+1) − 1`, which grows like `log₂(V√d/2)`;
//! - `m` anticommuting dichotomic observables: `B = V√(m/2)` and
//!   `t ≥ log₂((B+1)/2)`.
//!
//! Approximate simulation of pure two-qubit steering to trace-distance error
//! `ε` needs `t ≥ log₂(2/(1 − √(1−4ε²))) ≈ log₂(1/ε²)` bits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("visibility V = {0} outside [0, 1]")]
    VOutOfRange(f64),
    #[error("dimension d = {0} must be at least 2")]
    DimensionTooSmall(usize),
    #[error("number of observables must be at least 1")]
    NoObservables,
    #[error("error ε = {0} outside (0, 1/2]")]
    EpsOutOfRange(f64),
    #[error("message length t = {0} must be at least 1")]
    TOutOfRange(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundKind {
    #[serde(rename = "mub")]
    Mub,
    #[serde(rename = "clifford")]
    Clifford,
    #[serde(rename = "approx")]
    Approx,
    #[serde(rename = "asymptotic_mub")]
    AsymptoticMub,
    #[serde(rename = "asymptotic_clifford")]
    AsymptoticClifford,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::Mub => "mub",
            BoundKind::Clifford => "clifford",
            BoundKind::Approx => "approx",
            BoundKind::AsymptoticMub => "asymptotic_mub",
            BoundKind::AsymptoticClifford => "asymptotic_clifford",
        }
    }
}

/// One evaluated bound. `value` is in bits and clamped at 0; `raw` keeps the
/// unclamped number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub params: BTreeMap<String, f64>,
    pub value: f64,
    pub raw: f64,
    pub vacuous: bool,
    pub intermediate: BTreeMap<String, f64>,
}

impl BoundReport {
    fn new(
        kind: BoundKind,
        params: &[(&str, f64)],
        raw: f64,
        intermediate: &[(&str, f64)],
    ) -> Self {
        let vacuous = !(raw > 0.0);
        Self {
            kind,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value: if vacuous { 0.0 } else { raw },
            raw,
            vacuous,
            intermediate: intermediate.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.intermediate.get(name).copied()
    }
}

fn check_v(v: f64) -> Result<(), BoundsError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(BoundsError::VOutOfRange(v))
    }
}

/// `B = (1+d)/(1+√d)·[1/d + V(1−1/d)]` and `t = log₂(B+1) − 1`.
pub fn mub_bound(d: usize, v: f64) -> Result<BoundReport, BoundsError> {
    check_v(v)?;
    if d < 2 {
        return Err(BoundsError::DimensionTooSmall(d));
    }
    let df = d as f64;
    let b = (1.0 + df) / (1.0 + df.sqrt()) * (1.0 / df + v * (1.0 - 1.0 / df));
    let t = (b + 1.0).log2() - 1.0;
    let asym = mub_asymptotic(d, v)?.raw;
    Ok(BoundReport::new(
        BoundKind::Mub,
        &[("d", df), ("m", df + 1.0), ("V", v)],
        t,
        &[("B", b), ("nu_lower", (b - 1.0) / 2.0), ("asymptotic", asym)],
    ))
}

/// Large-`d` form `log₂(V√d/2)`.
pub fn mub_asymptotic(d: usize, v: f64) -> Result<BoundReport, BoundsError> {
    check_v(v)?;
    if d < 2 {
        return Err(BoundsError::DimensionTooSmall(d));
    }
    let df = d as f64;
    Ok(BoundReport::new(
        BoundKind::AsymptoticMub,
        &[("d", df), ("m", df + 1.0), ("V", v)],
        (v * df.sqrt() / 2.0).log2(),
        &[],
    ))
}

/// `B = V√(m/2)` and `t = log₂((B+1)/2)`, for `m` anticommuting observables
/// on dimension `2^m`.
pub fn clifford_bound(m: usize, v: f64) -> Result<BoundReport, BoundsError> {
    check_v(v)?;
    if m == 0 {
        return Err(BoundsError::NoObservables);
    }
    let mf = m as f64;
    let b = v * (mf / 2.0).sqrt();
    let t = ((b + 1.0) / 2.0).log2();
    let asym = clifford_asymptotic(m, v)?.raw;
    Ok(BoundReport::new(
        BoundKind::Clifford,
        &[("d", 2f64.powf(mf)), ("m", mf), ("V", v)],
        t,
        &[("B", b), ("nu_lower", (b - 1.0) / 2.0), ("asymptotic", asym)],
    ))
}

/// Large-`m` form `log₂(V√(log₂ d / 2)/2)` with `d = 2^m`.
pub fn clifford_asymptotic(m: usize, v: f64) -> Result<BoundReport, BoundsError> {
    check_v(v)?;
    if m == 0 {
        return Err(BoundsError::NoObservables);
    }
    let mf = m as f64;
    Ok(BoundReport::new(
        BoundKind::AsymptoticClifford,
        &[("d", 2f64.powf(mf)), ("m", mf), ("V", v)],
        (v * (mf / 2.0).sqrt() / 2.0).log2(),
        &[],
    ))
}

/// `t_bound(ε) = log₂(2/(1 − √(1−4ε²)))`.
pub fn approx_t_bound(eps: f64) -> Result<BoundReport, BoundsError> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(BoundsError::EpsOutOfRange(eps));
    }
    let cos_max = (1.0 - 4.0 * eps * eps).max(0.0).sqrt();
    // 1 − √(1−4ε²) = 4ε²/(1 + √(1−4ε²)), stable for small ε
    let denom = 4.0 * eps * eps / (1.0 + cos_max);
    let t = (2.0 / denom).log2();
    Ok(BoundReport::new(
        BoundKind::Approx,
        &[("eps", eps)],
        t,
        &[
            ("cos_theta_max", cos_max),
            ("gamma_min", cos_max),
            ("laurent", (1.0 / (eps * eps)).log2()),
        ],
    ))
}

/// `ε_min(t) = √(2^{−t} − 2^{−2t})`, the inverse of [`approx_t_bound`].
pub fn min_eps_for_t(t: u32) -> Result<f64, BoundsError> {
    if t == 0 {
        return Err(BoundsError::TOutOfRange(t));
    }
    let q = 0.5f64.powi(t as i32);
    Ok((q - q * q).sqrt())
}

/// One CSV row: `kind,d,m,V,eps,bound_bits,vacuous`; unused fields are empty.
pub fn csv_header() -> &'static str {
    "kind,d,m,V,eps,bound_bits,vacuous"
}

pub fn csv_row(r: &BoundReport) -> String {
    let f = |name: &str| r.param(name).map(|v| format!("{v}")).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{}",
        r.kind.as_str(),
        f("d"),
        f("m"),
        f("V"),
        f("eps"),
        r.value,
        r.vacuous
    )
}
