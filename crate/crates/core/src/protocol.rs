//! Finite-message cheating strategies for qubit steering and their
//! approximation error.
//!
//! Alice shares `ψ_θ = cos θ|00⟩ + sin θ|11⟩` in the target experiment and
//! measures along a Bloch direction `x̂`. The simulator replaces the shared
//! state by a dictionary of `2^t` pure states for Bob: Alice samples `a`
//! from the true statistics and sends the index of the dictionary state
//! closest to the steered state `|Φ_{a|x̂}⟩`. The error is the largest trace
//! distance between steered and simulated states over sampled directions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds;
use crate::linalg::{CMat, C64};
use crate::quantum::{self, sampling, DensityMatrix, QuantumError};

/// Relative slack allowed between the sampled worst error and `ε_min(t)`.
pub const SAMPLING_TOL: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("net of {0} points is not a power of two")]
    NetSizeNotPowerOfTwo(usize),
    #[error("point {index} has norm {norm}, expected 1")]
    NotUnitVector { index: usize, norm: f64 },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("dimension d = {0} not supported here (expected 2, 3 or 4)")]
    UnsupportedDimension(usize),
    #[error("candidate states must be qubit states")]
    NotQubit,
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum NetGenerator {
    Fibonacci,
    Random { seed: u64 },
    Custom,
}

/// Unit vectors on the Bloch sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereNet {
    points: Vec<[f64; 3]>,
    generator: NetGenerator,
}

impl SphereNet {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self, ProtocolError> {
        if points.is_empty() {
            return Err(ProtocolError::Empty("net"));
        }
        for (index, p) in points.iter().enumerate() {
            let norm = dot(p, p).sqrt();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(ProtocolError::NotUnitVector { index, norm });
            }
        }
        Ok(Self {
            points,
            generator: NetGenerator::Custom,
        })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn generator(&self) -> NetGenerator {
        self.generator
    }

    /// Index of the point with the smallest angle to `v` (first on ties).
    pub fn nearest(&self, v: &[f64; 3]) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let c = dot(p, v);
            if c > best_dot {
                best_dot = c;
                best = i;
            }
        }
        best
    }

    /// Largest angle from any of `probes` to its nearest net point.
    pub fn covering_angle(&self, probes: &[[f64; 3]]) -> f64 {
        probes
            .iter()
            .map(|v| dot(v, &self.points[self.nearest(v)]).clamp(-1.0, 1.0).acos())
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Golden-angle spiral: `z_i = 1 − (2i+1)/n`, azimuth `i·π(3−√5)`. A single
/// point is placed at the north pole.
pub fn fibonacci_net(n: usize) -> Result<SphereNet, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::Empty("net"));
    }
    if n == 1 {
        return Ok(SphereNet {
            points: vec![[0.0, 0.0, 1.0]],
            generator: NetGenerator::Fibonacci,
        });
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let points = (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect();
    Ok(SphereNet {
        points,
        generator: NetGenerator::Fibonacci,
    })
}

/// `n` independent uniform directions from a seeded ChaCha8 stream.
pub fn random_net(n: usize, seed: u64) -> Result<SphereNet, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::Empty("net"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n).map(|_| sampling::random_direction(&mut rng)).collect();
    Ok(SphereNet {
        points,
        generator: NetGenerator::Random { seed },
    })
}

/// Probability of outcome `a` and Bob's Bloch vector when Alice measures
/// `ψ_θ` along `xhat` (outcome 0 projects on `+xhat`).
///
/// With `|φ⟩ = (c₀, c₁)`, Bob is left with `c̄₀ cos θ|0⟩ + c̄₁ sin θ|1⟩`.
pub fn steered_bloch(theta: f64, xhat: &[f64; 3], a: usize) -> (f64, [f64; 3]) {
    let s = if a == 0 { 1.0 } else { -1.0 };
    let n = [s * xhat[0], s * xhat[1], s * xhat[2]];
    let beta = n[2].clamp(-1.0, 1.0).acos();
    let alpha = n[1].atan2(n[0]);
    let w0 = (beta / 2.0).cos() * theta.cos();
    let w1 = C64::from_polar((beta / 2.0).sin() * theta.sin(), -alpha);
    let p = w0 * w0 + w1.norm_sqr();
    if p <= 0.0 {
        return (0.0, [0.0, 0.0, 1.0]);
    }
    let cross = w1 * w0;
    (
        p,
        [
            2.0 * cross.re / p,
            2.0 * cross.im / p,
            (w0 * w0 - w1.norm_sqr()) / p,
        ],
    )
}

/// Trace distance of two pure qubit states given by unit Bloch vectors,
/// `sin(γ/2)` for Bloch angle `γ`.
pub fn pure_trace_distance(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    let d = [u[0] - v[0], u[1] - v[1], u[2] - v[2]];
    0.5 * dot(&d, &d).sqrt()
}

/// Single hidden variable; Alice answers with the true `p(a|x̂)` and sends
/// the index of the net point closest to the steered Bloch vector, Bob
/// prepares that pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetProtocol {
    pub t_bits: u32,
    pub theta: f64,
    net: SphereNet,
}

pub fn net_protocol(net: SphereNet, theta: f64) -> Result<NetProtocol, ProtocolError> {
    // any θ in (0, π/2) is an entangled ψ_θ; the closed bounds only need (0, π/4]
    if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
        return Err(QuantumError::ThetaOutOfRange(theta).into());
    }
    let n = net.len();
    if !n.is_power_of_two() {
        return Err(ProtocolError::NetSizeNotPowerOfTwo(n));
    }
    Ok(NetProtocol {
        t_bits: n.trailing_zeros(),
        theta,
        net,
    })
}

impl NetProtocol {
    pub fn net(&self) -> &SphereNet {
        &self.net
    }

    pub fn bob_state(&self, m: usize) -> DensityMatrix {
        let p = self.net.points[m];
        DensityMatrix::from_bloch(p).expect("net points are unit vectors")
    }

    /// `(p(a|x̂), message)` for both outcomes.
    pub fn respond(&self, xhat: &[f64; 3]) -> [(f64, usize); 2] {
        [0, 1].map(|a| {
            let (p, b) = steered_bloch(self.theta, xhat, a);
            (p, self.net.nearest(&b))
        })
    }

    /// Simulated unnormalised `σ^sim_{a|x̂} = p(a|x̂) ϱ_{m(a,x̂)}`.
    pub fn simulated(&self, xhat: &[f64; 3]) -> [CMat; 2] {
        self.respond(xhat)
            .map(|(p, m)| self.bob_state(m).into_mat().scale(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WorstCase {
    pub direction: [f64; 3],
    pub outcome: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationReport {
    pub t_bits: u32,
    pub theta: f64,
    pub n_directions: usize,
    pub worst_eps: f64,
    pub mean_eps: f64,
    pub arg_worst: WorstCase,
    pub seed: Option<u64>,
    pub bound_eps: f64,
    pub satisfied: bool,
}

impl SimulationReport {
    pub fn csv_header() -> &'static str {
        "t,worstEps,boundEps,satisfied,seed"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.t_bits,
            self.worst_eps,
            self.bound_eps,
            self.satisfied,
            self.seed.map(|s| s.to_string()).unwrap_or_default()
        )
    }
}

/// `ε_min(t)`, extended by its formula value 0 at `t = 0`.
fn bound_eps(t: u32) -> f64 {
    if t == 0 {
        0.0
    } else {
        bounds::min_eps_for_t(t).expect("t ≥ 1")
    }
}

/// Worst and mean trace-distance error over `directions` and both outcomes
/// with `p(a|x̂) > 1e−12`.
pub fn evaluate_protocol(
    proto: &NetProtocol,
    directions: &SphereNet,
) -> Result<SimulationReport, ProtocolError> {
    if directions.is_empty() {
        return Err(ProtocolError::Empty("direction set"));
    }
    let per_direction: Vec<[Option<f64>; 2]> = directions
        .points
        .par_iter()
        .map(|x| {
            [0, 1].map(|a| {
                let (p, b) = steered_bloch(proto.theta, x, a);
                (p > quantum_zero()).then(|| {
                    let m = proto.net.nearest(&b);
                    pure_trace_distance(&b, &proto.net.points[m])
                })
            })
        })
        .collect();
    let mut worst = -1.0;
    let mut arg = WorstCase {
        direction: directions.points[0],
        outcome: 0,
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, errs) in directions.points.iter().zip(&per_direction) {
        for (a, e) in errs.iter().enumerate() {
            if let Some(e) = *e {
                sum += e;
                count += 1;
                if e > worst {
                    worst = e;
                    arg = WorstCase {
                        direction: *x,
                        outcome: a,
                    };
                }
            }
        }
    }
    let bound = bound_eps(proto.t_bits);
    let worst = worst.max(0.0);
    Ok(SimulationReport {
        t_bits: proto.t_bits,
        theta: proto.theta,
        n_directions: directions.len(),
        worst_eps: worst,
        mean_eps: if count > 0 { sum / count as f64 } else { 0.0 },
        arg_worst: arg,
        seed: match directions.generator {
            NetGenerator::Random { seed } => Some(seed),
            _ => None,
        },
        bound_eps: bound,
        satisfied: worst >= bound * (1.0 - SAMPLING_TOL),
    })
}

fn quantum_zero() -> f64 {
    crate::linalg::TOL.zero_probability
}

/// One report per `t`, each with a Fibonacci dictionary of `2^t` states.
pub fn net_sweep(
    ts: &[u32],
    theta: f64,
    directions: &SphereNet,
) -> Result<Vec<SimulationReport>, ProtocolError> {
    ts.iter()
        .map(|&t| {
            let proto = net_protocol(fibonacci_net(1usize << t)?, theta)?;
            evaluate_protocol(&proto, directions)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScanResult {
    /// `max_targets min_candidates` trace distance.
    pub min_achievable_eps: f64,
    pub arg_worst: WorstCase,
    pub n_candidates: usize,
    pub n_directions: usize,
    pub seed: u64,
}

/// How well a fixed finite set of Bob states can imitate the steered states
/// of `ψ_θ`: over `n_directions` seeded random directions (both outcomes),
/// the largest distance from a steered state to its closest candidate.
pub fn impossibility_scan(
    candidates: &[DensityMatrix],
    theta: f64,
    n_directions: usize,
    seed: u64,
) -> Result<ScanResult, ProtocolError> {
    if candidates.is_empty() {
        return Err(ProtocolError::Empty("candidate set"));
    }
    let dirs = random_net(n_directions, seed)?;
    impossibility_scan_on(candidates, theta, &dirs, seed)
}

/// [`impossibility_scan`] over an explicit direction set.
pub fn impossibility_scan_on(
    candidates: &[DensityMatrix],
    theta: f64,
    directions: &SphereNet,
    seed: u64,
) -> Result<ScanResult, ProtocolError> {
    if candidates.is_empty() {
        return Err(ProtocolError::Empty("candidate set"));
    }
    let blochs: Vec<[f64; 3]> = candidates
        .iter()
        .map(|c| c.bloch_vector().ok_or(ProtocolError::NotQubit))
        .collect::<Result<_, _>>()?;
    let per_direction: Vec<[f64; 2]> = directions
        .points
        .par_iter()
        .map(|x| {
            [0, 1].map(|a| {
                let (p, b) = steered_bloch(theta, x, a);
                if p <= quantum_zero() {
                    return f64::NEG_INFINITY;
                }
                // trace distance between qubit states is half the Bloch distance
                blochs
                    .iter()
                    .map(|c| pure_trace_distance(&b, c))
                    .fold(f64::INFINITY, f64::min)
            })
        })
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut arg = WorstCase {
        direction: directions.points[0],
        outcome: 0,
    };
    for (x, d) in directions.points.iter().zip(&per_direction) {
        for (a, &v) in d.iter().enumerate() {
            if v > worst {
                worst = v;
                arg = WorstCase {
                    direction: *x,
                    outcome: a,
                };
            }
        }
    }
    Ok(ScanResult {
        min_achievable_eps: worst.max(0.0),
        arg_worst: arg,
        n_candidates: candidates.len(),
        n_directions: directions.len(),
        seed,
    })
}

/// Normalised steered states of `ψ_θ` for the given directions (both
/// outcomes, direction-major).
pub fn steered_states(theta: f64, directions: &[[f64; 3]]) -> Vec<DensityMatrix> {
    directions
        .iter()
        .flat_map(|x| {
            [0, 1].map(|a| {
                let (_, b) = steered_bloch(theta, x, a);
                DensityMatrix::from_bloch(b).expect("steered states are pure")
            })
        })
        .collect()
}

/// Largest `⟨φ_a|σ_{a|x}|φ_a⟩` over `n_bases` seeded random bases of Alice,
/// where `σ_{a|x}` is steered from `state` on `d x d`.
pub fn orthogonality_scan(
    state: &DensityMatrix,
    d: usize,
    n_bases: usize,
    seed: u64,
) -> Result<f64, ProtocolError> {
    if !(2..=4).contains(&d) {
        return Err(ProtocolError::UnsupportedDimension(d));
    }
    if state.dim() != d * d {
        return Err(QuantumError::DimensionMismatch(format!(
            "state of dimension {} for d = {d}",
            state.dim()
        ))
        .into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases: Vec<Vec<Vec<C64>>> = (0..n_bases)
        .map(|_| sampling::random_basis(d, &mut rng))
        .collect();
    let residuals: Vec<f64> = bases
        .par_iter()
        .map(|basis| {
            basis
                .iter()
                .map(|phi| {
                    let sigma = quantum::steer(state.mat(), &CMat::outer(phi), d, d);
                    sigma.expectation(phi).re
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// [`orthogonality_scan`] on the normalised antisymmetric state.
pub fn antisym_orthogonality_scan(d: usize, n_bases: usize, seed: u64) -> Result<f64, ProtocolError> {
    if !(2..=4).contains(&d) {
        return Err(ProtocolError::UnsupportedDimension(d));
    }
    orthogonality_scan(&quantum::antisymmetric_state(d)?, d, n_bases, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_distance;
    use crate::quantum::{bloch_projectors, pure_theta_state, steered_state};
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn fibonacci_examples() {
        let one = fibonacci_net(1).unwrap();
        assert_eq!(one.points(), &[[0.0, 0.0, 1.0]]);
        let two = fibonacci_net(2).unwrap();
        let c = dot(&two.points()[0], &two.points()[1]);
        assert!(c.acos() >= PI / 2.0);
        let net = fibonacci_net(1000).unwrap();
        for p in net.points() {
            assert!((dot(p, p) - 1.0).abs() < 1e-12);
        }
        let probes = random_net(20_000, 1).unwrap();
        let gap = net.covering_angle(probes.points());
        assert!(gap <= 1.3 * 2.0 * (PI / 1000.0).sqrt(), "gap {gap}");
        assert!(fibonacci_net(0).is_err());
    }

    #[test]
    fn steered_bloch_matches_partial_trace() {
        let nets = random_net(50, 9).unwrap();
        for theta in [PI / 12.0, PI / 6.0, FRAC_PI_4] {
            let state = pure_theta_state(theta).unwrap();
            for x in nets.points() {
                let meas = bloch_projectors(*x).unwrap();
                for a in 0..2 {
                    let (p, b) = steered_bloch(theta, x, a);
                    let (q, st) = steered_state(&state, meas.effect(a, 0)).unwrap();
                    assert!((p - q).abs() < 1e-12);
                    let want = st.bloch_vector().unwrap();
                    let got = DensityMatrix::from_bloch(b).unwrap();
                    assert!(trace_distance(got.mat(), st.mat()).unwrap() < 1e-10);
                    assert!(pure_trace_distance(&b, &want) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn pole_net_examples() {
        let net = SphereNet::new(vec![[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]).unwrap();
        let proto = net_protocol(net, FRAC_PI_4).unwrap();
        assert_eq!(proto.t_bits, 1);
        let z = SphereNet::new(vec![[0.0, 0.0, 1.0]]).unwrap();
        assert!(evaluate_protocol(&proto, &z).unwrap().worst_eps < 1e-15);
        let x = SphereNet::new(vec![[1.0, 0.0, 0.0]]).unwrap();
        let r = evaluate_protocol(&proto, &x).unwrap();
        assert!((r.worst_eps - 0.5f64.sqrt()).abs() < 1e-12);
        // the same number from the general trace distance
        let plus = DensityMatrix::from_bloch([1.0, 0.0, 0.0]).unwrap();
        let zero = DensityMatrix::from_bloch([0.0, 0.0, 1.0]).unwrap();
        assert!((trace_distance(plus.mat(), zero.mat()).unwrap() - r.worst_eps).abs() < 1e-12);

        let three = SphereNet::new(vec![[0.0, 0.0, 1.0]; 3]).unwrap();
        assert_eq!(
            net_protocol(three, FRAC_PI_4),
            Err(ProtocolError::NetSizeNotPowerOfTwo(3))
        );
    }

    #[test]
    fn marginals_are_exact() {
        let state = pure_theta_state(PI / 7.0).unwrap();
        let proto = net_protocol(fibonacci_net(16).unwrap(), PI / 7.0).unwrap();
        for x in random_net(30, 4).unwrap().points() {
            let meas = bloch_projectors(*x).unwrap();
            let sim = proto.simulated(x);
            for a in 0..2 {
                let target = quantum::steer(state.mat(), meas.effect(a, 0), 2, 2);
                assert!((sim[a].trace().re - target.trace().re).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exact_dictionary_gives_zero_error() {
        let dirs = random_net(4, 2).unwrap();
        let blochs: Vec<[f64; 3]> = dirs
            .points()
            .iter()
            .flat_map(|x| [0, 1].map(|a| steered_bloch(FRAC_PI_4, x, a).1))
            .collect();
        let proto = net_protocol(SphereNet::new(blochs).unwrap(), FRAC_PI_4).unwrap();
        let r = evaluate_protocol(&proto, &dirs).unwrap();
        assert!(r.worst_eps < 1e-12);
        let cands = steered_states(FRAC_PI_4, dirs.points());
        assert!(impossibility_scan_on(&cands, FRAC_PI_4, &dirs, 2).unwrap().min_achievable_eps < 1e-12);
    }

    #[test]
    fn net_sweep_respects_min_eps() {
        let dirs = fibonacci_net(10_000).unwrap();
        let reports = net_sweep(&[1, 2, 3, 4, 5, 6, 7, 8], FRAC_PI_4, &dirs).unwrap();
        for r in &reports {
            assert!(r.satisfied, "t = {}: {} vs {}", r.t_bits, r.worst_eps, r.bound_eps);
            assert!(r.mean_eps <= r.worst_eps);
        }
        assert!(reports[0].worst_eps >= 0.45);
        for w in reports.windows(2) {
            assert!(w[1].worst_eps <= w[0].worst_eps + 1e-12);
        }
    }

    #[test]
    fn impossibility_examples() {
        let poles = [
            DensityMatrix::from_bloch([0.0, 0.0, 1.0]).unwrap(),
            DensityMatrix::from_bloch([0.0, 0.0, -1.0]).unwrap(),
        ];
        let r = impossibility_scan(&poles, FRAC_PI_4, 10_000, 3).unwrap();
        assert!(r.min_achievable_eps >= 0.45);
        assert!(r.min_achievable_eps <= 0.5f64.sqrt() + 1e-12);
        let mixed = [DensityMatrix::maximally_mixed(4)];
        assert_eq!(
            impossibility_scan(&mixed, FRAC_PI_4, 10, 3),
            Err(ProtocolError::NotQubit)
        );
    }

    #[test]
    fn orthogonality_examples() {
        assert!(antisym_orthogonality_scan(2, 20, 1).unwrap().abs() < 1e-12);
        assert!(antisym_orthogonality_scan(3, 100, 2).unwrap() <= 1e-10);
        let control = orthogonality_scan(&DensityMatrix::maximally_mixed(4), 2, 20, 3).unwrap();
        assert!((control - 0.25).abs() < 1e-12);
        assert!(antisym_orthogonality_scan(5, 1, 1).is_err());
    }

    #[test]
    fn report_csv_and_json() {
        let proto = net_protocol(fibonacci_net(4).unwrap(), FRAC_PI_4).unwrap();
        let r = evaluate_protocol(&proto, &random_net(100, 7).unwrap()).unwrap();
        assert_eq!(r.seed, Some(7));
        let row = r.csv_row();
        assert!(row.starts_with("2,"));
        assert!(row.ends_with(",7"));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"worstEps\""));
        let back: SimulationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
