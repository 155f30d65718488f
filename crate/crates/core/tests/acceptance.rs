//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Reference values are recomputed here from closed forms or by independent
//! means rather than read back from the library.

use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steercost::bounds;
use steercost::linalg::CMat;
use steercost::protocol;
use steercost::quantum::{self, sampling, Assemblage, DensityMatrix, MeasurementSet};
use steercost::sdp::SolverConfig;
use steercost::steering;

/// Largest no-signalling defect and certificate slack seen during the run.
static NO_SIGNALLING: Mutex<f64> = Mutex::new(0.0);
static CERT_SLACK: Mutex<f64> = Mutex::new(0.0);

fn track(asm: &Assemblage) {
    let mut g = NO_SIGNALLING.lock().unwrap();
    *g = g.max(asm.no_signalling_defect());
}

fn track_cert(f: &[CMat], ns: usize, no: usize) {
    let v = steering::certificate_violation(f, ns, no).unwrap();
    let mut g = CERT_SLACK.lock().unwrap();
    *g = g.max(v);
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn assemble(state: &DensityMatrix, meas: &MeasurementSet) -> Assemblage {
    let asm = quantum::compute_assemblage(state, meas).unwrap();
    track(&asm);
    asm
}

fn random_qubit_assemblage(rng: &mut ChaCha8Rng) -> Assemblage {
    let settings = rng.random_range(2..=3);
    let noise = rng.random_range(0.0..0.6);
    let state = sampling::random_entangled_state(2, noise, rng);
    let meas = sampling::random_bloch_measurements(settings, rng);
    assemble(&state, &meas)
}

fn random_separable_assemblage(rng: &mut ChaCha8Rng) -> Assemblage {
    let d = rng.random_range(2..=3);
    let settings = rng.random_range(2..=3);
    let terms = rng.random_range(1..=5);
    let state = sampling::random_separable_state(d, d, terms, rng);
    let bases: Vec<_> = (0..settings).map(|_| sampling::random_basis(d, rng)).collect();
    assemble(&state, &quantum::projective_measurements(&bases))
}

fn criterion_1(cfg: &SolverConfig) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut max_nu = 0.0f64;
    for _ in 0..50 {
        let asm = random_qubit_assemblage(&mut rng);
        let p = steering::robustness_primal(&asm, cfg).unwrap();
        let d = steering::robustness_dual(&asm, cfg).unwrap();
        track_cert(d.certificate.as_ref().unwrap(), asm.n_settings(), asm.n_outcomes());
        worst = worst.max((p.nu - d.nu).abs());
        max_nu = max_nu.max(p.nu);
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-5 && elapsed <= Duration::from_secs(300),
        format!(
            "max |nu_primal - nu_dual| = {worst:.2e} over 50 cases (max nu {max_nu:.4}), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(cfg: &SolverConfig) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_nu = 0.0f64;
    let mut all_lhs = true;
    for _ in 0..20 {
        let asm = random_separable_assemblage(&mut rng);
        let m = steering::lhs_membership(&asm, cfg).unwrap();
        worst_nu = worst_nu.max(m.nu);
        all_lhs &= m.is_lhs;
    }
    outcome(
        worst_nu <= 1e-6 && all_lhs,
        format!("max nu = {worst_nu:.2e}, all isLHS = {all_lhs} over 20 cases"),
    )
}

fn mub_nu(v: f64, cfg: &SolverConfig) -> f64 {
    let state = quantum::isotropic_state(2, v).unwrap();
    let asm = assemble(&state, &quantum::mub_bases(2).unwrap());
    steering::robustness_primal(&asm, cfg).unwrap().nu
}

fn criterion_3(cfg: &SolverConfig) -> Outcome {
    let d = 2.0f64;
    // closed form (1+d)/(1+√d)·[1/d + V(1−1/d)] at V = 1
    let expected_obj = (1.0 + d) / (1.0 + d.sqrt());
    let nu_bound = (expected_obj - 1.0) / 2.0;
    let nu = mub_nu(1.0, cfg);

    let (asm, f) = steering::mub_dual_point(2, 1.0).unwrap();
    track(&asm);
    track_cert(&f, asm.n_settings(), asm.n_outcomes());
    let point = steering::evaluate_dual_point(&asm, &f).unwrap();

    let steerable = |v: f64| mub_nu(v, cfg) > 1e-6;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if steerable(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let cross = 0.5 * (lo + hi);
    let below = mub_nu(cross - 1e-3, cfg);
    let above = mub_nu(cross + 1e-3, cfg);

    let pass = nu >= 0.12132 - 1e-4
        && (point.objective - expected_obj).abs() <= 1e-8
        && point.violation <= 1e-7
        && below <= 1e-6
        && above > 1e-6
        && (0.5..=0.7).contains(&cross);
    outcome(
        pass,
        format!(
            "nu = {nu:.6} (dual-point lower bound {nu_bound:.6}); dual point {:.10} vs {expected_obj:.10}; \
             crossover V = {cross:.4} (1/sqrt3 = {:.4}), nu(-1e-3) = {below:.1e}, nu(+1e-3) = {above:.1e}",
            point.objective,
            1.0 / 3f64.sqrt()
        ),
    )
}

fn criterion_4() -> Outcome {
    let (m, v) = (2usize, 1.0f64);
    let (asm, f) = steering::clifford_dual_point(m, v).unwrap();
    track(&asm);
    track_cert(&f, asm.n_settings(), asm.n_outcomes());
    let point = steering::evaluate_dual_point(&asm, &f).unwrap();
    let expected = v * (m as f64 / 2.0).sqrt();

    let mut worst = 0.0f64;
    for k in 1..=6 {
        let obs = quantum::clifford_observables(k).unwrap();
        let dim = 1usize << k;
        let id = CMat::identity(dim);
        for (i, a) in obs.iter().enumerate() {
            worst = worst.max((&a.matmul(a) - &id).max_abs());
            worst = worst.max(a.trace().norm());
            worst = worst.max((a - &a.adjoint()).max_abs());
            for b in &obs[i + 1..] {
                worst = worst.max((&a.matmul(b) + &b.matmul(a)).max_abs());
            }
        }
    }
    outcome(
        (point.objective - expected).abs() <= 1e-8 && point.violation <= 1e-7 && worst <= 1e-10,
        format!(
            "dual objective {:.12} vs V*sqrt(m/2) = {expected}; algebra defect {worst:.1e} for k <= 6",
            point.objective
        ),
    )
}

fn criterion_5(cfg: &SolverConfig) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_nu = 0.0f64;
    let mut all_lhs = true;
    let mut bound_ok = true;
    let mut runs = 0;
    let mut steerable = 0;
    for i in 0..10 {
        let asm = if i % 2 == 0 {
            random_separable_assemblage(&mut rng)
        } else {
            // low noise and three settings, so most of these are steerable
            let state = sampling::random_entangled_state(2, rng.random_range(0.0..0.15), &mut rng);
            assemble(&state, &sampling::random_bloch_measurements(3, &mut rng))
        };
        let target = steering::robustness_primal(&asm, cfg).unwrap();
        if target.nu > 1e-6 {
            steerable += 1;
        }
        let mut protocols = vec![steering::copy_protocol(&asm).unwrap()];
        let mem = steering::lhs_membership(&asm, cfg).unwrap();
        if let Some(w) = &mem.witness {
            protocols.push(steering::lhs_protocol(asm.n_settings(), asm.n_outcomes(), w).unwrap());
        }
        for proto in protocols {
            let star = steering::sigma_star(&asm, &proto, None).unwrap();
            track(&star);
            let m = steering::lhs_membership(&star, cfg).unwrap();
            worst_nu = worst_nu.max(m.nu);
            all_lhs &= m.is_lhs;
            bound_ok &= proto.t_bits as f64 >= (target.nu + 1.0).log2() - 1e-6;
            runs += 1;
        }
    }
    outcome(
        worst_nu <= 1e-6 && all_lhs && bound_ok && runs > 10,
        format!(
            "{runs} sigma* checks (copy on 10 targets, {steerable} steerable; t=0 on the LHS ones): max nu* = {worst_nu:.2e}, \
             all isLHS = {all_lhs}, tBits bound holds = {bound_ok}"
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let half = bounds::approx_t_bound(0.5).unwrap().value;

    let mut round_trip = 0.0f64;
    for t in 1..=20u32 {
        // with q = 2^{-t}, ε² = q − q² makes √(1−4ε²) = 1 − 2q, so the bound is exactly t
        let q = 0.5f64.powi(t as i32);
        let eps = bounds::min_eps_for_t(t).unwrap();
        round_trip = round_trip.max((eps - (q - q * q).sqrt()).abs());
        round_trip = round_trip.max((bounds::approx_t_bound(eps).unwrap().value - t as f64).abs());
    }

    let mut laurent = 0.0f64;
    for eps in [1e-2, 5e-3, 1e-3, 1e-4, 1e-6] {
        let exact = bounds::approx_t_bound(eps).unwrap().value;
        let approx = (1.0 / (eps * eps)).log2();
        laurent = laurent.max((approx - exact).abs() / exact);
    }

    let dirs = protocol::random_net(10_000, 606).unwrap();
    let ts: Vec<u32> = (2..=8).collect();
    let reports = protocol::net_sweep(&ts, std::f64::consts::FRAC_PI_4, &dirs).unwrap();
    let worst_ratio = reports
        .iter()
        .map(|r| r.worst_eps / bounds::min_eps_for_t(r.t_bits).unwrap())
        .fold(f64::INFINITY, f64::min);
    let elapsed = start.elapsed();

    outcome(
        half == 1.0
            && round_trip <= 1e-9
            && laurent <= 0.05
            && worst_ratio >= 0.9
            && elapsed <= Duration::from_secs(120),
        format!(
            "t(0.5) = {half}; round-trip {round_trip:.1e}; Laurent rel. error {laurent:.2e}; \
             min worstEps/eps_min over t=2..8 = {worst_ratio:.3}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let thetas = [
        std::f64::consts::PI / 12.0,
        std::f64::consts::PI / 6.0,
        std::f64::consts::FRAC_PI_4,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut candidate_sets: Vec<Vec<DensityMatrix>> = Vec::new();
    for n in [1usize, 2, 4, 8, 16, 32, 64, 128, 256] {
        let fib = protocol::fibonacci_net(n).unwrap();
        candidate_sets.push(
            fib.points()
                .iter()
                .map(|p| DensityMatrix::from_bloch(*p).unwrap())
                .collect(),
        );
        candidate_sets.push((0..n).map(|_| sampling::random_density_matrix(2, &mut rng)).collect());
    }
    let mut min_scan = f64::INFINITY;
    for (i, cands) in candidate_sets.iter().enumerate() {
        for &theta in &thetas {
            let r = protocol::impossibility_scan(cands, theta, 4000, 7000 + i as u64).unwrap();
            min_scan = min_scan.min(r.min_achievable_eps);
        }
    }
    let anti = [2usize, 3]
        .iter()
        .map(|&d| protocol::antisym_orthogonality_scan(d, 100, 77).unwrap())
        .fold(0.0f64, f64::max);
    let control =
        protocol::orthogonality_scan(&DensityMatrix::maximally_mixed(4), 2, 100, 77).unwrap();
    outcome(
        min_scan > 1e-3 && anti <= 1e-10 && control >= 0.2,
        format!(
            "min impossibility scan {min_scan:.4} over {} candidate sets x 3 angles; \
             antisymmetric residual {anti:.1e}; maximally-mixed control {control:.3}",
            candidate_sets.len()
        ),
    )
}

fn cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_steercost"))
        .args(args)
        .env_remove("STEERCOST_JOBS")
        .output()
        .expect("spawn steercost");
    assert!(out.status.success(), "steercost {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn criterion_8() -> Outcome {
    let runs: [&[&str]; 4] = [
        &["simulate", "--t", "2,3,4", "--dirs", "3000", "--seed", "7"],
        &["assemblage", "--state", "random-entangled", "--d", "2", "--meas", "random-bloch", "--settings", "3", "--seed", "5"],
        &["robustness", "--state", "random-entangled", "--d", "2", "--meas", "random-bloch", "--settings", "2", "--seed", "5"],
        &["simulate", "--mode", "impossibility", "--candidates", "64", "--dirs", "2000", "--seed", "9"],
    ];
    let mut identical = true;
    for args in runs {
        identical &= cli(args) == cli(args);
    }
    let mut jobs_a = vec!["--jobs", "1"];
    let mut jobs_b = vec!["--jobs", "4"];
    jobs_a.extend_from_slice(runs[0]);
    jobs_b.extend_from_slice(runs[0]);
    identical &= cli(&jobs_a) == cli(&jobs_b);

    let ns = *NO_SIGNALLING.lock().unwrap();
    let slack = *CERT_SLACK.lock().unwrap();
    outcome(
        ns <= 1e-8 && slack <= 1e-7 && identical,
        format!(
            "max no-signalling defect {ns:.1e}; max certificate slack {slack:.1e}; \
             identical CLI bytes across reruns and job counts = {identical}"
        ),
    )
}

fn main() {
    let cfg = SolverConfig::default();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("duality gap", Box::new(|| criterion_1(&cfg))),
        ("LHS zero on separable states", Box::new(|| criterion_2(&cfg))),
        ("MUB bound and steering threshold", Box::new(|| criterion_3(&cfg))),
        ("Clifford bound and algebra", Box::new(criterion_4)),
        ("sigma* is LHS", Box::new(|| criterion_5(&cfg))),
        ("approximate simulation bound", Box::new(criterion_6)),
        ("impossibility and orthogonality scans", Box::new(criterion_7)),
        ("structural invariants", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        println!(
            "criterion {} [{}] {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
