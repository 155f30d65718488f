use std::process::{Command, Output};

use steercost::cli::{
    AntisymOutput, BoundDoc, BoundsList, ImpossibilityOutput, MembershipDoc, RobustnessOutput,
    SigmaStarDoc, SimulateOutput,
};
use steercost::quantum::{Assemblage, AssemblageDoc};

fn steercost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steercost"))
        .args(args)
        .env_remove("STEERCOST_JOBS")
        .output()
        .expect("spawn steercost")
}

fn ok(args: &[&str]) -> String {
    let out = steercost(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn approx_half_is_one_bit() {
    let doc: BoundDoc = serde_json::from_str(&ok(&["bounds", "approx", "--eps", "0.5"])).unwrap();
    assert_eq!(doc.schema, "v1");
    assert_eq!(doc.t_bound, 1.0);
    assert!(ok(&["bounds", "approx", "--eps", "0.5"]).contains("\"t_bound\": 1.0"));
}

#[test]
fn simulate_example_is_satisfied() {
    let doc: SimulateOutput = serde_json::from_str(&ok(&[
        "simulate", "--theta", "0.7854", "--t", "4", "--dirs", "10000", "--seed", "7",
    ]))
    .unwrap();
    assert_eq!(doc.reports.len(), 1);
    assert!(doc.reports[0].satisfied);
    assert_eq!(doc.reports[0].seed, Some(7));
}

#[test]
fn every_command_parses_back() {
    let asm_json = ok(&["assemblage", "--state", "isotropic", "--d", "2", "--V", "0.8", "--meas", "xyz"]);
    let doc: AssemblageDoc = serde_json::from_str(&asm_json).unwrap();
    let asm = Assemblage::from_document(&doc).unwrap();
    assert_eq!(asm.n_settings(), 3);

    let m: MembershipDoc =
        serde_json::from_str(&ok(&["membership", "--state", "isotropic", "--d", "2", "--V", "0.5", "--meas", "mub"])).unwrap();
    assert!(m.is_lhs);

    let r: RobustnessOutput =
        serde_json::from_str(&ok(&["robustness", "--state", "isotropic", "--d", "2", "--V", "1", "--meas", "mub"])).unwrap();
    assert!(r.nu >= 0.12132 - 1e-4);
    assert!(r.duality_gap.unwrap() < 1e-5);
    assert!(r.dual.unwrap().certificate.is_some());

    let b: BoundsList =
        serde_json::from_str(&ok(&["bounds", "sweep", "--d", "2,3", "--V", "0.5,1", "--eps", "0.1"])).unwrap();
    assert_eq!(b.bounds.len(), 5);
    let c: BoundDoc = serde_json::from_str(&ok(&["bounds", "clifford", "--m", "8"])).unwrap();
    // B = V√(m/2) = 2, t = log₂((B+1)/2)
    assert!((c.t_bound - 1.5f64.log2()).abs() < 1e-12);

    let s: SigmaStarDoc =
        serde_json::from_str(&ok(&["sigma-star", "--state", "pure", "--theta", "0.5", "--meas", "xz"])).unwrap();
    assert!(s.is_lhs && s.bound_holds);
    assert_eq!(s.t_bits, 2);
    Assemblage::from_document(&s.sigma_star).unwrap();

    let i: ImpossibilityOutput = serde_json::from_str(&ok(&[
        "simulate", "--mode", "impossibility", "--candidates", "16", "--dirs", "500", "--seed", "1",
    ]))
    .unwrap();
    assert!(i.scan.min_achievable_eps > 1e-3);
    let a: AntisymOutput =
        serde_json::from_str(&ok(&["simulate", "--mode", "antisym", "--d", "3", "--dirs", "20", "--seed", "1"])).unwrap();
    assert!(a.max_residual < 1e-10);
}

#[test]
fn input_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("asm.json");
    let path_s = path.to_str().unwrap();
    ok(&["assemblage", "--state", "isotropic", "--d", "3", "--V", "1", "--meas", "mub", "--out", path_s]);
    let direct = ok(&["robustness", "--state", "isotropic", "--d", "3", "--V", "1", "--meas", "mub", "--side", "primal"]);
    let via_file = ok(&["robustness", "--input", path_s, "--side", "primal"]);
    assert_eq!(direct, via_file);
}

#[test]
fn config_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"eps": [0.5, 0.25], "format": "csv"}"#).unwrap();
    let cfg_s = cfg.to_str().unwrap();
    let csv = ok(&["--config", cfg_s, "bounds", "approx"]);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("kind,d,m,V,eps,bound_bits,vacuous"));
    let one: BoundDoc =
        serde_json::from_str(&ok(&["--config", cfg_s, "bounds", "approx", "--eps", "0.5", "--format", "json"])).unwrap();
    assert_eq!(one.t_bound, 1.0);

    std::fs::write(&cfg, r#"{"epsilon": 0.5}"#).unwrap();
    assert_eq!(steercost(&["--config", cfg_s, "bounds", "approx"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    assert_eq!(steercost(&["nonsense"]).status.code(), Some(2));
    assert_eq!(steercost(&["bounds", "mub", "--d", "2", "--V", "1.5"]).status.code(), Some(2));
    assert_eq!(steercost(&["simulate", "--t", "3"]).status.code(), Some(2));
    assert_eq!(
        steercost(&["assemblage", "--state", "random-entangled", "--d", "2", "--meas", "xz"]).status.code(),
        Some(2)
    );
    assert_eq!(steercost(&["assemblage", "--state", "isotropic", "--d", "2", "--V", "1", "--meas", "mub", "--format", "csv"]).status.code(), Some(2));
    // a steerable assemblage has no zero-bit protocol
    let out = steercost(&["sigma-star", "--state", "isotropic", "--d", "2", "--V", "1", "--meas", "mub", "--protocol", "lhs"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("steerable"));
}

#[test]
fn jobs_do_not_change_output() {
    let args = ["simulate", "--t", "1,2,3,4,5", "--dirs", "4000", "--seed", "3", "--format", "csv"];
    let one = ok(&[&["--jobs", "1"][..], &args[..]].concat());
    let many = ok(&[&["--jobs", "3"][..], &args[..]].concat());
    assert_eq!(one, many);
    assert_eq!(one.lines().next(), Some("t,worstEps,boundEps,satisfied,seed"));
}
