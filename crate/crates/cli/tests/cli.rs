use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_minsoftmax"));
    c.env_remove("MINSOFTMAX_THREADS").env("RUST_LOG", "error");
    c
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn ok(c: &mut Command) -> String {
    let out = run(c);
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn lq_scenario(dir: &Path, horizon: &str) -> PathBuf {
    let p = dir.join("lq.json");
    fs::write(
        &p,
        format!(
            r#"{{"schema_version": 1, "kind": "lq", "lq": {{"a": [[1]], "b": [[1]], "d": [[1]], "q": [[1]], "r": [[1]], "q_h": [[1]], "horizon": {horizon}}}}}"#
        ),
    )
    .unwrap();
    p
}

#[test]
fn solve_irrigation_writes_full_policy() {
    let t = tempfile::tempdir().unwrap();
    let stdout = ok(bin().args(["solve"]).arg(bundled("irrigation.json")).args(["--gamma-h", "30", "--gamma-e", "100", "--out"]).arg(t.path()));
    assert!(stdout.starts_with("j0="));
    let policy = read(t.path().join("policy.csv"));
    let mut lines = policy.lines();
    assert_eq!(lines.next(), Some("stage,x,u"));
    assert_eq!(lines.count(), 8 * 100);
    assert_eq!(read(t.path().join("value.csv")).lines().count(), 1 + 9 * 100);
}

#[test]
fn solve_lq_writes_one_gain_row_per_stage() {
    let t = tempfile::tempdir().unwrap();
    let sc = lq_scenario(t.path(), "5");
    ok(bin().arg("solve").arg(&sc).args(["--gamma-h", "4", "--gamma-e", "1", "--out"]).arg(t.path().join("o")));
    let gains = read(t.path().join("o/gain.csv"));
    assert_eq!(gains.lines().next(), Some("stage,g_0_0"));
    assert_eq!(gains.lines().count(), 6);
    assert_eq!(read(t.path().join("o/p.csv")).lines().count(), 7);
}

#[test]
fn below_critical_exits_two_and_names_stage() {
    let t = tempfile::tempdir().unwrap();
    let sc = lq_scenario(t.path(), "3");
    let out = run(bin().arg("solve").arg(&sc).args(["--gamma-h", "1", "--gamma-e", "1", "--out"]).arg(t.path().join("o")));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    let line = err.lines().last().unwrap();
    assert!(line.contains(r#""error":"MBelowCritical""#), "{line}");
    assert!(line.contains(r#""stage":3"#), "{line}");
}

#[test]
fn validation_errors_exit_one() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path().join("bad.json");
    fs::write(
        &p,
        r#"{"schema_version": 1, "kind": "finite", "finite": {"n_states": 1, "n_inputs": 1, "n_dist": 2, "horizon": 1,
            "transition": [0, 0], "stage_cost": [0], "terminal_cost": [0],
            "empirical": {"layout": "shared", "rows": [[0.5, 0.6]]}}}"#,
    )
    .unwrap();
    let out = run(bin().arg("validate").arg(&p));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(r#""error":"ValidationError""#));

    let out = run(bin().args(["solve", "--gamma-h", "1"]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_reference_pairs_give_four_rows() {
    let t = tempfile::tempdir().unwrap();
    let stdout = ok(bin().arg("sweep").arg(bundled("irrigation.json")).arg("--out").arg(t.path()));
    let summary = read(t.path().join("summary.csv"));
    assert_eq!(stdout, summary);
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "gamma_h,gamma_e,j0,policy_hash,hamming,status");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,0,") && lines[1].ends_with(",0,ok"));
    assert!(t.path().join("gh30_ge100/policy.csv").exists());
}

#[test]
fn one_point_sweep_matches_solve() {
    let t = tempfile::tempdir().unwrap();
    let sc = bundled("fig4.json");
    ok(bin().arg("solve").arg(&sc).args(["--gamma-h", "1", "--gamma-e", "3000", "--out"]).arg(t.path().join("solve")));
    ok(bin().arg("sweep").arg(&sc).args(["--gamma-h", "1", "--gamma-e", "3000", "--out"]).arg(t.path().join("sweep")));
    for f in ["value.csv", "policy.csv", "adversary.csv"] {
        assert_eq!(read(t.path().join("solve").join(f)), read(t.path().join("sweep/gh1_ge3000").join(f)), "{f}");
    }
    assert_eq!(read(t.path().join("sweep/summary.csv")).lines().count(), 2);
}

#[test]
fn lq_sweep_over_gamma_e_keeps_the_policy() {
    let t = tempfile::tempdir().unwrap();
    ok(bin().arg("sweep").arg(bundled("lq_scalar.json")).args(["--gamma-h", "4", "--gamma-e", "0,1,10,100", "--out"]).arg(t.path()));
    let summary = read(t.path().join("summary.csv"));
    let hashes: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(hashes.len(), 4);
    assert!(hashes.iter().all(|h| *h == hashes[0] && !h.is_empty()));
}

#[test]
fn sweep_records_failed_points_and_continues() {
    let t = tempfile::tempdir().unwrap();
    ok(bin().arg("sweep").arg(bundled("lq_scalar.json")).args(["--pairs", "1:1,4:1", "--out"]).arg(t.path()));
    let summary = read(t.path().join("summary.csv"));
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[1], "1,1,nan,,,MBelowCritical");
    assert!(lines[2].ends_with(",ok"));
}

#[test]
fn simulate_is_reproducible_across_runs_and_threads() {
    let t = tempfile::tempdir().unwrap();
    let sc = bundled("irrigation.json");
    let args = ["--pairs", "30:100", "--n-rollouts", "500", "--seed", "7"];
    ok(bin().arg("simulate").arg(&sc).args(args).arg("--out").arg(t.path().join("a")).env("MINSOFTMAX_THREADS", "1"));
    ok(bin().arg("simulate").arg(&sc).args(args).arg("--out").arg(t.path().join("b")).env("MINSOFTMAX_THREADS", "4"));
    for f in ["stats_gh30_ge100.csv", "simulate.csv"] {
        let a = fs::read(t.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(t.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn single_rollout_has_zero_width_bands() {
    let t = tempfile::tempdir().unwrap();
    ok(bin().arg("simulate").arg(bundled("irrigation.json")).args(["--pairs", "0:0", "--n-rollouts", "1", "--out"]).arg(t.path()));
    let stats = read(t.path().join("stats_gh0_ge0.csv"));
    for line in stats.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert!(cells[1..].iter().all(|c| *c == cells[1]), "{line}");
    }
}

#[test]
fn reference_protocol_writes_four_tables() {
    let t = tempfile::tempdir().unwrap();
    ok(bin().arg("simulate").arg(bundled("irrigation.json")).arg("--out").arg(t.path()));
    for l in ["gh0_ge0", "gh0_ge100", "gh30_ge100", "gh100_ge100"] {
        assert_eq!(read(t.path().join(format!("stats_{l}.csv"))).lines().count(), 10);
    }
}

#[test]
fn large_rollouts_spill_raw_trajectories() {
    let t = tempfile::tempdir().unwrap();
    ok(bin()
        .arg("simulate")
        .arg(bundled("irrigation.json"))
        .args(["--pairs", "0:0", "--n-rollouts", "20", "--spill-threshold", "10", "--out"])
        .arg(t.path()));
    let raw = read(t.path().join("raw_gh0_ge0.csv"));
    assert!(raw.starts_with("rollout,x_0,"));
    assert_eq!(raw.lines().count(), 21);
}

#[test]
fn verify_suites_pass() {
    for suite in ["limits", "simplex", "attenuation"] {
        let stdout = ok(bin().args(["verify", "--suite", suite]));
        assert!(stdout.lines().all(|l| l.starts_with("PASS") || l.starts_with("SKIP")), "{suite}: {stdout}");
    }
    let stdout = ok(bin().arg("verify").arg(bundled("lq_scalar.json")).args(["--suite", "quadrature"]));
    assert_eq!(stdout.lines().count(), 25);
}

#[test]
fn failing_suite_exits_three() {
    let out = run(bin().args(["verify", "--suite", "quadrature", "--nodes", "3"]));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    assert!(String::from_utf8_lossy(&out.stderr).contains(r#""error":"VerificationFailed""#));
}

#[test]
fn critical_brackets_two_for_one_stage() {
    let stdout = ok(bin().arg("critical").arg(bundled("lq_scalar.json")));
    let row: Vec<f64> = stdout.lines().nth(1).unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!(row[1] <= 2.0 && 2.0 <= row[0] && row[0] - row[1] < 1e-6, "{row:?}");
}

#[test]
fn exported_scenarios_match_bundled_files() {
    let t = tempfile::tempdir().unwrap();
    for (name, file) in [("irrigation", "irrigation.json"), ("fig3", "fig3.json"), ("fig4", "fig4.json"), ("lq-scalar", "lq_scalar.json")] {
        let p = t.path().join(file);
        ok(bin().arg("export").arg(name).arg(&p));
        assert_eq!(read(&p), read(bundled(file)), "{file}");
    }
    assert_eq!(read(t.path().join("fig3.transition.csv")), read(bundled("fig3.transition.csv")));
}
