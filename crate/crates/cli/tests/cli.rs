use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn tpflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpflow"))
        .args(args)
        .current_dir(dir)
        .env("TPFLOW_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    std::fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

fn report(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const PERTURBED: &str = r#"{"kind": "perturbed_circle", "modes": [2, 5], "amplitude": 0.03, "seed": 1}"#;

#[test]
fn circle_run_converges_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "circle.json",
        r#"{"s": 1.75, "n_nodes": 256, "initial": {"kind": "circle"}, "outputs": {"directory": "out"}}"#,
    );
    let out = tpflow(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(dir.path().join("out/report.json"));
    assert!(r["final"]["grad_norm_hs"].as_f64().unwrap() <= 1e-6);
    assert_eq!(r["termination"]["reason"], "converged");
    assert_eq!(r["parameters"]["p"].as_f64().unwrap(), 4.5);
}

#[test]
fn out_of_range_order_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"s": 1.4, "n_nodes": 64, "initial": {"kind": "circle"}, "outputs": {"directory": "out"}}"#,
    );
    let out = tpflow(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("(3/2, 2)"), "{}", stderr(&out));
    assert_eq!(stderr(&out).lines().count(), 1);
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"s": 1.75, "n_nodes": 100, "initial": {"kind": "circle"}, "outputs": {"directory": "o"}}"#,
        r#"{"s": 1.75, "n_nodes": 2048, "initial": {"kind": "circle"}, "outputs": {"directory": "o"}}"#,
        r#"{"s": 1.75, "n_nodes": 64, "initial": {"kind": "file", "path": "missing.csv"}, "outputs": {"directory": "o"}}"#,
        r#"{"s": 1.75, "n_nodes": 64, "initial": {"kind": "torus_knot", "p": 2, "q": 3, "aspect": 0.4}, "outputs": {"directory": "o"}}"#,
        r#"{"s": 1.75, "n_nodes": 64, "initial": {"kind": "circle"}, "outputs": {"directory": "o"}, "flow": {"dt_min": 1.0}}"#,
        r#"{"s": 1.75, "n_nodes": 64, "initial": {"kind": "circle"}, "outputs": {"directory": "o"}, "typo": 1}"#,
        r#"{"s": 1.75, "n_nodes": 64"#,
    ];
    for (k, body) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("c{k}.json"), body);
        let out = tpflow(&["run", &cfg], dir.path());
        assert_eq!(out.status.code(), Some(2), "case {k}: {}", stderr(&out));
    }
    let out = tpflow(&["run", "does-not-exist.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn perturbed_circle_run_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let body = format!(
            r#"{{"s": 1.75, "n_nodes": 64, "initial": {PERTURBED}, "outputs": {{"directory": "{name}", "snapshot_stride": 50}}}}"#
        );
        let cfg = write(dir.path(), &format!("{name}.json"), &body);
        let out = tpflow(&["run", &cfg], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let a = dir.path().join("a");
    let r = report(a.join("report.json"));
    let distortion = r["final"]["distortion"].as_f64().unwrap();
    assert!((distortion - std::f64::consts::FRAC_PI_2).abs() < 1e-3, "{distortion}");
    let theta = r["fit"]["theta"].as_f64().unwrap();
    assert!((0.4..=1.0).contains(&theta), "{theta}");
    for f in ["trace.csv", "final.csv", "final.svg", "snapshots/step_000000.csv", "snapshots/step_000050.svg"] {
        assert!(a.join(f).is_file(), "{f} missing");
    }
    let header = std::fs::read_to_string(a.join("trace.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "t,energy,grad_norm_hs,distortion,min_separation,step_dt,length_residual"
    );
    let bytes_a = std::fs::read(a.join("report.json")).unwrap();
    let bytes_b = std::fs::read(dir.path().join("b/report.json")).unwrap();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn overrides_and_step_limit() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"s": 1.75, "n_nodes": 32, "initial": {PERTURBED}, "flow": {{"max_steps": 5}}, "outputs": {{"directory": "out"}}}}"#
    );
    let cfg = write(dir.path(), "short.json", &body);
    let out = tpflow(&["run", &cfg, "--no-render", "--snapshot-stride", "2"], dir.path());
    assert_eq!(out.status.code(), Some(6), "{}", stderr(&out));
    let out_dir = dir.path().join("out");
    assert!(out_dir.join("snapshots/step_000004.csv").is_file());
    assert!(!out_dir.join("snapshots/step_000004.svg").exists());
    assert!(!out_dir.join("final.svg").exists());
    let r = report(out_dir.join("report.json"));
    assert_eq!(r["termination"]["reason"], "max_steps");
    assert_eq!(r["steps"], 5);
}

#[test]
fn curve_file_as_initial_condition() {
    let dir = tempfile::tempdir().unwrap();
    let curve = tangent_point::DiscreteCurve::ellipse(64, 2, 1.0, 0.8).unwrap();
    curve.save_csv(dir.path().join("ellipse.csv")).unwrap();
    let cfg = write(
        dir.path(),
        "file.json",
        r#"{"s": 1.75, "n_nodes": 64, "initial": {"kind": "file", "path": "ellipse.csv"}, "flow": {"max_steps": 3}, "outputs": {"directory": "out", "render": false}}"#,
    );
    let out = tpflow(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(6), "{}", stderr(&out));
    let cfg = write(
        dir.path(),
        "mismatch.json",
        r#"{"s": 1.75, "n_nodes": 128, "initial": {"kind": "file", "path": "ellipse.csv"}, "outputs": {"directory": "out2"}}"#,
    );
    assert_eq!(tpflow(&["run", &cfg], dir.path()).status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tpflow"))
        .args(["run", "x.json"])
        .current_dir(dir.path())
        .env("TPFLOW_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_by_default_and_catches_corrupted_quadrature() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(
        dir.path(),
        "good.json",
        r#"{"s": 1.75, "n_nodes": 64, "initial": {"kind": "circle"}, "outputs": {"directory": "o"}}"#,
    );
    let out = tpflow(&["verify", &good], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = String::from_utf8_lossy(&out.stdout);
    for name in ["circle_energy_oracle", "gradient_fd_rel_error", "homogeneity", "factorization", "phi_bound_ratio", "hessian_symmetry"] {
        assert!(table.contains(name), "{name} missing from\n{table}");
    }
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"s": 1.75, "n_nodes": 64, "initial": {"kind": "circle"}, "outputs": {"directory": "o"}, "verify": {"corrupt_quadrature": 0.1}}"#,
    );
    let out = tpflow(&["verify", &bad], dir.path());
    assert_ne!(out.status.code(), Some(0));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().any(|l| l.starts_with("circle_energy_oracle") && l.ends_with("FAIL")) || table.lines().any(|l| l.starts_with("phi_bound_ratio") && l.ends_with("FAIL")));
}

#[test]
fn verify_smoke_profile_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "smoke.json",
        r#"{"s": 1.75, "n_nodes": 32, "initial": {"kind": "circle"}, "outputs": {"directory": "o"}}"#,
    );
    let start = Instant::now();
    let out = tpflow(&["verify", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn sweep_runs_each_config_in_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    std::fs::create_dir(&configs).unwrap();
    for (name, s) in [("a", 1.7), ("b", 1.8)] {
        write(
            &configs,
            &format!("{name}.json"),
            &format!(r#"{{"s": {s}, "n_nodes": 32, "initial": {{"kind": "circle"}}, "outputs": {{"directory": "out_{name}"}}}}"#),
        );
    }
    let out = tpflow(&["sweep", "configs"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(configs.join("out_a/report.json").is_file());
    assert!(configs.join("out_b/report.json").is_file());

    write(
        &configs,
        "c.json",
        r#"{"s": 1.3, "n_nodes": 32, "initial": {"kind": "circle"}, "outputs": {"directory": "out_c"}}"#,
    );
    let out = tpflow(&["sweep", "configs"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);

    write(
        &configs,
        "c.json",
        r#"{"s": 1.75, "n_nodes": 32, "initial": {"kind": "circle"}, "outputs": {"directory": "out_a"}}"#,
    );
    let out = tpflow(&["sweep", "configs"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("reuses output directory"));
}
