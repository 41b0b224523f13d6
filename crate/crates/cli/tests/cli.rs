use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pullin_cli::TraceRecord;
use pullin_core::basins::BasinGrid;
use pullin_core::continuation::ContinuationResult;
use pullin_core::integrator::OutcomeRecord;
use pullin_core::thresholds::ThresholdReport;
use pullin_core::PeriodicOrbit;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn pullin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pullin")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    pullin(args).status.code().unwrap()
}

fn recipe(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes").join(name).display().to_string()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

const SECTION_MODEL: &str = r#""model": {"c": 0.0, "alpha": 0.5, "lambda": 0.01, "delta": 30.0, "omega": 1.21}"#;

/// The artifact re-parses into a value that serializes back to the same JSON.
fn assert_round_trip<T: DeserializeOwned + Serialize + PartialEq + std::fmt::Debug>(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    let value: T = serde_json::from_str(&text).unwrap();
    let again: T = serde_json::from_str(&serde_json::to_string(&value).unwrap()).unwrap();
    assert_eq!(value, again);
    assert_eq!(serde_json::to_string_pretty(&value).unwrap() + "\n", text, "{}", path.display());
}

#[test]
fn thresholds_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = pullin(&["thresholds", "--config", &recipe("fig3.json"), "--out", out]);
    assert!(run.status.success());
    let table = String::from_utf8(run.stdout).unwrap();
    assert!(table.contains("V_m = 0"), "{table}");
    assert_round_trip::<ThresholdReport>(&dir.path().join("thresholds.json"));

    let run = pullin(&["thresholds", "--set", "model={\"c\":0,\"alpha\":1e-8,\"lambda\":0.1,\"delta\":0,\"omega\":1}", "--out", out]);
    assert!(run.status.success());
    let report: ThresholdReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("thresholds.json")).unwrap()).unwrap();
    assert!((report.a_alpha - 4.0 / 27.0).abs() < 1e-6);
}

#[test]
fn find_orbit_writes_orbit_and_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{{{SECTION_MODEL}, "orbit": {{"n": 3, "guess": [-0.354, 0.0]}}}}"#));
    let out = dir.path().join("out");
    let run = pullin(&["find-orbit", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "json", "--format", "csv"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_round_trip::<PeriodicOrbit>(&out.join("orbit.json"));
    let orbit: PeriodicOrbit = serde_json::from_str(&std::fs::read_to_string(out.join("orbit.json")).unwrap()).unwrap();
    assert_eq!(orbit.n, 3);
    assert!(orbit.stable);
    let cycle = std::fs::read_to_string(out.join("orbit_cycle.csv")).unwrap();
    assert_eq!(cycle.lines().count(), 4);
    assert!(cycle.starts_with("k,x,v\n"));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    // 2: malformed JSON, unknown key, missing or extra command blocks, bad values
    std::fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(code(&["thresholds", "--config", dir.path().join("broken.json").to_str().unwrap()]), 2);
    assert_eq!(code(&["thresholds", "--config", "/nonexistent/config.json"]), 2);
    let orbit = write_config(dir.path(), &format!(r#"{{{SECTION_MODEL}, "orbit": {{"n": 3, "guess": [0.99, 3.0]}}}}"#));
    assert_eq!(code(&["basins", "--config", &orbit, "--out", out]), 2);
    assert_eq!(code(&["find-orbit", "--config", &orbit, "--set", "grid.nx=3", "--out", out]), 2);
    assert_eq!(code(&["find-orbit", "--config", &orbit, "--set", "orbit.typo=1", "--out", out]), 2);
    assert_eq!(code(&["find-orbit", "--config", &orbit, "--set", "model.omega=-1", "--out", out]), 2);
    assert_eq!(code(&["find-orbit", "--config", &orbit, "--format", "ppm", "--out", out]), 2);
    assert_eq!(code(&["find-orbit", "--config", &orbit, "--workers", "0", "--out", out]), 2);
    assert_eq!(code(&["no-such-command"]), 2);

    // 3: Newton cannot converge from a guess that collapses
    assert_eq!(code(&["find-orbit", "--config", &orbit, "--out", out]), 3);

    // 4: the orbit still exists at the upper damping
    assert_eq!(
        code(&["cstar", "--config", &recipe("cstar_w1.21_n3.json"), "--set", "continuation.c_hi=0.005", "--out", out]),
        4
    );

    // 5: output directory cannot be created
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let nested = blocker.join("sub");
    assert_eq!(code(&["thresholds", "--config", &orbit, "--out", nested.to_str().unwrap()]), 5);

    assert_eq!(code(&["thresholds", "--config", &orbit, "--out", out]), 0);
}

fn read_all(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names.iter().map(|n| std::fs::read(dir.join(n)).unwrap()).collect()
}

fn basins_run(dir: &Path, workers: &str) -> PathBuf {
    let out = dir.join(format!("w{workers}"));
    let run = pullin(&[
        "basins",
        "--config",
        &recipe("fig7.json"),
        "--set",
        "grid.nx=8",
        "--set",
        "grid.nv=6",
        "--set",
        "grid.iterations=300",
        "--set",
        "grid.match_tol=0.01",
        "--set",
        "model.c=0.005",
        "--workers",
        workers,
        "--format",
        "csv",
        "--format",
        "json",
        "--format",
        "pgm",
        "--format",
        "ppm",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    out
}

#[test]
fn basins_artifacts_are_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let names = ["basins.csv", "basins.json", "basins.pgm", "basins.ppm"];
    let a = read_all(&basins_run(dir.path(), "1"), &names);
    let b = read_all(&basins_run(dir.path(), "3"), &names);
    assert_eq!(a, b);
    assert_round_trip::<BasinGrid>(&dir.path().join("w1/basins.json"));
    let grid: BasinGrid = serde_json::from_slice(&a[1]).unwrap();
    assert_eq!(grid.cells.len(), 48);
    assert_eq!(grid.spec.attractors.as_ref().map(Vec::len), Some(2));
    let ppm = String::from_utf8(a[3].clone()).unwrap();
    assert!(ppm.starts_with("P3\n8 6\n255\n"));
}

#[test]
fn pss_outputs_are_reproducible_and_parse() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let out = dir.path().join(tag);
        let r = pullin(&[
            "pss",
            "--config",
            &recipe("fig4.json"),
            "--set",
            "scan.iterations=40",
            "--set",
            "scan.line.count=8",
            "--format",
            "csv",
            "--format",
            "json",
            "--format",
            "pgm",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(r.status.success());
        out
    };
    let names = ["pss.csv", "pss.json", "pss.pgm"];
    let (a, b) = (run("a"), run("b"));
    assert_eq!(read_all(&a, &names), read_all(&b, &names));
    assert_round_trip::<Vec<TraceRecord>>(&a.join("pss.json"));
    let csv = std::fs::read_to_string(a.join("pss.csv")).unwrap();
    assert!(csv.starts_with("seed_id,k,x,v\n"));
    assert!(std::fs::read_to_string(a.join("pss.pgm")).unwrap().starts_with("P2\n420 360\n255\n"));
}

#[test]
fn unforced_section_points_lie_on_ellipses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"c": 0.0, "alpha": 0.0, "lambda": 0.0, "delta": 0.0, "omega": 1.7, "stiffness": "linear"},
            "scan": {"iterations": 30, "points": [[0.1, 0.0], [0.0, 0.2]]}}"#,
    );
    let out = dir.path().join("out");
    assert!(pullin(&["pss", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let csv = std::fs::read_to_string(out.join("pss.csv")).unwrap();
    for l in csv.lines().skip(1) {
        let f: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        let r = f[2].hypot(f[3]);
        let r0 = if f[0] == 0.0 { 0.1 } else { 0.2 };
        assert!((r - r0).abs() < 1e-8, "{l}");
    }
}

#[test]
fn cstar_and_simulate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cstar");
    let run = pullin(&["cstar", "--config", &recipe("cstar_w1.21_n3.json"), "--out", out.to_str().unwrap()]);
    assert!(run.status.success());
    assert_round_trip::<ContinuationResult>(&out.join("cstar.json"));
    let table = String::from_utf8(run.stdout).unwrap();
    assert!(table.contains("c* = "));

    let sim = dir.path().join("sim");
    let run = pullin(&[
        "simulate",
        "--set",
        "model={\"c\":0,\"alpha\":0.5,\"lambda\":2,\"delta\":0,\"omega\":1}",
        "--set",
        "simulate.initial=[0,0]",
        "--set",
        "simulate.t_end=3",
        "--set",
        "simulate.samples=31",
        "--out",
        sim.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    assert_round_trip::<OutcomeRecord>(&sim.join("outcome.json"));
    let rec: OutcomeRecord = serde_json::from_str(&std::fs::read_to_string(sim.join("outcome.json")).unwrap()).unwrap();
    assert_eq!(rec.kind, "pull_in");
    assert!(rec.t_event.unwrap() <= 0.8f64.sqrt());
    let traj = std::fs::read_to_string(sim.join("trajectory.csv")).unwrap();
    // samples stop at the collapse
    assert!(traj.lines().count() > 2 && traj.lines().count() < 32);
}
