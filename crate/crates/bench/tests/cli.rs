use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench")).args(args).output().unwrap()
}

fn desk() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/desk.toml")
}

fn run_desk(out: &Path, extra: &[&str]) -> Output {
    let scenario = desk();
    let mut args = vec!["run", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bench(&args)
}

#[test]
fn identical_runs_write_identical_query_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["--mode", "decoupled", "--cycles", "1", "--plpp", "on", "--seed", "3"];
    for out in [&a, &b] {
        let o = run_desk(out, &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let qa = fs::read(a.join("queries.csv")).unwrap();
    assert_eq!(qa, fs::read(b.join("queries.csv")).unwrap());
    assert_eq!(String::from_utf8(qa).unwrap().lines().count(), 9);
    for name in ["timings.csv", "summary.csv", "summary.txt"] {
        assert!(a.join(name).is_file(), "{name} missing");
    }
    assert_eq!(fs::read_dir(a.join("results")).unwrap().count(), 8);
}

#[test]
fn export_writes_artifacts_for_a_decoupled_result() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = run_desk(&run, &["--mode", "decoupled", "--plpp", "on", "--seed", "1"]);
    assert!(o.status.success());
    let result = fs::read_dir(run.join("results")).unwrap().map(|e| e.unwrap().path()).min().unwrap();
    let out = dir.path().join("export");
    let o = bench(&["export", "--result", result.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("ee_traces.csv").is_file());
    let queries = fs::read_to_string(run.join("queries.csv")).unwrap();
    if queries.lines().nth(1).unwrap().contains(",success,") {
        for name in ["diagram.pgm", "diagram.csv", "coordination_path.csv", "joint_profiles.csv"] {
            assert!(out.join(name).is_file(), "{name} missing");
        }
    }
}

#[test]
fn configuration_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.toml");
    let o = bench(&[
        "run",
        "--scenario",
        missing.to_str().unwrap(),
        "--mode",
        "centralized",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());

    let broken = dir.path().join("broken.toml");
    let text = fs::read_to_string(desk()).unwrap().replace("[params]", "[params]\nno_such_key = 1");
    fs::write(&broken, text).unwrap();
    let o =
        bench(&["run", "--scenario", broken.to_str().unwrap(), "--mode", "decoupled", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    assert!(!run_desk(&out, &["--mode", "decoupled", "--cycles", "0"]).status.success());
    assert!(!run_desk(&out, &["--mode", "decoupled", "--retries", "0"]).status.success());
    assert!(!run_desk(&out, &["--mode", "sideways"]).status.success());
    assert!(!bench(&["gradcheck", "--trials", "9"]).status.success());
    let o = bench(&["export", "--result", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
}
