use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").canonicalize().unwrap()
}

fn cpsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpsim")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Copy of a shipped scenario with its grid case made absolute and one line
/// replaced.
fn edited(dir: &Path, name: &str, from: &str, to: &str) -> PathBuf {
    let text = std::fs::read_to_string(scenarios().join(format!("{name}.toml"))).unwrap();
    assert!(text.contains(from));
    let case = scenarios().join("ieee39.toml");
    let text = text
        .replace(from, to)
        .replace("case_path = \"ieee39.toml\"", &format!("case_path = {:?}", case.to_str().unwrap()));
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_both_artifact_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c2");
    let o = cpsim(&["run", "--config", s(&scenarios().join("c2.toml")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["scenario.toml", "quantization.csv", "agreement.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    for m in ["self_consistent", "cosim"] {
        for f in ["report.json", "timings.json", "trajectory.csv", "frequency.csv", "arrivals.csv", "spdc_arrivals.csv"]
        {
            assert!(out.join(m).join(f).is_file(), "{m}/{f}");
        }
    }
    assert!(out.join("self_consistent/delay_model_0.csv").is_file());
    assert!(out.join("self_consistent/delay_model_1.csv").is_file());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("self_consistent: 1 iteration(s)"), "{stdout}");
    assert!(stdout.contains("agreement: 63 command(s)"), "{stdout}");

    let same = cpsim(&["compare", s(&out.join("cosim")), s(&out.join("cosim/report.json"))]);
    assert_eq!(same.status.code(), Some(0));
    let methods = cpsim(&["compare", s(&out.join("self_consistent")), s(&out.join("cosim"))]);
    assert_eq!(methods.status.code(), Some(0), "{}", String::from_utf8_lossy(&methods.stdout));
    let csv = tmp.path().join("lag.csv");
    let lag =
        cpsim(&["compare", s(&out.join("cosim")), s(&out.join("cosim")), "--b-times", "perceived", "--out", s(&csv)]);
    assert_eq!(lag.status.code(), Some(1));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 64);
}

#[test]
fn compare_rejects_reports_of_different_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, name) in [(&a, "c1"), (&b, "c2")] {
        let o = cpsim(&[
            "run",
            "--config",
            s(&scenarios().join(format!("{name}.toml"))),
            "--method",
            "cosim",
            "--out",
            s(dir),
        ]);
        assert!(o.status.success());
    }
    let o = cpsim(&["compare", s(&a.join("cosim")), s(&b.join("cosim"))]);
    assert_eq!(o.status.code(), Some(2));
    let missing = cpsim(&["compare", s(&tmp.path().join("nowhere")), s(&b.join("cosim"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn bad_thresholds_exit_with_the_field_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = edited(tmp.path(), "c1", "[49.96, 49.92, 49.88]", "[49.88, 49.92, 49.96]");
    let o = cpsim(&["run", "--config", s(&cfg), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("control.thresholds_hz"), "{stderr}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn too_few_iterations_exit_as_not_converged() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = edited(tmp.path(), "c1", "max_iter = 10", "max_iter = 1");
    let o = cpsim(&["run", "--config", s(&cfg), "--method", "self_consistent", "--out", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bench_writes_one_row_per_method_and_precision() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bench.csv");
    let o = cpsim(&["bench", "--config", s(&scenarios().join("c2.toml")), "--reps", "1", "--out", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "method,precision_ms,wall_clock_s,count,reps,low_confidence");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("self_consistent,10,") && rows[1].ends_with(",1,true"));
    assert!(rows[4].starts_with("cosim,1,"));

    let monitoring = cpsim(&["bench", "--config", s(&scenarios().join("m1.toml")), "--reps", "1", "--out", s(&csv)]);
    assert_eq!(monitoring.status.code(), Some(2));
}
