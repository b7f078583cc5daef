use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn riskbound(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskbound"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn singleton_bound_is_the_additive_term() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskbound(&["bound", "--fixture", "singleton", "--out", "b"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("b/report.json")).unwrap()).unwrap();
    // 2t/((1 − qε)n) with t = 2, qε = 1/2, n = 200
    assert_eq!(report["pipeline"]["bound"]["delta_tn"].as_f64().unwrap(), 0.04);
}

#[test]
fn missing_weights_exit_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"distribution": {"states": ["a", "b"]}, "class": {"kind": "finite", "members": [[0, 1]]}}"#);
    let o = riskbound(&["bound", "--config", &cfg], dir.path());
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("distribution") && err.contains("weights"), "{err}");
}

#[test]
fn unknown_fixture_and_malformed_json_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"fixture": "nonexistent"}"#);
    assert_eq!(code(&riskbound(&["simulate", "--config", &cfg], dir.path())), 2);
    let bad = write(dir.path(), "bad.json", "{ not json");
    assert_eq!(code(&riskbound(&["bound", "--config", &bad], dir.path())), 2);
    assert_eq!(code(&riskbound(&["plotdata", "--report", &bad], dir.path())), 2);
    let peel = write(dir.path(), "p.json", r#"{"fixture": "two-point", "params": {"q": 2, "eps": 0.5}}"#);
    assert_eq!(code(&riskbound(&["bound", "--config", &peel], dir.path())), 2);
}

#[test]
fn vacuous_bound_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // with t = 0.5 the peeling tail log₂(2/δ)e^{−t} exceeds 1 at δ_{t,n}
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"fixture": "two-point", "params": {"t": 0.5}, "simulation": {"reps": 200, "trials": 50}}"#,
    );
    let o = riskbound(&["bound", "--config", &cfg, "--out", "b"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("vacuous"));
    let o = riskbound(&["simulate", "--config", &cfg, "--out", "s", "--suite", "lemma2"], dir.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn simulate_singleton_then_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskbound(&["simulate", "--fixture", "singleton", "--out", "s"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("s/trials.jsonl")).unwrap().lines().count(), 1);

    let o = riskbound(&["plotdata", "--report", "s/report.json", "--out", "plots"], dir.path());
    assert_eq!(code(&o), 0);
    let files: Vec<_> = fs::read_dir(dir.path().join("plots")).unwrap().collect();
    // four pipeline series plus two per suite
    assert_eq!(files.len(), 4 + 2 * 4);
    for line in fs::read_to_string(dir.path().join("plots/psi.dat")).unwrap().lines() {
        let cols: Vec<f64> = line.split_whitespace().map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 2);
    }
}

#[test]
fn plotdata_without_suites_has_only_pipeline_series() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskbound(&["bound", "--fixture", "two-point", "--out", "b"], dir.path());
    assert_eq!(code(&o), 0);
    riskbound(&["plotdata", "--report", "b/report.json", "--out", "plots"], dir.path());
    let mut names: Vec<String> = fs::read_dir(dir.path().join("plots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["conjugate.dat", "ez.dat", "margin_radius.dat", "psi.dat"]);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("b/report.json")).unwrap()).unwrap();
    let psi_len = report["pipeline"]["psi"]["grid"].as_array().unwrap().len();
    let ez_len = report["pipeline"]["ez"]["sigma"].as_array().unwrap().len();
    let count = |f: &str| fs::read_to_string(dir.path().join("plots").join(f)).unwrap().lines().count();
    assert_eq!(count("psi.dat"), psi_len);
    assert_eq!(count("ez.dat"), ez_len);
}

#[test]
fn select_tie_rules_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let single = write(
        dir.path(),
        "one.json",
        r#"{"fixture": "two-point", "models": {"members": [[0, 1]]}, "simulation": {"reps": 100}}"#,
    );
    let o = riskbound(&["select", "--config", &single], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["k_hat"], 0);

    let twins = write(
        dir.path(),
        "two.json",
        r#"{"fixture": "two-point", "models": {"members": [[0, 1], [0, 1]]}, "simulation": {"reps": 100}}"#,
    );
    let o = riskbound(&["select", "--config", &twins], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["k_hat"], 0);

    let a = riskbound(&["select", "--fixture", "nested", "--seed", "9", "--trial", "3"], dir.path());
    let b = riskbound(&["select", "--fixture", "nested", "--seed", "9", "--trial", "3"], dir.path());
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);

    let counts = write(dir.path(), "s.json", r#"{"primary": [40, 30, 30, 40, 30, 30], "split": [30, 40, 30, 30, 40, 30]}"#);
    let o = riskbound(&["select", "--fixture", "nested", "--samples", &counts], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["fits"].as_array().unwrap().len(), 3);

    let o = riskbound(&["select", "--fixture", "random20"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn fixture_documents_are_printed() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskbound(&["fixture", "quadratic"], dir.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["class"]["kind"], "convex_parametric");
    assert_eq!(code(&riskbound(&["fixture", "nope"], dir.path())), 2);
}
