use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdbench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_env(args: &[&str], key: &str, val: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdbench"))
        .args(args)
        .env(key, val)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn convert(dir: &Path, name: &str, csv: &str, role: &str) -> String {
    std::fs::write(dir.join(format!("{name}.csv")), csv).unwrap();
    let out = p(dir, &format!("{name}.fdbf"));
    let o = run(&["convert", "--input", &p(dir, &format!("{name}.csv")), "--output", &out, "--role", role]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn grid_csv(n: usize, shift: f64) -> String {
    (0..n)
        .map(|i| format!("{},{}\n", (i % 10) as f64 + shift, (i / 10) as f64 * 0.5 - shift))
        .collect()
}

#[test]
fn consistency_on_fixtures_reports_63_pairs() {
    let o = run(&[
        "consistency",
        "--ladder",
        &fixture("table1_stylegan3.csv"),
        "--ladder",
        &fixture("table1_medfusion.csv"),
        "--ladder",
        &fixture("table2_ddpm.csv"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("\"pairs_total\": 63"));
}

#[test]
fn fid_of_identical_files_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let f = convert(tmp.path(), "a", &grid_csv(60, 0.0), "real_test");
    let o = run(&["metric", "--real", &f, "--gen", &f, "--fid"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["metrics"]["fid"]["value"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn squared_flag_and_config_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let a = convert(tmp.path(), "a", &grid_csv(60, 0.0), "real_test");
    let b = convert(tmp.path(), "b", &grid_csv(60, 1.0), "generated");
    std::fs::write(
        tmp.path().join("cfg.json"),
        r#"{"metrics": ["fid", "kid", "cmmd"], "kid": {"kernel": "kid-rq", "n_blocks": 7, "block_size": 30}, "cmmd": {"sigma": 2.0}}"#,
    )
    .unwrap();
    let o = run(&["metric", "--real", &a, "--gen", &b, "--config", &p(tmp.path(), "cfg.json"), "--squared", "--kid-blocks", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let m = &v["metrics"];
    assert_eq!(m["fid"]["value"], m["fid"]["report"]["squared"]);
    assert_eq!(m["kid"]["params"]["kernel"], "kid-rq");
    assert_eq!(m["kid"]["params"]["n_blocks"], 5);
    assert_eq!(m["kid"]["params"]["block_size"], 30);
    assert_eq!(m["cmmd"]["estimate"]["kernel"]["sigma"], 2.0);
    assert_eq!(m["cmmd"]["estimate"]["bandwidth"]["rule"], "fixed");
    assert!(m.get("fld").is_none());
}

#[test]
fn fld_requires_train_set() {
    let tmp = tempfile::tempdir().unwrap();
    let a = convert(tmp.path(), "a", &grid_csv(60, 0.0), "real_test");
    let b = convert(tmp.path(), "b", &grid_csv(60, 1.0), "generated");
    let o = run(&["metric", "--real", &a, "--gen", &b, "--fld"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("protocol"), "{}", stderr(&o));
    let t = convert(tmp.path(), "t", &grid_csv(60, 0.1), "real_train");
    let o = run(&["metric", "--real", &a, "--gen", &b, "--train", &t, "--fld", "--fld-mode", "anchored_nll"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["metrics"]["fld"]["result"]["mode"], "anchored_nll");
}

#[test]
fn align_without_scores_is_protocol_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["align", "--ladder", &fixture("table2_ddpm.csv"), "--out-dir", &p(tmp.path(), "out")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("protocol error"), "{}", stderr(&o));
    assert!(stderr(&o).contains("DM-1"));
}

#[test]
fn align_writes_report_markdown_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let ladder = "model_id,ladder_id,control_value,fid,kid,downstream_score\n\
                  A-1,A,1,0,0.3,0.5\n\
                  A-2,A,2,20,0.2,0.6\n\
                  A-3,A,3,10,0.1,0.7\n\
                  B-1,B,1,5,0.5,0.9\n\
                  B-2,B,2,4,0.4,0.8\n\
                  B-3,B,3,3,0.3,0.7\n";
    std::fs::write(tmp.path().join("l.csv"), ladder).unwrap();
    let out = tmp.path().join("out");
    let o = run(&["align", "--ladder", &p(tmp.path(), "l.csv"), "--out-dir", &out.display().to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["A.align.json", "A.align.md", "A.plot.csv", "B.align.json", "B.align.md", "B.plot.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let plot = std::fs::read_to_string(out.join("A.plot.csv")).unwrap();
    assert!(plot.starts_with("model_id,control_value,inv_fid,inv_kid,downstream_score\n"));
    assert!(plot.contains("A-1,1,inf,"));
    let json = std::fs::read_to_string(out.join("A.align.json")).unwrap();
    assert!(json.contains("\"inf\""));
    let md = std::fs::read_to_string(out.join("B.align.md")).unwrap();
    assert!(md.contains("τ_Kendall") && md.contains("p_Kendall"));
}

#[test]
fn simulate_emits_ladder_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("spec.json"),
        r#"{"reference": {"mu": [0, 0], "scale": [[1, 0], [0, 1]], "generator": {"kind": "student_t", "dof": 6}},
            "steps": 3, "drift": {"mean_offset": 1.0, "cov_inflation": 1.0}, "n_per_step": 120, "seed": 4}"#,
    )
    .unwrap();
    let out = tmp.path().join("sim");
    let o = run(&["simulate", "--spec", &p(tmp.path(), "spec.json"), "--out-dir", &out.display().to_string(), "--ladder-id", "Q"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("ladder.csv")).unwrap();
    assert!(csv.starts_with("model_id,ladder_id,control_value,ground_truth_fd,fd,kid,cmmd\n"), "{csv}");
    assert_eq!(csv.lines().count(), 4);
    for f in ["reference.fdbf", "Q-1.fdbf", "Q-2.fdbf", "Q-3.fdbf", "simulate.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let c = run(&["consistency", "--ladder", &out.join("ladder.csv").display().to_string()]);
    assert!(c.status.success(), "{}", stderr(&c));
}

#[test]
fn diagnose_writes_json_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let f = convert(tmp.path(), "a", "0,0,0,0\n0.005,-0.02,0.3,0\n", "generated");
    let o = run(&["diagnose", "--input", &f, "--csv", &p(tmp.path(), "d.csv")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["relative_l0"][1], 0.5);
    let csv = std::fs::read_to_string(tmp.path().join("d.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["metric", "--nope"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));

    let tmp = tempfile::tempdir().unwrap();
    let f = convert(tmp.path(), "a", &grid_csv(20, 0.0), "real_test");
    let mut bytes = std::fs::read(&f).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(tmp.path().join("bad.fdbf"), &bytes).unwrap();
    let o = run(&["metric", "--real", &f, "--gen", &p(tmp.path(), "bad.fdbf"), "--fid"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    std::fs::write(tmp.path().join("ragged.csv"), "1,2\n3\n").unwrap();
    let o = run(&["convert", "--input", &p(tmp.path(), "ragged.csv"), "--output", &p(tmp.path(), "r.fdbf"), "--role", "generated"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("r.fdbf").exists());

    std::fs::write(tmp.path().join("nan.csv"), "1,NaN\n3,4\n").unwrap();
    let o = run(&["convert", "--input", &p(tmp.path(), "nan.csv"), "--output", &p(tmp.path(), "n.fdbf"), "--role", "generated"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!tmp.path().join("n.fdbf").exists());

    let o = run(&["convert", "--input", &p(tmp.path(), "nan.csv"), "--output", &p(tmp.path(), "n.fdbf"), "--role", "fake"]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["metric", "--real", &f, "--gen", &f]);
    assert_eq!(o.status.code(), Some(1));

    let o = run_env(&["metric", "--real", &f, "--gen", &f, "--fid"], "FDBENCH_NUM_THREADS", "0");
    assert_eq!(o.status.code(), Some(1));
    let o = run_env(&["metric", "--real", &f, "--gen", &f, "--fid"], "FDBENCH_NUM_THREADS", "2");
    assert!(o.status.success());
}
