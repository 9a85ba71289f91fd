use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qpower(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpower"))
        .args(args)
        .env("QPOWER_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn out_arg(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn same_seed_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = qpower(&[
            "tomography",
            "--d",
            "6",
            "--trials",
            "30",
            "--seed",
            "11",
            "--out",
            &out_arg(dir),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trials_d6.csv", "extras_d6.csv", "summary.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_trials_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qpower(&["npm", "--trials", "0", "--out", &out_arg(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("trials"));
}

#[test]
fn unknown_verb_and_bad_override_exit_2() {
    assert_eq!(code(&qpower(&["frobnicate"])), 2);
    let tmp = tempfile::tempdir().unwrap();
    let o = qpower(&["tomography", "--override", "eps=loud", "--out", &out_arg(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("eps"));
}

#[test]
fn config_file_with_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"experiment":"pmf-dump","variant":"full","s":2.0}"#).unwrap();
    let out = tmp.path().join("out");
    let o = qpower(&[
        "pmf-dump",
        "--config",
        &out_arg(&cfg),
        "--override",
        "c=0.25",
        "--out",
        &out_arg(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("pmf.csv")).unwrap();
    assert!(csv.starts_with("# schema=1\nk,probability\n"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["c"], 0.25);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    // a config for another verb is rejected
    assert_eq!(code(&qpower(&["npm", "--config", &out_arg(&cfg)])), 2);
}

#[test]
fn failed_criterion_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qpower(&[
        "npm",
        "--d",
        "60",
        "--trials",
        "20",
        "--noise",
        "adversarial",
        "--out",
        &out_arg(tmp.path()),
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
}
