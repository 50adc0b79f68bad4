use std::path::Path;
use std::process::{Command, Output};

fn tea(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tea"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn show_config_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let o = tea(&["show-config", "--seed-range", "3..=5", "--variants", "baseline,tea", "--out", "x"], dir.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seeds = \"3..6\""), "{text}");
    assert!(text.contains("\"aug_encoding\""), "{text}");
    assert!(text.contains("out_dir = \"x\""), "{text}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tea(&["show-config", "--seed-range", "4..4"], dir.path())), 2);
    std::fs::write(dir.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    assert_eq!(code(&tea(&["show-config", "-c", "bad.toml"], dir.path())), 2);
    std::fs::write(dir.path().join("bad.json"), "{\"bcq\": {\"tau\": 1.5}}").unwrap();
    assert_eq!(code(&tea(&["show-config", "-c", "bad.json"], dir.path())), 2);
    assert_eq!(code(&tea(&["show-config", "-c", "missing.toml"], dir.path())), 2);
}

#[test]
fn stage_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tea(&["train-ae", "--out", "empty"], dir.path())), 3);
    assert_eq!(code(&tea(&["report", "--out", "empty"], dir.path())), 3);
    assert_eq!(code(&tea(&["eval", "--variant", "baseline", "--seed", "0", "--out", "empty"], dir.path())), 3);
}

#[test]
fn report_rerenders_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(
        out.join("results.csv"),
        "env,variant,mean,sem,n_seeds\n\
         N1,baseline,40.0,1.0,10\nN1,aug_encoding,60.0,2.0,10\n\
         Average,baseline,40.0,1.0,10\nAverage,aug_encoding,60.0,2.0,10\n",
    )
    .unwrap();
    let o = tea(&["report", "--out", "run"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let md = std::fs::read_to_string(out.join("results.md")).unwrap();
    assert!(md.contains("**60.0 ± 2.0**"), "{md}");
    assert_eq!(String::from_utf8(o.stdout).unwrap(), md);
    assert!(std::fs::read_to_string(out.join("ratio.svg")).unwrap().starts_with("<svg"));
}
