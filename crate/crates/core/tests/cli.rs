use std::fs;
use std::path::Path;
use std::process::Command;

use dosched_core::workload::{generate_instance, ScenarioConfig};

fn dosched(args: &[&str], root: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dosched"))
        .args(args)
        .env("DOSCHED_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

fn spec(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_artifacts_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), "a.spec", "algorithms=do,edd,offline\nseeds=1..2\nscenario.horizon=25\noutput=res\n");
    let (code, stdout, stderr) = dosched(&["run", &s], dir.path());
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("median P"));
    let agg = fs::read_to_string(dir.path().join("res/aggregate.csv")).unwrap();
    assert!(agg.starts_with("algorithm,seeds,median_P"));
    assert_eq!(agg.lines().count(), 4);
    let summary = fs::read_to_string(dir.path().join("res/summary_do_seed1.csv")).unwrap();
    assert!(summary.lines().next().unwrap().contains("D_over_P"));
}

#[test]
fn corrupted_beta_update_exits_with_violation_code() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), "bad.spec", "algorithms=do\nseeds=1\nscenario.horizon=40\ndebug.beta_scale=0.5\noutput=bad\n");
    let (code, _, stderr) = dosched(&["run", &s], dir.path());
    assert_eq!(code, 2);
    assert!(stderr.contains("lemma 2 violated at slot"));
}

#[test]
fn starved_solver_exits_with_convergence_code() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), "slow.spec", "algorithms=do\nseeds=1\nscenario.horizon=20\nsolver.max_newton=1\noutput=slow\n");
    let (code, _, stderr) = dosched(&["run", &s], dir.path());
    assert_eq!(code, 3, "{stderr}");
}

#[test]
fn sweep_emits_one_row_per_value_and_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), "sw.spec", "algorithms=do,greedy\nseeds=1\nscenario.horizon=20\noutput=sw\n");
    let (code, _, stderr) = dosched(&["sweep", &s, "--param", "D_max", "--values", "2,40"], dir.path());
    assert_eq!(code, 0, "{stderr}");
    let table = fs::read_to_string(dir.path().join("sw/sweep_D_max.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(dir.path().join("sw/plot_D_max_do.csv").exists());
}

#[test]
fn replay_and_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate_instance(&ScenarioConfig { horizon: 15, seed: 9, ..Default::default() }).unwrap();
    let path = dir.path().join("inst.txt");
    inst.save(&path).unwrap();
    let (code, stdout, _) = dosched(&["replay", path.to_str().unwrap(), "--algo", "do"], dir.path());
    assert_eq!(code, 0);
    assert!(stdout.lines().nth(1).unwrap().starts_with("do,"));
    let (code, _, _) = dosched(&["replay", path.to_str().unwrap(), "--algo", "fifo"], dir.path());
    assert_eq!(code, 1);
    let s = spec(dir.path(), "broken.spec", "scenario.p=2\n");
    let (code, _, stderr) = dosched(&["run", &s], dir.path());
    assert_eq!(code, 1);
    assert!(stderr.contains("arrival probability"));
}
