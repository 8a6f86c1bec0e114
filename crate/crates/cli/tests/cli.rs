use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mrl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrl")).args(args).current_dir(cwd).output().expect("spawn mrl")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

#[test]
fn run_is_deterministic_and_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = mrl(&["run", "--trials", "2", "--seed", "9", "--out", out], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trial_synth_000.jsonl", "trial_synth_001.jsonl", "summary.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mrl(&["run", "--config", "missing.toml"], dir.path())), 1);
    assert_eq!(code(&mrl(&["run", "--domain", "chemistry"], dir.path())), 1);
    assert_eq!(code(&mrl(&["run", "--agent", "replay"], dir.path())), 1);
    assert_eq!(code(&mrl(&["synth-sweep", "--rhos", "0.1"], dir.path())), 1);
    assert_eq!(code(&mrl(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&mrl(&["--help"], dir.path())), 0);
}

#[test]
fn report_with_no_inputs_is_an_analysis_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mrl(&["report", "nothing/*.jsonl"], dir.path())), 4);
}

#[test]
fn unreachable_llm_exits_3_after_writing_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
        agent = "llm"
        out = "out"
        [llm]
        endpoint = "http://127.0.0.1:9/v1/chat/completions"
        model = "m"
        api_key_env = "MRL_TEST_NO_SUCH_KEY"
        timeout_s = 2.0
    "#;
    std::fs::write(dir.path().join("llm.toml"), config).unwrap();
    let o = mrl(&["run", "--config", "llm.toml"], dir.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let record = std::fs::read_to_string(dir.path().join("out/trial_synth_000.jsonl")).unwrap();
    assert!(record.contains("agent failure"));
    assert!(dir.path().join("out/llm_transcript.jsonl").exists());
}

#[test]
fn report_over_shipped_fixtures_matches_the_checked_in_summary() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = format!("{}/*.jsonl", fixtures().display());
    let o = mrl(&["report", &pattern, "--out", "rep"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.md", "summary.csv"] {
        let got = std::fs::read_to_string(dir.path().join("rep").join(f)).unwrap();
        let want = std::fs::read_to_string(fixtures().join(f)).unwrap();
        assert_eq!(got, want, "{f}");
    }
    assert_eq!(String::from_utf8_lossy(&o.stdout), std::fs::read_to_string(fixtures().join("summary.md")).unwrap());
}

#[test]
fn compiler_replay_reproduces_the_recorded_trial() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = fixtures().join("jacobi_type_a.jsonl");
    let o = mrl(
        &["run", "--domain", "compiler", "--agent", "replay", "--fixture", fixture.to_str().unwrap(), "--out", "r"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let replayed = std::fs::read(dir.path().join("r/trial_compiler_000.jsonl")).unwrap();
    assert_eq!(replayed, std::fs::read(&fixture).unwrap());
    // a fixture from another domain is refused
    let o = mrl(&["run", "--domain", "train", "--agent", "replay", "--fixture", fixture.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn ablate_and_sweep_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = mrl(&["ablate", "--trials", "3", "--windows", "3,5", "--out", "ab"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ab/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));

    let o = mrl(&["synth-sweep", "--trials", "5", "--rhos", "0.25,1", "--agents", "random", "--out", "sw"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sw/synth_sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    // uniform channel carries no information; a noiseless one leaves no gap
    assert!(rows[1].starts_with("0.250000,1.000000,random,5,"), "{}", rows[1]);
    assert!(rows[2].starts_with("1.000000,0.000000,random,5,"), "{}", rows[2]);
}
