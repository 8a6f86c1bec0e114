use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::Command;

use mrl_core::domain::compiler::{
    compile, inject_pragma, measure, CompilerConfig, CompilerDomain, KernelSpec, PragmaAction, ROSTER,
};
use mrl_core::{AgentDecision, Direction, Domain, Hypothesis, IterationFlag};

fn have_cc(cc: &str) -> bool {
    Command::new(cc).arg("--version").output().map(|o| o.status.success()).unwrap_or(false)
}

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
    p
}

/// Stands in for `perf stat -x,`: runs the command after `--` and reports
/// fixed counters on stderr.
const FAKE_PROFILER: &str = r#"#!/bin/sh
while [ "$#" -gt 0 ] && [ "$1" != "--" ]; do shift; done
shift
"$@"
status=$?
cat >&2 <<EOF
4000,,instructions:u,100.00,,
2000,,cycles:u,100.00,,
1000,,L1-dcache-loads:u,100.00,,
220,,L1-dcache-load-misses:u,100.00,,
500,,branches:u,100.00,,
5,,branch-misses:u,100.00,,
EOF
exit $status
"#;

fn decision(action: &str, marker: Option<&str>) -> AgentDecision {
    AgentDecision {
        hypothesis: Hypothesis {
            mechanism: "m".into(),
            target_metric: "l1d_miss_rate".into(),
            predicted_direction: Direction::Decrease,
        },
        action_id: action.into(),
        rationale: String::new(),
        raw_output: String::new(),
        loop_marker: marker.map(str::to_string),
    }
}

fn mini(kernel: &str, profiler: Option<String>) -> CompilerConfig {
    CompilerConfig {
        kernel: kernel.into(),
        dataset_size: "mini".into(),
        profiler,
        reps: 3,
        ..CompilerConfig::default()
    }
}

#[test]
fn every_pragma_preserves_checksums() {
    if !have_cc("clang") {
        eprintln!("skipping: clang not found");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    for name in KernelSpec::bundled_names() {
        let k = KernelSpec::bundled(name, "mini").unwrap();
        let (bin, _) = compile("clang", &k.build_flags, &k.source, dir.path(), name).unwrap();
        let base = measure(&bin, 1, None).unwrap().checksum;
        assert!(base.is_some(), "{name} prints no checksum");
        for id in ROSTER {
            for m in &k.loop_markers {
                let src = inject_pragma(&k.source, &PragmaAction::from_id(id, m).unwrap()).unwrap().source;
                let tag = format!("{name}_{id}_{m}").replace('.', "_");
                let (bin, _) = compile("clang", &k.build_flags, &src, dir.path(), &tag)
                    .unwrap_or_else(|e| panic!("{tag}: {e}"));
                assert_eq!(measure(&bin, 1, None).unwrap().checksum, base, "{tag}");
            }
        }
    }
}

#[test]
fn domain_with_fake_profiler_reports_counters() {
    if !have_cc("clang") {
        eprintln!("skipping: clang not found");
        return;
    }
    let tools = tempfile::tempdir().unwrap();
    let perf = script(tools.path(), "perf", FAKE_PROFILER);
    let mut d = CompilerDomain::new(&mini("gemm", Some(perf.display().to_string()))).unwrap();
    assert!(d.profiler_active());
    let base = d.reset(0).unwrap();
    assert_eq!(base.objective_value, 1.0);
    assert_eq!(base.metrics.len(), 4);
    assert!((base.median("l1d_miss_rate").unwrap() - 0.22).abs() < 1e-12);
    assert_eq!(base.median("ipc"), Some(2.0));
    assert_eq!(base.metrics["wall_time_s"].n_reps, 3);

    let out = d.intervene(&decision("vectorize_enable", Some("L1"))).unwrap();
    assert!(out.post.objective_value > 0.0);
    assert!(d.current_source().contains("#pragma clang loop vectorize(enable)"));
    // same kind again with a different width: replaced, warned
    let out = d.intervene(&decision("vectorize_width_4", Some("L1"))).unwrap();
    assert!(matches!(out.flags.as_slice(), [IterationFlag::Warning { .. }]));
    assert_eq!(d.current_source().matches("#pragma clang loop vectorize").count(), 1);
    // omitted marker defaults to the first one
    d.intervene(&decision("unroll_2", None)).unwrap();
    let src = d.current_source();
    let i = src.find("/* mrl:loop L0 */").unwrap();
    assert!(src[i..].lines().nth(1).unwrap().contains("unroll_count(2)"));
}

#[test]
fn missing_profiler_falls_back_to_wall_time() {
    if !have_cc("clang") {
        eprintln!("skipping: clang not found");
        return;
    }
    let mut d = CompilerDomain::new(&mini("atax", Some("/nonexistent/perf".into()))).unwrap();
    assert!(!d.profiler_active());
    let base = d.reset(0).unwrap();
    assert_eq!(base.metrics.keys().collect::<Vec<_>>(), vec!["wall_time_s"]);
    assert!(d.drain_log().iter().any(|l| l.contains("wall time only")));
}

#[test]
fn compile_errors_carry_diagnostics() {
    if !have_cc("clang") {
        eprintln!("skipping: clang not found");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.c");
    std::fs::write(&path, "int main(void) {\n  /* mrl:loop L0 */\n  for (;;) { undeclared_fn(); }\n}\n").unwrap();
    let cfg = CompilerConfig { source_path: Some(path), profiler: None, reps: 1, ..CompilerConfig::default() };
    let mut d = CompilerDomain::new(&cfg).unwrap();
    let err = d.reset(0).unwrap_err().to_string();
    assert!(err.contains("undeclared_fn"), "{err}");
}

#[test]
fn constant_time_stub_has_tiny_spread() {
    let dir = tempfile::tempdir().unwrap();
    let stub = script(dir.path(), "stub", "#!/bin/sh\nsleep 0.02\necho checksum=1\n");
    let m = measure(&stub, 20, None).unwrap();
    let s = m.wall_summary();
    assert_eq!(s.n_reps, 20);
    assert!(s.std / s.median < 0.25, "std {} median {}", s.std, s.median);
    assert!(s.median >= 0.02);
    assert_eq!(m.checksum.as_deref(), Some("1"));
}

#[test]
fn failing_binary_is_a_run_error() {
    let dir = tempfile::tempdir().unwrap();
    let stub = script(dir.path(), "stub", "#!/bin/sh\nexit 3\n");
    assert!(measure(&stub, 2, None).is_err());
}
