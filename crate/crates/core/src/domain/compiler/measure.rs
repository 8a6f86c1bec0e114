use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use super::CompilerError;
use crate::protocol::{median, MetricSnapshot, MetricSummary};

pub const PERF_EVENTS: &str = "instructions,cycles,L1-dcache-loads,L1-dcache-load-misses,branches,branch-misses";

/// Writes `source` to `dir/<name>.c` and builds `dir/<name>`. Compiler
/// stderr is returned so callers can keep warnings in the trial log.
pub fn compile(cc: &str, flags: &[String], source: &str, dir: &Path, name: &str) -> Result<(PathBuf, String), CompilerError> {
    let src = dir.join(format!("{name}.c"));
    let out = dir.join(name);
    std::fs::write(&src, source).map_err(|e| CompilerError::Io(format!("{}: {e}", src.display())))?;
    let result = Command::new(cc)
        .args(flags)
        .arg("-o")
        .arg(&out)
        .arg(&src)
        .output()
        .map_err(|e| CompilerError::Compile(format!("could not run {cc:?}: {e}")))?;
    let stderr = String::from_utf8_lossy(&result.stderr).into_owned();
    if !result.status.success() {
        return Err(CompilerError::Compile(stderr));
    }
    Ok((out, stderr))
}

/// Event name with modifiers and PMU prefixes removed, so that
/// `cpu_core/instructions/u` and `instructions:u` both read `instructions`.
fn normalize_event(raw: &str) -> String {
    let mut e = raw.trim();
    if let Some(inner) = e.split('/').nth(1).filter(|s| !s.is_empty()) {
        e = inner;
    }
    e.split(':').next().unwrap_or(e).to_string()
}

/// Parses `perf stat -x,` output into event totals. Lines whose value is not
/// a number (`<not counted>`, `<not supported>`) are dropped; repeated
/// events (hybrid PMUs) are summed.
pub fn parse_perf_csv(text: &str) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 || line.starts_with('#') {
            continue;
        }
        let Ok(value) = fields[0].trim().parse::<f64>() else {
            continue;
        };
        *out.entry(normalize_event(fields[2])).or_insert(0.0) += value;
    }
    out
}

fn ratio(events: &BTreeMap<String, f64>, num: &str, den: &str) -> Option<f64> {
    let (n, d) = (events.get(num)?, events.get(den)?);
    (*d > 0.0).then(|| n / d)
}

/// Derived counter metrics available from one profiled run.
pub fn counter_metrics(events: &BTreeMap<String, f64>) -> BTreeMap<&'static str, f64> {
    let mut m = BTreeMap::new();
    if let Some(v) = ratio(events, "instructions", "cycles") {
        m.insert("ipc", v);
    }
    if let Some(v) = ratio(events, "L1-dcache-load-misses", "L1-dcache-loads") {
        m.insert("l1d_miss_rate", v.clamp(0.0, 1.0));
    }
    if let Some(v) = ratio(events, "branch-misses", "branches") {
        m.insert("branch_miss_rate", v.clamp(0.0, 1.0));
    }
    m
}

fn checksum_of(stdout: &str) -> Option<String> {
    stdout.lines().rev().find_map(|l| l.trim().strip_prefix("checksum=")).map(|s| s.trim().to_string())
}

/// Runs `binary` once, returning wall seconds and its checksum line.
pub fn run_once(binary: &Path) -> Result<(f64, Option<String>), CompilerError> {
    let start = Instant::now();
    let out = Command::new(binary).output().map_err(|e| CompilerError::Run(format!("{}: {e}", binary.display())))?;
    let secs = start.elapsed().as_secs_f64();
    if !out.status.success() {
        return Err(CompilerError::Run(format!(
            "{} exited with {}: {}",
            binary.display(),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok((secs, checksum_of(&String::from_utf8_lossy(&out.stdout))))
}

/// Runs `binary` under `<profiler> stat -x, -e <events> --`.
pub fn run_profiled(profiler: &str, binary: &Path) -> Result<BTreeMap<String, f64>, CompilerError> {
    let out = Command::new(profiler)
        .args(["stat", "-x,", "-e", PERF_EVENTS, "--"])
        .arg(binary)
        .output()
        .map_err(|e| CompilerError::ProfilerUnavailable(format!("could not run {profiler:?}: {e}")))?;
    let stderr = String::from_utf8_lossy(&out.stderr);
    if !out.status.success() {
        return Err(CompilerError::Run(format!("{profiler} stat exited with {}: {}", out.status, stderr.trim())));
    }
    Ok(parse_perf_csv(&stderr))
}

/// Checks that the profiler runs and reports at least one counter.
pub fn probe_profiler(profiler: &str) -> Result<(), CompilerError> {
    let out = Command::new(profiler)
        .args(["stat", "-x,", "-e", PERF_EVENTS, "--", "true"])
        .output()
        .map_err(|e| CompilerError::ProfilerUnavailable(format!("could not run {profiler:?}: {e}")))?;
    let events = parse_perf_csv(&String::from_utf8_lossy(&out.stderr));
    if !out.status.success() || counter_metrics(&events).is_empty() {
        return Err(CompilerError::ProfilerUnavailable(format!(
            "{profiler} stat gave no usable counters: {}",
            String::from_utf8_lossy(&out.stderr).lines().next().unwrap_or("").trim()
        )));
    }
    Ok(())
}

/// Repeated timing (and, when a profiler is given, counter) samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub wall_times: Vec<f64>,
    pub counters: BTreeMap<&'static str, Vec<f64>>,
    pub checksum: Option<String>,
}

impl Measurement {
    pub fn median_time(&self) -> f64 {
        median(&self.wall_times)
    }

    pub fn wall_summary(&self) -> MetricSummary {
        MetricSummary::from_samples(&self.wall_times).expect("at least one repetition")
    }

    /// Snapshot with `objective_value = baseline_median / median`.
    pub fn snapshot(&self, baseline_median: f64, captured_at: u64) -> MetricSnapshot {
        let mut snap = MetricSnapshot::new(baseline_median / self.median_time(), captured_at)
            .with_metric("wall_time_s", self.wall_summary());
        for (name, samples) in &self.counters {
            if let Some(s) = MetricSummary::from_samples(samples) {
                snap = snap.with_metric(*name, s);
            }
        }
        snap
    }
}

/// One untimed warm-up run, then `reps` timed runs, then `reps` profiled
/// runs when a profiler is configured. Timing and counting are separate so
/// profiler start-up never inflates wall time.
pub fn measure(binary: &Path, reps: u32, profiler: Option<&str>) -> Result<Measurement, CompilerError> {
    if reps == 0 {
        return Err(CompilerError::InvalidKernel("reps must be >= 1".into()));
    }
    let (_, checksum) = run_once(binary)?;
    let mut wall_times = Vec::with_capacity(reps as usize);
    for _ in 0..reps {
        let (t, c) = run_once(binary)?;
        if c != checksum {
            return Err(CompilerError::Run(format!("checksum changed between repetitions: {checksum:?} vs {c:?}")));
        }
        wall_times.push(t);
    }
    let mut counters: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    if let Some(p) = profiler {
        for _ in 0..reps {
            for (name, v) in counter_metrics(&run_profiled(p, binary)?) {
                counters.entry(name).or_default().push(v);
            }
        }
    }
    Ok(Measurement { wall_times, counters, checksum })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1d_ratio_from_csv() {
        let csv = "1000,,L1-dcache-loads,100.00,,\n220,,L1-dcache-load-misses,100.00,,\n";
        let m = counter_metrics(&parse_perf_csv(csv));
        assert!((m["l1d_miss_rate"] - 0.22).abs() < 1e-15);
        assert!(!m.contains_key("ipc"));
    }

    #[test]
    fn csv_tolerates_modifiers_and_unsupported() {
        let csv = "# started on x\n\n5000,,cpu_core/instructions/u,1,100.00,,\n500,,cpu_atom/instructions/u,1,100.00,,\n\
                   2750,,cycles:u,1,100.00,,\n<not supported>,,branches,0,100.00,,\n7,,branch-misses,1,100.00,,\n";
        let e = parse_perf_csv(csv);
        assert_eq!(e["instructions"], 5500.0);
        assert_eq!(e["cycles"], 2750.0);
        assert!(!e.contains_key("branches"));
        let m = counter_metrics(&e);
        assert_eq!(m["ipc"], 2.0);
        assert!(!m.contains_key("branch_miss_rate"));
    }

    #[test]
    fn checksum_line() {
        assert_eq!(checksum_of("noise\nchecksum=1.5e3\n"), Some("1.5e3".into()));
        assert_eq!(checksum_of("nothing"), None);
    }

    #[test]
    fn objective_is_baseline_over_variant() {
        let m = Measurement { wall_times: vec![1.6, 1.5, 1.7], counters: BTreeMap::new(), checksum: None };
        let s = m.snapshot(2.0, 3);
        assert_eq!(s.objective_value, 1.25);
        assert_eq!(s.metrics["wall_time_s"].n_reps, 3);
    }
}
