//! Pragma tuning of small C kernels. Speedup over the trial's baseline build
//! is the objective; hardware counters are the observables.

pub mod measure;
pub mod pragma;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use measure::{compile, counter_metrics, measure, parse_perf_csv, probe_profiler, Measurement, PERF_EVENTS};
pub use pragma::{inject_pragma, loop_markers, Injection, PragmaAction, PragmaKind, ROSTER};

use crate::harness::{Domain, DomainError, Intervention};
use crate::protocol::{ActionSpec, AgentDecision, IterationFlag, MetricSnapshot, ObjectiveSense};

pub const DOMAIN_ID: &str = "compiler";
pub const METRIC_NAMES: [&str; 4] = ["wall_time_s", "ipc", "l1d_miss_rate", "branch_miss_rate"];
pub const DEFAULT_REPS: u32 = 20;
pub const CC_ENV: &str = "MRL_CC";
pub const PROFILER_ENV: &str = "MRL_PROFILER";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompilerError {
    #[error("loop marker {0:?} not found")]
    MarkerNotFound(String),
    #[error("no load site inside loop {0}")]
    NoLoadSite(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("compile failed:\n{0}")]
    Compile(String),
    #[error("run failed: {0}")]
    Run(String),
    #[error("profiler unavailable: {0}")]
    ProfilerUnavailable(String),
    #[error("io: {0}")]
    Io(String),
}

const BUNDLED: [(&str, &str); 3] = [
    ("jacobi2d", include_str!("../../../kernels/jacobi2d.c")),
    ("gemm", include_str!("../../../kernels/gemm.c")),
    ("atax", include_str!("../../../kernels/atax.c")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub name: String,
    pub source_path: PathBuf,
    pub source: String,
    pub loop_markers: Vec<String>,
    pub build_flags: Vec<String>,
    pub dataset_size: String,
}

impl KernelSpec {
    pub fn bundled_names() -> Vec<&'static str> {
        BUNDLED.iter().map(|(n, _)| *n).collect()
    }

    /// `dataset_size` is `"standard"` (tens of milliseconds per run) or
    /// `"mini"` (for tests).
    pub fn bundled(name: &str, dataset_size: &str) -> Result<Self, CompilerError> {
        let (_, source) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| CompilerError::InvalidKernel(format!("no bundled kernel named {name:?}")))?;
        let defines: &[&str] = match dataset_size {
            "standard" => &[],
            "mini" => &["-DN=48", "-DTSTEPS=2", "-DREPS=1"],
            other => return Err(CompilerError::InvalidKernel(format!("unknown dataset size {other:?}"))),
        };
        let mut build_flags = vec!["-O2".to_string()];
        build_flags.extend(defines.iter().map(|s| s.to_string()));
        let spec = Self {
            name: name.to_string(),
            source_path: PathBuf::from(format!("kernels/{name}.c")),
            source: source.to_string(),
            loop_markers: loop_markers(source),
            build_flags,
            dataset_size: dataset_size.to_string(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// An external kernel (for example a PolyBench file with markers added).
    /// With no explicit marker list, every marker in the file is used.
    pub fn from_file(path: PathBuf, markers: Option<Vec<String>>, build_flags: Vec<String>) -> Result<Self, CompilerError> {
        let source = std::fs::read_to_string(&path).map_err(|e| CompilerError::Io(format!("{}: {e}", path.display())))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "kernel".into());
        let spec = Self {
            loop_markers: markers.unwrap_or_else(|| loop_markers(&source)),
            name,
            source_path: path,
            source,
            build_flags: if build_flags.is_empty() { vec!["-O2".into()] } else { build_flags },
            dataset_size: "external".into(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CompilerError> {
        if self.loop_markers.is_empty() {
            return Err(CompilerError::InvalidKernel(format!("{} declares no loop markers", self.name)));
        }
        let found = loop_markers(&self.source);
        for m in &self.loop_markers {
            let n = found.iter().filter(|f| *f == m).count();
            if n != 1 {
                return Err(CompilerError::InvalidKernel(format!("{}: marker {m} appears {n} times", self.name)));
            }
        }
        Ok(())
    }
}

pub fn list_actions() -> Vec<ActionSpec> {
    ROSTER
        .iter()
        .map(|id| {
            let a = PragmaAction::from_id(id, "").expect("roster ids parse");
            let label = match a.kind {
                PragmaKind::Prefetch => format!("__builtin_prefetch {} elements ahead", a.param.unwrap_or_default()),
                _ => format!("#pragma clang loop {}", id.replace('_', " ")),
            };
            ActionSpec { id: id.to_string(), category: a.kind.as_str().into(), label, payload: a.payload() }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompilerConfig {
    /// Bundled kernel name, ignored when `source_path` is set.
    pub kernel: String,
    pub source_path: Option<PathBuf>,
    pub loop_markers: Option<Vec<String>>,
    pub dataset_size: String,
    pub build_flags: Vec<String>,
    pub cc: String,
    /// `None` disables counters.
    pub profiler: Option<String>,
    pub reps: u32,
}

impl Default for CompilerConfig {
    fn default() -> Self {
        Self {
            kernel: "jacobi2d".into(),
            source_path: None,
            loop_markers: None,
            dataset_size: "standard".into(),
            build_flags: Vec::new(),
            cc: "clang".into(),
            profiler: Some("perf".into()),
            reps: DEFAULT_REPS,
        }
    }
}

impl CompilerConfig {
    /// Applies `MRL_CC` and `MRL_PROFILER` overrides. An empty or `none`
    /// profiler value disables counters.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(cc) = std::env::var(CC_ENV) {
            if !cc.trim().is_empty() {
                self.cc = cc;
            }
        }
        if let Ok(p) = std::env::var(PROFILER_ENV) {
            let p = p.trim();
            self.profiler = (!p.is_empty() && p != "none").then(|| p.to_string());
        }
        self
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec, CompilerError> {
        match &self.source_path {
            Some(p) => KernelSpec::from_file(p.clone(), self.loop_markers.clone(), self.build_flags.clone()),
            None => {
                let mut k = KernelSpec::bundled(&self.kernel, &self.dataset_size)?;
                k.build_flags.extend(self.build_flags.iter().cloned());
                Ok(k)
            }
        }
    }
}

struct Baseline {
    median: f64,
    checksum: Option<String>,
}

pub struct CompilerDomain {
    kernel: KernelSpec,
    cc: String,
    profiler: Option<String>,
    reps: u32,
    work: tempfile::TempDir,
    source: String,
    baseline: Option<Baseline>,
    last: Option<MetricSnapshot>,
    builds: u32,
    clock: u64,
    log: Vec<String>,
}

impl CompilerDomain {
    /// Probes the profiler once; when it is unusable the domain runs in
    /// wall-time-only mode and says so in the trial log.
    pub fn new(config: &CompilerConfig) -> Result<Self, CompilerError> {
        let kernel = config.kernel_spec()?;
        let mut log = Vec::new();
        let profiler = match &config.profiler {
            Some(p) => match probe_profiler(p) {
                Ok(()) => Some(p.clone()),
                Err(e) => {
                    log.push(format!("{e}; measuring wall time only"));
                    None
                }
            },
            None => {
                log.push("profiler disabled; measuring wall time only".into());
                None
            }
        };
        let work = tempfile::Builder::new()
            .prefix("mrl-compiler-")
            .tempdir()
            .map_err(|e| CompilerError::Io(e.to_string()))?;
        Ok(Self {
            source: kernel.source.clone(),
            kernel,
            cc: config.cc.clone(),
            profiler,
            reps: config.reps,
            work,
            baseline: None,
            last: None,
            builds: 0,
            clock: 0,
            log,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn profiler_active(&self) -> bool {
        self.profiler.is_some()
    }

    /// Current source with all pragmas applied so far.
    pub fn current_source(&self) -> &str {
        &self.source
    }

    /// Compiles and measures `source`.
    pub fn build_and_measure(&mut self, source: &str) -> Result<Measurement, CompilerError> {
        let name = format!("{}_{:03}", self.kernel.name, self.builds);
        self.builds += 1;
        let (bin, diagnostics) = compile(&self.cc, &self.kernel.build_flags, source, self.work.path(), &name)?;
        if !diagnostics.trim().is_empty() {
            self.log.push(format!("{name}: {}", diagnostics.trim()));
        }
        measure(&bin, self.reps, self.profiler.as_deref())
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }
}

fn failure(e: CompilerError) -> DomainError {
    match e {
        CompilerError::UnknownAction(a) => DomainError::UnknownAction(a),
        other => DomainError::Failure(other.to_string()),
    }
}

impl Domain for CompilerDomain {
    fn id(&self) -> String {
        DOMAIN_ID.into()
    }

    fn metric_names(&self) -> Vec<String> {
        METRIC_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn actions(&self) -> Vec<ActionSpec> {
        list_actions()
    }

    fn objective_sense(&self) -> ObjectiveSense {
        ObjectiveSense::Maximize
    }

    fn sites(&self) -> Vec<String> {
        self.kernel.loop_markers.clone()
    }

    /// Builds and measures the unmodified kernel once; all speedups in the
    /// trial are relative to this measurement.
    fn reset(&mut self, _seed: u64) -> Result<MetricSnapshot, DomainError> {
        self.source = self.kernel.source.clone();
        self.clock = 0;
        let source = self.source.clone();
        let m = self.build_and_measure(&source).map_err(|e| DomainError::Setup(e.to_string()))?;
        let median = m.median_time();
        let mut snap = m.snapshot(median, 0);
        snap.objective_value = 1.0;
        self.baseline = Some(Baseline { median, checksum: m.checksum });
        self.last = Some(snap.clone());
        Ok(snap)
    }

    fn observe(&mut self) -> Result<MetricSnapshot, DomainError> {
        let t = self.tick();
        let mut snap = self.last.clone().ok_or_else(|| DomainError::Failure("observe called before reset".into()))?;
        snap.captured_at = t;
        Ok(snap)
    }

    /// Pragmas accumulate across iterations. A variant that fails to build,
    /// run, or reproduce the baseline checksum is discarded.
    fn intervene(&mut self, decision: &AgentDecision) -> Result<Intervention, DomainError> {
        let marker = decision.loop_marker.clone().unwrap_or_else(|| self.kernel.loop_markers[0].clone());
        if !self.kernel.loop_markers.contains(&marker) {
            return Err(DomainError::Failure(format!("loop marker {marker:?} is not declared for {}", self.kernel.name)));
        }
        let action = PragmaAction::from_id(&decision.action_id, &marker).map_err(failure)?;
        let injected = inject_pragma(&self.source, &action).map_err(failure)?;
        let m = self.build_and_measure(&injected.source).map_err(failure)?;
        let baseline = self.baseline.as_ref().ok_or_else(|| DomainError::Failure("intervene called before reset".into()))?;
        if m.checksum != baseline.checksum {
            return Err(DomainError::Failure(format!(
                "checksum changed: baseline {:?}, variant {:?}",
                baseline.checksum, m.checksum
            )));
        }
        let baseline_median = baseline.median;
        let t = self.tick();
        let post = m.snapshot(baseline_median, t);
        self.source = injected.source;
        self.last = Some(post.clone());
        let flags = injected.warnings.into_iter().map(|message| IterationFlag::Warning { message }).collect();
        Ok(Intervention { post, flags })
    }

    fn drain_log(&mut self) -> Vec<String> {
        std::mem::take(&mut self.log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_is_twelve_over_four_kinds() {
        let a = list_actions();
        assert_eq!(a.len(), 12);
        for kind in ["unroll", "vectorize", "interleave", "prefetch"] {
            assert_eq!(a.iter().filter(|x| x.category == kind).count(), 3);
        }
    }

    #[test]
    fn bundled_kernels_validate() {
        for name in KernelSpec::bundled_names() {
            let k = KernelSpec::bundled(name, "standard").unwrap();
            assert_eq!(k.loop_markers, vec!["L0", "L1"]);
            assert_eq!(k.build_flags[0], "-O2");
            for id in ROSTER {
                for m in &k.loop_markers {
                    inject_pragma(&k.source, &PragmaAction::from_id(id, m).unwrap()).unwrap();
                }
            }
        }
        assert!(KernelSpec::bundled("lu", "standard").is_err());
    }

    #[test]
    fn duplicate_marker_rejected() {
        let mut k = KernelSpec::bundled("gemm", "mini").unwrap();
        k.source.push_str("\n/* mrl:loop L0 */\n");
        assert!(k.validate().is_err());
    }
}
