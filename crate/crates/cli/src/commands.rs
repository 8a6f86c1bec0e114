use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mrl_core::agent::{
    Agent, AgentError, AgentRequest, LlmAgent, PriorAgent, PriorPolicy, RandomAgent, ReplayAgent, SignalAgent,
    SignalPolicy,
};
use mrl_core::analysis::{per_trial_rows, render_summary_markdown, summarize, summarize_macro, trial_rows_csv};
use mrl_core::domain::compiler::CompilerDomain;
use mrl_core::domain::synth::{true_gap, SynthDomain, SynthSpec};
use mrl_core::domain::train::TrainDomain;
use mrl_core::domain::RecordedDomain;
use mrl_core::harness::ContextWindow;
use mrl_core::record::{read_trials_from_path, write_atomic, write_trial_file};
use mrl_core::{run_trial, AgentDecision, Domain, TrialRecord};

use crate::config::HarnessConfig;
use crate::error::CliError;

pub const TRANSCRIPT_FILE: &str = "llm_transcript.jsonl";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn scripted_agent(cfg: &HarnessConfig, spec: Option<&SynthSpec>) -> Result<Box<dyn Agent>, CliError> {
    let signal = cfg.agent == "scripted:signal";
    Ok(match (cfg.domain.as_str(), spec) {
        ("compiler", _) if signal => Box::new(SignalAgent::new(SignalPolicy::compiler())),
        ("compiler", _) => Box::new(PriorAgent::new(PriorPolicy::compiler())),
        ("train", _) if signal => Box::new(SignalAgent::new(SignalPolicy::train())),
        ("train", _) => Box::new(PriorAgent::new(PriorPolicy::train())),
        ("synth", Some(spec)) => {
            let belief = cfg.synth.belief(spec);
            if signal {
                Box::new(SignalAgent::new(SignalPolicy::synth(&belief)))
            } else {
                Box::new(PriorAgent::new(PriorPolicy::synth(&belief)))
            }
        }
        (d, _) => return Err(CliError::Usage(format!("no scripted policy for domain {d:?}"))),
    })
}

/// Agent for one live (non-replay) trial.
fn make_agent(cfg: &HarnessConfig, trial_seed: u64, spec: Option<&SynthSpec>) -> Result<Box<dyn Agent>, CliError> {
    match cfg.agent.as_str() {
        "scripted:signal" | "scripted:prior" => scripted_agent(cfg, spec),
        "random" => Ok(Box::new(RandomAgent::new(trial_seed ^ 0x00A5_A5A5))),
        "llm" => {
            let llm = cfg.llm.clone().ok_or_else(|| CliError::Usage("the llm agent needs an [llm] block".into()))?;
            let agent = LlmAgent::new(llm)
                .map_err(|e| CliError::Agent(e.to_string()))?
                .with_transcript_file(cfg.out.join(TRANSCRIPT_FILE));
            Ok(Box::new(agent))
        }
        other => Err(CliError::Usage(format!("agent {other:?} cannot drive a live trial"))),
    }
}

/// Runs every configured trial in sequence without writing anything.
pub fn run_trials(cfg: &HarnessConfig) -> Result<Vec<TrialRecord>, CliError> {
    cfg.validate()?;
    if cfg.agent == "replay" {
        return replay_trials(cfg);
    }
    let mut trials = Vec::new();
    match cfg.domain.as_str() {
        "synth" => {
            let spec = cfg.synth.spec()?;
            for i in 0..cfg.trials as u64 {
                let mut domain = SynthDomain::new(spec.clone()).map_err(|e| CliError::Domain(e.to_string()))?;
                let config = cfg.loop_.for_trial(domain.objective_sense(), i);
                let mut agent = make_agent(cfg, config.seed, Some(&spec))?;
                trials.push(run_trial(&mut domain, agent.as_mut(), &config)?);
            }
        }
        "train" => {
            for i in 0..cfg.trials as u64 {
                let mut domain = TrainDomain::new(cfg.train.clone()).map_err(|e| CliError::Domain(e.to_string()))?;
                let config = cfg.loop_.for_trial(domain.objective_sense(), i);
                let mut agent = make_agent(cfg, config.seed, None)?;
                trials.push(run_trial(&mut domain, agent.as_mut(), &config)?);
            }
        }
        "compiler" => {
            let mut i = 0u64;
            for kernel in &cfg.compiler {
                let kernel = kernel.clone().with_env_overrides();
                let mut domain = CompilerDomain::new(&kernel).map_err(|e| CliError::Domain(e.to_string()))?;
                for _ in 0..cfg.trials {
                    let config = cfg.loop_.for_trial(domain.objective_sense(), i);
                    let mut agent = make_agent(cfg, config.seed, None)?;
                    let mut trial = run_trial(&mut domain, agent.as_mut(), &config)?;
                    trial.log.insert(0, format!("kernel={}", domain.kernel().name));
                    trials.push(trial);
                    i += 1;
                }
            }
        }
        other => return Err(CliError::Usage(format!("unknown domain {other:?}"))),
    }
    Ok(trials)
}

/// Re-runs recorded trials offline: the recorded measurements stand in for
/// the domain and the recorded decisions for the agent. Each trial keeps its
/// recorded loop config.
fn replay_trials(cfg: &HarnessConfig) -> Result<Vec<TrialRecord>, CliError> {
    let path = cfg.fixture.as_ref().ok_or_else(|| CliError::Usage("the replay agent needs --fixture".into()))?;
    let recorded = read_trials_from_path(path)?;
    if recorded.is_empty() {
        return Err(CliError::Usage(format!("fixture {} holds no trials", path.display())));
    }
    let mut out = Vec::new();
    for trial in recorded {
        if trial.domain_id != cfg.domain {
            return Err(CliError::Usage(format!(
                "fixture {} holds a {:?} trial but the run is for {:?}",
                path.display(),
                trial.domain_id,
                cfg.domain
            )));
        }
        let config = trial.config.clone();
        let mut agent = ReplayAgent::from_trials(std::slice::from_ref(&trial));
        let mut domain = RecordedDomain::new(trial);
        out.push(run_trial(&mut domain, &mut agent, &config)?);
    }
    Ok(out)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub trials: Vec<TrialRecord>,
    pub files: Vec<PathBuf>,
    pub summary_csv: PathBuf,
}

impl RunOutcome {
    /// The first truncation, mapped to its exit class.
    pub fn truncation_error(&self) -> Option<CliError> {
        self.trials.iter().zip(&self.files).find_map(|(t, f)| {
            let tr = t.truncated.as_ref()?;
            let msg = format!("{} truncated at iteration {}: {}", f.display(), tr.at_iteration, tr.reason);
            Some(if tr.reason.starts_with("agent failure") { CliError::Agent(msg) } else { CliError::Domain(msg) })
        })
    }
}

/// Runs the configured trials and writes `trial_<domain>_<NNN>.jsonl` per
/// trial plus `summary.csv` into the output directory.
pub fn cmd_run(cfg: &HarnessConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    ensure_dir(&cfg.out)?;
    let trials = run_trials(cfg)?;
    let mut files = Vec::new();
    for (i, t) in trials.iter().enumerate() {
        let path = cfg.out.join(format!("trial_{}_{i:03}.jsonl", t.domain_id));
        write_trial_file(&path, t)?;
        log::info!("wrote {}", path.display());
        files.push(path);
    }
    let summary_csv = cfg.out.join("summary.csv");
    write_atomic(&summary_csv, trial_rows_csv(&per_trial_rows(&trials)).as_bytes())?;
    Ok(RunOutcome { trials, files, summary_csv })
}

fn has_glob_chars(s: &str) -> bool {
    s.contains(['*', '?', '['])
}

/// Expands patterns to a sorted, de-duplicated file list.
pub fn expand_patterns(patterns: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in patterns {
        if !has_glob_chars(p) {
            let path = PathBuf::from(p);
            if !path.is_file() {
                return Err(CliError::Usage(format!("record file {} does not exist", path.display())));
            }
            files.push(path);
            continue;
        }
        let paths = glob::glob(p).map_err(|e| CliError::Usage(format!("bad pattern {p:?}: {e}")))?;
        for entry in paths {
            let path = entry.map_err(|e| CliError::Usage(e.to_string()))?;
            if path.is_file() {
                files.push(path);
            }
        }
    }
    files.sort();
    files.dedup();
    Ok(files)
}

#[derive(Debug)]
pub struct ReportOutcome {
    pub markdown: String,
    pub csv: String,
}

/// Reads records matching `patterns` and writes `summary.csv` and
/// `summary.md` into `out`.
pub fn cmd_report(patterns: &[String], out: &Path, seed: u64) -> Result<ReportOutcome, CliError> {
    let files = expand_patterns(patterns)?;
    if files.is_empty() {
        return Err(CliError::Analysis("no record files matched".into()));
    }
    let mut trials = Vec::new();
    for f in &files {
        trials.extend(read_trials_from_path(f)?);
    }
    let markdown = render_summary_markdown(&trials, seed)?;
    let csv = trial_rows_csv(&per_trial_rows(&trials));
    ensure_dir(out)?;
    write_atomic(&out.join("summary.csv"), csv.as_bytes())?;
    write_atomic(&out.join("summary.md"), markdown.as_bytes())?;
    Ok(ReportOutcome { markdown, csv })
}

/// Records the context window of every request before delegating.
struct WindowProbe {
    inner: Box<dyn Agent>,
    seen: Vec<ContextWindow>,
}

impl Agent for WindowProbe {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn decide(&mut self, request: &AgentRequest) -> Result<AgentDecision, AgentError> {
        self.seen.push(request.context.clone());
        self.inner.decide(request)
    }
}

/// True when every window shown equals the last `min(k, i)` iterations of
/// the history at that point, plus the baseline.
fn windows_are_suffixes(trial: &TrialRecord, seen: &[ContextWindow], k: u32) -> bool {
    seen.iter().enumerate().all(|(i, w)| {
        let start = i.saturating_sub(k as usize);
        let visible = trial.config.baseline_always_visible || i == 0;
        i <= trial.iterations.len()
            && w.iterations.as_slice() == &trial.iterations[start..i]
            && (w.baseline.as_ref() == Some(&trial.baseline)) == visible
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub window: u32,
    pub n_trials: usize,
    pub n_iterations: usize,
    pub actsr: f64,
    pub asr: f64,
    pub gap_pp: f64,
    pub suffix_relation: bool,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("window,n_trials,n_iterations,actsr,asr,gap_pp,suffix_relation\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.4},{:.4},{:.2},{}",
            r.window, r.n_trials, r.n_iterations, r.actsr, r.asr, r.gap_pp, r.suffix_relation
        );
    }
    s
}

/// Runs the configured trial set once per history window and writes
/// `ablation.csv`. Errors if any window shown to the agent was not a suffix
/// of the history.
pub fn cmd_ablate(cfg: &HarnessConfig, windows: &[u32]) -> Result<Vec<AblationRow>, CliError> {
    cfg.validate()?;
    if windows.is_empty() || windows.contains(&0) {
        return Err(CliError::Usage("windows must be a nonempty list of positive integers".into()));
    }
    if cfg.agent == "replay" {
        return Err(CliError::Usage("ablation needs a live agent, not replay".into()));
    }
    let spec = if cfg.domain == "synth" { Some(cfg.synth.spec()?) } else { None };
    let mut rows = Vec::new();
    // index lists shown at (trial, iteration) for the previous, smaller window
    let mut previous: Option<Vec<Vec<Vec<u32>>>> = None;
    let mut sorted = windows.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &k in &sorted {
        let mut c = cfg.clone();
        c.loop_.history_window_k = k;
        let mut trials = Vec::new();
        let mut ok = true;
        let mut shown: Vec<Vec<Vec<u32>>> = Vec::new();
        for i in 0..cfg.trials as u64 {
            let mut domain: Box<dyn Domain> = match c.domain.as_str() {
                "synth" => Box::new(SynthDomain::new(spec.clone().expect("synth spec")).map_err(|e| CliError::Domain(e.to_string()))?),
                "train" => Box::new(TrainDomain::new(c.train.clone()).map_err(|e| CliError::Domain(e.to_string()))?),
                _ => Box::new(
                    CompilerDomain::new(&c.compiler[0].clone().with_env_overrides())
                        .map_err(|e| CliError::Domain(e.to_string()))?,
                ),
            };
            let config = c.loop_.for_trial(domain.objective_sense(), i);
            let mut probe = WindowProbe { inner: make_agent(&c, config.seed, spec.as_ref())?, seen: Vec::new() };
            let trial = run_trial(domain.as_mut(), &mut probe, &config)?;
            ok &= windows_are_suffixes(&trial, &probe.seen, k);
            shown.push(probe.seen.iter().map(|w| w.iterations.iter().map(|it| it.index).collect()).collect());
            trials.push(trial);
        }
        if let Some(prev) = &previous {
            // a smaller window must show a suffix of what a larger one shows
            for (small_t, large_t) in prev.iter().zip(&shown) {
                for (small, large) in small_t.iter().zip(large_t) {
                    ok &= large.ends_with(small);
                }
            }
        }
        let s = summarize(&trials)?;
        rows.push(AblationRow {
            window: k,
            n_trials: trials.len(),
            n_iterations: s.n_iterations,
            actsr: s.actsr,
            asr: s.asr,
            gap_pp: s.gap_pp,
            suffix_relation: ok,
        });
        previous = Some(shown);
    }
    ensure_dir(&cfg.out)?;
    write_atomic(&cfg.out.join("ablation.csv"), ablation_csv(&rows).as_bytes())?;
    if let Some(bad) = rows.iter().find(|r| !r.suffix_relation) {
        return Err(CliError::Analysis(format!("context window K={} was not a suffix of the history", bad.window)));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rho: f64,
    pub true_gap: f64,
    pub agent: String,
    pub n_trials: usize,
    pub actsr: f64,
    pub asr: f64,
    pub mean_gap_pp: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("rho,true_gap,agent,n_trials,actsr,asr,mean_gap_pp\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.6},{:.6},{},{},{:.4},{:.4},{:.2}",
            r.rho, r.true_gap, r.agent, r.n_trials, r.actsr, r.asr, r.mean_gap_pp
        );
    }
    s
}

/// For each observability level and agent, runs the configured number of
/// synth trials and writes `synth_sweep.csv` with the channel's exact gap
/// next to the behavioural gap.
pub fn cmd_synth_sweep(cfg: &HarnessConfig, rhos: &[f64], agents: &[String]) -> Result<Vec<SweepRow>, CliError> {
    if rhos.is_empty() || agents.is_empty() {
        return Err(CliError::Usage("synth-sweep needs at least one rho and one agent".into()));
    }
    let k = cfg.synth.n_causes as f64;
    for &rho in rhos {
        if !(rho >= 1.0 / k - 1e-12 && rho <= 1.0) {
            return Err(CliError::Usage(format!("rho {rho} is outside [1/{k}, 1]")));
        }
    }
    let mut rows = Vec::new();
    for &rho in rhos {
        for agent in agents {
            if !["scripted:signal", "scripted:prior", "random"].contains(&agent.as_str()) {
                return Err(CliError::Usage(format!("synth-sweep supports scripted and random agents, not {agent:?}")));
            }
            let mut c = cfg.clone();
            c.domain = "synth".into();
            c.agent = agent.clone();
            c.synth.rho = rho;
            let spec = c.synth.spec()?;
            let trials = run_trials(&c)?;
            let pooled = summarize(&trials)?;
            let per_trial = summarize_macro(&trials)?;
            rows.push(SweepRow {
                rho,
                true_gap: true_gap(&spec).map_err(|e| CliError::Analysis(e.to_string()))?,
                agent: agent.clone(),
                n_trials: trials.len(),
                actsr: pooled.actsr,
                asr: pooled.asr,
                mean_gap_pp: per_trial.gap_pp,
            });
        }
    }
    ensure_dir(&cfg.out)?;
    write_atomic(&cfg.out.join("synth_sweep.csv"), sweep_csv(&rows).as_bytes())?;
    Ok(rows)
}
