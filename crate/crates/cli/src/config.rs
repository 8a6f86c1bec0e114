use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mrl_core::agent::LlmConfig;
use mrl_core::domain::compiler::CompilerConfig;
use mrl_core::domain::synth::SynthSpec;
use mrl_core::domain::train::TrainDomainConfig;
use mrl_core::{LoopConfig, ObjectiveSense};

use crate::error::CliError;

pub const DOMAINS: [&str; 3] = ["compiler", "train", "synth"];
pub const AGENTS: [&str; 5] = ["scripted:signal", "scripted:prior", "random", "replay", "llm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopBlock {
    pub n_iterations: u32,
    pub history_window_k: u32,
    pub noise_epsilon_rel: f64,
    pub seed: u64,
    pub baseline_always_visible: bool,
}

impl Default for LoopBlock {
    fn default() -> Self {
        Self {
            n_iterations: LoopConfig::DEFAULT_ITERATIONS,
            history_window_k: LoopConfig::DEFAULT_WINDOW,
            noise_epsilon_rel: LoopConfig::DEFAULT_EPSILON,
            seed: 0,
            baseline_always_visible: true,
        }
    }
}

impl LoopBlock {
    /// Loop config for trial `index`: seeds are consecutive from `seed`.
    pub fn for_trial(&self, sense: ObjectiveSense, index: u64) -> LoopConfig {
        LoopConfig {
            n_iterations: self.n_iterations,
            history_window_k: self.history_window_k,
            noise_epsilon_rel: self.noise_epsilon_rel,
            seed: self.seed.wrapping_add(index),
            objective_sense: sense,
            baseline_always_visible: self.baseline_always_visible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthBlock {
    pub n_causes: usize,
    pub rho: f64,
    /// Defaults to `2 * n_causes + 1`.
    pub n_actions: Option<usize>,
    pub table_seed: u64,
    /// Replaces the generated effect table.
    pub effect_table_csv: Option<PathBuf>,
    /// Fraction of causes whose primary and misguided fixes are swapped in
    /// the scripted agents' belief table.
    pub corruption: f64,
    pub corruption_seed: u64,
}

impl Default for SynthBlock {
    fn default() -> Self {
        Self {
            n_causes: 4,
            rho: 0.5,
            n_actions: None,
            table_seed: 7,
            effect_table_csv: None,
            corruption: 0.0,
            corruption_seed: 3,
        }
    }
}

impl SynthBlock {
    pub fn spec(&self) -> Result<SynthSpec, CliError> {
        let mut spec = SynthSpec::generate(
            self.n_causes,
            self.n_actions.unwrap_or(2 * self.n_causes + 1),
            self.rho,
            self.table_seed,
        )
        .map_err(|e| CliError::Usage(format!("synth: {e}")))?;
        if let Some(path) = &self.effect_table_csv {
            let table = SynthSpec::load_effect_table_csv(path).map_err(|e| CliError::Usage(format!("synth: {e}")))?;
            spec.n_causes = table.len();
            spec.n_actions = table.first().map_or(0, Vec::len);
            spec.effect_table = table;
            spec.validate().map_err(|e| CliError::Usage(format!("synth: {e}")))?;
        }
        Ok(spec)
    }

    /// The effect table as the scripted agents believe it.
    pub fn belief(&self, spec: &SynthSpec) -> Vec<Vec<f64>> {
        if self.corruption > 0.0 {
            spec.corrupted_table(self.corruption, self.corruption_seed)
        } else {
            spec.effect_table.clone()
        }
    }
}

/// Everything one command needs. Loaded from TOML; command-line flags are
/// applied on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub domain: String,
    pub agent: String,
    pub trials: u32,
    pub out: PathBuf,
    /// Recorded trials for the replay agent.
    pub fixture: Option<PathBuf>,
    #[serde(rename = "loop")]
    pub loop_: LoopBlock,
    /// One entry per kernel; trials run for each.
    pub compiler: Vec<CompilerConfig>,
    pub train: TrainDomainConfig,
    pub synth: SynthBlock,
    pub llm: Option<LlmConfig>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            domain: "synth".into(),
            agent: "scripted:signal".into(),
            trials: 1,
            out: PathBuf::from("out"),
            fixture: None,
            loop_: LoopBlock::default(),
            compiler: vec![CompilerConfig::default()],
            train: TrainDomainConfig::default(),
            synth: SynthBlock::default(),
            llm: None,
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(f) = cfg.fixture.as_mut() {
            rebase(f);
        }
        if let Some(f) = cfg.synth.effect_table_csv.as_mut() {
            rebase(f);
        }
        for c in &mut cfg.compiler {
            if let Some(p) = c.source_path.as_mut() {
                rebase(p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if !DOMAINS.contains(&self.domain.as_str()) {
            return usage(format!("unknown domain {:?} (expected one of {})", self.domain, DOMAINS.join(", ")));
        }
        if !AGENTS.contains(&self.agent.as_str()) {
            return usage(format!("unknown agent {:?} (expected one of {})", self.agent, AGENTS.join(", ")));
        }
        if self.trials == 0 {
            return usage("trials must be >= 1".into());
        }
        if self.agent == "replay" {
            match &self.fixture {
                None => return usage("the replay agent needs --fixture".into()),
                Some(f) if !f.exists() => return usage(format!("fixture {} does not exist", f.display())),
                _ => {}
            }
        }
        if self.agent == "llm" {
            let Some(llm) = &self.llm else {
                return usage("the llm agent needs an [llm] block in the config".into());
            };
            llm.validate().map_err(|e| CliError::Usage(format!("llm: {e}")))?;
        }
        if self.domain == "compiler" && self.compiler.is_empty() {
            return usage("compiler domain needs at least one [[compiler]] entry".into());
        }
        for c in &self.compiler {
            if let Some(p) = &c.source_path {
                if !p.exists() {
                    return usage(format!("kernel source {} does not exist", p.display()));
                }
            }
        }
        if let Some(p) = &self.synth.effect_table_csv {
            if !p.exists() {
                return usage(format!("effect table {} does not exist", p.display()));
            }
        }
        self.loop_
            .for_trial(ObjectiveSense::Maximize, 0)
            .validate()
            .map_err(|e| CliError::Usage(format!("loop: {e}")))
    }
}
