use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mrl_cli::commands::{cmd_ablate, cmd_report, cmd_run, cmd_synth_sweep};
use mrl_cli::{CliError, HarnessConfig};

#[derive(Parser)]
#[command(name = "mrl", version, about = "Closed-loop metric-reasoning harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials and write one JSONL record per trial plus summary.csv.
    Run(Common),
    /// Summarize recorded trials into summary.csv and summary.md.
    Report {
        /// Record files or glob patterns.
        #[arg(required = true)]
        inputs: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Bootstrap seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rerun the trial set for several history windows.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "3,5,10")]
        windows: Vec<u32>,
    },
    /// Sweep the synthetic domain's observability.
    SynthSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1.0")]
        rhos: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "scripted:signal,scripted:prior,random")]
        agents: Vec<String>,
    },
}

/// Flags shared by the trial-running commands. Each overrides the config.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    window: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative noise threshold for both success criteria.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Bundled kernel(s) for the compiler domain, comma separated.
    #[arg(long, value_delimiter = ',')]
    kernel: Vec<String>,
    /// Synthetic domain: fraction of causes with a swapped belief.
    #[arg(long)]
    corruption: Option<f64>,
    /// Synthetic domain: channel fidelity.
    #[arg(long)]
    rho: Option<f64>,
}

impl Common {
    fn resolve(self) -> Result<HarnessConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => HarnessConfig::load(p)?,
            None => HarnessConfig::default(),
        };
        if let Some(v) = self.domain {
            cfg.domain = v;
        }
        if let Some(v) = self.agent {
            cfg.agent = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.iterations {
            cfg.loop_.n_iterations = v;
        }
        if let Some(v) = self.window {
            cfg.loop_.history_window_k = v;
        }
        if let Some(v) = self.seed {
            cfg.loop_.seed = v;
        }
        if let Some(v) = self.eps {
            cfg.loop_.noise_epsilon_rel = v;
        }
        if let Some(v) = self.out {
            cfg.out = v;
        }
        if let Some(v) = self.fixture {
            cfg.fixture = Some(v);
        }
        if !self.kernel.is_empty() {
            let template = cfg.compiler.first().cloned().unwrap_or_default();
            cfg.compiler = self
                .kernel
                .into_iter()
                .map(|kernel| mrl_core::domain::compiler::CompilerConfig { kernel, ..template.clone() })
                .collect();
        }
        if let Some(v) = self.corruption {
            cfg.synth.corruption = v;
        }
        if let Some(v) = self.rho {
            cfg.synth.rho = v;
        }
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(common) => {
            let outcome = cmd_run(&common.resolve()?)?;
            for f in &outcome.files {
                println!("{}", f.display());
            }
            println!("{}", outcome.summary_csv.display());
            match outcome.truncation_error() {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Report { inputs, out, seed } => {
            let report = cmd_report(&inputs, &out, seed)?;
            print!("{}", report.markdown);
            Ok(())
        }
        Command::Ablate { common, windows } => {
            let rows = cmd_ablate(&common.resolve()?, &windows)?;
            print!("{}", mrl_cli::commands::ablation_csv(&rows));
            Ok(())
        }
        Command::SynthSweep { common, rhos, agents } => {
            let rows = cmd_synth_sweep(&common.resolve()?, &rhos, &agents)?;
            print!("{}", mrl_cli::commands::sweep_csv(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mrl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
