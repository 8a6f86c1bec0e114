use thiserror::Error;

use mrl_core::analysis::AnalysisError;
use mrl_core::record::RecordError;
use mrl_core::HarnessError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("agent: {0}")]
    Agent(String),
    #[error("analysis: {0}")]
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Domain(_) => 2,
            CliError::Agent(_) => 3,
            CliError::Analysis(_) => 4,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => CliError::Usage(format!("loop: {m}")),
            HarnessError::Domain(d) => CliError::Domain(d.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Analysis(e.to_string())
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::Parse { .. } => CliError::Analysis(format!("record: {e}")),
            RecordError::NonFinite(_) => CliError::Domain(format!("record: {e}")),
            RecordError::Io { .. } => CliError::Usage(format!("record: {e}")),
        }
    }
}
