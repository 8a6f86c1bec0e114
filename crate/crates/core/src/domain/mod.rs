pub mod compiler;
pub mod recorded;
pub mod synth;
pub mod train;

pub use recorded::RecordedDomain;
