use crate::generate::GenerationTrace;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Domain failures carry enough context to act on;
/// CLI maps every variant to exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("target volume fraction {target} exceeds the gap-adjusted hexagonal limit {limit:.6}")]
    UnreachableVolumeFraction { target: f64, limit: f64 },

    #[error("generation stalled at V_f = {:.6} after {} steps (annealed {} times)",
            trace.final_vf, trace.steps_used, trace.anneal_halvings)]
    Stalled { trace: Box<GenerationTrace> },

    #[error("restricted regions infeasible: {0}")]
    InfeasibleRegions(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("descriptors incompatible: {0}")]
    IncompatibleDescriptors(String),

    #[error("solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    SolveFailed { iterations: usize, residual: f64 },

    #[error("mean nearest-neighbor target unreachable: {0}")]
    MnnTargetUnreachable(String),

    #[error("unsupported schema version {found} (this build reads version {supported})")]
    UnsupportedSchema { found: u64, supported: u64 },

    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
