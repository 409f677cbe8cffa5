use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty constellation")]
    EmptyConstellation,

    #[error("RRC span of {span_symbols} symbols leaves tail energy {tail_energy:e} (limit 1e-4)")]
    PulseSpanTooShort { span_symbols: usize, tail_energy: f64 },

    #[error("zero reference power")]
    ZeroReferencePower,

    #[error("aliasing: {fraction:e} of spectral energy at the band edge")]
    Aliasing { fraction: f64 },

    #[error("constrained least squares did not converge after {iterations} Newton steps (max |H| = {max_gain})")]
    Infeasible { iterations: usize, max_gain: f64 },

    #[error("signal of {len} samples is too short for {need}")]
    LengthUnderflow { len: usize, need: usize },

    #[error("degenerate scaling: stage {stage} has zero power")]
    DegenerateScaling { stage: usize },

    #[error("cannot quantize an all-zero filter")]
    ZeroFilter,

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("non-finite gradient in stage {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at iteration {iteration}: {snr_db:.2} dB vs initial {initial_db:.2} dB")]
    Diverged {
        iteration: usize,
        snr_db: f64,
        initial_db: f64,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("mismatched result sets: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
