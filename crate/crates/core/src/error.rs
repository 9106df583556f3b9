use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid waveform parameters: {0}")]
    InvalidParams(String),

    #[error("invalid sampling grid: {0}")]
    InvalidGrid(String),

    #[error("time {t} s lies outside the pulse support [-{half}, {half}] s")]
    OutsideSupport { t: f64, half: f64 },

    #[error("max order {requested} is below the truncation bound {bound}; coefficients would be truncated")]
    TruncationRisk { requested: i64, bound: i64 },

    #[error("convolution oracle supports at most {max} harmonics, got {got}")]
    OracleTooLarge { got: usize, max: usize },

    #[error("closed-form expressions require a rectangular taper")]
    TaperedClosedForm,

    #[error("waveform has zero swept bandwidth")]
    ZeroBandwidth,

    #[error("waveforms are sampled on different grids")]
    GridMismatch,

    #[error("delay axis does not cover [-T, T] (covers [{lo}, {hi}] s, T = {duration} s)")]
    PartialDelayCoverage { lo: f64, hi: f64, duration: f64 },

    #[error("operation requires an auto-correlation result")]
    NotAuto,

    #[error("signal has zero power")]
    ZeroSignal,

    #[error("invalid frequency band: {0}")]
    InvalidBand(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid design problem: {0}")]
    InvalidProblem(String),
}
