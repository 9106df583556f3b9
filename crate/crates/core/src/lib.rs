//! Multi-tone sinusoidal frequency modulated (MTSFM) waveforms.
//!
//! The crate synthesizes MTSFM pulses, expands them in generalized Bessel
//! function (GBF) coefficients, evaluates auto-/cross-correlations and
//! ambiguity surfaces both in closed form and numerically, and optimizes
//! waveform families under an RMS-bandwidth constraint.

pub mod analysis;
pub mod bessel;
pub mod error;
pub mod gbf;
pub mod optimizer;
pub mod synthesis;
pub mod waveform;

pub use error::{Error, Result};
pub use waveform::{
    make_grid, GbfCoefficients, GridPlan, MetricsReport, SampledWaveform, SamplingGrid, Symmetry,
    TaperKind, TaperSpec, WaveformParams,
};
