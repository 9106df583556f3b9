//! Correlation, ambiguity and scalar figures of merit.

pub mod ambiguity;
pub mod correlation;
pub mod metrics;

pub use ambiguity::{ambiguity_numeric, ambiguity_surface, default_doppler_grid, AmbiguitySurface};
pub use correlation::{
    acf_closed_form, acf_numeric, ccf_closed_form, ccf_direct, ccf_numeric, CorrelationKind,
    CorrelationResult, Correlator,
};
pub use metrics::{
    ccf_area, first_null, isr_approx, isr_exact, isr_with_null, papr, rms_bandwidth_sq,
    rms_bandwidth_sq_numeric, spectral_efficiency, IsrReport, NullKind,
};
