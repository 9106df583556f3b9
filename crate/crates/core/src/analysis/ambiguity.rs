//! Narrowband auto/cross ambiguity functions
//!
//! ```text
//! chi(tau, nu) = int s1(t - tau/2) s2*(t + tau/2) exp(j 2 pi nu t) dt
//! ```
//!
//! The zero-Doppler row is the correlation function of
//! [`super::correlation`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::correlation::{delay_axis, CafKernel, Correlator};
use crate::error::{Error, Result};
use crate::waveform::{GbfCoefficients, SampledWaveform, WaveformParams};

/// Ambiguity values on a delay/Doppler grid, stored row-major by Doppler:
/// `values[i][j]` is `chi(delays[j], dopplers[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySurface {
    pub delays: Vec<f64>,
    pub dopplers: Vec<f64>,
    pub values: Vec<Vec<Complex64>>,
}

impl AmbiguitySurface {
    /// `|chi|^2`, same layout as `values`.
    pub fn power(&self) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|row| row.iter().map(|v| v.norm_sqr()).collect())
            .collect()
    }

    /// Riemann sum of `|chi|^2 dtau dnu` using the mean grid spacings.
    pub fn volume(&self) -> f64 {
        let d_tau = spacing(&self.delays);
        let d_nu = spacing(&self.dopplers);
        let total: f64 = self
            .values
            .iter()
            .flat_map(|row| row.iter().map(|v| v.norm_sqr()))
            .sum();
        total * d_tau * d_nu
    }

    /// Index of the Doppler row closest to zero.
    pub fn zero_doppler_row(&self) -> usize {
        self.dopplers
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

fn spacing(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        1.0
    } else {
        (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
    }
}

/// `nu in [-20/T, 20/T]` in steps of `1/(4T)`.
pub fn default_doppler_grid(duration: f64) -> Vec<f64> {
    (-80..=80).map(|i| i as f64 / (4.0 * duration)).collect()
}

/// Closed-form ambiguity surface from GBF coefficients (rectangular taper).
pub fn ambiguity_surface(
    coeffs1: &GbfCoefficients,
    coeffs2: &GbfCoefficients,
    params: &WaveformParams,
    delays: &[f64],
    dopplers: &[f64],
) -> Result<AmbiguitySurface> {
    if !params.is_rectangular() {
        return Err(Error::TaperedClosedForm);
    }
    let duration = params.duration();
    let kernel = CafKernel::new(coeffs1, coeffs2, duration);
    let values = dopplers
        .par_iter()
        .map(|&nu| {
            delays
                .iter()
                .map(|&tau| kernel.eval(tau, nu))
                .collect()
        })
        .collect();
    Ok(AmbiguitySurface {
        delays: delays.to_vec(),
        dopplers: dopplers.to_vec(),
        values,
    })
}

/// Numeric ambiguity surface by trapezoidal quadrature on the sample grid.
///
/// Every row covers the full lag axis `k dt`, `k = -N..=N`; `delay_stride`
/// keeps every `delay_stride`-th lag (always including zero).
pub fn ambiguity_numeric(
    w1: &SampledWaveform,
    w2: &SampledWaveform,
    delay_stride: usize,
    dopplers: &[f64],
) -> Result<AmbiguitySurface> {
    let grid = w1.grid();
    if grid != w2.grid() {
        return Err(Error::GridMismatch);
    }
    if delay_stride == 0 {
        return Err(Error::InvalidGrid("delay stride must be positive".into()));
    }
    let n = grid.num_samples();
    let engine = Correlator::new(n);
    let spec2 = engine.spectrum(w2);
    let all_delays = delay_axis(grid);
    // Lag index N is tau = 0; keep lags whose offset from it divides the stride.
    let keep: Vec<usize> = (0..all_delays.len())
        .filter(|i| i.abs_diff(n) % delay_stride == 0)
        .collect();
    let delays: Vec<f64> = keep.iter().map(|&i| all_delays[i]).collect();

    let values = dopplers
        .par_iter()
        .map(|&nu| {
            let shifted = doppler_shift(w1, nu);
            let spec1 = engine.spectrum(&shifted);
            let row = engine.correlate(&shifted, &spec1, w2, &spec2);
            keep.iter()
                .map(|&i| row[i] * Complex64::from_polar(1.0, PI * nu * all_delays[i]))
                .collect()
        })
        .collect();
    Ok(AmbiguitySurface {
        delays,
        dopplers: dopplers.to_vec(),
        values,
    })
}

/// `s(t) exp(j 2 pi nu t)` on the same grid (energy unchanged).
fn doppler_shift(w: &SampledWaveform, nu: f64) -> SampledWaveform {
    let grid = *w.grid();
    let samples = w
        .samples()
        .iter()
        .enumerate()
        .map(|(n, s)| s * Complex64::from_polar(1.0, 2.0 * PI * nu * grid.time(n)))
        .collect();
    let end_t = grid.t0() + grid.duration();
    let end = w.end_sample() * Complex64::from_polar(1.0, 2.0 * PI * nu * end_t);
    SampledWaveform::new(grid, samples, end).expect("shifted copy of a valid waveform")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbf::gbf;
    use crate::synthesis::{sinc, synthesize};
    use crate::waveform::{SamplingGrid, Symmetry};

    fn params(idx: &[f64]) -> WaveformParams {
        WaveformParams::new(1.0, Symmetry::Even, idx.to_vec()).unwrap()
    }

    #[test]
    fn cw_surface_matches_analytic() {
        let p = params(&[0.0]);
        let c = gbf(&p).unwrap();
        let delays: Vec<f64> = (-8..=8).map(|i| i as f64 / 8.0).collect();
        let dopplers = default_doppler_grid(1.0);
        let s = ambiguity_surface(&c, &c, &p, &delays, &dopplers).unwrap();
        for (i, &nu) in dopplers.iter().enumerate() {
            for (j, &tau) in delays.iter().enumerate() {
                let l = 1.0 - tau.abs();
                let want = (l * sinc(PI * nu * l)).abs();
                assert!((s.values[i][j].norm() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_peak_at_origin() {
        let p = params(&[2.0, -1.5, 0.3]);
        let c = gbf(&p).unwrap();
        let s = ambiguity_surface(&c, &c, &p, &[0.0], &[0.0]).unwrap();
        assert!((s.values[0][0].norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn numeric_rows_match_closed_form() {
        let p = params(&[1.5, 0.8]);
        let c = gbf(&p).unwrap();
        let w = synthesize(&p, &SamplingGrid::new(1.0, 512).unwrap()).unwrap();
        let dopplers = [-3.25, 0.0, 0.5, 7.0];
        let num = ambiguity_numeric(&w, &w, 16, &dopplers).unwrap();
        let closed = ambiguity_surface(&c, &c, &p, &num.delays, &dopplers).unwrap();
        for (rn, rc) in num.values.iter().zip(&closed.values) {
            for (a, b) in rn.iter().zip(rc) {
                assert!((a - b).norm() < 1e-3, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_doppler_row_is_the_ccf() {
        let p = params(&[1.0, 0.5]);
        let q = params(&[-0.7, 1.1]);
        let (c1, c2) = (gbf(&p).unwrap(), gbf(&q).unwrap());
        let delays: Vec<f64> = (-10..=10).map(|i| i as f64 / 10.0).collect();
        let s = ambiguity_surface(&c1, &c2, &p, &delays, &[-1.0, 0.0, 1.0]).unwrap();
        let r = super::super::correlation::ccf_closed_form(&c1, &c2, &p, &delays).unwrap();
        let row = &s.values[s.zero_doppler_row()];
        for (a, b) in row.iter().zip(&r.values) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}
