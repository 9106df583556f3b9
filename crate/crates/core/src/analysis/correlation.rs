//! Auto- and cross-correlation functions.
//!
//! The correlation of two pulses on `[-T/2, T/2]` is
//!
//! ```text
//! R(tau) = int s1(t - tau/2) s2*(t + tau/2) dt = int s1(u) s2*(u + tau) du
//! ```
//!
//! Numeric results live on the lag grid `tau_k = k dt`, `k = -N..=N`, and are
//! trapezoidal quadratures over the exact overlap interval. The interval is
//! closed at `+T/2` with each waveform's end sample, which makes the rule
//! second-order accurate for rectangular pulses. Closed-form results are
//! double sums over GBF coefficients.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::synthesis::sinc;
use crate::waveform::{GbfCoefficients, SampledWaveform, SamplingGrid, WaveformParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationKind {
    Auto,
    Cross,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    /// Ascending delays in seconds.
    pub delays: Vec<f64>,
    pub values: Vec<Complex64>,
    pub kind: CorrelationKind,
    /// Pulse duration `T` the delays refer to.
    pub duration: f64,
}

impl CorrelationResult {
    /// `|R(tau)|^2`
    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Peak `|R|^2` over the axis.
    pub fn peak_power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max)
    }

    /// Value at the delay closest to zero.
    pub fn at_zero(&self) -> Complex64 {
        let idx = self
            .delays
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.values[idx]
    }
}

/// Lag axis `k dt` for `k = -N..=N`, covering `[-T, T]`.
pub fn delay_axis(grid: &SamplingGrid) -> Vec<f64> {
    let n = grid.num_samples() as i64;
    (-n..=n).map(|k| k as f64 * grid.dt()).collect()
}

/// FFT correlation engine for waveforms of a fixed sample count.
///
/// Holds the forward/inverse plans so repeated correlations (as in the
/// optimizer) do not re-plan.
#[derive(Clone)]
pub struct Correlator {
    n: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Correlator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Correlator")
            .field("n", &self.n)
            .field("len", &self.len)
            .finish()
    }
}

impl Correlator {
    pub fn new(num_samples: usize) -> Self {
        let len = (2 * num_samples).next_power_of_two();
        let mut planner = FftPlanner::new();
        Correlator {
            n: num_samples,
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn num_samples(&self) -> usize {
        self.n
    }

    /// Zero-padded FFT of the samples.
    pub fn spectrum(&self, w: &SampledWaveform) -> Vec<Complex64> {
        debug_assert_eq!(w.len(), self.n);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        buf[..self.n].copy_from_slice(w.samples());
        self.forward.process(&mut buf);
        buf
    }

    /// Correlation values for lags `-N..=N` given both waveforms and their
    /// spectra from [`Correlator::spectrum`].
    pub fn correlate(
        &self,
        w1: &SampledWaveform,
        spec1: &[Complex64],
        w2: &SampledWaveform,
        spec2: &[Complex64],
    ) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = spec2
            .iter()
            .zip(spec1)
            .map(|(b, a)| b * a.conj())
            .collect();
        self.inverse.process(&mut buf);
        // buf[k] = len * sum_n s2[n + k] conj(s1[n]); the raw lag sum is its conjugate.
        let scale = 1.0 / self.len as f64;
        let n = self.n as i64;
        let dt = w1.grid().dt();
        (-n..=n)
            .map(|k| {
                let idx = k.rem_euclid(self.len as i64) as usize;
                let raw = buf[idx].conj() * scale;
                (raw + end_correction(w1, w2, k)) * dt
            })
            .collect()
    }
}

/// Difference between the closed trapezoidal rule and the raw lag sum at
/// lag `k`, in units of `dt`.
fn end_correction(w1: &SampledWaveform, w2: &SampledWaveform, k: i64) -> Complex64 {
    let n = w1.len();
    let j = k.unsigned_abs() as usize;
    if j >= n {
        return Complex64::new(0.0, 0.0);
    }
    let (first, last) = if k >= 0 {
        (
            w1.samples()[0] * w2.samples()[j].conj(),
            w1.at_closed(n - j) * w2.end_sample().conj(),
        )
    } else {
        (
            w1.samples()[j] * w2.samples()[0].conj(),
            w1.end_sample() * w2.at_closed(n - j).conj(),
        )
    };
    0.5 * (last - first)
}

fn check_grids(w1: &SampledWaveform, w2: &SampledWaveform) -> Result<()> {
    let (g1, g2) = (w1.grid(), w2.grid());
    if g1.num_samples() != g2.num_samples() || (g1.dt() - g2.dt()).abs() > 1e-12 * g1.dt() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn kind_of(w1: &SampledWaveform, w2: &SampledWaveform) -> CorrelationKind {
    if std::ptr::eq(w1, w2) || w1 == w2 {
        CorrelationKind::Auto
    } else {
        CorrelationKind::Cross
    }
}

/// Numeric correlation via FFT. Waveforms must share a grid.
pub fn ccf_numeric(w1: &SampledWaveform, w2: &SampledWaveform) -> Result<CorrelationResult> {
    check_grids(w1, w2)?;
    let engine = Correlator::new(w1.len());
    let s1 = engine.spectrum(w1);
    let s2 = if std::ptr::eq(w1, w2) { s1.clone() } else { engine.spectrum(w2) };
    Ok(CorrelationResult {
        delays: delay_axis(w1.grid()),
        values: engine.correlate(w1, &s1, w2, &s2),
        kind: kind_of(w1, w2),
        duration: w1.grid().duration(),
    })
}

pub fn acf_numeric(w: &SampledWaveform) -> CorrelationResult {
    ccf_numeric(w, w).expect("a waveform shares its own grid")
}

/// Direct `O(N^2)` evaluation of the same quadrature as [`ccf_numeric`].
pub fn ccf_direct(w1: &SampledWaveform, w2: &SampledWaveform) -> Result<CorrelationResult> {
    check_grids(w1, w2)?;
    let n = w1.len() as i64;
    let dt = w1.grid().dt();
    let (a, b) = (w1.samples(), w2.samples());
    let values = (-n..=n)
        .map(|k| {
            let mut raw = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let m = i + k;
                if (0..n).contains(&m) {
                    raw += a[i as usize] * b[m as usize].conj();
                }
            }
            (raw + end_correction(w1, w2, k)) * dt
        })
        .collect();
    Ok(CorrelationResult {
        delays: delay_axis(w1.grid()),
        values,
        kind: kind_of(w1, w2),
        duration: w1.grid().duration(),
    })
}

/// Nonzero coefficients with their orders.
pub(crate) fn significant(coeffs: &GbfCoefficients) -> Vec<(i64, Complex64)> {
    coeffs.orders().filter(|(_, c)| c.norm() > 1e-15).collect()
}

/// Direct double sum, kept as the reference for [`CafKernel`].
#[cfg(test)]
pub(crate) fn caf_closed_point(
    c1: &[(i64, Complex64)],
    c2: &[(i64, Complex64)],
    duration: f64,
    tau: f64,
    nu: f64,
) -> Complex64 {
    let overlap = duration - tau.abs();
    if overlap <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let frac = overlap / duration;
    let p1: Vec<(i64, Complex64)> = c1
        .iter()
        .map(|&(l, c)| (l, c * Complex64::from_polar(1.0, -PI * l as f64 * tau / duration)))
        .collect();
    let p2: Vec<(i64, Complex64)> = c2
        .iter()
        .map(|&(l, c)| (l, c.conj() * Complex64::from_polar(1.0, -PI * l as f64 * tau / duration)))
        .collect();
    let (lo1, hi1) = (p1.first().map_or(0, |p| p.0), p1.last().map_or(0, |p| p.0));
    let (lo2, hi2) = (p2.first().map_or(0, |p| p.0), p2.last().map_or(0, |p| p.0));
    let d_lo = lo1 - hi2;
    let d_hi = hi1 - lo2;
    let weights: Vec<f64> = (d_lo..=d_hi)
        .map(|d| sinc(PI * frac * (nu * duration + d as f64)))
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for &(l, a) in &p1 {
        for &(lp, b) in &p2 {
            acc += a * b * weights[(l - lp - d_lo) as usize];
        }
    }
    acc * frac
}

/// Closed-form cross-ambiguity function
///
/// ```text
/// chi(tau, nu) = (L/T) sum_{l, l'} c1_l conj(c2_l') exp(-j pi (l + l') tau / T)
///                      sinc(pi (L/T) (nu T + l - l')),   L = T - |tau|
/// ```
///
/// For a fixed `(tau, nu)` the sum is `sum_d w_d q_d` where `q_d` is the
/// correlation over orders of the phase-rotated coefficient sequences, so
/// one length-`M` FFT correlation replaces the `L1 L2` double loop.
pub(crate) struct CafKernel {
    c1: Vec<Complex64>,
    lo1: i64,
    c2: Vec<Complex64>,
    lo2: i64,
    duration: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len: usize,
}

fn dense(coeffs: &GbfCoefficients) -> (i64, Vec<Complex64>) {
    let sig = significant(coeffs);
    match (sig.first(), sig.last()) {
        (Some(&(lo, _)), Some(&(hi, _))) => (lo, (lo..=hi).map(|l| coeffs.get(l)).collect()),
        _ => (0, vec![Complex64::new(0.0, 0.0)]),
    }
}

impl CafKernel {
    pub(crate) fn new(coeffs1: &GbfCoefficients, coeffs2: &GbfCoefficients, duration: f64) -> Self {
        let (lo1, c1) = dense(coeffs1);
        let (lo2, c2) = dense(coeffs2);
        let len = (c1.len() + c2.len() - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        CafKernel {
            c1,
            lo1,
            c2,
            lo2,
            duration,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            len,
        }
    }

    pub(crate) fn eval(&self, tau: f64, nu: f64) -> Complex64 {
        let t = self.duration;
        let overlap = t - tau.abs();
        if overlap <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let frac = overlap / t;
        let zero = Complex64::new(0.0, 0.0);
        let (l1, l2) = (self.c1.len(), self.c2.len());
        let mut x = vec![zero; self.len];
        let mut y = vec![zero; self.len];
        for (i, c) in self.c1.iter().enumerate() {
            let l = (self.lo1 + i as i64) as f64;
            x[i] = c * Complex64::from_polar(1.0, -PI * l * tau / t);
        }
        // reversed, so the linear convolution of x and y is the order correlation
        for (j, c) in self.c2.iter().enumerate() {
            let l = (self.lo2 + j as i64) as f64;
            y[l2 - 1 - j] = c.conj() * Complex64::from_polar(1.0, -PI * l * tau / t);
        }
        self.forward.process(&mut x);
        self.forward.process(&mut y);
        for (a, b) in x.iter_mut().zip(&y) {
            *a *= b;
        }
        self.inverse.process(&mut x);
        // x[n] / len = sum_{i - j = n - (l2 - 1)} ..., with order difference
        // d = lo1 - lo2 + i - j
        let base = self.lo1 - self.lo2 - (l2 as i64 - 1);
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, v) in x.iter().take(l1 + l2 - 1).enumerate() {
            let d = (base + n as i64) as f64;
            acc += v * sinc(PI * frac * (nu * t + d));
        }
        acc * (frac / self.len as f64)
    }
}

fn closed_form(
    c1: &GbfCoefficients,
    c2: &GbfCoefficients,
    params: &WaveformParams,
    delays: &[f64],
    kind: CorrelationKind,
) -> Result<CorrelationResult> {
    if !params.is_rectangular() {
        return Err(Error::TaperedClosedForm);
    }
    let duration = params.duration();
    let kernel = CafKernel::new(c1, c2, duration);
    let values = delays
        .par_iter()
        .map(|&tau| kernel.eval(tau, 0.0))
        .collect();
    Ok(CorrelationResult {
        delays: delays.to_vec(),
        values,
        kind,
        duration,
    })
}
/// Closed-form ACF of a rectangular MTSFM pulse at the given delays.
pub fn acf_closed_form(
    coeffs: &GbfCoefficients,
    params: &WaveformParams,
    delays: &[f64],
) -> Result<CorrelationResult> {
    closed_form(coeffs, coeffs, params, delays, CorrelationKind::Auto)
}

/// Closed-form CCF; `coeffs1` belongs to the first (un-conjugated) waveform.
pub fn ccf_closed_form(
    coeffs1: &GbfCoefficients,
    coeffs2: &GbfCoefficients,
    params: &WaveformParams,
    delays: &[f64],
) -> Result<CorrelationResult> {
    let kind = if coeffs1 == coeffs2 {
        CorrelationKind::Auto
    } else {
        CorrelationKind::Cross
    };
    closed_form(coeffs1, coeffs2, params, delays, kind)
}

/// Largest `|a - b|` between two results on the same axis.
pub fn max_abs_difference(a: &CorrelationResult, b: &CorrelationResult) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
