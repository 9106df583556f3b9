//! Generalized Bessel function coefficients of the MTSFM time series.
//!
//! On the pulse interval the unit-modulus signal `exp(j phi(t))` is a
//! trigonometric polynomial in `t`, so its Fourier-series coefficients
//!
//! ```text
//! c_l = (1/T) int_{-T/2}^{T/2} exp(j phi(t)) exp(-j 2 pi l t / T) dt
//! ```
//!
//! are the `K`-dimensional cylindrical GBFs of the modulation indices. Two
//! independent evaluations are provided:
//!
//! * [`gbf_via_fft`] samples one period and takes a single FFT. The
//!   trapezoidal rule is exact for trigonometric polynomials up to aliasing,
//!   and aliasing is negligible once the FFT length is several times the
//!   coefficient spread. This is the production path.
//! * [`gbf_via_convolution`] expands each harmonic with the Jacobi-Anger
//!   identity and convolves the per-harmonic Bessel sequences. Its cost grows
//!   with `K`, so it is limited to `K <= 8` and used as an oracle.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::bessel::bessel_j_orders;
use crate::error::{Error, Result};
use crate::waveform::{GbfCoefficients, Symmetry, WaveformParams};

/// Largest `K` accepted by the convolution oracle.
pub const MAX_ORACLE_HARMONICS: usize = 8;

/// Per-harmonic Bessel orders are dropped once `|J_m| < BESSEL_FLOOR`.
const BESSEL_FLOOR: f64 = 1e-14;

/// Smallest admissible `max_order` for `params`:
/// `ceil(sum_k k |index_k|) + 8`, widened by the spectral offset when `a0`
/// cannot be represented as an integer order shift.
pub fn truncation_bound(params: &WaveformParams) -> i64 {
    let (_, fractional) = order_offset(params);
    params.order_spread().ceil() as i64 + 8 + fractional.abs().ceil() as i64
}

/// Default retained order: `ceil(S) + max(8, ceil(0.1 S))` with
/// `S = sum_k k |index_k|`.
pub fn default_max_order(params: &WaveformParams) -> i64 {
    let spread = params.order_spread();
    let (_, fractional) = order_offset(params);
    spread.ceil() as i64 + 8i64.max((0.1 * spread).ceil() as i64) + fractional.abs().ceil() as i64
}

/// Split the `a0` spectral offset `a0 T / 2` (in orders) into an integer
/// shift and a remaining offset that has to be folded into the phase.
fn order_offset(params: &WaveformParams) -> (i64, f64) {
    let offset = 0.5 * params.a0() * params.duration();
    let rounded = offset.round();
    if (offset - rounded).abs() < 1e-9 {
        (rounded as i64, 0.0)
    } else {
        (0, offset)
    }
}

/// Coefficients `c_l` for `|l - s| <= max_order`, where `s = a0 T / 2` when that
/// is an integer (pure order shift) and `0` otherwise.
///
/// The taper of `params` is ignored: the coefficients describe the untapered
/// phase.
pub fn gbf_via_fft(params: &WaveformParams, max_order: i64) -> Result<GbfCoefficients> {
    let bound = truncation_bound(params);
    if max_order < bound {
        return Err(Error::TruncationRisk {
            requested: max_order,
            bound,
        });
    }
    let (shift, fractional) = order_offset(params);
    let aperiodic = fractional != 0.0;

    let len = (8 * max_order as usize).max(64).next_power_of_two();
    let table: Vec<(f64, f64)> = (0..len)
        .map(|j| (2.0 * PI * j as f64 / len as f64).sin_cos())
        .collect();
    let indices = params.indices();
    let duration = params.duration();
    let mut buf: Vec<Complex64> = (0..len)
        .map(|m| {
            // t_m = -T/2 + m T / len, so 2 pi k t_m / T = 2 pi k m / len - pi k
            let mut phase = 0.0;
            for (i, &idx) in indices.iter().enumerate() {
                let k = i + 1;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let (s, c) = table[(k * m) % len];
                phase += match params.symmetry() {
                    Symmetry::Even => sign * idx * s,
                    Symmetry::Odd => -sign * idx * c,
                };
            }
            if aperiodic {
                let t = -0.5 * duration + m as f64 * duration / len as f64;
                phase += PI * params.a0() * t;
            }
            Complex64::from_polar(1.0, phase)
        })
        .collect();

    let fft = FftPlanner::new().plan_fft_forward(len);
    fft.process(&mut buf);

    let scale = 1.0 / len as f64;
    let values = (-max_order..=max_order)
        .map(|l| {
            let bin = l.rem_euclid(len as i64) as usize;
            let sign = if l.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            buf[bin] * (sign * scale)
        })
        .collect();
    Ok(GbfCoefficients::new(shift - max_order, values, aperiodic))
}

/// Retained power below which [`gbf`] stops widening the order range.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

/// Coefficients starting from [`default_max_order`], widened until the
/// truncation tail is at most [`DEFAULT_TAIL_TOLERANCE`].
pub fn gbf(params: &WaveformParams) -> Result<GbfCoefficients> {
    let spread = params.order_spread().ceil() as i64;
    let mut margin = default_max_order(params) - spread;
    loop {
        let c = gbf_via_fft(params, spread + margin)?;
        if c.truncation_tail() <= DEFAULT_TAIL_TOLERANCE || margin > 4 * (spread + 8) {
            return Ok(c);
        }
        margin *= 2;
    }
}

/// Nested-sum GBF evaluated as a sequential convolution of per-harmonic
/// Bessel sequences, clipped to `|l| <= max_order`.
///
/// Harmonic `k` contributes `J_m(alpha_k)` at order `k m` for even symmetry,
/// and `(-j)^m J_m(beta_k)` for odd symmetry (Jacobi-Anger expansion of
/// `exp(-j beta_k cos(2 pi k t / T))`).
pub fn gbf_via_convolution(
    indices: &[f64],
    symmetry: Symmetry,
    max_order: i64,
) -> Result<GbfCoefficients> {
    if indices.len() > MAX_ORACLE_HARMONICS {
        return Err(Error::OracleTooLarge {
            got: indices.len(),
            max: MAX_ORACLE_HARMONICS,
        });
    }
    if max_order < 0 {
        return Err(Error::InvalidParams(format!("max order {max_order} is negative")));
    }

    // Sequence over orders [lo, lo + len)
    let mut lo: i64 = 0;
    let mut seq = vec![Complex64::new(1.0, 0.0)];

    for (i, &x) in indices.iter().enumerate() {
        let k = (i + 1) as i64;
        let factor = harmonic_factor(x, symmetry);
        let m_max = (factor.len() as i64 - 1) / 2;
        let new_lo = lo - k * m_max;
        let new_len = seq.len() + 2 * (k * m_max) as usize;
        let mut next = vec![Complex64::new(0.0, 0.0); new_len];
        for (a, &ca) in seq.iter().enumerate() {
            if ca == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (b, &fb) in factor.iter().enumerate() {
                let order = lo + a as i64 + k * (b as i64 - m_max);
                next[(order - new_lo) as usize] += ca * fb;
            }
        }
        lo = new_lo;
        seq = next;
    }

    let values = (-max_order..=max_order)
        .map(|l| {
            let idx = l - lo;
            if idx < 0 || idx as usize >= seq.len() {
                Complex64::new(0.0, 0.0)
            } else {
                seq[idx as usize]
            }
        })
        .collect();
    Ok(GbfCoefficients::new(-max_order, values, false))
}

/// Factor sequence for one harmonic over `m in [-M, M]`.
fn harmonic_factor(x: f64, symmetry: Symmetry) -> Vec<Complex64> {
    let n_max = x.abs().ceil() as usize + 40 + (10.0 * x.abs().cbrt()) as usize;
    let j = bessel_j_orders(x, n_max);
    let m_max = j
        .iter()
        .rposition(|v| v.abs() >= BESSEL_FLOOR)
        .unwrap_or(0);
    let mut out = Vec::with_capacity(2 * m_max + 1);
    for m in -(m_max as i64)..=(m_max as i64) {
        let abs_m = m.unsigned_abs() as usize;
        let mut jm = j[abs_m];
        if m < 0 && abs_m % 2 == 1 {
            jm = -jm;
        }
        let value = match symmetry {
            Symmetry::Even => Complex64::new(jm, 0.0),
            // (-j)^m
            Symmetry::Odd => match m.rem_euclid(4) {
                0 => Complex64::new(jm, 0.0),
                1 => Complex64::new(0.0, -jm),
                2 => Complex64::new(-jm, 0.0),
                _ => Complex64::new(0.0, jm),
            },
        };
        out.push(value);
    }
    out
}
