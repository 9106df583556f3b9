//! Modulation and phase functions, time-series synthesis, swept bandwidth,
//! TBP scaling, random initialization and spectra.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{GbfCoefficients, SampledWaveform, SamplingGrid, Symmetry, WaveformParams};

fn check_support(params: &WaveformParams, t: f64) -> Result<()> {
    let half = 0.5 * params.duration();
    if !(t.abs() <= half * (1.0 + 1e-12)) {
        return Err(Error::OutsideSupport { t, half });
    }
    Ok(())
}

/// Instantaneous frequency `m(t)` in Hz.
pub fn modulation_function(params: &WaveformParams, t: f64) -> Result<f64> {
    check_support(params, t)?;
    Ok(inst_freq(params, t))
}

/// Phase `phi(t)` in radians; `phi' = 2 pi m`.
pub fn phase_function(params: &WaveformParams, t: f64) -> Result<f64> {
    check_support(params, t)?;
    Ok(phase(params, t))
}

pub(crate) fn inst_freq(params: &WaveformParams, t: f64) -> f64 {
    let w = 2.0 * PI * t / params.duration();
    let harmonics: f64 = (1..=params.num_harmonics())
        .map(|k| {
            let amp = params.harmonic_amplitude(k);
            match params.symmetry() {
                Symmetry::Even => amp * (k as f64 * w).cos(),
                Symmetry::Odd => amp * (k as f64 * w).sin(),
            }
        })
        .sum();
    0.5 * params.a0() + harmonics
}

pub(crate) fn phase(params: &WaveformParams, t: f64) -> f64 {
    let w = 2.0 * PI * t / params.duration();
    let harmonics: f64 = params
        .indices()
        .iter()
        .enumerate()
        .map(|(i, &idx)| {
            let kw = (i + 1) as f64 * w;
            match params.symmetry() {
                Symmetry::Even => idx * kw.sin(),
                Symmetry::Odd => -idx * kw.cos(),
            }
        })
        .sum();
    PI * params.a0() * t + harmonics
}

/// First and second time derivatives of `m(t)`.
fn inst_freq_derivatives(params: &WaveformParams, t: f64) -> (f64, f64) {
    let omega = 2.0 * PI / params.duration();
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for k in 1..=params.num_harmonics() {
        let amp = params.harmonic_amplitude(k);
        let wk = omega * k as f64;
        let (s, c) = (wk * t).sin_cos();
        match params.symmetry() {
            Symmetry::Even => {
                d1 -= amp * wk * s;
                d2 -= amp * wk * wk * c;
            }
            Symmetry::Odd => {
                d1 += amp * wk * c;
                d2 -= amp * wk * wk * s;
            }
        }
    }
    (d1, d2)
}

/// `sin`/`cos` of `2 pi j / n` for `j in 0..n`.
pub(crate) fn unit_circle_table(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|j| (2.0 * PI * j as f64 / n as f64).sin_cos())
        .collect()
}

/// Harmonic part of the phase at every grid point.
///
/// Grid times are `t_n = -T/2 + n T / N`, so `2 pi k t_n / T = 2 pi (k n mod N) / N - pi k`
/// and a single table of size `N` serves every harmonic exactly.
pub(crate) fn phase_on_grid(params: &WaveformParams, grid: &SamplingGrid) -> Vec<f64> {
    let n = grid.num_samples();
    let table = unit_circle_table(n);
    let symmetry = params.symmetry();
    let slope = PI * params.a0();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, &idx) in params.indices().iter().enumerate() {
                let k = j + 1;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let (s, c) = table[(k * i) % n];
                acc += match symmetry {
                    Symmetry::Even => sign * idx * s,
                    Symmetry::Odd => -sign * idx * c,
                };
            }
            acc + slope * grid.time(i)
        })
        .collect()
}

fn phase_at_end(params: &WaveformParams) -> f64 {
    let half = 0.5 * params.duration();
    let harmonics: f64 = match params.symmetry() {
        // sin(pi k) = 0
        Symmetry::Even => 0.0,
        Symmetry::Odd => params
            .indices()
            .iter()
            .enumerate()
            .map(|(i, &b)| if i % 2 == 0 { b } else { -b })
            .sum(),
    };
    PI * params.a0() * half + harmonics
}

/// Unit-energy samples `a(t_n) exp(j phi(t_n))`.
///
/// The rectangular taper gives a constant modulus `1/sqrt(T)`; a Tukey taper
/// is applied to the envelope and the result renormalized.
pub fn synthesize(params: &WaveformParams, grid: &SamplingGrid) -> Result<SampledWaveform> {
    if (grid.duration() - params.duration()).abs() > 1e-9 * params.duration() {
        return Err(Error::InvalidGrid(format!(
            "grid spans {} s but the pulse lasts {} s",
            grid.duration(),
            params.duration()
        )));
    }
    let phases = phase_on_grid(params, grid);
    envelope_from_phase(params, grid, &phases, phase_at_end(params))
}

pub(crate) fn envelope_from_phase(
    params: &WaveformParams,
    grid: &SamplingGrid,
    phases: &[f64],
    end_phase: f64,
) -> Result<SampledWaveform> {
    let amp = 1.0 / params.duration().sqrt();
    let taper = params.taper();
    let duration = params.duration();
    let samples = if params.is_rectangular() {
        phases.iter().map(|&p| Complex64::from_polar(amp, p)).collect()
    } else {
        phases
            .iter()
            .enumerate()
            .map(|(n, &p)| Complex64::from_polar(amp * taper.gain(grid.time(n), duration), p))
            .collect()
    };
    let end = Complex64::from_polar(amp * taper.gain(0.5 * duration, duration), end_phase);
    SampledWaveform::new(*grid, samples, end)?.normalized()
}

/// Dense grid used when a function needs `m(t)` but was not handed a grid.
pub(crate) fn probe_grid(params: &WaveformParams) -> SamplingGrid {
    let n = (64 * params.num_harmonics()).max(1024).next_power_of_two();
    SamplingGrid::new(params.duration(), n).expect("duration validated by WaveformParams")
}

/// `(min m(t), max m(t))` in Hz.
///
/// Discrete extrema of `m` on `grid` are refined with Newton steps on
/// `m'(t) = 0`, so the result does not depend on the grid once the grid
/// resolves harmonic `K` (`dt <= T / (8K)`).
pub fn frequency_extent(params: &WaveformParams, grid: &SamplingGrid) -> (f64, f64) {
    let n = grid.num_samples();
    let values: Vec<f64> = grid.times().map(|t| inst_freq(params, t)).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let prev = values[(i + n - 1) % n];
        let next = values[(i + 1) % n];
        let v = values[i];
        lo = lo.min(v);
        hi = hi.max(v);
        let is_max = v >= prev && v >= next;
        let is_min = v <= prev && v <= next;
        if is_max || is_min {
            let refined = refine_extremum(params, grid.time(i), grid.dt());
            if is_max {
                hi = hi.max(refined);
            }
            if is_min {
                lo = lo.min(refined);
            }
        }
    }
    (lo, hi)
}

fn refine_extremum(params: &WaveformParams, t_start: f64, dt: f64) -> f64 {
    let mut t = t_start;
    for _ in 0..20 {
        let (d1, d2) = inst_freq_derivatives(params, t);
        if d2 == 0.0 {
            break;
        }
        let step = d1 / d2;
        let next = (t - step).clamp(t_start - dt, t_start + dt);
        if (next - t).abs() <= 1e-15 * params.duration() {
            t = next;
            break;
        }
        t = next;
    }
    inst_freq(params, t)
}

/// Swept bandwidth `max m(t) - min m(t)` in Hz.
pub fn swept_bandwidth(params: &WaveformParams, grid: &SamplingGrid) -> f64 {
    let (lo, hi) = frequency_extent(params, grid);
    (hi - lo).max(0.0)
}

/// `T * swept_bandwidth`, measured on the default probe grid.
pub fn time_bandwidth_product(params: &WaveformParams) -> f64 {
    params.duration() * swept_bandwidth(params, &probe_grid(params))
}

/// Rescale the whole index vector so that `T * df` equals `target_tbp`.
///
/// `m(t) - a0/2` is linear in the indices, so one multiplicative step is exact.
pub fn scale_to_tbp(params: &WaveformParams, target_tbp: f64) -> Result<WaveformParams> {
    if !(target_tbp.is_finite() && target_tbp > 0.0) {
        return Err(Error::InvalidParams(format!("target TBP {target_tbp} must be positive")));
    }
    let current = time_bandwidth_product(params);
    if current <= 0.0 {
        return Err(Error::ZeroBandwidth);
    }
    let factor = target_tbp / current;
    params.with_indices(params.indices().iter().map(|v| v * factor).collect())
}

/// Weighting of the i.i.d. standard-normal draws used for random indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitWeighting {
    /// `index_k = z_k`
    Flat,
    /// `index_k = z_k / k`, i.e. i.i.d. harmonic amplitudes `a_k`.
    #[default]
    OneOverK,
}

/// `k` Gaussian modulation indices drawn from `rng`.
pub fn random_indices<R: Rng + ?Sized>(rng: &mut R, k: usize, weighting: InitWeighting) -> Vec<f64> {
    (1..=k)
        .map(|h| {
            let z: f64 = rng.sample(StandardNormal);
            match weighting {
                InitWeighting::Flat => z,
                InitWeighting::OneOverK => z / h as f64,
            }
        })
        .collect()
}

/// Deterministic RNG used by every seeded draw in the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One seeded random waveform scaled to `target_tbp` (rectangular taper).
pub fn random_waveform(
    seed: u64,
    k: usize,
    duration: f64,
    symmetry: Symmetry,
    target_tbp: f64,
    weighting: InitWeighting,
) -> Result<WaveformParams> {
    let mut rng = seeded_rng(seed);
    let raw = WaveformParams::new(duration, symmetry, random_indices(&mut rng, k, weighting))?;
    scale_to_tbp(&raw, target_tbp)
}

/// Spectrum samples `S(f)` on a frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Frequency spacing in Hz (mean spacing for irregular axes).
    pub df: f64,
}

impl SpectrumGrid {
    /// Energy density spectrum `|S(f)|^2`.
    pub fn eds(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Riemann sum `sum |S|^2 df`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.df
    }
}

fn mean_spacing(freqs: &[f64]) -> f64 {
    if freqs.len() < 2 {
        0.0
    } else {
        (freqs[freqs.len() - 1] - freqs[0]) / (freqs.len() - 1) as f64
    }
}

pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `S(f) = sqrt(T) sum_l c_l sinc(pi T (f - l/T))` for a rectangular pulse.
pub fn spectrum_closed_form(
    coeffs: &GbfCoefficients,
    params: &WaveformParams,
    freqs: &[f64],
) -> Result<SpectrumGrid> {
    if !params.is_rectangular() {
        return Err(Error::TaperedClosedForm);
    }
    let duration = params.duration();
    let root_t = duration.sqrt();
    let values = freqs
        .iter()
        .map(|&f| {
            let x = duration * f;
            let sum: Complex64 = coeffs
                .orders()
                .map(|(l, c)| c * sinc(PI * (x - l as f64)))
                .sum();
            sum * root_t
        })
        .collect();
    Ok(SpectrumGrid {
        freqs: freqs.to_vec(),
        values,
        df: mean_spacing(freqs),
    })
}

/// FFT spectrum of the samples, zero-padded to at least `pad * N` points and
/// returned on an ascending frequency axis spanning the sample rate.
///
/// This is the plain Riemann sum `dt sum s_n exp(-j 2 pi f t_n)`, so
/// `sum |S|^2 df` equals the sample energy exactly.
pub fn spectrum_numeric(w: &SampledWaveform, pad: usize) -> SpectrumGrid {
    let grid = w.grid();
    let n = grid.num_samples();
    let len = (n * pad.max(1)).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    buf[..n].copy_from_slice(w.samples());
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);

    let dt = grid.dt();
    let df = 1.0 / (len as f64 * dt);
    let half = len / 2;
    let mut freqs = Vec::with_capacity(len);
    let mut values = Vec::with_capacity(len);
    for i in 0..len {
        let bin = (i + half) % len;
        let f = (bin as f64 - if bin >= half { len as f64 } else { 0.0 }) * df;
        let rot = Complex64::from_polar(dt, -2.0 * PI * f * grid.t0());
        freqs.push(f);
        values.push(buf[bin] * rot);
    }
    SpectrumGrid { freqs, values, df }
}

/// Spectrum at arbitrary frequencies by trapezoidal quadrature of the Fourier
/// integral over `[-T/2, T/2]`, closed with the end sample at `+T/2`.
pub fn spectrum_at(w: &SampledWaveform, freqs: &[f64]) -> SpectrumGrid {
    let grid = w.grid();
    let dt = grid.dt();
    let t0 = grid.t0();
    let t_end = t0 + grid.duration();
    let samples = w.samples();
    let values = freqs
        .iter()
        .map(|&f| {
            let step = Complex64::from_polar(1.0, -2.0 * PI * f * dt);
            let start = Complex64::from_polar(1.0, -2.0 * PI * f * t0);
            let mut rot = start;
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, s) in samples.iter().enumerate() {
                if n % 64 == 0 {
                    rot = Complex64::from_polar(1.0, -2.0 * PI * f * grid.time(n));
                }
                acc += s * rot;
                rot *= step;
            }
            let end_rot = Complex64::from_polar(1.0, -2.0 * PI * f * t_end);
            (acc + 0.5 * (w.end_sample() * end_rot - samples[0] * start)) * dt
        })
        .collect();
    SpectrumGrid {
        freqs: freqs.to_vec(),
        values,
        df: mean_spacing(freqs),
    }
}

/// Short-time power spectrum (linear power, Hann window).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Window-center times, seconds.
    pub times: Vec<f64>,
    /// Ascending bin frequencies, Hz.
    pub freqs: Vec<f64>,
    /// `power[f][t]`
    pub power: Vec<Vec<f64>>,
}

pub const SPECTROGRAM_WINDOW: usize = 128;

/// Spectrogram with `window` samples per frame and 75% overlap.
pub fn spectrogram(w: &SampledWaveform, window: usize) -> Spectrogram {
    let grid = w.grid();
    let n = grid.num_samples();
    let win = window.min(n).max(2);
    let hop = (win / 4).max(1);
    let hann: Vec<f64> = (0..win)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / win as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(win);
    let half = win / 2;
    let freqs = (0..win)
        .map(|i| (i as f64 - half as f64) / (win as f64 * grid.dt()))
        .collect();
    let mut times = Vec::new();
    let mut power = vec![Vec::new(); win];
    let mut start = 0;
    while start + win <= n {
        let mut frame: Vec<Complex64> = w.samples()[start..start + win]
            .iter()
            .zip(&hann)
            .map(|(s, h)| s * h)
            .collect();
        fft.process(&mut frame);
        for (i, row) in power.iter_mut().enumerate() {
            row.push(frame[(i + half) % win].norm_sqr());
        }
        times.push(grid.time(start) + 0.5 * win as f64 * grid.dt());
        start += hop;
    }
    Spectrogram { times, freqs, power }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn even(t: f64, idx: &[f64]) -> WaveformParams {
        WaveformParams::new(t, Symmetry::Even, idx.to_vec()).unwrap()
    }

    #[test]
    fn modulation_examples() {
        let p = even(1.0, &[0.0, 0.0]);
        assert_eq!(modulation_function(&p, 0.3).unwrap(), 0.0);
        let odd = WaveformParams::new(1.0, Symmetry::Odd, vec![1.3, -0.4]).unwrap();
        assert_eq!(modulation_function(&odd, 0.0).unwrap(), 0.0);
        let p = even(1.0, &[1.0]);
        assert!((modulation_function(&p, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            modulation_function(&p, 0.51),
            Err(Error::OutsideSupport { .. })
        ));
    }

    #[test]
    fn phase_examples() {
        let p = even(1.0, &[0.0]);
        assert_eq!(phase_function(&p, 0.2).unwrap(), 0.0);
        let p = even(1.0, &[1.0]);
        assert!((phase_function(&p, 0.25).unwrap() - 1.0).abs() < 1e-15);
        assert!(phase_function(&p, -0.7).is_err());
    }

    #[test]
    fn grid_phase_matches_direct_phase() {
        let p = even(2.0, &[0.8, -0.3, 0.2]).with_a0(1.7).unwrap();
        let g = SamplingGrid::new(2.0, 256).unwrap();
        let fast = phase_on_grid(&p, &g);
        for (n, v) in fast.iter().enumerate() {
            assert!((v - phase(&p, g.time(n))).abs() < 1e-12);
        }
        assert!((phase_at_end(&p) - phase(&p, 1.0)).abs() < 1e-12);
        let odd = WaveformParams::new(2.0, Symmetry::Odd, vec![0.8, -0.3, 0.2]).unwrap();
        assert!((phase_at_end(&odd) - phase(&odd, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn swept_bandwidth_examples() {
        let g = SamplingGrid::new(1.0, 1024).unwrap();
        assert_eq!(swept_bandwidth(&even(1.0, &[0.0]), &g), 0.0);
        assert!((swept_bandwidth(&even(1.0, &[1.0]), &g) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn extent_refinement_is_grid_independent() {
        let p = even(1.0, &[0.9, -0.7, 0.35, 0.2, -0.1]);
        let coarse = swept_bandwidth(&p, &SamplingGrid::new(1.0, 64).unwrap());
        let fine = swept_bandwidth(&p, &SamplingGrid::new(1.0, 1 << 16).unwrap());
        assert!((coarse - fine).abs() < 1e-10 * fine, "{coarse} vs {fine}");
    }

    #[test]
    fn scale_to_tbp_examples() {
        let p = even(1.0, &[12.5, 3.0, -2.0]);
        let tbp = time_bandwidth_product(&p);
        let doubled = scale_to_tbp(&p, 2.0 * tbp).unwrap();
        for (a, b) in p.indices().iter().zip(doubled.indices()) {
            assert!((2.0 * a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
        let same = scale_to_tbp(&p, tbp).unwrap();
        for (a, b) in p.indices().iter().zip(same.indices()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            scale_to_tbp(&even(1.0, &[0.0]), 100.0),
            Err(Error::ZeroBandwidth)
        ));
    }

    #[test]
    fn cw_pulse_is_constant() {
        let p = even(0.5, &[0.0, 0.0]);
        let g = SamplingGrid::new(0.5, 128).unwrap();
        let w = synthesize(&p, &g).unwrap();
        let want = 1.0 / (128.0 * g.dt()).sqrt();
        for s in w.samples() {
            assert!((s - Complex64::new(want, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn tukey_synthesis_is_unit_energy_and_zero_at_edges() {
        let p = even(1.0, &[2.0, 1.0])
            .with_taper(crate::waveform::TaperSpec::tukey(0.2).unwrap())
            .unwrap();
        let g = SamplingGrid::new(1.0, 512).unwrap();
        let w = synthesize(&p, &g).unwrap();
        assert!((w.energy() - 1.0).abs() < 1e-12);
        assert_eq!(w.samples()[0].norm(), 0.0);
        assert_eq!(w.end_sample().norm(), 0.0);
    }

    #[test]
    fn random_waveform_is_deterministic() {
        let a = random_waveform(9, 16, 1.0, Symmetry::Even, 50.0, InitWeighting::OneOverK).unwrap();
        let b = random_waveform(9, 16, 1.0, Symmetry::Even, 50.0, InitWeighting::OneOverK).unwrap();
        assert_eq!(a, b);
        assert!((time_bandwidth_product(&a) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn spectrum_closed_form_rejects_taper() {
        let p = even(1.0, &[1.0])
            .with_taper(crate::waveform::TaperSpec::tukey(0.1).unwrap())
            .unwrap();
        let c = crate::gbf::gbf(&p).unwrap();
        assert!(matches!(
            spectrum_closed_form(&c, &p, &[0.0]),
            Err(Error::TaperedClosedForm)
        ));
    }

    #[test]
    fn cw_closed_form_spectrum_is_sinc() {
        let p = even(2.0, &[0.0]);
        let c = crate::gbf::gbf(&p).unwrap();
        let freqs: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.13).collect();
        let s = spectrum_closed_form(&c, &p, &freqs).unwrap();
        for (f, v) in freqs.iter().zip(&s.values) {
            let want = 2.0f64.sqrt() * sinc(PI * 2.0 * f);
            assert!((v.re - want).abs() < 1e-14 && v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn spectrogram_shape() {
        let p = even(1.0, &[3.0]);
        let g = SamplingGrid::new(1.0, 1024).unwrap();
        let w = synthesize(&p, &g).unwrap();
        let sg = spectrogram(&w, SPECTROGRAM_WINDOW);
        assert_eq!(sg.freqs.len(), 128);
        assert_eq!(sg.times.len(), (1024 - 128) / 32 + 1);
        assert!(sg.power.iter().all(|row| row.len() == sg.times.len()));
    }
}
