//! Scalar figures of merit: ISR, correlation area, RMS bandwidth, PAPR and
//! spectral efficiency.

use std::f64::consts::PI;

use serde::Serialize;

use super::correlation::{acf_numeric, CorrelationKind, CorrelationResult};
use crate::error::{Error, Result};
use crate::gbf::gbf;
use crate::synthesis::{frequency_extent, spectrum_closed_form, spectrum_numeric, synthesize};
use crate::waveform::{
    make_grid, GbfCoefficients, MetricsReport, SampledWaveform, SamplingGrid, WaveformParams,
};

/// Default level (relative to the peak) below which an ACF minimum counts
/// as the mainlobe null. Dips above it are treated as ripple on the
/// mainlobe shoulder.
///
/// The first null of a TBP-100 pseudo-random ACF typically sits between
/// -10 and -35 dB, so deeper thresholds skip past the mainlobe.
pub const DEFAULT_NULL_THRESHOLD_DB: f64 = -6.0;

/// Fraction of the coefficient power left outside [`moment_band`].
const MOMENT_BAND_TAIL: f64 = 1e-4;

/// Zero-padding factor for FFT spectra used by the spectral metrics.
const SPECTRUM_PAD: usize = 16;

/// `10 log10(x)`; `-inf` for zero.
pub fn power_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `10 log10(x)` clamped from below at `floor_db`.
pub fn power_db_floored(x: f64, floor_db: f64) -> f64 {
    if x > 0.0 {
        power_db(x).max(floor_db)
    } else {
        floor_db
    }
}

fn check_coverage(r: &CorrelationResult) -> Result<()> {
    let t = r.duration;
    let (lo, hi) = match (r.delays.first(), r.delays.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => {
            return Err(Error::PartialDelayCoverage {
                lo: f64::NAN,
                hi: f64::NAN,
                duration: t,
            })
        }
    };
    let tol = 1e-9 * t;
    if lo > -t + tol || hi < t - tol {
        return Err(Error::PartialDelayCoverage { lo, hi, duration: t });
    }
    Ok(())
}

fn is_uniform(x: &[f64]) -> bool {
    if x.len() < 3 {
        return false;
    }
    let h = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    x.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
}

/// Composite Simpson rule on uniform samples with an even interval count.
fn simpson(y: &[f64], h: f64) -> f64 {
    let n = y.len() - 1;
    debug_assert!(n % 2 == 0);
    let mut acc = y[0] + y[n];
    for (i, v) in y.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Trapezoidal integral of the piecewise-linear interpolant of `(x, y)` over
/// `[a, b]`, clipped to the sampled range.
pub(crate) fn integrate_between(x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len().saturating_sub(1) {
        let (x0, x1) = (x[i], x[i + 1]);
        let lo = x0.max(a);
        let hi = x1.min(b);
        if hi <= lo {
            continue;
        }
        let slope = (y[i + 1] - y[i]) / (x1 - x0);
        let y_lo = y[i] + slope * (lo - x0);
        let y_hi = y[i] + slope * (hi - x0);
        acc += 0.5 * (hi - lo) * (y_lo + y_hi);
    }
    acc
}

/// `int |R(tau)|^2 dtau` over `[-T, T]`, in seconds.
///
/// Uniform axes with an even number of intervals use Simpson's rule (exact
/// for the piecewise-quadratic ACF of a CW pulse); anything else falls back
/// to the trapezoidal rule.
pub fn ccf_area(r: &CorrelationResult) -> Result<f64> {
    check_coverage(r)?;
    let p = r.power();
    let n = p.len() - 1;
    if is_uniform(&r.delays) && n % 2 == 0 {
        let h = (r.delays[n] - r.delays[0]) / n as f64;
        Ok(simpson(&p, h))
    } else {
        Ok(trapezoid(&r.delays, &p))
    }
}

/// How the mainlobe boundary `tau_m` was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NullKind {
    /// Local minimum of `|R|^2` strictly inside `(0, T)`.
    Interior,
    /// `|R|^2` decays below the threshold only at `tau = T`.
    Boundary,
    /// No qualifying minimum; the ISR is reported as zero.
    NotFound,
    /// `tau_m` supplied by the caller.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstNull {
    pub tau: f64,
    pub kind: NullKind,
}

fn zero_index(r: &CorrelationResult) -> usize {
    r.delays.partition_point(|&d| d < 0.0)
}

/// First mainlobe null `tau_m > 0` of an auto-correlation.
///
/// Scans positive delays for the first local minimum of `|R|^2` lying below
/// `threshold_db` relative to `|R(0)|^2`, then refines it with a parabola
/// through the neighbouring samples. The last sample (`tau = T`) qualifies
/// when it is below the threshold and `|R|^2` is non-increasing into it.
pub fn first_null(r: &CorrelationResult, threshold_db: f64) -> Result<Option<FirstNull>> {
    if r.kind != CorrelationKind::Auto {
        return Err(Error::NotAuto);
    }
    let i0 = zero_index(r);
    let p = r.power();
    Ok(first_null_in(&r.delays[i0..], &p[i0..], threshold_db))
}

/// Same scan on a one-sided `(delay, |R|^2)` sequence starting at `tau = 0`.
pub(crate) fn first_null_in(delays: &[f64], power: &[f64], threshold_db: f64) -> Option<FirstNull> {
    let n = power.len();
    if n < 2 {
        return None;
    }
    let threshold = power[0] * 10f64.powf(threshold_db / 10.0);
    for i in 1..n - 1 {
        let (y0, y1, y2) = (power[i - 1], power[i], power[i + 1]);
        if y1 <= y0 && y1 < y2 && y1 < threshold {
            let denom = y0 - 2.0 * y1 + y2;
            let offset = if denom > 0.0 {
                (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            let h = if offset >= 0.0 {
                delays[i + 1] - delays[i]
            } else {
                delays[i] - delays[i - 1]
            };
            return Some(FirstNull {
                tau: delays[i] + offset * h,
                kind: NullKind::Interior,
            });
        }
    }
    if power[n - 1] < threshold && power[n - 1] <= power[n - 2] {
        return Some(FirstNull {
            tau: delays[n - 1],
            kind: NullKind::Boundary,
        });
    }
    None
}

/// Integrated sidelobe ratio with the areas it was formed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsrReport {
    pub isr: f64,
    pub isr_db: f64,
    pub tau_m: f64,
    pub null: NullKind,
    /// `int_{-tau_m}^{tau_m} |R|^2`, seconds.
    pub mainlobe_area: f64,
    /// `int_{tau_m < |tau| <= T} |R|^2`, seconds.
    pub sidelobe_area: f64,
}

/// ISR with the first null located by [`first_null`] at the default
/// threshold.
pub fn isr_exact(r: &CorrelationResult) -> Result<IsrReport> {
    isr_exact_with_threshold(r, DEFAULT_NULL_THRESHOLD_DB)
}

pub fn isr_exact_with_threshold(r: &CorrelationResult, threshold_db: f64) -> Result<IsrReport> {
    check_coverage(r)?;
    match first_null(r, threshold_db)? {
        Some(null) => {
            let mut rep = isr_split(r, null.tau);
            rep.null = null.kind;
            Ok(rep)
        }
        None => {
            let mut rep = isr_split(r, r.duration);
            rep.null = NullKind::NotFound;
            rep.isr = 0.0;
            rep.isr_db = f64::NEG_INFINITY;
            Ok(rep)
        }
    }
}

/// ISR with the mainlobe boundary held at `tau_m`.
pub fn isr_with_null(r: &CorrelationResult, tau_m: f64) -> Result<IsrReport> {
    if r.kind != CorrelationKind::Auto {
        return Err(Error::NotAuto);
    }
    check_coverage(r)?;
    if !(tau_m > 0.0 && tau_m <= r.duration) {
        return Err(Error::InvalidParams(format!("tau_m = {tau_m} outside (0, T]")));
    }
    Ok(isr_split(r, tau_m))
}

fn isr_split(r: &CorrelationResult, tau_m: f64) -> IsrReport {
    let i0 = zero_index(r);
    let p = r.power();
    let (main, side) = split_areas(&r.delays[i0..], &p[i0..], tau_m, r.duration);
    let isr = if main > 0.0 { side / main } else { 0.0 };
    IsrReport {
        isr,
        isr_db: power_db(isr),
        tau_m,
        null: NullKind::Fixed,
        mainlobe_area: 2.0 * main,
        sidelobe_area: 2.0 * side,
    }
}

/// One-sided `(int_0^tau_m, int_tau_m^T)` of a power sequence starting at
/// `tau = 0`.
pub(crate) fn split_areas(delays: &[f64], power: &[f64], tau_m: f64, duration: f64) -> (f64, f64) {
    (
        integrate_between(delays, power, 0.0, tau_m),
        integrate_between(delays, power, tau_m, duration),
    )
}

/// Mainlobe area `pi / (2 beta_rms)` of the quadratic mainlobe model.
pub fn mainlobe_area_a0(rms_bandwidth_sq: f64) -> f64 {
    PI / (2.0 * rms_bandwidth_sq.sqrt())
}

/// Spectral ISR estimate `A_tau / A_0 = (2 beta_rms / pi) int |S(f)|^4 df`.
pub fn isr_approx(coeffs: &GbfCoefficients, params: &WaveformParams) -> Result<f64> {
    let beta_sq = rms_bandwidth_sq(params)?;
    if beta_sq <= 0.0 {
        return Err(Error::ZeroBandwidth);
    }
    Ok(spectral_fourth_moment(coeffs, params)? / mainlobe_area_a0(beta_sq))
}

/// `int |S(f)|^4 df` from the closed-form spectrum, which equals the ACF
/// area `int |R|^2 dtau`.
pub fn spectral_fourth_moment(coeffs: &GbfCoefficients, params: &WaveformParams) -> Result<f64> {
    let t = params.duration();
    let df = 1.0 / (4.0 * t);
    let lo = (coeffs.min_order() - 40) as f64 / t;
    let hi = (coeffs.max_order() + 40) as f64 / t;
    let count = ((hi - lo) / df).round() as usize;
    let freqs: Vec<f64> = (0..=count).map(|i| lo + i as f64 * df).collect();
    let s = spectrum_closed_form(coeffs, params, &freqs)?;
    Ok(s.values.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() * df)
}

/// Closed-form mean-square angular bandwidth about DC,
/// `(2 pi^2 / T^2) sum_k k^2 index_k^2` in rad^2/s^2.
///
/// This is `(2 pi)^2` times the time average of `m(t)^2`, i.e. the second
/// moment of the constant-envelope spectrum.
pub fn rms_bandwidth_sq(params: &WaveformParams) -> Result<f64> {
    if params.a0() != 0.0 {
        return Err(Error::Unsupported(
            "closed-form RMS bandwidth requires a0 = 0".into(),
        ));
    }
    let t = params.duration();
    let sum: f64 = params
        .indices()
        .iter()
        .enumerate()
        .map(|(i, a)| ((i + 1) as f64 * a).powi(2))
        .sum();
    Ok(2.0 * PI * PI * sum / (t * t))
}

/// Numeric `(2 pi)^2 int f^2 |S|^2 df / int |S|^2 df` with both integrals
/// restricted to `band` (the spectral tails of a rectangular pulse make the
/// unrestricted moment diverge).
pub fn rms_bandwidth_sq_numeric(w: &SampledWaveform, band: (f64, f64)) -> Result<f64> {
    check_band(band)?;
    let s = spectrum_numeric(w, SPECTRUM_PAD);
    let mut num = 0.0;
    let mut den = 0.0;
    for (f, v) in s.freqs.iter().zip(&s.values) {
        if *f >= band.0 && *f <= band.1 {
            let p = v.norm_sqr();
            num += f * f * p;
            den += p;
        }
    }
    if den <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok(4.0 * PI * PI * num / den)
}

/// Band used for the numeric moment: the smallest order range holding all
/// but a `1e-4` fraction of the GBF power, widened by `2/T`.
///
/// The swept band is too narrow here; with many harmonics the FM sidebands
/// reach well past the instantaneous-frequency extent.
pub fn moment_band(coeffs: &GbfCoefficients, duration: f64) -> (f64, f64) {
    let powers: Vec<(i64, f64)> = coeffs.orders().map(|(l, c)| (l, c.norm_sqr())).collect();
    let total: f64 = powers.iter().map(|p| p.1).sum();
    let cut = 0.5 * MOMENT_BAND_TAIL * total;
    let edge = |iter: &mut dyn Iterator<Item = &(i64, f64)>| {
        let mut acc = 0.0;
        for &(l, p) in iter {
            acc += p;
            if acc > cut {
                return l;
            }
        }
        0
    };
    let lo = edge(&mut powers.iter());
    let hi = edge(&mut powers.iter().rev());
    ((lo - 2) as f64 / duration, (hi + 2) as f64 / duration)
}

fn check_band(band: (f64, f64)) -> Result<()> {
    if !(band.0.is_finite() && band.1.is_finite() && band.0 < band.1) {
        return Err(Error::InvalidBand(format!(
            "[{}, {}] is empty",
            band.0, band.1
        )));
    }
    Ok(())
}

/// `max |s|^2 / mean |s|^2` over the samples.
pub fn papr(w: &SampledWaveform) -> Result<f64> {
    let powers = w.samples().iter().map(|s| s.norm_sqr());
    let (peak, sum) = powers.fold((0.0f64, 0.0), |(m, s), p| (m.max(p), s + p));
    if sum <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok(peak / (sum / w.len() as f64))
}

/// Fraction of the energy spectrum inside `band` (Hz).
pub fn spectral_efficiency(w: &SampledWaveform, band: (f64, f64)) -> Result<f64> {
    check_band(band)?;
    let s = spectrum_numeric(w, SPECTRUM_PAD);
    let mut inside = 0.0;
    let mut total = 0.0;
    for (f, v) in s.freqs.iter().zip(&s.values) {
        let p = v.norm_sqr();
        total += p;
        if *f >= band.0 && *f <= band.1 {
            inside += p;
        }
    }
    if total <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok((inside / total).clamp(0.0, 1.0))
}

/// Swept band `[min m, max m]`; an unmodulated pulse has no default band.
pub fn default_band(params: &WaveformParams, grid: &SamplingGrid) -> Result<(f64, f64)> {
    let (lo, hi) = frequency_extent(params, grid);
    if hi - lo <= 0.0 {
        return Err(Error::InvalidBand(
            "zero swept bandwidth; an explicit band is required".into(),
        ));
    }
    Ok((lo, hi))
}

/// Swept band widened by `1/T` on both sides, or `[-1/T, 1/T]` around the
/// carrier for an unmodulated pulse.
pub fn guarded_band(params: &WaveformParams, grid: &SamplingGrid) -> (f64, f64) {
    let (lo, hi) = frequency_extent(params, grid);
    let guard = 1.0 / params.duration();
    (lo - guard, hi + guard)
}

/// All single-waveform metrics, computed on the grid chosen by
/// [`make_grid`] at `oversample`.
///
/// The correlation area is the ACF area, spectral efficiency uses
/// [`guarded_band`], and the RMS bandwidth falls back to the numeric moment
/// when `a0 != 0`.
pub fn metrics_report(params: &WaveformParams, oversample: f64) -> Result<MetricsReport> {
    let grid = make_grid(params, oversample)?.grid;
    let w = synthesize(params, &grid)?;
    let acf = acf_numeric(&w);
    let isr = isr_exact(&acf)?;
    let rms = match rms_bandwidth_sq(params) {
        Ok(v) => v,
        Err(Error::Unsupported(_)) => {
            let band = moment_band(&gbf(params)?, params.duration());
            rms_bandwidth_sq_numeric(&w, band)?
        }
        Err(e) => return Err(e),
    };
    let p = papr(&w)?;
    let (lo, hi) = frequency_extent(params, &grid);
    Ok(MetricsReport {
        isr: isr.isr,
        isr_db: isr.isr_db,
        ccf_area: ccf_area(&acf)?,
        rms_bandwidth_sq: rms,
        papr: p,
        papr_db: power_db(p),
        spectral_efficiency: spectral_efficiency(&w, guarded_band(params, &grid))?,
        mainlobe_halfwidth_tau_m: isr.tau_m,
        swept_bandwidth: (hi - lo).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{Symmetry, TaperSpec};

    fn params(idx: &[f64]) -> WaveformParams {
        WaveformParams::new(1.0, Symmetry::Even, idx.to_vec()).unwrap()
    }

    fn wave(p: &WaveformParams, n: usize) -> SampledWaveform {
        synthesize(p, &SamplingGrid::new(p.duration(), n).unwrap()).unwrap()
    }

    #[test]
    fn cw_area_is_two_thirds() {
        let r = acf_numeric(&wave(&params(&[0.0]), 256));
        assert!((ccf_area(&r).unwrap() - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn partial_coverage_is_rejected() {
        let mut r = acf_numeric(&wave(&params(&[0.0]), 64));
        r.delays.truncate(100);
        r.values.truncate(100);
        assert!(matches!(ccf_area(&r), Err(Error::PartialDelayCoverage { .. })));
    }

    #[test]
    fn cw_null_is_at_the_pulse_end() {
        let w = wave(&params(&[0.0]), 256);
        let r = acf_numeric(&w);
        let null = first_null(&r, DEFAULT_NULL_THRESHOLD_DB).unwrap().unwrap();
        assert_eq!(null.kind, NullKind::Boundary);
        assert!((null.tau - 1.0).abs() <= w.grid().dt());
        let isr = isr_exact(&r).unwrap();
        assert_eq!(isr.isr, 0.0);
    }

    #[test]
    fn first_null_requires_auto() {
        let a = wave(&params(&[1.0]), 64);
        let b = wave(&params(&[-1.0]), 64);
        let r = super::super::correlation::ccf_numeric(&a, &b).unwrap();
        assert_eq!(first_null(&r, -30.0), Err(Error::NotAuto));
    }

    #[test]
    fn parabolic_refinement_finds_vertex() {
        let delays: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let power: Vec<f64> = delays
            .iter()
            .map(|&d| if d < 0.2 { 1.0 - 4.0 * d } else { 1e-4 * (d - 0.2345f64).powi(2) + 1e-6 })
            .collect();
        let null = first_null_in(&delays, &power, -30.0).unwrap();
        assert!((null.tau - 0.2345).abs() < 1e-9);
    }

    #[test]
    fn ripple_above_threshold_is_skipped() {
        // a shallow dip at 0.1 (-10 dB) before the real null at 0.3
        let delays: Vec<f64> = (0..=40).map(|i| i as f64 * 0.025).collect();
        let power: Vec<f64> = delays
            .iter()
            .map(|&d| {
                if d <= 0.05 {
                    1.0
                } else if (d - 0.1).abs() < 1e-9 {
                    0.1
                } else if (d - 0.3).abs() < 1e-9 {
                    1e-5
                } else {
                    0.5
                }
            })
            .collect();
        let null = first_null_in(&delays, &power, -30.0).unwrap();
        assert!((null.tau - 0.3).abs() < 0.0126);
    }

    #[test]
    fn rms_bandwidth_examples() {
        let pi2 = PI * PI;
        assert_eq!(rms_bandwidth_sq(&params(&[0.0])).unwrap(), 0.0);
        assert!((rms_bandwidth_sq(&params(&[1.0])).unwrap() - 2.0 * pi2).abs() < 1e-12);
        assert!((rms_bandwidth_sq(&params(&[1.0, 1.0])).unwrap() - 10.0 * pi2).abs() < 1e-12);
        let shifted = params(&[1.0]).with_a0(4.0).unwrap();
        assert!(matches!(rms_bandwidth_sq(&shifted), Err(Error::Unsupported(_))));
    }

    #[test]
    fn mainlobe_model_area() {
        assert!((mainlobe_area_a0(PI * PI) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cw_fourth_moment_equals_acf_area() {
        let p = params(&[0.0]);
        let a = spectral_fourth_moment(&gbf(&p).unwrap(), &p).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-3, "{a}");
    }

    #[test]
    fn isr_approx_rejects_cw() {
        let p = params(&[0.0]);
        assert_eq!(isr_approx(&gbf(&p).unwrap(), &p), Err(Error::ZeroBandwidth));
    }

    #[test]
    fn papr_examples() {
        let p = params(&[3.0, 1.0]);
        assert!((papr(&wave(&p, 512)).unwrap() - 1.0).abs() < 1e-12);
        let tapered = p.with_taper(TaperSpec::tukey(0.05).unwrap()).unwrap();
        let v = papr(&wave(&tapered, 4096)).unwrap();
        // mean of the squared Tukey window is 1 - 5 alpha / 8
        assert!((v - 1.0 / (1.0 - 5.0 * 0.05 / 8.0)).abs() < 1e-3, "{v}");
        let zero = SampledWaveform::new(
            SamplingGrid::new(1.0, 8).unwrap(),
            vec![num_complex::Complex64::new(0.0, 0.0); 8],
            num_complex::Complex64::new(0.0, 0.0),
        )
        .unwrap();
        assert_eq!(papr(&zero), Err(Error::ZeroSignal));
    }

    #[test]
    fn full_band_efficiency_is_one() {
        let w = wave(&params(&[2.0]), 256);
        let fs = w.grid().sample_rate();
        let se = spectral_efficiency(&w, (-fs, fs)).unwrap();
        assert!((se - 1.0).abs() < 1e-12);
        assert!(matches!(spectral_efficiency(&w, (1.0, 1.0)), Err(Error::InvalidBand(_))));
    }

    #[test]
    fn cw_efficiency_matches_sinc_quadrature() {
        // int_{-1}^{1} sinc^2(pi f) df by composite Simpson on a fine grid
        let n = 200_000;
        let h = 2.0 / n as f64;
        let y: Vec<f64> = (0..=n)
            .map(|i| crate::synthesis::sinc(PI * (-1.0 + i as f64 * h)).powi(2))
            .collect();
        let oracle = simpson(&y, h);
        let w = wave(&params(&[0.0]), 1024);
        let se = spectral_efficiency(&w, (-1.0, 1.0)).unwrap();
        assert!((se - oracle).abs() < 2e-3, "{se} vs {oracle}");
        assert!((oracle - 0.9028).abs() < 1e-3);
    }

    #[test]
    fn cw_has_no_default_band() {
        let p = params(&[0.0]);
        let g = SamplingGrid::new(1.0, 64).unwrap();
        assert!(matches!(default_band(&p, &g), Err(Error::InvalidBand(_))));
    }

    #[test]
    fn db_floor() {
        assert_eq!(power_db_floored(0.0, -100.0), -100.0);
        assert_eq!(power_db_floored(1e-20, -100.0), -100.0);
        assert!((power_db_floored(0.1, -100.0) + 10.0).abs() < 1e-12);
    }
}
