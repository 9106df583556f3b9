//! Shared domain types: waveform parameters, sampling grids, sampled
//! waveforms, GBF coefficient arrays and metric reports.
//!
//! Time is always centered: a pulse of duration `T` lives on `[-T/2, T/2]`,
//! and sampled grids cover `[-T/2, T/2)` with `t_n = -T/2 + n * dt`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthesis;

/// Symmetry of the modulation (instantaneous frequency) function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    /// Cosine harmonics: `m(t) = a0/2 + sum a_k cos(2 pi k t / T)`.
    Even,
    /// Sine harmonics: `m(t) = sum b_k sin(2 pi k t / T)`.
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaperKind {
    Rectangular,
    Tukey,
}

/// Amplitude taper applied to the complex envelope.
///
/// Only the rectangular taper is covered by the closed-form GBF expressions;
/// a Tukey taper is supported by the numeric paths alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperSpec {
    pub kind: TaperKind,
    #[serde(default)]
    pub tukey_alpha: f64,
}

impl TaperSpec {
    pub const RECTANGULAR: TaperSpec = TaperSpec {
        kind: TaperKind::Rectangular,
        tukey_alpha: 0.0,
    };

    pub fn tukey(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParams(format!(
                "tukey alpha must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(TaperSpec {
            kind: TaperKind::Tukey,
            tukey_alpha: alpha,
        })
    }

    pub fn is_rectangular(&self) -> bool {
        self.kind == TaperKind::Rectangular
            || (self.kind == TaperKind::Tukey && self.tukey_alpha == 0.0)
    }

    /// Taper gain at centered time `t` for a pulse of duration `duration`.
    /// Unnormalized: 1 on the flat top, 0 at the pulse edges for Tukey.
    pub fn gain(&self, t: f64, duration: f64) -> f64 {
        match self.kind {
            TaperKind::Rectangular => 1.0,
            TaperKind::Tukey => {
                let alpha = self.tukey_alpha;
                if alpha <= 0.0 {
                    return 1.0;
                }
                let half = 0.5 * duration;
                let flat = (1.0 - alpha) * half;
                let edge = t.abs();
                if edge <= flat {
                    1.0
                } else if edge >= half {
                    0.0
                } else {
                    let ramp = alpha * half;
                    0.5 * (1.0 + (std::f64::consts::PI * (edge - flat) / ramp).cos())
                }
            }
        }
    }
}

impl Default for TaperSpec {
    fn default() -> Self {
        TaperSpec::RECTANGULAR
    }
}

/// The designable object: duration, symmetry, carrier-offset term and the
/// vector of `K` modulation indices (`alpha_k` for even, `beta_k` for odd).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct WaveformParams {
    duration: f64,
    symmetry: Symmetry,
    a0: f64,
    indices: Vec<f64>,
    taper: TaperSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    duration: f64,
    symmetry: Symmetry,
    #[serde(default)]
    a0: f64,
    indices: Vec<f64>,
    #[serde(default)]
    taper: TaperSpec,
}

impl TryFrom<RawParams> for WaveformParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        WaveformParams::new(raw.duration, raw.symmetry, raw.indices)?
            .with_a0(raw.a0)?
            .with_taper(raw.taper)
    }
}

impl From<WaveformParams> for RawParams {
    fn from(p: WaveformParams) -> Self {
        RawParams {
            duration: p.duration,
            symmetry: p.symmetry,
            a0: p.a0,
            indices: p.indices,
            taper: p.taper,
        }
    }
}

impl WaveformParams {
    /// Rectangular-taper waveform with `a0 = 0`.
    pub fn new(duration: f64, symmetry: Symmetry, indices: Vec<f64>) -> Result<Self> {
        let params = WaveformParams {
            duration,
            symmetry,
            a0: 0.0,
            indices,
            taper: TaperSpec::RECTANGULAR,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_a0(mut self, a0: f64) -> Result<Self> {
        self.a0 = a0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_taper(mut self, taper: TaperSpec) -> Result<Self> {
        self.taper = taper;
        self.validate()?;
        Ok(self)
    }

    /// Same waveform with a replaced index vector of the same length.
    pub fn with_indices(&self, indices: Vec<f64>) -> Result<Self> {
        if indices.len() != self.indices.len() {
            return Err(Error::InvalidParams(format!(
                "expected {} indices, got {}",
                self.indices.len(),
                indices.len()
            )));
        }
        let mut out = self.clone();
        out.indices = indices;
        out.validate()?;
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidParams(format!(
                "duration must be positive and finite, got {}",
                self.duration
            )));
        }
        if self.indices.is_empty() {
            return Err(Error::InvalidParams("at least one harmonic is required".into()));
        }
        if let Some(bad) = self.indices.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("index {} is not finite", bad + 1)));
        }
        if !self.a0.is_finite() {
            return Err(Error::InvalidParams("a0 is not finite".into()));
        }
        if self.symmetry == Symmetry::Odd && self.a0 != 0.0 {
            return Err(Error::InvalidParams(
                "the odd modulation function has no a0 term".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.taper.tukey_alpha) {
            return Err(Error::InvalidParams(format!(
                "tukey alpha must lie in [0, 1], got {}",
                self.taper.tukey_alpha
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn indices(&self) -> &[f64] {
        &self.indices
    }

    pub fn taper(&self) -> TaperSpec {
        self.taper
    }

    /// Number of harmonics `K`.
    pub fn num_harmonics(&self) -> usize {
        self.indices.len()
    }

    /// Fourier amplitude of harmonic `k` (1-based) of the modulation function
    /// in Hz: `a_k = k alpha_k / T` (or `b_k` for odd symmetry).
    pub fn harmonic_amplitude(&self, k: usize) -> f64 {
        k as f64 * self.indices[k - 1] / self.duration
    }

    /// `sum_k k |index_k|`, the order scale of the GBF coefficient spread.
    pub fn order_spread(&self) -> f64 {
        self.indices
            .iter()
            .enumerate()
            .map(|(i, v)| (i + 1) as f64 * v.abs())
            .sum()
    }

    pub fn is_rectangular(&self) -> bool {
        self.taper.is_rectangular()
    }
}

/// Uniform sampling of the centered pulse interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingGrid {
    num_samples: usize,
    dt: f64,
    t0: f64,
}

impl SamplingGrid {
    /// `num_samples` points covering `[-T/2, T/2)` exactly.
    pub fn new(duration: f64, num_samples: usize) -> Result<Self> {
        if num_samples < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least two samples, got {num_samples}"
            )));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidGrid(format!("bad duration {duration}")));
        }
        Ok(SamplingGrid {
            num_samples,
            dt: duration / num_samples as f64,
            t0: -0.5 * duration,
        })
    }

    /// Power-of-two grid with `dt <= 1/(oversample * bandwidth)`.
    ///
    /// A zero bandwidth selects the fallback size `max(64 * oversample, 256)`
    /// and sets [`GridPlan::fallback`].
    pub fn for_bandwidth(duration: f64, bandwidth: f64, oversample: f64) -> Result<GridPlan> {
        if !(oversample.is_finite() && oversample >= 2.0) {
            return Err(Error::InvalidGrid(format!(
                "oversample must be at least 2, got {oversample}"
            )));
        }
        if !(bandwidth.is_finite() && bandwidth >= 0.0) {
            return Err(Error::InvalidGrid(format!("bad bandwidth {bandwidth}")));
        }
        let floor = (64.0 * oversample).max(256.0).ceil() as usize;
        let (wanted, fallback) = if bandwidth > 0.0 {
            ((oversample * bandwidth * duration).ceil() as usize, false)
        } else {
            (floor, true)
        };
        let n = wanted.max(floor).next_power_of_two();
        Ok(GridPlan {
            grid: SamplingGrid::new(duration, n)?,
            bandwidth,
            fallback,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.num_samples as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_samples).map(|n| self.time(n))
    }

    /// Sample rate in Hz.
    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPlan {
    pub grid: SamplingGrid,
    /// Bandwidth the grid was sized for, in Hz.
    pub bandwidth: f64,
    /// Set when the waveform was degenerate and the fallback size was used.
    pub fallback: bool,
}

/// Choose a sampling grid for `params`.
///
/// The grid is sized on the occupied bandwidth `max(df, 2 max|m(t)|)`, which
/// equals the swept bandwidth `df` for a spectrum straddling DC and also
/// covers the spectral offset introduced by `a0`. The result always satisfies
/// `dt <= 1/(oversample * df)` and resolves harmonic `K` with 8 samples.
pub fn make_grid(params: &WaveformParams, oversample: f64) -> Result<GridPlan> {
    let k = params.num_harmonics();
    let probe = SamplingGrid::new(params.duration(), (64 * k).max(1024).next_power_of_two())?;
    let (lo, hi) = synthesis::frequency_extent(params, &probe);
    let swept = hi - lo;
    let occupied = swept.max(2.0 * lo.abs().max(hi.abs()));
    let mut plan = SamplingGrid::for_bandwidth(params.duration(), occupied, oversample)?;
    if plan.fallback && swept == 0.0 && occupied > 0.0 {
        plan.fallback = false;
    }
    let min_n = (8 * k).next_power_of_two();
    if plan.grid.num_samples() < min_n {
        plan.grid = SamplingGrid::new(params.duration(), min_n)?;
    }
    plan.bandwidth = swept;
    Ok(plan)
}

/// Uniform complex baseband samples on a [`SamplingGrid`].
///
/// `end_sample` holds the envelope value at `t = +T/2`, which is not a grid
/// point; trapezoidal quadratures over the pulse use it to close the interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    grid: SamplingGrid,
    samples: Vec<Complex64>,
    end_sample: Complex64,
    energy: f64,
}

impl SampledWaveform {
    pub fn new(grid: SamplingGrid, samples: Vec<Complex64>, end_sample: Complex64) -> Result<Self> {
        if samples.len() != grid.num_samples() {
            return Err(Error::InvalidGrid(format!(
                "grid has {} points but {} samples were given",
                grid.num_samples(),
                samples.len()
            )));
        }
        let energy = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * grid.dt();
        Ok(SampledWaveform {
            grid,
            samples,
            end_sample,
            energy,
        })
    }

    /// Rescale to unit energy `sum |s_n|^2 dt = 1`.
    pub fn normalized(mut self) -> Result<Self> {
        if !(self.energy > 0.0) {
            return Err(Error::ZeroSignal);
        }
        let scale = 1.0 / self.energy.sqrt();
        for s in &mut self.samples {
            *s *= scale;
        }
        self.end_sample *= scale;
        self.energy = self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.grid.dt();
        Ok(self)
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn end_sample(&self) -> Complex64 {
        self.end_sample
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample at index `n`, with `n == N` mapping to the end sample.
    pub(crate) fn at_closed(&self, n: usize) -> Complex64 {
        if n == self.samples.len() {
            self.end_sample
        } else {
            self.samples[n]
        }
    }
}

/// Fourier-series coefficients `c_l` of `exp(j phi(t))` on the pulse interval,
/// for orders `min_order..=max_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbfCoefficients {
    min_order: i64,
    values: Vec<Complex64>,
    truncation_tail: f64,
    aperiodic: bool,
}

impl GbfCoefficients {
    pub(crate) fn new(min_order: i64, values: Vec<Complex64>, aperiodic: bool) -> Self {
        let power: f64 = values.iter().map(|c| c.norm_sqr()).sum();
        GbfCoefficients {
            min_order,
            values,
            truncation_tail: (1.0 - power).max(0.0),
            aperiodic,
        }
    }

    pub fn min_order(&self) -> i64 {
        self.min_order
    }

    pub fn max_order(&self) -> i64 {
        self.min_order + self.values.len() as i64 - 1
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Coefficient of order `l`; zero outside the retained range.
    pub fn get(&self, l: i64) -> Complex64 {
        let idx = l - self.min_order;
        if idx < 0 || idx as usize >= self.values.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.values[idx as usize]
        }
    }

    pub fn orders(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, c)| (self.min_order + i as i64, *c))
    }

    /// Energy outside the retained orders, `1 - sum |c_l|^2`.
    pub fn truncation_tail(&self) -> f64 {
        self.truncation_tail
    }

    pub fn total_power(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Set when a non-integer spectral offset was folded into the phase, so
    /// the series represents a non-periodic extension and decays slowly.
    pub fn is_aperiodic(&self) -> bool {
        self.aperiodic
    }
}

/// Scalar quality metrics of a waveform (or of a pair, for the CCF area).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub isr: f64,
    pub isr_db: f64,
    /// `int |R|^2 dtau` over `[-T, T]`, seconds.
    pub ccf_area: f64,
    /// rad^2 / s^2
    pub rms_bandwidth_sq: f64,
    pub papr: f64,
    pub papr_db: f64,
    pub spectral_efficiency: f64,
    /// First ACF null `tau_m`, seconds.
    pub mainlobe_halfwidth_tau_m: f64,
    /// Hz
    pub swept_bandwidth: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_for_bandwidth_examples() {
        let plan = SamplingGrid::for_bandwidth(1.0, 100.0, 16.0).unwrap();
        assert_eq!(plan.grid.num_samples(), 2048);
        assert!(plan.grid.dt() <= 1.0 / 1600.0);
        assert!(!plan.fallback);

        let plan = SamplingGrid::for_bandwidth(1.0, 0.0, 16.0).unwrap();
        assert_eq!(plan.grid.num_samples(), 1024);
        assert!(plan.fallback);

        let plan = SamplingGrid::for_bandwidth(2.0, 50.0, 8.0).unwrap();
        let g = plan.grid;
        assert!((g.num_samples() as f64 * g.dt() - 2.0).abs() <= g.dt());
        assert!(g.dt() <= 1.0 / 400.0);
    }

    #[test]
    fn grid_rejects_small_oversample() {
        assert!(SamplingGrid::for_bandwidth(1.0, 10.0, 1.5).is_err());
        assert!(SamplingGrid::new(1.0, 1).is_err());
    }

    #[test]
    fn grid_covers_centered_interval() {
        let g = SamplingGrid::new(3.0, 512).unwrap();
        assert_eq!(g.time(0), -1.5);
        let last = g.time(511);
        assert!((last + g.dt() - 1.5).abs() < 1e-12);
        assert!(g.times().all(|t| (-1.5..1.5).contains(&t)));
    }

    #[test]
    fn params_validation() {
        assert!(WaveformParams::new(0.0, Symmetry::Even, vec![1.0]).is_err());
        assert!(WaveformParams::new(1.0, Symmetry::Even, vec![]).is_err());
        assert!(WaveformParams::new(1.0, Symmetry::Even, vec![f64::NAN]).is_err());
        let odd = WaveformParams::new(1.0, Symmetry::Odd, vec![1.0]).unwrap();
        assert!(odd.with_a0(2.0).is_err());
        assert!(TaperSpec::tukey(1.5).is_err());
    }

    #[test]
    fn params_serde_rejects_unknown_and_invalid() {
        let ok: WaveformParams =
            serde_json::from_str(r#"{"duration":1.0,"symmetry":"even","indices":[0.5]}"#).unwrap();
        assert_eq!(ok.indices(), &[0.5]);
        assert!(ok.is_rectangular());
        let bad = r#"{"duration":-1.0,"symmetry":"even","indices":[0.5]}"#;
        assert!(serde_json::from_str::<WaveformParams>(bad).is_err());
        let unknown = r#"{"duration":1.0,"symmetry":"even","indices":[0.5],"k":3}"#;
        assert!(serde_json::from_str::<WaveformParams>(unknown).is_err());
    }

    #[test]
    fn tukey_gain_shape() {
        let taper = TaperSpec::tukey(0.5).unwrap();
        assert_eq!(taper.gain(0.0, 1.0), 1.0);
        assert_eq!(taper.gain(0.25, 1.0), 1.0);
        assert_eq!(taper.gain(0.5, 1.0), 0.0);
        assert!((taper.gain(0.375, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(taper.gain(-0.375, 1.0), taper.gain(0.375, 1.0));
    }

    #[test]
    fn gbf_get_outside_range_is_zero() {
        let c = GbfCoefficients::new(-1, vec![Complex64::new(0.5, 0.0); 3], false);
        assert_eq!(c.max_order(), 1);
        assert_eq!(c.get(5), Complex64::new(0.0, 0.0));
        assert!((c.truncation_tail() - 0.25).abs() < 1e-15);
    }
}
