//! Run configuration: JSON schema, built-in recipes and the config hash.

use std::fmt;
use std::path::{Path, PathBuf};

use mtsfm::optimizer::{init_members_weighted, OptimizerSettings, WeightCase, Weights};
use mtsfm::synthesis::{random_waveform, InitWeighting, SPECTROGRAM_WINDOW};
use mtsfm::{Symmetry, TaperKind, TaperSpec, WaveformParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Synth,
    Analyze,
    OptimizeFamily,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Synth => "synth",
            Mode::Analyze => "analyze",
            Mode::OptimizeFamily => "optimize-family",
        }
    }
}

/// Top-level config document.
///
/// `out` is not part of the config hash, so the same run written to two
/// directories produces identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_oversample")]
    pub oversample: f64,
    #[serde(default)]
    pub waveforms: Vec<WaveformSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub export: ExportOptions,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

fn default_oversample() -> f64 {
    16.0
}

/// A waveform given outright or drawn from the seeded generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WaveformSource {
    Explicit(WaveformParams),
    Random(RandomSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub harmonics: usize,
    pub tbp: f64,
    #[serde(default = "one")]
    pub duration: f64,
    #[serde(default = "even")]
    pub symmetry: Symmetry,
    #[serde(default)]
    pub init_weighting: InitWeighting,
    #[serde(default)]
    pub taper: TaperSpec,
    /// Defaults to the run seed plus the waveform's position in the list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(default = "two")]
    pub members: usize,
    pub harmonics: usize,
    #[serde(default = "hundred")]
    pub tbp: f64,
    #[serde(default = "one")]
    pub duration: f64,
    #[serde(default = "even")]
    pub symmetry: Symmetry,
    #[serde(default)]
    pub init_weighting: InitWeighting,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub taper: TaperSpec,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub settings: OptimizerSettings,
    /// Explicit starting members; replaces the seeded draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<WaveformParams>>,
}

fn one() -> f64 {
    1.0
}
fn two() -> usize {
    2
}
fn hundred() -> f64 {
    100.0
}
fn even() -> Symmetry {
    Symmetry::Even
}
fn default_delta() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSpec {
    #[default]
    Equal,
    CcfHeavy,
    AcfHeavy,
    Custom { isr: Vec<f64>, ccf: Vec<f64> },
}

impl WeightSpec {
    pub fn label(&self) -> &'static str {
        match self {
            WeightSpec::Equal => WeightCase::Equal.label(),
            WeightSpec::CcfHeavy => WeightCase::CcfHeavy.label(),
            WeightSpec::AcfHeavy => WeightCase::AcfHeavy.label(),
            WeightSpec::Custom { .. } => "custom",
        }
    }

    pub fn weights(&self, members: usize) -> mtsfm::Result<Weights> {
        match self {
            WeightSpec::Equal => Weights::for_case(WeightCase::Equal, members),
            WeightSpec::CcfHeavy => Weights::for_case(WeightCase::CcfHeavy, members),
            WeightSpec::AcfHeavy => Weights::for_case(WeightCase::AcfHeavy, members),
            WeightSpec::Custom { isr, ccf } => Weights::new(isr.clone(), ccf.clone(), members),
        }
    }
}

/// Export grids and dB floor. Doppler values are in units of `1/T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportOptions {
    pub floor_db: f64,
    pub doppler_max: f64,
    pub doppler_step: f64,
    /// Keep every n-th lag of the sample grid in ambiguity surfaces.
    pub delay_stride: usize,
    pub spectrogram_window: usize,
    /// Zero-padding factor of the EDS.
    pub eds_pad: usize,
    /// Also export closed-form correlations (rectangular taper only).
    pub closed_form: bool,
    pub ambiguity: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            floor_db: -100.0,
            doppler_max: 20.0,
            doppler_step: 0.25,
            delay_stride: 8,
            spectrogram_window: SPECTROGRAM_WINDOW,
            eds_pad: 4,
            closed_form: true,
            ambiguity: true,
        }
    }
}

impl ExportOptions {
    /// Doppler axis in Hz for a pulse of length `duration`.
    pub fn dopplers(&self, duration: f64) -> Vec<f64> {
        let n = (self.doppler_max / self.doppler_step + 1e-9).floor() as i64;
        (-n..=n)
            .map(|i| i as f64 * self.doppler_step / duration)
            .collect()
    }
}

/// Config problem reported with the JSON path of the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parse a config document, rejecting unknown keys.
pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| ConfigError::new(e.path().to_string(), e.inner()))
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub const RECIPES: [&str; 4] = ["fig1", "fig2", "fig3", "fig4"];

/// Seed pinned by the family recipes.
pub const FAMILY_SEED: u64 = 2024;
/// Seed pinned by the single-waveform recipe.
pub const FIG1_SEED: u64 = 2024;

/// Built-in configs: `fig1` is one K = 16 waveform, `fig2`..`fig4` are
/// P = 2, K = 64 family designs with equal, CCF-heavy and ACF-heavy
/// weights. All use TBP 100 and a 5% Tukey taper.
pub fn recipe(name: &str) -> Option<RunConfig> {
    let tukey = TaperSpec {
        kind: TaperKind::Tukey,
        tukey_alpha: 0.05,
    };
    let family = |weights| FamilySpec {
        members: 2,
        harmonics: 64,
        tbp: 100.0,
        duration: 1.0,
        symmetry: Symmetry::Even,
        init_weighting: InitWeighting::OneOverK,
        delta: 0.2,
        taper: tukey,
        weights,
        settings: OptimizerSettings::default(),
        initial: None,
    };
    let base = RunConfig {
        mode: None,
        seed: FAMILY_SEED,
        oversample: default_oversample(),
        waveforms: Vec::new(),
        family: None,
        export: ExportOptions::default(),
        out: None,
    };
    let cfg = match name {
        "fig1" => RunConfig {
            seed: FIG1_SEED,
            waveforms: vec![WaveformSource::Random(RandomSpec {
                harmonics: 16,
                tbp: 100.0,
                duration: 1.0,
                symmetry: Symmetry::Even,
                init_weighting: InitWeighting::OneOverK,
                taper: tukey,
                seed: None,
            })],
            ..base
        },
        "fig2" => RunConfig {
            family: Some(family(WeightSpec::Equal)),
            ..base
        },
        "fig3" => RunConfig {
            family: Some(family(WeightSpec::CcfHeavy)),
            ..base
        },
        "fig4" => RunConfig {
            family: Some(family(WeightSpec::AcfHeavy)),
            ..base
        },
        _ => return None,
    };
    Some(cfg)
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Semantic checks that the schema alone cannot express.
    pub fn validate(&self, mode: Mode) -> Result<(), ConfigError> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(ConfigError::new(
                    "mode",
                    format!("config is for `{}`, not `{}`", m.name(), mode.name()),
                ));
            }
        }
        if !(self.oversample.is_finite() && self.oversample >= 1.0) {
            return Err(ConfigError::new("oversample", "must be at least 1"));
        }
        self.export.validate()?;
        for (i, src) in self.waveforms.iter().enumerate() {
            if let WaveformSource::Random(r) = src {
                let path = format!("waveforms[{i}].random");
                if r.harmonics == 0 {
                    return Err(ConfigError::new(format!("{path}.harmonics"), "must be positive"));
                }
                if !(r.tbp.is_finite() && r.tbp > 0.0) {
                    return Err(ConfigError::new(format!("{path}.tbp"), "must be positive"));
                }
                check_taper(&r.taper, &format!("{path}.taper"))?;
            }
        }
        match (&self.family, mode) {
            (None, Mode::OptimizeFamily) => {
                return Err(ConfigError::new("family", "required for optimize-family"))
            }
            (None, _) if self.waveforms.is_empty() => {
                return Err(ConfigError::new("waveforms", "need at least one waveform or a family"))
            }
            (Some(f), _) => f.validate()?,
            _ => {}
        }
        Ok(())
    }

    /// Waveforms the run operates on: the explicit list if present,
    /// otherwise the family's starting members.
    pub fn members(&self) -> Result<Vec<WaveformParams>, ConfigError> {
        if !self.waveforms.is_empty() {
            return self
                .waveforms
                .iter()
                .enumerate()
                .map(|(i, src)| self.resolve(i, src))
                .collect();
        }
        let f = self
            .family
            .as_ref()
            .ok_or_else(|| ConfigError::new("waveforms", "need at least one waveform or a family"))?;
        f.initial_members(self.seed)
    }

    fn resolve(&self, i: usize, src: &WaveformSource) -> Result<WaveformParams, ConfigError> {
        match src {
            WaveformSource::Explicit(p) => Ok(p.clone()),
            WaveformSource::Random(r) => {
                let seed = r.seed.unwrap_or_else(|| self.seed.wrapping_add(i as u64));
                random_waveform(seed, r.harmonics, r.duration, r.symmetry, r.tbp, r.init_weighting)
                    .and_then(|p| p.with_taper(r.taper))
                    .map_err(|e| ConfigError::new(format!("waveforms[{i}].random"), e))
            }
        }
    }
}

impl ExportOptions {
    fn validate(&self) -> Result<(), ConfigError> {
        if !self.floor_db.is_finite() {
            return Err(ConfigError::new("export.floor_db", "must be finite"));
        }
        if !(self.doppler_step.is_finite() && self.doppler_step > 0.0) {
            return Err(ConfigError::new("export.doppler_step", "must be positive"));
        }
        if !(self.doppler_max.is_finite() && self.doppler_max >= 0.0) {
            return Err(ConfigError::new("export.doppler_max", "must be non-negative"));
        }
        if self.delay_stride == 0 {
            return Err(ConfigError::new("export.delay_stride", "must be positive"));
        }
        if self.spectrogram_window < 2 {
            return Err(ConfigError::new("export.spectrogram_window", "must be at least 2"));
        }
        if self.eds_pad == 0 {
            return Err(ConfigError::new("export.eds_pad", "must be positive"));
        }
        Ok(())
    }
}

impl FamilySpec {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.members < 2 {
            return Err(ConfigError::new("family.members", "need at least 2"));
        }
        if self.harmonics == 0 {
            return Err(ConfigError::new("family.harmonics", "must be positive"));
        }
        if !(self.tbp.is_finite() && self.tbp > 0.0) {
            return Err(ConfigError::new("family.tbp", "must be positive"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(ConfigError::new("family.duration", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ConfigError::new("family.delta", "must lie in (0, 1)"));
        }
        check_taper(&self.taper, "family.taper")?;
        self.weights
            .weights(self.members)
            .map_err(|e| ConfigError::new("family.weights", e))?;
        if let Some(init) = &self.initial {
            if init.len() != self.members {
                return Err(ConfigError::new(
                    "family.initial",
                    format!("expected {} members, got {}", self.members, init.len()),
                ));
            }
        }
        let s = &self.settings;
        if s.max_iterations == 0 || s.restarts == 0 || s.max_line_search == 0 {
            return Err(ConfigError::new(
                "family.settings",
                "max_iterations, restarts and max_line_search must be positive",
            ));
        }
        if !(s.fd_step > 0.0) || !(s.oversample >= 1.0) {
            return Err(ConfigError::new(
                "family.settings",
                "fd_step must be positive and oversample at least 1",
            ));
        }
        Ok(())
    }

    pub fn initial_members(&self, seed: u64) -> Result<Vec<WaveformParams>, ConfigError> {
        let list = match &self.initial {
            Some(list) => list.clone(),
            None => init_members_weighted(
                self.members,
                self.harmonics,
                self.duration,
                self.tbp,
                seed,
                self.symmetry,
                self.init_weighting,
            )
            .map_err(|e| ConfigError::new("family", e))?,
        };
        list.into_iter()
            .map(|p| p.with_taper(self.taper))
            .collect::<mtsfm::Result<_>>()
            .map_err(|e| ConfigError::new("family.taper", e))
    }
}

fn check_taper(t: &TaperSpec, path: &str) -> Result<(), ConfigError> {
    if t.kind == TaperKind::Tukey {
        TaperSpec::tukey(t.tukey_alpha).map_err(|e| ConfigError::new(path, e))?;
    }
    Ok(())
}
