//! Run configuration (TOML) and result records (JSON).
//!
//! Every section is optional at parse time; commands ask for the sections
//! they need and report missing or invalid fields by their dotted name.

use crate::error::{Error, Result};
use crate::free_space::{ControlField, Grid, ProtocolConfig};
use crate::mode::{write_atomic, Domain, ModeSample};
use crate::optimizer::gaussian_like_pulse;
use crate::profile::{width_for_effective_depth, Family, LineProfile};
use crate::spectral::{Direction, TransferConfig};
use crate::C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Low,
    #[default]
    Default,
    High,
}

impl Resolution {
    /// Multiplier applied to grid sizes.
    pub fn factor(self) -> f64 {
        match self {
            Resolution::Low => 0.5,
            Resolution::Default => 1.0,
            Resolution::High => 2.0,
        }
    }

    pub fn scale(self, n: usize) -> usize {
        ((n as f64 * self.factor()).round() as usize).max(3)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub medium: Option<MediumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spin_wave: Option<SpinWaveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crib: Option<CribConfig>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    #[default]
    Homogeneous,
    Gaussian,
    Lorentzian,
}

fn backward() -> Direction {
    Direction::Backward
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    /// Unbroadened optical depth.
    pub d: f64,
    #[serde(default)]
    pub profile: ProfileKind,
    /// Half width at half maximum in units of γ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hwhm: Option<f64>,
    /// Observed resonant depth; sets the width instead of `hwhm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_prime: Option<f64>,
    #[serde(default = "backward")]
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default)]
    pub detuning: f64,
    #[serde(default)]
    pub redistribute: bool,
    #[serde(default)]
    pub reverse_broadening: bool,
    #[serde(default)]
    pub decay_free_scaled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{field} {msg}"))
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {x}")))
    }
}

impl MediumConfig {
    pub fn validate(&self) -> Result<()> {
        positive("medium.d", self.d)?;
        if !self.detuning.is_finite() {
            return Err(invalid("medium.detuning", "must be finite"));
        }
        if let Some(n) = self.classes {
            if n == 0 {
                return Err(invalid("medium.classes", "must be at least 1"));
            }
        }
        match (self.profile, self.hwhm, self.d_prime) {
            (ProfileKind::Homogeneous, None, None) => {}
            (ProfileKind::Homogeneous, _, _) => {
                return Err(invalid("medium.hwhm", "and medium.d_prime do not apply to a homogeneous line"))
            }
            (_, Some(_), Some(_)) => return Err(invalid("medium.d_prime", "conflicts with medium.hwhm; give one")),
            (_, None, None) => return Err(invalid("medium.hwhm", "is required for a broadened line")),
            (_, Some(w), None) => positive("medium.hwhm", w)?,
            (_, None, Some(dp)) => {
                positive("medium.d_prime", dp)?;
                if dp >= self.d {
                    return Err(invalid("medium.d_prime", format!("must be below medium.d = {}, got {dp}", self.d)));
                }
            }
        }
        if let Some(g) = &self.grid {
            g.validate().map_err(|e| invalid("medium.grid", e))?;
        }
        Ok(())
    }

    pub fn line_profile(&self) -> Result<LineProfile> {
        self.validate()?;
        let family = match self.profile {
            ProfileKind::Homogeneous => return Ok(LineProfile::Homogeneous),
            ProfileKind::Gaussian => Family::Gaussian,
            ProfileKind::Lorentzian => Family::Lorentzian,
        };
        match (self.hwhm, self.d_prime) {
            (Some(w), _) => Ok(family.with_hwhm(w)),
            (None, Some(dp)) => width_for_effective_depth(self.d, dp, family),
            (None, None) => unreachable!("validated"),
        }
    }

    pub fn protocol(&self, resolution: Resolution) -> Result<ProtocolConfig> {
        let mut p = ProtocolConfig::new(self.d, self.line_profile()?);
        p.classes = self.classes;
        p.detuning = self.detuning;
        p.direction = self.direction;
        p.redistribute = self.redistribute;
        p.reverse_broadening = self.reverse_broadening;
        p.decay_free_scaled = self.decay_free_scaled;
        let g = self.grid.unwrap_or_default();
        p.grid = Grid { nz: resolution.scale(g.nz), nt: resolution.scale(g.nt), t_max: g.t_max };
        p.validate()?;
        Ok(p)
    }

    pub fn transfer(&self) -> Result<TransferConfig> {
        Ok(TransferConfig::new(self.d, self.line_profile()?)?
            .with_direction(self.direction)
            .with_reversal(self.reverse_broadening)
            .with_redistribution(self.redistribute)
            .with_decay_free(self.decay_free_scaled))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinWaveShape {
    /// `√3 z`.
    #[default]
    Ramp,
    Uniform,
    Csv,
}

fn default_nz() -> usize {
    201
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinWaveConfig {
    #[serde(default)]
    pub shape: SpinWaveShape,
    #[serde(default = "default_nz")]
    pub nz: usize,
    /// CSV with columns `z, re, im` for `shape = "csv"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for SpinWaveConfig {
    fn default() -> Self {
        Self { shape: SpinWaveShape::Ramp, nz: default_nz(), path: None }
    }
}

impl SpinWaveConfig {
    pub fn build(&self, base: &Path) -> Result<ModeSample> {
        if self.nz < 2 {
            return Err(invalid("spin_wave.nz", format!("must be at least 2, got {}", self.nz)));
        }
        let mode = match self.shape {
            SpinWaveShape::Ramp => ModeSample::linear_ramp(self.nz),
            SpinWaveShape::Uniform => ModeSample::spin_wave(self.nz, |_| C64::new(1.0, 0.0))?,
            SpinWaveShape::Csv => {
                let path = self.path.as_ref().ok_or_else(|| invalid("spin_wave.path", "is required for shape = \"csv\""))?;
                read_mode_csv(&base.join(path), Domain::Space).map_err(|e| invalid("spin_wave.path", e))?
            }
        };
        mode.normalized().map_err(|e| invalid("spin_wave", e))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputShape {
    #[default]
    GaussianLike,
    Csv,
}

fn default_duration() -> f64 {
    1.0
}

fn default_samples() -> usize {
    401
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    #[serde(default)]
    pub shape: InputShape,
    /// Pulse length; the storage π pulse follows its last sample.
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self { shape: InputShape::GaussianLike, duration: default_duration(), samples: default_samples(), path: None }
    }
}

impl InputConfig {
    pub fn build(&self, base: &Path) -> Result<ModeSample> {
        match self.shape {
            InputShape::GaussianLike => {
                positive("input.duration", self.duration)?;
                if self.samples < 3 {
                    return Err(invalid("input.samples", format!("must be at least 3, got {}", self.samples)));
                }
                gaussian_like_pulse(self.duration, self.samples)
            }
            InputShape::Csv => {
                let path = self.path.as_ref().ok_or_else(|| invalid("input.path", "is required for shape = \"csv\""))?;
                let m = read_mode_csv(&base.join(path), Domain::Time).map_err(|e| invalid("input.path", e))?;
                m.normalized().map_err(|e| invalid("input", e))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlShape {
    /// Instantaneous π pulse.
    #[default]
    Pi,
    /// Constant Rabi frequency switched on at `t = 0`.
    Constant,
    /// Gaussian pulse `Ω e^{−(t−t₀)²/(2τ²)}`.
    Gaussian,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default)]
    pub shape: ControlShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

impl ControlConfig {
    pub fn build(&self, t_max: f64) -> Result<ControlField> {
        let amp = || -> Result<f64> {
            let a = self.amplitude.ok_or_else(|| invalid("control.amplitude", "is required for this shape"))?;
            positive("control.amplitude", a)?;
            Ok(a)
        };
        match self.shape {
            ControlShape::Pi => Ok(ControlField::ideal_pi_pulse()),
            ControlShape::Constant => ControlField::constant(C64::new(amp()?, 0.0), 0.0, t_max),
            ControlShape::Gaussian => {
                let a = amp()?;
                let t0 = self.center.unwrap_or(0.0);
                let tau = self.width.ok_or_else(|| invalid("control.width", "is required for shape = \"gaussian\""))?;
                positive("control.width", tau)?;
                ControlField::from_fn(0.0, t_max, 4001, |t| C64::new(a * (-(t - t0).powi(2) / (2.0 * tau * tau)).exp(), 0.0))
            }
        }
    }
}

fn default_family() -> Family {
    Family::Gaussian
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CribConfig {
    /// Values of `Tdγ`.
    pub depths: Vec<f64>,
    #[serde(default = "default_family")]
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_samples: Option<usize>,
}

impl CribConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() {
            return Err(invalid("crib.depths", "must not be empty"));
        }
        for (k, &x) in self.depths.iter().enumerate() {
            positive(&format!("crib.depths[{k}]"), x)?;
            if x > 100.0 {
                return Err(invalid(&format!("crib.depths[{k}]"), format!("must be at most 100, got {x}")));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn medium(&self) -> Result<&MediumConfig> {
        let m = self.medium.as_ref().ok_or_else(|| invalid("medium", "section is required"))?;
        m.validate()?;
        Ok(m)
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution.unwrap_or_default()
    }
}

/// Reads a mode CSV with a header row and columns `x, re, im` on a
/// uniform grid.
pub fn read_mode_csv(path: &Path, domain: Domain) -> Result<ModeSample> {
    let text = std::fs::read_to_string(path)?;
    let mut xs = Vec::new();
    let mut vals = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", n + 1)))?;
        if cols.len() != 3 {
            return Err(Error::InvalidArgument(format!("line {}: expected 3 columns", n + 1)));
        }
        xs.push(cols[0]);
        vals.push(C64::new(cols[1], cols[2]));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two rows".into()));
    }
    let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    if xs.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-6 * h.abs().max(1e-300)) {
        return Err(Error::InvalidArgument("grid is not uniform".into()));
    }
    ModeSample::new(domain, xs[0], h, vals)
}

/// Self-describing output of one command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub scalars: BTreeMap<String, f64>,
    /// Array outputs by file name relative to the record.
    pub arrays: BTreeMap<String, String>,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
    pub wall_clock_s: f64,
}

impl ResultRecord {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            scalars: BTreeMap::new(),
            arrays: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn scalar(&mut self, key: &str, value: f64) {
        self.scalars.insert(key.to_string(), value);
    }

    pub fn array(&mut self, key: &str, file: &str) {
        self.arrays.insert(key.to_string(), file.to_string());
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.diagnostics.insert(key.to_string(), v);
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("record.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_medium() {
        let c = RunConfig::from_toml("[medium]\nd = 10.0\n").unwrap();
        let m = c.medium().unwrap();
        assert_eq!(m.line_profile().unwrap(), LineProfile::Homogeneous);
        assert_eq!(m.direction, Direction::Backward);
    }

    #[test]
    fn rejects_unknown_keys_and_names_fields() {
        let e = RunConfig::from_toml("[medium]\nd = 1.0\nbogus = 2\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let c = RunConfig::from_toml("[medium]\nd = -1.0\n").unwrap();
        let e = c.medium().unwrap_err();
        assert!(e.is_validation() && e.to_string().contains("medium.d"), "{e}");
        let c = RunConfig::from_toml("[medium]\nd = 5.0\nprofile = \"gaussian\"\n").unwrap();
        assert!(c.medium().unwrap_err().to_string().contains("medium.hwhm"));
    }

    #[test]
    fn d_prime_sets_width() {
        let c = RunConfig::from_toml("[medium]\nd = 60.0\nprofile = \"gaussian\"\nd_prime = 20.0\n").unwrap();
        let p = c.medium().unwrap().line_profile().unwrap();
        assert!((p.effective_depth(60.0) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("pm-config-{}", std::process::id()));
        let path = dir.join("s.csv");
        let m = ModeSample::linear_ramp(11);
        m.write_csv(&path).unwrap();
        let back = read_mode_csv(&path, Domain::Space).unwrap();
        assert!(back.l2_distance(&m).unwrap() < 1e-10);
        std::fs::remove_dir_all(dir).ok();
    }
}
