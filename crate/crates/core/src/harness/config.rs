//! TOML run configuration.
//!
//! Sections: `[device]`, `[fault]`, `[solar]`, `[load]`, `[energy]` and
//! `[experiment]`. Every key is optional; omitted keys take the defaults
//! below. Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::device::{DeviceVariability, ProgrammingContext, DEFAULT_PULSE_TOLERANCE};
use crate::fault::{
    calibrate_profiles, parse_measurements_csv, Condition, ErrorProfile, FaultMode, FunctionalEnvelope, MarginLaw,
    ProfileSet,
};
use crate::pipeline::EngineConfig;
use crate::power::{ChipLoadModel, EfficiencyAccounting, EnergyFractions, EnergyModel, SolarCellModel};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Schmoo,
    SolarSweep,
    #[default]
    Accuracy,
    Pattern,
    Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceSection {
    pub lrs_median_ohms: f64,
    pub lrs_log_sigma: f64,
    pub hrs_median_ohms: f64,
    pub hrs_log_sigma: f64,
    pub pulse_tolerance: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        let v = DeviceVariability::default();
        Self {
            lrs_median_ohms: v.lrs_median,
            lrs_log_sigma: v.lrs_log_sigma,
            hrs_median_ohms: v.hrs_median,
            hrs_log_sigma: v.hrs_log_sigma,
            pulse_tolerance: DEFAULT_PULSE_TOLERANCE,
        }
    }
}

impl DeviceSection {
    pub fn variability(&self) -> DeviceVariability {
        DeviceVariability {
            lrs_median: self.lrs_median_ohms,
            lrs_log_sigma: self.lrs_log_sigma,
            hrs_median: self.hrs_median_ohms,
            hrs_log_sigma: self.hrs_log_sigma,
        }
    }

    pub fn programming_context(&self) -> Result<ProgrammingContext, HarnessError> {
        ProgrammingContext::new(self.variability(), self.pulse_tolerance).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Override for one condition's error table: either `p0`/`cutoff` for the
/// parametric shape or an explicit `table` indexed by `|Δ|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOverride {
    pub condition: Condition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<f64>>,
}

impl ProfileOverride {
    pub fn profile(&self) -> Result<ErrorProfile, HarnessError> {
        let cfg = |e: crate::fault::FaultError| HarnessError::Config(format!("profile {}: {e}", self.condition));
        match (&self.table, self.p0, self.cutoff) {
            (Some(t), None, None) => ErrorProfile::new(self.condition, t.clone()).map_err(cfg),
            (None, Some(p0), Some(c)) => ErrorProfile::parametric(self.condition, p0, c).map_err(cfg),
            (None, Some(0.0), None) => Ok(ErrorProfile::zero(self.condition)),
            _ => Err(HarnessError::Config(format!(
                "profile {}: give either `table` or both `p0` and `cutoff`",
                self.condition
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultSection {
    pub mode: FaultMode,
    pub margin_law: MarginLaw,
    pub envelope: FunctionalEnvelope,
    /// CSV with header `condition,delta,error_rate`; its profiles replace
    /// the defaults for the conditions it covers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub profiles: Vec<ProfileOverride>,
}

impl Default for FaultSection {
    fn default() -> Self {
        Self {
            mode: FaultMode::StochasticOutput,
            margin_law: MarginLaw::default(),
            envelope: FunctionalEnvelope::default(),
            calibration_csv: None,
            profiles: Vec::new(),
        }
    }
}

impl FaultSection {
    /// Defaults, then the calibration file, then inline overrides.
    pub fn profile_set(&self) -> Result<ProfileSet, HarnessError> {
        let mut set = ProfileSet::defaults();
        if let Some(p) = &self.calibration_csv {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            let m = parse_measurements_csv(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
            let cal = calibrate_profiles(&m).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
            for prof in cal.profiles() {
                set.insert(prof.clone());
            }
        }
        for o in &self.profiles {
            set.insert(o.profile()?);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    pub model: EnergyModel,
    pub fractions: EnergyFractions,
    pub accounting: EfficiencyAccounting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub voltages: Vec<f64>,
    pub frequencies_mhz: Vec<f64>,
    /// Solar sweep illuminations; exclusive with `supply_voltage`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suns: Option<Vec<f64>>,
    /// Lab-supply alternative to `suns` for the solar sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supply_voltage: Option<Vec<f64>>,
    /// Accuracy-run conditions: `error_free`, `<v>V` or `<s>suns`.
    pub conditions: Vec<String>,
    /// Clock used for the margin threshold outside schmoo grids.
    pub frequency_mhz: f64,
    /// Chip layout for pattern experiments.
    pub engine: String,
    pub trials: u32,
    pub base_seed: u64,
    pub output: PathBuf,
    /// Output neurons generated per preactivation target.
    pub patterns_per_delta: usize,
    /// Targets span `-delta_max..=delta_max`.
    pub delta_max: i64,
    /// Use only the first `max_samples` dataset entries; 0 means all.
    pub max_samples: usize,
    /// Points per IV sweep curve.
    pub iv_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            model: None,
            images: None,
            labels: None,
            voltages: vec![0.7, 0.8, 0.9, 1.0, 1.1, 1.2],
            frequencies_mhz: vec![10.0, 33.0, 66.0],
            suns: None,
            supply_voltage: None,
            conditions: ["error_free", "8suns", "0.8suns", "0.36suns", "0.08suns"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            frequency_mhz: 10.0,
            engine: "two_layer_116x64".into(),
            trials: 20,
            base_seed: 1,
            output: PathBuf::from("out"),
            patterns_per_delta: 128,
            delta_max: 10,
            max_samples: 0,
            iv_points: 41,
        }
    }
}

pub const DEFAULT_SUNS: [f64; 5] = [8.0, 0.8, 0.36, 0.08, 0.0];

impl ExperimentConfig {
    pub fn engine_config(&self) -> Result<EngineConfig, HarnessError> {
        match self.engine.as_str() {
            "single_tile_58x64" => Ok(EngineConfig::SingleTile58x64),
            "two_layer_116x64" => Ok(EngineConfig::TwoLayer116x64),
            "one_layer_116x128" => Ok(EngineConfig::OneLayer116x128),
            other => Err(HarnessError::Config(format!("unknown engine {other:?}"))),
        }
    }

    pub fn solar_grid(&self) -> Result<SolarGrid, HarnessError> {
        match (&self.suns, &self.supply_voltage) {
            (Some(_), Some(_)) => Err(HarnessError::Config("`suns` and `supply_voltage` are mutually exclusive".into())),
            (Some(s), None) => Ok(SolarGrid::Suns(s.clone())),
            (None, Some(v)) => Ok(SolarGrid::SupplyVoltage(v.clone())),
            (None, None) => Ok(SolarGrid::Suns(DEFAULT_SUNS.to_vec())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolarGrid {
    Suns(Vec<f64>),
    SupplyVoltage(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub device: DeviceSection,
    pub fault: FaultSection,
    pub solar: SolarCellModel,
    pub load: ChipLoadModel,
    pub energy: EnergySection,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.experiment.model);
        fix(&mut self.experiment.images);
        fix(&mut self.experiment.labels);
        fix(&mut self.fault.calibration_csv);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let e = &self.experiment;
        let cfg = |m: String| Err(HarnessError::Config(m));
        if e.trials < 1 {
            return cfg("trials must be at least 1".into());
        }
        for (name, g) in [("voltages", &e.voltages), ("frequencies_mhz", &e.frequencies_mhz)] {
            if matches!(e.mode, Mode::Schmoo | Mode::Pattern | Mode::Energy) && g.is_empty() {
                return cfg(format!("{name} grid is empty"));
            }
            if g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return cfg(format!("{name} must be positive"));
            }
        }
        if e.mode == Mode::SolarSweep {
            match e.solar_grid()? {
                SolarGrid::Suns(s) if s.is_empty() || s.iter().any(|x| !(x.is_finite() && *x >= 0.0)) => {
                    return cfg("suns grid must be non-empty and non-negative".into())
                }
                SolarGrid::SupplyVoltage(v) if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) => {
                    return cfg("supply_voltage grid must be non-empty and positive".into())
                }
                _ => {}
            }
        }
        if e.mode == Mode::Accuracy && e.conditions.is_empty() {
            return cfg("conditions list is empty".into());
        }
        if e.patterns_per_delta == 0 || e.delta_max < 0 {
            return cfg("patterns_per_delta must be positive and delta_max non-negative".into());
        }
        e.engine_config()?;
        self.device.programming_context()?;
        self.fault.margin_law.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.solar.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.load.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Accuracy-run condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunCondition {
    ErrorFree,
    Supply(Condition),
}

impl RunCondition {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("error_free") || t.eq_ignore_ascii_case("baseline") {
            return Ok(RunCondition::ErrorFree);
        }
        t.parse()
            .map(RunCondition::Supply)
            .map_err(|e: crate::fault::FaultError| HarnessError::Config(e.to_string()))
    }

    pub fn label(&self) -> String {
        match self {
            RunCondition::ErrorFree => "error_free".into(),
            RunCondition::Supply(c) => c.to_string(),
        }
    }

    pub fn key(&self) -> u64 {
        match self {
            RunCondition::ErrorFree => 0x0e44_0f4e_e000_0000,
            RunCondition::Supply(c) => c.key(),
        }
    }
}
