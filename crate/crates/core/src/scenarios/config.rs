//! TOML scenario configuration.
//!
//! ```toml
//! name = "hilly"
//! seed = 7                      # traffic seed
//! controllers = ["admm_mpc", "cc"]
//!
//! [road]
//! synthetic = { length_km = 20.0, hill_amplitude_m = 40.0, hill_wavelength_km = 4.0, seed = 1 }
//! # file = "road.csv"         # alternatively, relative to this file
//! reverse = false
//!
//! [time]
//! target_speed_kmh = 85.0       # or tau_s = 847.0, not both
//!
//! [bounds]
//! lower_kmh = 75.0
//! upper_kmh = 90.0
//!
//! [traffic]                     # optional; omit for free road
//! preset = "normal"             # heavy | light | normal, or mu1_km/mu2_km
//!
//! [aging]
//! ending_soc = 0.2
//! daily = "matched_range"       # or { km = 300.0 }
//! ```
//!
//! `[vehicle]`, `[solver]`, `[mpc]` and `[aging.model]` override the
//! corresponding parameter structs field by field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aging::{AgingConfig, AgingParams};
use crate::dynamics::VehicleParams;
use crate::mpc::MpcConfig;
use crate::objective::SpeedBounds;
use crate::solver::SolverConfig;
use crate::traffic::TrafficConfig;
use crate::{kmh_to_mps, Error, Result};

use super::road::{load_road, synth_road, RoadProfile, SynthSpec, DEFAULT_SEGMENT_L};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    AdmmMpc,
    Cc,
}

impl Controller {
    pub fn as_str(self) -> &'static str {
        match self {
            Controller::AdmmMpc => "admm_mpc",
            Controller::Cc => "cc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadConfig {
    pub file: Option<PathBuf>,
    pub synthetic: Option<SynthSpec>,
    pub segment_l: f64,
    pub reverse: bool,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self { file: None, synthetic: None, segment_l: DEFAULT_SEGMENT_L, reverse: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub tau_s: Option<f64>,
    pub target_speed_kmh: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub lower_kmh: f64,
    pub upper_kmh: f64,
    /// Lower bound when a traffic section is present: the truck must be free
    /// to drop below the preceding vehicle's speed.
    pub traffic_lower_kmh: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { lower_kmh: 75.0, upper_kmh: 90.0, traffic_lower_kmh: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficPreset {
    Heavy,
    Light,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub preset: Option<TrafficPreset>,
    pub mu1_km: Option<f64>,
    pub mu2_km: Option<f64>,
    pub h_tau_s: Option<f64>,
    pub start_present: Option<bool>,
    /// Pre-generated trace, relative to the config file.
    pub trace_file: Option<PathBuf>,
}

impl TrafficSection {
    pub fn resolve(&self, seed: u64) -> Result<TrafficConfig> {
        let mut c = match self.preset {
            Some(TrafficPreset::Heavy) | None => TrafficConfig::heavy(seed),
            Some(TrafficPreset::Light) => TrafficConfig::light(seed),
            Some(TrafficPreset::Normal) => TrafficConfig::normal(seed),
        };
        if self.preset.is_none() && (self.mu1_km.is_none() || self.mu2_km.is_none()) {
            return Err(Error::Config("traffic needs a preset or both mu1_km and mu2_km".into()));
        }
        if let Some(v) = self.mu1_km {
            c.mu1_km = v;
        }
        if let Some(v) = self.mu2_km {
            c.mu2_km = v;
        }
        if let Some(v) = self.h_tau_s {
            c.h_tau_s = v;
        }
        c.start_present = self.start_present;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DailySpec {
    /// The cruise-control drive's range from a full charge to the ending SOC.
    MatchedRange,
    Km(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgingSection {
    pub ending_soc: f64,
    pub daily: DailySpec,
    pub sim: AgingConfig,
    /// Model constants; the calibrated defaults when absent.
    pub model: Option<AgingParams>,
}

impl Default for AgingSection {
    fn default() -> Self {
        Self { ending_soc: 0.2, daily: DailySpec::MatchedRange, sim: AgingConfig::default(), model: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Seed for stochastic traffic.
    pub seed: u64,
    pub controllers: Vec<Controller>,
    pub road: RoadConfig,
    pub time: TimeConfig,
    pub bounds: BoundsConfig,
    pub traffic: Option<TrafficSection>,
    pub aging: AgingSection,
    pub vehicle: VehicleParams,
    pub solver: SolverConfig,
    pub mpc: MpcConfig,
    /// Directory relative paths are resolved against; not serialised.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    /// The bundled scenario: 20 km of rolling hills at an 85 km/h average.
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 0,
            controllers: vec![Controller::AdmmMpc, Controller::Cc],
            road: RoadConfig::default(),
            time: TimeConfig { tau_s: None, target_speed_kmh: Some(85.0) },
            bounds: BoundsConfig::default(),
            traffic: None,
            aging: AgingSection::default(),
            vehicle: VehicleParams::default(),
            solver: SolverConfig::default(),
            mpc: MpcConfig::default(),
            base_dir: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_toml(&s).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        c.base_dir = path.parent().map(Path::to_path_buf);
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match (self.time.tau_s, self.time.target_speed_kmh) {
            (Some(t), None) if t > 0.0 && t.is_finite() => {}
            (None, Some(v)) if v > 0.0 && v.is_finite() => {}
            (Some(_), Some(_)) => return Err(Error::Config("give either time.tau_s or time.target_speed_kmh, not both".into())),
            (None, None) => return Err(Error::Config("time needs tau_s or target_speed_kmh".into())),
            _ => return Err(Error::Config("time specification must be positive".into())),
        }
        if self.road.file.is_some() && self.road.synthetic.is_some() {
            return Err(Error::Config("road takes either file or synthetic, not both".into()));
        }
        if !(0.0 < self.bounds.lower_kmh && self.bounds.lower_kmh <= self.bounds.upper_kmh) {
            return Err(Error::Config(format!(
                "speed bounds [{}, {}] km/h are not ordered and positive",
                self.bounds.lower_kmh, self.bounds.upper_kmh
            )));
        }
        if !(0.0 <= self.bounds.traffic_lower_kmh && self.bounds.traffic_lower_kmh <= self.bounds.upper_kmh) {
            return Err(Error::Config(format!(
                "traffic_lower_kmh {} must lie in [0, upper_kmh]",
                self.bounds.traffic_lower_kmh
            )));
        }
        if self.controllers.is_empty() {
            return Err(Error::Config("no controllers selected".into()));
        }
        if !(0.0..1.0).contains(&self.aging.ending_soc) {
            return Err(Error::Config(format!("aging.ending_soc {} must lie in [0, 1)", self.aging.ending_soc)));
        }
        if let DailySpec::Km(km) = self.aging.daily {
            if !(km > 0.0 && km.is_finite()) {
                return Err(Error::Config(format!("aging daily distance must be positive, got {km}")));
            }
        }
        if (self.road.segment_l - self.mpc.segment_l).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "road.segment_l {} differs from mpc.segment_l {}",
                self.road.segment_l, self.mpc.segment_l
            )));
        }
        if let Some(t) = &self.traffic {
            t.resolve(self.seed)?;
        }
        self.vehicle.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.mpc.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn build_road(&self) -> Result<RoadProfile> {
        let road = match (&self.road.file, &self.road.synthetic) {
            (Some(f), _) => load_road(&self.resolve_path(f), self.road.segment_l)?,
            (None, Some(s)) => synth_road(&SynthSpec { segment_l: self.road.segment_l, ..s.clone() })?,
            (None, None) => synth_road(&SynthSpec { segment_l: self.road.segment_l, ..SynthSpec::default() })?,
        };
        let road = if self.road.reverse { road.reversed() } else { road };
        road.validate()?;
        Ok(road)
    }

    /// Total trip time for a road of `length_m`.
    pub fn tau(&self, length_m: f64) -> f64 {
        match (self.time.tau_s, self.time.target_speed_kmh) {
            (Some(t), _) => t,
            (None, Some(v)) => length_m / kmh_to_mps(v),
            (None, None) => f64::NAN,
        }
    }

    pub fn legal_bounds(&self, n_segments: usize) -> SpeedBounds {
        let lower = if self.traffic.is_some() { self.bounds.traffic_lower_kmh } else { self.bounds.lower_kmh };
        SpeedBounds::uniform(n_segments + 1, kmh_to_mps(lower), kmh_to_mps(self.bounds.upper_kmh))
    }

    pub fn aging_params(&self) -> Result<AgingParams> {
        match self.aging.model {
            Some(k) => {
                k.validate()?;
                Ok(k)
            }
            None => Ok(AgingParams::default()),
        }
    }
}
