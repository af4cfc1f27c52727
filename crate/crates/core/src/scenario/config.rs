use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{sha256_hex, ScenarioError};
use crate::access::DecayParams;
use crate::placement::PlacementParams;
use crate::road::DEFAULT_SNAP_RADIUS_M;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Case1,
    Case2,
    Case3,
    Case4Capacity,
    Case4Distance,
}

impl Case {
    pub fn as_str(&self) -> &'static str {
        match self {
            Case::Case1 => "case1",
            Case::Case2 => "case2",
            Case::Case3 => "case3",
            Case::Case4Capacity => "case4_capacity",
            Case::Case4Distance => "case4_distance",
        }
    }

    /// Roads inside fire perimeters are removed and fire cells drop out of demand.
    pub fn fire_closures(&self) -> bool {
        matches!(self, Case::Case2 | Case::Case3)
    }

    pub fn congested(&self) -> bool {
        matches!(self, Case::Case3 | Case::Case4Capacity | Case::Case4Distance)
    }

    pub fn places(&self) -> bool {
        matches!(self, Case::Case4Capacity | Case::Case4Distance)
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Input files, resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub roads: PathBuf,
    pub grid: PathBuf,
    pub shelters: PathBuf,
    pub zones: PathBuf,
    #[serde(default)]
    pub perimeters: Option<PathBuf>,
    #[serde(default)]
    pub candidates: Option<PathBuf>,
}

impl InputPaths {
    pub fn resolved(&self, base: &Path) -> InputPaths {
        let r = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        InputPaths {
            roads: r(&self.roads),
            grid: r(&self.grid),
            shelters: r(&self.shelters),
            zones: r(&self.zones),
            perimeters: self.perimeters.as_ref().map(r),
            candidates: self.candidates.as_ref().map(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CongestionConfig {
    pub buffer_m: f64,
    pub speed_cap_kph: f64,
}

impl Default for CongestionConfig {
    fn default() -> Self {
        CongestionConfig { buffer_m: 5000.0, speed_cap_kph: 10.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationConfig {
    /// Fixed upper bound for the class breaks.
    pub reference_max: Option<f64>,
    /// Another scenario config whose maximum score sets the class breaks.
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub snap_radius_m: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { snap_radius_m: DEFAULT_SNAP_RADIUS_M }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub id: Option<String>,
    pub case: Case,
    pub inputs: InputPaths,
    #[serde(default)]
    pub decay: DecayParams,
    #[serde(default)]
    pub congestion: Option<CongestionConfig>,
    #[serde(default)]
    pub placement: Option<PlacementParams>,
    #[serde(default)]
    pub classification: ClassificationConfig,
    #[serde(default)]
    pub network: NetworkConfig,
}

/// A parsed config together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub id: String,
    pub base_dir: PathBuf,
    pub path: Option<PathBuf>,
    pub sha256: String,
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Config(format!("cannot read {}: {e}", path.display())))?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut loaded = Self::from_str(&text, &base, &stem)?;
        loaded.path = Some(path.to_path_buf());
        Ok(loaded)
    }

    /// Parses TOML text; relative input paths resolve against `base_dir`.
    pub fn from_str(text: &str, base_dir: &Path, default_id: &str) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        config.validate()?;
        Ok(LoadedConfig {
            id: config.id.clone().unwrap_or_else(|| default_id.to_string()),
            config,
            base_dir: base_dir.to_path_buf(),
            path: None,
            sha256: sha256_hex(text.as_bytes()),
        })
    }

    pub fn inputs(&self) -> InputPaths {
        self.config.inputs.resolved(&self.base_dir)
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        let case = self.case;
        if case.fire_closures() && self.inputs.perimeters.is_none() {
            return bad(format!("{case} needs inputs.perimeters"));
        }
        if case.congested() && self.congestion.is_none() {
            return bad(format!("{case} needs a [congestion] section"));
        }
        if case.places() && self.placement.is_none() {
            return bad(format!("{case} needs a [placement] section"));
        }
        self.decay.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
        if let Some(c) = &self.congestion {
            if !(c.buffer_m >= 0.0) || !(c.speed_cap_kph > 0.0) {
                return bad(format!(
                    "congestion needs buffer_m >= 0 and speed_cap_kph > 0, got {} and {}",
                    c.buffer_m, c.speed_cap_kph
                ));
            }
        }
        if let Some(p) = &self.placement {
            p.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
        }
        if let Some(m) = self.classification.reference_max {
            if !(m > 0.0) || !m.is_finite() {
                return bad(format!("classification.reference_max must be positive, got {m}"));
            }
        }
        if self.classification.reference_max.is_some() && self.classification.reference.is_some() {
            return bad("set either classification.reference_max or classification.reference, not both".into());
        }
        if !(self.network.snap_radius_m > 0.0) {
            return bad(format!("network.snap_radius_m must be positive, got {}", self.network.snap_radius_m));
        }
        Ok(())
    }
}
