//! Scenario configuration: one JSON document per run, unknown keys rejected.

use std::path::{Path, PathBuf};

use rvio_core::estimator::{FilterConfig, Mode};
use rvio_sim::scene::FlatPlaneParams;
use rvio_sim::{SceneConfig, SensorRig, TrajectoryProfile};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Initial filter uncertainty and how the initial estimate is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    /// Meters.
    pub sigma_position: f64,
    /// m/s.
    pub sigma_velocity: f64,
    /// Roll and pitch, radians.
    pub sigma_tilt: f64,
    /// Radians.
    pub sigma_yaw: f64,
    /// rad/s.
    pub sigma_gyro_bias: f64,
    /// m/s^2.
    pub sigma_accel_bias: f64,
    /// Draw the initial error from the initial covariance; otherwise start
    /// at truth.
    pub sample_errors: bool,
    /// Scale factor applied to the initial velocity and divided into the
    /// inverse-depth prior, for scale-convergence experiments.
    pub scale: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            sigma_position: 0.01,
            sigma_velocity: 0.1,
            sigma_tilt: 0.01,
            sigma_yaw: 0.002,
            sigma_gyro_bias: 1e-3,
            sigma_accel_bias: 0.03,
            sample_errors: true,
            scale: 1.0,
        }
    }
}

/// Settings of the observability report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservabilityConfig {
    /// Seconds between the stamps at which facet features are picked.
    pub facet_spacing: f64,
    /// Features picked at each of those stamps: the facet around the laser
    /// axis first, then the landmarks nearest to it.
    pub features_per_stamp: usize,
    /// Upper bound on analysed features.
    pub max_features: usize,
    /// Seconds between stacked block rows.
    pub row_spacing: f64,
    /// Singular values below this fraction of the largest are null.
    pub tolerance: f64,
    /// Directions with a residual below this are reported unobservable.
    pub membership: f64,
    /// Residual above which a direction is reported observable.
    pub observable_above: f64,
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        Self {
            facet_spacing: 2.0,
            features_per_stamp: 3,
            max_features: 90,
            row_spacing: 0.5,
            tolerance: 1e-8,
            membership: 1e-6,
            observable_above: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scene: SceneConfig,
    pub trajectory: TrajectoryProfile,
    pub rig: SensorRig,
    pub filter: FilterConfig,
    pub init: InitConfig,
    pub observability: ObservabilityConfig,
    pub mode: Mode,
    pub seed: u64,
    /// Run directory; nothing is written when absent.
    pub output: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::FlatPlane(FlatPlaneParams::default()),
            trajectory: TrajectoryProfile::default(),
            rig: SensorRig::default(),
            filter: FilterConfig::default(),
            init: InitConfig::default(),
            observability: ObservabilityConfig::default(),
            mode: Mode::RangeVio,
            seed: 0,
            output: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: String| HarnessError::Config(e);
        self.filter
            .validate(self.mode)
            .map_err(|e| cfg(e.to_string()))?;
        self.trajectory.validate().map_err(|e| cfg(e.to_string()))?;
        self.rig.validate().map_err(|e| cfg(e.to_string()))?;
        if self.filter.camera != self.rig.camera || self.filter.lrf != self.rig.lrf {
            return Err(cfg("filter and rig extrinsics differ".into()));
        }
        if self.filter.gravity != self.rig.gravity() {
            return Err(cfg("filter and rig gravity differ".into()));
        }
        let i = &self.init;
        let sig = [
            i.sigma_position,
            i.sigma_velocity,
            i.sigma_tilt,
            i.sigma_yaw,
            i.sigma_gyro_bias,
            i.sigma_accel_bias,
        ];
        if sig.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || !(i.scale > 0.0 && i.scale.is_finite())
        {
            return Err(cfg("initial sigmas and scale must be positive".into()));
        }
        let o = &self.observability;
        if !(o.facet_spacing > 0.0
            && o.row_spacing > 0.0
            && o.max_features >= 3
            && o.features_per_stamp >= 1)
        {
            return Err(cfg(
                "observability spacing must be positive with at least 3 features".into(),
            ));
        }
        Ok(())
    }

    /// Same scenario in another mode.
    pub fn with_mode(&self, mode: Mode) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}
