//! Sensor rig: rates, noise, mounting, camera frustum, track lifetimes and
//! the range finder's outlier model.

use nalgebra::Vector3;
use rvio_core::facet::LrfExtrinsics;
use rvio_core::imu::NoiseModel;
use rvio_core::state::CameraExtrinsics;
use rvio_core::visual::MeasurementNoise;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rates {
    pub imu: f64,
    pub camera: f64,
    pub lrf: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            imu: 250.0,
            camera: 30.0,
            lrf: 25.0,
        }
    }
}

/// Visible region on the normalized image plane and depth limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Frustum {
    pub half_width: f64,
    pub half_height: f64,
    pub min_depth: f64,
    pub max_depth: f64,
}

impl Default for Frustum {
    fn default() -> Self {
        Self {
            half_width: 0.6,
            half_height: 0.45,
            min_depth: 0.3,
            max_depth: 80.0,
        }
    }
}

impl Frustum {
    pub fn contains(&self, p_c: &Vector3<f64>) -> bool {
        if !(p_c.z >= self.min_depth && p_c.z <= self.max_depth) {
            return false;
        }
        let (u, v) = (p_c.x / p_c.z, p_c.y / p_c.z);
        u.abs() <= self.half_width && v.abs() <= self.half_height
    }
}

/// Front-end behaviour of the synthetic tracker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackModel {
    /// Mean track length in frames before the tracker loses a visible
    /// landmark; `None` keeps tracks alive while visible.
    pub mean_lifetime: Option<f64>,
    /// Frames a lost landmark waits before it can be detected again.
    pub redetect_delay: usize,
    /// Chance per frame that a visible, untracked landmark is picked up.
    pub detection_probability: f64,
}

impl Default for TrackModel {
    fn default() -> Self {
        Self {
            mean_lifetime: None,
            redetect_delay: 1,
            detection_probability: 1.0,
        }
    }
}

/// Range offset added to one sample, for scripted outliers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpike {
    /// Applied to the range sample nearest to this time.
    pub stamp: f64,
    /// Meters; positive reads long.
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutlierModel {
    /// Per-sample probability of a random outlier.
    pub probability: f64,
    /// Uniform outlier magnitude bounds, meters.
    pub magnitude: (f64, f64),
    pub spikes: Vec<RangeSpike>,
}

impl Default for OutlierModel {
    fn default() -> Self {
        Self {
            probability: 0.002,
            magnitude: (2.0, 10.0),
            spikes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorRig {
    pub rates: Rates,
    pub imu_noise: NoiseModel,
    pub measurement: MeasurementNoise,
    pub camera: CameraExtrinsics,
    pub lrf: LrfExtrinsics,
    pub frustum: Frustum,
    pub tracks: TrackModel,
    pub outliers: OutlierModel,
    /// True biases at the start of the run.
    pub initial_gyro_bias: [f64; 3],
    pub initial_accel_bias: [f64; 3],
    pub gravity: [f64; 3],
}

impl Default for SensorRig {
    fn default() -> Self {
        Self {
            rates: Rates::default(),
            imu_noise: NoiseModel::default(),
            measurement: MeasurementNoise::default(),
            camera: CameraExtrinsics::nadir(),
            lrf: LrfExtrinsics::default(),
            frustum: Frustum::default(),
            tracks: TrackModel::default(),
            outliers: OutlierModel::default(),
            initial_gyro_bias: [0.0; 3],
            initial_accel_bias: [0.0; 3],
            gravity: [0.0, 0.0, -9.81],
        }
    }
}

impl SensorRig {
    /// Rig with every noise source and outlier switched off.
    pub fn noiseless() -> Self {
        Self {
            imu_noise: NoiseModel::zero(),
            measurement: MeasurementNoise {
                sigma_v: 0.0,
                sigma_r: 0.0,
            },
            outliers: OutlierModel {
                probability: 0.0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        let r = &self.rates;
        if ![r.imu, r.camera, r.lrf]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            return bad("sensor rates must be positive");
        }
        if self.imu_noise.validate().is_err() {
            return bad("IMU noise densities must be finite and non-negative");
        }
        let m = &self.measurement;
        if !(m.sigma_v >= 0.0 && m.sigma_r >= 0.0) {
            return bad("measurement noise must be non-negative");
        }
        if self.lrf.validate().is_err() {
            return bad("range finder axis must be a unit vector");
        }
        let f = &self.frustum;
        if !(f.half_width > 0.0
            && f.half_height > 0.0
            && f.min_depth > 0.0
            && f.max_depth > f.min_depth)
        {
            return bad("frustum extents must be positive with max depth beyond min depth");
        }
        let t = &self.tracks;
        if t.mean_lifetime.is_some_and(|l| !(l >= 1.0))
            || !(0.0..=1.0).contains(&t.detection_probability)
        {
            return bad(
                "track lifetime must be at least one frame and detection probability in [0, 1]",
            );
        }
        let o = &self.outliers;
        if !(0.0..=1.0).contains(&o.probability) || !(o.magnitude.0 <= o.magnitude.1) {
            return bad("outlier probability must be in [0, 1] with ordered magnitudes");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let r = SensorRig::default();
        assert!(r.validate().is_ok());
        assert_eq!(
            (r.rates.imu, r.rates.camera, r.rates.lrf),
            (250.0, 30.0, 25.0)
        );
        assert!(SensorRig::noiseless().validate().is_ok());
    }

    #[test]
    fn rejects_non_positive_rate() {
        let mut r = SensorRig::default();
        r.rates.camera = 0.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn frustum_edges() {
        let f = Frustum::default();
        assert!(f.contains(&Vector3::new(0.0, 0.0, 10.0)));
        assert!(f.contains(&Vector3::new(6.0, 4.5, 10.0)));
        assert!(!f.contains(&Vector3::new(6.1, 0.0, 10.0)));
        assert!(!f.contains(&Vector3::new(0.0, 0.0, -10.0)));
    }
}
