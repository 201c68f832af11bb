//! Event-driven range-VIO filter.
//!
//! Per camera frame: propagate to the frame stamp, clone the camera pose,
//! update with in-state (SLAM) features, drop lost SLAM features, run the
//! MSCKF update on finished tracks, promote new SLAM features and finally
//! marginalize clones down to the window size. Range samples are applied at
//! their own stamps against the IMU-propagated pose.

use std::collections::{BTreeMap, HashSet};

use nalgebra::{DMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facet::{
    range_update, LrfExtrinsics, RangeConfig, RangeSample, RangeStatus, RangeVerdict,
};
use crate::imu::{propagate, ImuSample, NoiseModel};
use crate::state::{CameraExtrinsics, FilterState, InertialState};
use crate::tracks::{decide_tracks, Track, TrackPolicy, TrackStatus};
use crate::visual::{
    initialize_slam_feature, msckf_update, project, slam_update, FeatureObservation,
    InverseDepthPrior, MeasurementNoise, MsckfReport, SlamInit, TriangulationConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Vio,
    RangeVio,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Vio => "vio",
            Mode::RangeVio => "range_vio",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// Clones kept after each frame.
    pub window: usize,
    pub tracks: TrackPolicy,
    pub imu_noise: NoiseModel,
    pub measurement: MeasurementNoise,
    pub triangulation: TriangulationConfig,
    pub prior: InverseDepthPrior,
    pub range: RangeConfig,
    /// Confidence of the chi-square gates on visual updates.
    pub visual_confidence: f64,
    /// SLAM features whose inverse depth falls below this are dropped.
    pub min_inverse_depth: f64,
    /// Allow SLAM features without a triangulated depth.
    pub semi_infinite_init: bool,
    pub camera: CameraExtrinsics,
    pub lrf: LrfExtrinsics,
    pub gravity: Vector3<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            window: 4,
            tracks: TrackPolicy::default(),
            imu_noise: NoiseModel::default(),
            measurement: MeasurementNoise::default(),
            triangulation: TriangulationConfig::default(),
            prior: InverseDepthPrior::default(),
            range: RangeConfig::default(),
            visual_confidence: 0.95,
            min_inverse_depth: 1e-3,
            semi_infinite_init: true,
            camera: CameraExtrinsics::nadir(),
            lrf: LrfExtrinsics::default(),
            gravity: Vector3::new(0.0, 0.0, -9.81),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self, mode: Mode) -> Result<()> {
        if self.window < 2 {
            return Err(Error::Invalid("window must hold at least 2 clones".into()));
        }
        if mode == Mode::RangeVio && self.tracks.max_slam < 3 {
            return Err(Error::Invalid(
                "range updates need at least 3 SLAM slots".into(),
            ));
        }
        if !(self.range.gate_sigma > 0.0) {
            return Err(Error::Invalid("range gate must be positive".into()));
        }
        if self.tracks.min_track_length < 2 {
            return Err(Error::Invalid("tracks need at least 2 observations".into()));
        }
        if !(self.visual_confidence > 0.0 && self.visual_confidence < 1.0) {
            return Err(Error::Invalid(
                "visual gate confidence must lie in (0, 1)".into(),
            ));
        }
        if !(self.measurement.sigma_v > 0.0 && self.measurement.sigma_r > 0.0) {
            return Err(Error::Invalid("measurement noise must be positive".into()));
        }
        self.imu_noise.validate()?;
        self.lrf.validate()
    }
}

/// Feature observation with the tracker's quality score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedFeature {
    pub track_id: u64,
    pub uv: Vector2<f64>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub stamp: f64,
    pub features: Vec<TrackedFeature>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameReport {
    pub stamp: f64,
    pub slam_rows: usize,
    pub slam_rejected: usize,
    /// Largest absolute accepted SLAM innovation component.
    pub slam_max_innovation: f64,
    pub msckf: MsckfReport,
    pub promoted: Vec<(u64, SlamInit)>,
    pub dropped_features: usize,
    pub features: usize,
    pub clones: usize,
    pub fault: bool,
}

impl FrameReport {
    /// Largest absolute visual residual used by this frame's updates.
    pub fn max_innovation(&self) -> f64 {
        self.slam_max_innovation.max(self.msckf.max_residual)
    }
}

#[derive(Clone, Debug)]
pub struct Estimator {
    pub state: FilterState,
    pub config: FilterConfig,
    pub mode: Mode,
    tracks: BTreeMap<u64, Track>,
    last_imu: Option<ImuSample>,
}

impl Estimator {
    pub fn new(
        inertial: InertialState,
        cov: DMatrix<f64>,
        stamp: f64,
        config: FilterConfig,
        mode: Mode,
    ) -> Result<Self> {
        config.validate(mode)?;
        let mut state = FilterState::new(inertial, cov, stamp)?;
        state.condition_covariance();
        Ok(Self {
            state,
            config,
            mode,
            tracks: BTreeMap::new(),
            last_imu: None,
        })
    }

    pub fn tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.values()
    }

    /// Propagates to an IMU sample. The first sample only sets the
    /// reference and must carry the filter stamp.
    pub fn process_imu(&mut self, sample: &ImuSample) -> Result<()> {
        match self.last_imu {
            None => {
                if sample.stamp != self.state.stamp {
                    return Err(Error::NonMonotonicStamp {
                        stamp: sample.stamp,
                        previous: self.state.stamp,
                    });
                }
            }
            Some(prev) => {
                propagate(
                    &mut self.state,
                    &prev,
                    sample,
                    &self.config.imu_noise,
                    &self.config.gravity,
                )?;
            }
        }
        self.last_imu = Some(*sample);
        Ok(())
    }

    /// Propagates to `t`, interpolating between the last processed sample and
    /// `next`.
    pub fn propagate_to(&mut self, t: f64, next: &ImuSample) -> Result<()> {
        let prev = self
            .last_imu
            .ok_or_else(|| Error::Invalid("no IMU sample processed yet".into()))?;
        if t == prev.stamp {
            return Ok(());
        }
        if !(t > prev.stamp && t <= next.stamp) {
            return Err(Error::NonMonotonicStamp {
                stamp: t,
                previous: prev.stamp,
            });
        }
        let mid = ImuSample::interpolate(&prev, next, t);
        self.process_imu(&mid)
    }

    fn check_stamp(&self, t: f64) -> Result<()> {
        if t != self.state.stamp {
            return Err(Error::Invalid(format!(
                "event at {t} but filter is at {}; propagate first",
                self.state.stamp
            )));
        }
        Ok(())
    }

    pub fn process_frame(&mut self, frame: &Frame) -> Result<FrameReport> {
        self.check_stamp(frame.stamp)?;
        let cfg = self.config;
        let mut report = FrameReport {
            stamp: frame.stamp,
            ..Default::default()
        };
        self.state
            .clone_pose(frame.stamp, &cfg.camera, usize::MAX)?;

        let mut seen = HashSet::new();
        for f in &frame.features {
            seen.insert(f.track_id);
            let obs = FeatureObservation {
                track_id: f.track_id,
                stamp: frame.stamp,
                uv: f.uv,
            };
            self.tracks
                .entry(f.track_id)
                .and_modify(|t| {
                    t.observations.push(obs);
                    t.score = f.score;
                })
                .or_insert_with(|| Track::new(obs, f.score));
        }

        // in-state features observed now
        let slam_obs: Vec<FeatureObservation> = frame
            .features
            .iter()
            .filter(|f| self.state.feature_index(f.track_id).is_some())
            .map(|f| FeatureObservation {
                track_id: f.track_id,
                stamp: frame.stamp,
                uv: f.uv,
            })
            .collect();
        let slam = slam_update(
            &mut self.state,
            &slam_obs,
            &cfg.measurement,
            cfg.visual_confidence,
        )?;
        report.slam_rows = slam.rows;
        report.fault |= slam.fault;
        for inn in &slam.innovations {
            if inn.accepted {
                report.slam_max_innovation = report.slam_max_innovation.max(inn.innovation.amax());
            } else {
                report.slam_rejected += 1;
            }
        }

        // lost or implausible SLAM features leave the state
        let newest = self.state.clones.len() - 1;
        let mut j = 0;
        while j < self.state.features.len() {
            let f = self.state.features[j];
            let lost = !seen.contains(&f.id);
            let bad = f.rho < cfg.min_inverse_depth || !self.in_front(j, newest);
            if lost || bad {
                self.state.remove_feature(j);
                self.tracks.remove(&f.id);
                report.dropped_features += 1;
            } else {
                j += 1;
            }
        }

        let slam_uv: Vec<Vector2<f64>> = frame
            .features
            .iter()
            .filter(|f| self.state.feature_index(f.track_id).is_some())
            .map(|f| f.uv)
            .collect();
        let candidates: Vec<&Track> = self
            .tracks
            .values()
            .filter(|t| t.status == TrackStatus::Candidate)
            .collect();
        let decisions = decide_tracks(
            &candidates,
            &seen,
            self.state.clones.len(),
            &slam_uv,
            &cfg.tracks,
        );

        let msckf_tracks: Vec<Track> = decisions
            .msckf
            .iter()
            .filter_map(|id| self.tracks.get(id).cloned())
            .collect();
        let refs: Vec<&Track> = msckf_tracks.iter().collect();
        report.msckf = msckf_update(
            &mut self.state,
            &refs,
            &cfg.measurement,
            &cfg.triangulation,
            cfg.visual_confidence,
        )?;
        report.fault |= report.msckf.fault;
        for id in &decisions.msckf {
            if seen.contains(id) {
                // still tracked: restart so no observation is used twice
                if let Some(t) = self.tracks.get_mut(id) {
                    t.observations.clear();
                }
            } else {
                self.tracks.remove(id);
            }
        }
        for id in &decisions.discard {
            self.tracks.remove(id);
        }

        for id in &decisions.promote {
            let Some(track) = self.tracks.get(id).cloned() else {
                continue;
            };
            let prior = if cfg.semi_infinite_init {
                Some(&cfg.prior)
            } else {
                None
            };
            let outcome = match prior {
                Some(p) => initialize_slam_feature(
                    &mut self.state,
                    &track,
                    &cfg.measurement,
                    &cfg.triangulation,
                    p,
                    cfg.visual_confidence,
                )?,
                None => self.initialize_triangulated_only(&track)?,
            };
            if matches!(outcome, SlamInit::Triangulated | SlamInit::SemiInfinite) {
                if let Some(t) = self.tracks.get_mut(id) {
                    t.status = TrackStatus::Slam;
                    t.observations.clear();
                }
            }
            report.promoted.push((*id, outcome));
        }

        self.state.shrink_window(cfg.window)?;
        let state = &self.state;
        for t in self.tracks.values_mut() {
            t.observations
                .retain(|o| state.clone_index_at(o.stamp).is_some());
        }
        self.tracks.retain(|_, t| {
            t.status == TrackStatus::Slam
                || !t.observations.is_empty()
                || seen.contains(&t.track_id)
        });

        report.features = self.state.features.len();
        report.clones = self.state.clones.len();
        Ok(report)
    }

    fn initialize_triangulated_only(&mut self, track: &Track) -> Result<SlamInit> {
        // initialize on a scratch copy and keep it only if triangulation succeeded
        let views = track
            .observations
            .iter()
            .filter(|o| self.state.clone_index_at(o.stamp).is_some())
            .count();
        if views < 2 {
            return Ok(SlamInit::Rejected);
        }
        let before = self.state.features.len();
        let mut trial = self.state.clone();
        let outcome = initialize_slam_feature(
            &mut trial,
            track,
            &self.config.measurement,
            &self.config.triangulation,
            &self.config.prior,
            self.config.visual_confidence,
        )?;
        if outcome == SlamInit::Triangulated {
            self.state = trial;
            debug_assert_eq!(self.state.features.len(), before + 1);
            Ok(outcome)
        } else {
            Ok(SlamInit::Rejected)
        }
    }

    fn in_front(&self, j: usize, clone: usize) -> bool {
        let Ok(ap) = self.state.feature_world(j) else {
            return false;
        };
        let c = &self.state.clones[clone];
        project(&(c.q_w_c.world_to_body() * (ap.world - c.p_w_c))).is_ok()
    }

    /// Range update at the current stamp. In VIO mode the sample is logged
    /// as skipped without touching the state.
    pub fn process_range(&mut self, sample: &RangeSample) -> Result<RangeVerdict> {
        self.check_stamp(sample.stamp)?;
        if self.mode == Mode::Vio {
            return Ok(RangeVerdict {
                stamp: sample.stamp,
                status: RangeStatus::Disabled,
                measured: sample.range_m,
                predicted: f64::NAN,
                innovation: f64::NAN,
                innovation_var: f64::NAN,
                facet: None,
            });
        }
        let cfg = self.config;
        range_update(
            &mut self.state,
            sample,
            &cfg.camera,
            &cfg.lrf,
            cfg.measurement.sigma_r,
            &cfg.range,
        )
    }
}

/// What happened at one event of [`run_streams`].
#[derive(Clone, Debug)]
pub enum Outcome {
    Imu(f64),
    Frame(FrameReport),
    Range(RangeVerdict),
}

/// Feeds time-ordered streams to the estimator. Frames are handled before
/// range samples with the same stamp, and both after an IMU sample with the
/// same stamp. Events outside the IMU stream's time span are ignored. The
/// observer may stop the run by returning `false`.
pub fn run_streams(
    est: &mut Estimator,
    imu: &[ImuSample],
    frames: &[Frame],
    ranges: &[RangeSample],
    mut observer: impl FnMut(&Estimator, &Outcome) -> bool,
) -> Result<()> {
    let Some(first) = imu.first() else {
        return Ok(());
    };
    est.process_imu(first)?;
    let (mut fi, mut ri) = (0usize, 0usize);
    while fi < frames.len() && frames[fi].stamp < first.stamp {
        fi += 1;
    }
    while ri < ranges.len() && ranges[ri].stamp < first.stamp {
        ri += 1;
    }

    let mut i = 0usize;
    loop {
        let now = est.state.stamp;
        // events at the current stamp
        loop {
            let frame_now = fi < frames.len() && frames[fi].stamp == now;
            let range_now = ri < ranges.len() && ranges[ri].stamp == now;
            if frame_now {
                let rep = est.process_frame(&frames[fi])?;
                fi += 1;
                if !observer(est, &Outcome::Frame(rep)) {
                    return Ok(());
                }
            } else if range_now {
                let v = est.process_range(&ranges[ri])?;
                ri += 1;
                if !observer(est, &Outcome::Range(v)) {
                    return Ok(());
                }
            } else {
                break;
            }
        }
        if i + 1 >= imu.len() {
            break;
        }
        let next = &imu[i + 1];
        let ft = frames.get(fi).map(|f| f.stamp).unwrap_or(f64::INFINITY);
        let rt = ranges.get(ri).map(|r| r.stamp).unwrap_or(f64::INFINITY);
        let t = ft.min(rt);
        if t < next.stamp {
            est.propagate_to(t, next)?;
        } else {
            est.process_imu(next)?;
            i += 1;
            if !observer(est, &Outcome::Imu(next.stamp)) {
                return Ok(());
            }
        }
    }
    Ok(())
}
