//! Measurement synthesis: IMU samples, feature tracks and range samples with
//! their ground truth.
//!
//! Every stream draws from its own ChaCha stream keyed by the run seed, and
//! the number of draws per sample does not depend on noise magnitudes or
//! scripted spikes, so switching either leaves all other samples unchanged.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use rvio_core::estimator::{Frame, TrackedFeature};
use rvio_core::facet::RangeSample;
use rvio_core::imu::ImuSample;
use rvio_core::state::InertialState;

use crate::error::Result;
use crate::rig::SensorRig;
use crate::scene::Scene;
use crate::trajectory::TrajectoryProfile;

const STREAM_IMU: u64 = 1;
const STREAM_PIXEL: u64 = 2;
const STREAM_TRACKER: u64 = 3;
const STREAM_RANGE: u64 = 4;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| StandardNormal.sample(rng))
}

/// Stamps `k / rate` for all `k` with stamp within `[0, duration]`.
pub fn stamps(rate: f64, duration: f64) -> Vec<f64> {
    let n = (duration * rate + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 / rate).collect()
}

/// True state at one IMU sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuTruth {
    pub stamp: f64,
    pub state: InertialState,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImuStream {
    pub samples: Vec<ImuSample>,
    pub truth: Vec<ImuTruth>,
}

/// Angular rate and specific force from the analytic trajectory, plus bias
/// random walks and white noise.
pub fn synth_imu(profile: &TrajectoryProfile, rig: &SensorRig, seed: u64) -> Result<ImuStream> {
    profile.validate()?;
    rig.validate()?;
    let mut rng = stream_rng(seed, STREAM_IMU);
    let n = &rig.imu_noise;
    let dt = 1.0 / rig.rates.imu;
    let g = rig.gravity();
    let mut b_g = Vector3::from(rig.initial_gyro_bias);
    let mut b_a = Vector3::from(rig.initial_accel_bias);
    let mut out = ImuStream::default();
    for t in stamps(rig.rates.imu, profile.duration) {
        let k = profile.at(t);
        let (wn, an) = (normal3(&mut rng), normal3(&mut rng));
        let (wb, ab) = (normal3(&mut rng), normal3(&mut rng));
        out.samples.push(ImuSample {
            omega_m: k.omega_b + b_g + wn * (n.gyro_noise_density / dt.sqrt()),
            accel_m: k.specific_force(&g) + b_a + an * (n.accel_noise_density / dt.sqrt()),
            stamp: t,
        });
        out.truth.push(ImuTruth {
            stamp: t,
            state: k.inertial(b_g, b_a),
        });
        b_g += wb * (n.gyro_bias_walk * dt.sqrt());
        b_a += ab * (n.accel_bias_walk * dt.sqrt());
    }
    Ok(out)
}

/// Camera pose (position, camera-to-world rotation) at `t`.
pub fn camera_pose(
    profile: &TrajectoryProfile,
    rig: &SensorRig,
    t: f64,
) -> (Vector3<f64>, Matrix3<f64>) {
    let k = profile.at(t);
    rig.camera
        .camera_pose(&k.inertial(Vector3::zeros(), Vector3::zeros()))
}

/// Landmark behind each feature of a frame, in feature order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameTruth {
    pub stamp: f64,
    pub landmark_ids: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackStream {
    pub frames: Vec<Frame>,
    pub truth: Vec<FrameTruth>,
}

/// Whether landmark `id` of `scene` is visible from the camera pose.
pub fn visible(
    scene: &Scene,
    rig: &SensorRig,
    id: usize,
    p_c: &Vector3<f64>,
    r_wc: &Matrix3<f64>,
) -> bool {
    let l = &scene.landmarks[id];
    let to_cam = p_c - l.position;
    if !rig.frustum.contains(&(r_wc.transpose() * -to_cam)) {
        return false;
    }
    if scene.mesh.normal(l.face).dot(&to_cam) <= 0.0 {
        return false;
    }
    scene.mesh.line_of_sight(p_c, &l.position, 1e-6)
}

struct ActiveTrack {
    track_id: u64,
    /// Further frames the tracker keeps this track; `None` is unlimited.
    remaining: Option<u64>,
}

/// Projects landmarks at camera rate. A track lives while its landmark stays
/// visible and its sampled lifetime lasts; every re-detection starts a new
/// track id.
pub fn synth_tracks(
    profile: &TrajectoryProfile,
    scene: &Scene,
    rig: &SensorRig,
    seed: u64,
) -> Result<TrackStream> {
    profile.validate()?;
    rig.validate()?;
    let mut pixel_rng = stream_rng(seed, STREAM_PIXEL);
    let mut tracker_rng = stream_rng(seed, STREAM_TRACKER);
    let lifetime = match rig.tracks.mean_lifetime {
        Some(mean) => Some(
            Geometric::new(1.0 / mean)
                .map_err(|e| crate::error::SimError::Config(e.to_string()))?,
        ),
        None => None,
    };
    let sigma = rig.measurement.sigma_v;
    let mut active: HashMap<usize, ActiveTrack> = HashMap::new();
    let mut blocked_until: HashMap<usize, usize> = HashMap::new();
    let mut next_id = 0u64;
    let mut out = TrackStream::default();

    for (k, t) in stamps(rig.rates.camera, profile.duration)
        .into_iter()
        .enumerate()
    {
        let (p_c, r_wc) = camera_pose(profile, rig, t);
        let mut frame = Frame {
            stamp: t,
            features: Vec::new(),
        };
        let mut truth = FrameTruth {
            stamp: t,
            landmark_ids: Vec::new(),
        };
        for (i, lm) in scene.landmarks.iter().enumerate() {
            let is_visible = visible(scene, rig, i, &p_c, &r_wc);
            let track_id = match active.get_mut(&i) {
                Some(tr) if is_visible && tr.remaining != Some(0) => {
                    if let Some(r) = tr.remaining.as_mut() {
                        *r -= 1;
                    }
                    Some(tr.track_id)
                }
                Some(_) => {
                    active.remove(&i);
                    blocked_until.insert(i, k + rig.tracks.redetect_delay);
                    None
                }
                None if is_visible && k >= blocked_until.get(&i).copied().unwrap_or(0) => {
                    let detect = tracker_rng.random_bool(rig.tracks.detection_probability);
                    let life = lifetime.map(|g| 1 + g.sample(&mut tracker_rng));
                    detect.then(|| {
                        let id = next_id;
                        next_id += 1;
                        active.insert(
                            i,
                            ActiveTrack {
                                track_id: id,
                                remaining: life.map(|l| l - 1),
                            },
                        );
                        id
                    })
                }
                None => None,
            };
            let Some(track_id) = track_id else { continue };
            let p = r_wc.transpose() * (lm.position - p_c);
            let noise = Vector2::new(
                StandardNormal.sample(&mut pixel_rng),
                StandardNormal.sample(&mut pixel_rng),
            );
            frame.features.push(TrackedFeature {
                track_id,
                uv: Vector2::new(p.x / p.z, p.y / p.z) + noise * sigma,
                score: lm.score,
            });
            truth.landmark_ids.push(lm.id);
        }
        out.frames.push(frame);
        out.truth.push(truth);
    }
    Ok(out)
}

/// Ground truth behind one range sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeTruth {
    pub stamp: f64,
    pub range_m: f64,
    pub hit: Vector3<f64>,
    pub face: usize,
    /// Offset injected on top of the noisy range; zero for inliers.
    pub outlier_m: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RangeStream {
    pub samples: Vec<RangeSample>,
    pub truth: Vec<RangeTruth>,
}

/// Nearest ray-mesh hit along the laser axis with Gaussian noise, random
/// Bernoulli outliers and scripted spikes. Samples whose ray misses the mesh
/// are dropped.
pub fn synth_range(
    profile: &TrajectoryProfile,
    scene: &Scene,
    rig: &SensorRig,
    seed: u64,
) -> Result<RangeStream> {
    profile.validate()?;
    rig.validate()?;
    let mut rng = stream_rng(seed, STREAM_RANGE);
    let o = &rig.outliers;
    let spikes: Vec<(usize, f64)> = o
        .spikes
        .iter()
        .map(|s| ((s.stamp * rig.rates.lrf).round() as usize, s.magnitude))
        .collect();
    let mut out = RangeStream::default();
    for (k, t) in stamps(rig.rates.lrf, profile.duration)
        .into_iter()
        .enumerate()
    {
        let noise: f64 = StandardNormal.sample(&mut rng);
        let flip: f64 = rng.random();
        let mag: f64 = rng.random();
        let (p_c, r_wc) = camera_pose(profile, rig, t);
        let dir = r_wc * rig.lrf.u_r_cam;
        let Some(hit) = scene.mesh.raycast(&p_c, &dir) else {
            continue;
        };
        let mut outlier = if flip < o.probability {
            o.magnitude.0 + mag * (o.magnitude.1 - o.magnitude.0)
        } else {
            0.0
        };
        outlier += spikes
            .iter()
            .filter(|(ks, _)| *ks == k)
            .map(|(_, m)| m)
            .sum::<f64>();
        out.samples.push(RangeSample {
            range_m: hit.distance + noise * rig.measurement.sigma_r + outlier,
            stamp: t,
        });
        out.truth.push(RangeTruth {
            stamp: t,
            range_m: hit.distance,
            hit: hit.point,
            face: hit.face,
            outlier_m: outlier,
        });
    }
    Ok(out)
}

/// All sensor streams of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorStreams {
    pub imu: ImuStream,
    pub tracks: TrackStream,
    pub range: RangeStream,
}

pub fn simulate(
    profile: &TrajectoryProfile,
    scene: &Scene,
    rig: &SensorRig,
    seed: u64,
) -> Result<SensorStreams> {
    Ok(SensorStreams {
        imu: synth_imu(profile, rig, seed)?,
        tracks: synth_tracks(profile, scene, rig, seed)?,
        range: synth_range(profile, scene, rig, seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use crate::rig::{RangeSpike, TrackModel};
    use crate::scene::{FlatPlaneParams, IndoorBoxesParams, Landmark, SceneConfig};
    use crate::trajectory::TrajectoryKind;

    fn hover(duration: f64) -> TrajectoryProfile {
        TrajectoryProfile {
            kind: TrajectoryKind::Hover,
            duration,
            ..Default::default()
        }
    }

    fn flat() -> Scene {
        SceneConfig::FlatPlane(FlatPlaneParams::default())
            .build(1)
            .unwrap()
    }

    #[test]
    fn stamp_grid() {
        let s = stamps(25.0, 1.0);
        assert_eq!(s.len(), 26);
        assert_eq!(s[25], 1.0);
        assert_eq!(stamps(30.0, 0.1).len(), 4);
    }

    #[test]
    fn hover_imu_is_static() {
        let s = synth_imu(&hover(2.0), &SensorRig::noiseless(), 0).unwrap();
        for x in &s.samples {
            assert_eq!(x.omega_m, Vector3::zeros());
            assert_eq!(x.accel_m, Vector3::new(0.0, 0.0, 9.81));
        }
    }

    #[test]
    fn cruise_imu_equals_hover_imu() {
        let cruise = TrajectoryProfile {
            duration: 2.0,
            ..Default::default()
        };
        let rig = SensorRig::noiseless();
        let a = synth_imu(&hover(2.0), &rig, 0).unwrap();
        let b = synth_imu(&cruise, &rig, 0).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn same_seed_same_streams() {
        let p = TrajectoryProfile {
            kind: TrajectoryKind::Excited,
            duration: 3.0,
            ..Default::default()
        };
        let scene = flat();
        let rig = SensorRig::default();
        let a = simulate(&p, &scene, &rig, 4).unwrap();
        assert_eq!(a, simulate(&p, &scene, &rig, 4).unwrap());
        assert_ne!(
            a.imu.samples,
            simulate(&p, &scene, &rig, 5).unwrap().imu.samples
        );
    }

    #[test]
    fn landmark_on_optical_axis_projects_to_centre() {
        let mut mesh = Mesh::default();
        mesh.add_floor((-50.0, 50.0), (-50.0, 50.0), 0.0);
        let scene = Scene {
            name: "single",
            mesh,
            landmarks: vec![Landmark {
                id: 0,
                position: Vector3::zeros(),
                face: 0,
                score: 0.5,
            }],
        };
        let s = synth_tracks(&hover(0.2), &scene, &SensorRig::noiseless(), 0).unwrap();
        for f in &s.frames {
            assert_eq!(f.features.len(), 1);
            assert_eq!(f.features[0].uv, Vector2::zeros());
            assert_eq!(f.features[0].track_id, 0);
        }
    }

    #[test]
    fn nadir_range_over_flat_plane() {
        let rig = SensorRig::noiseless();
        let s = synth_range(&hover(1.0), &flat(), &rig, 0).unwrap();
        assert_eq!(s.samples.len(), 26);
        assert!(s.samples.iter().all(|r| (r.range_m - 11.0).abs() < 1e-12));
    }

    #[test]
    fn spike_only_changes_its_sample() {
        let p = TrajectoryProfile {
            duration: 4.0,
            ..Default::default()
        };
        let scene = flat();
        let mut rig = SensorRig::default();
        let a = synth_range(&p, &scene, &rig, 3).unwrap();
        rig.outliers.spikes.push(RangeSpike {
            stamp: 2.0,
            magnitude: 7.0,
        });
        let b = synth_range(&p, &scene, &rig, 3).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            if x.stamp == 2.0 {
                assert!((y.range_m - x.range_m - 7.0).abs() < 1e-12);
            } else {
                assert_eq!(x, y);
            }
        }
        let t = b.truth.iter().find(|t| t.stamp == 2.0).unwrap();
        assert!(t.outlier_m >= 7.0);
    }

    #[test]
    fn range_jumps_at_box_drop_off() {
        let params = IndoorBoxesParams::default();
        let scene = SceneConfig::IndoorBoxes(params.clone()).build(0).unwrap();
        let p = TrajectoryProfile {
            duration: 20.0,
            speed: 1.0,
            start: crate::trajectory::StartPose {
                position: [0.0, 0.0, 3.0],
                yaw: 0.0,
            },
            ..Default::default()
        };
        let s = synth_range(&p, &scene, &SensorRig::noiseless(), 0).unwrap();
        let jumps: Vec<f64> = s
            .samples
            .windows(2)
            .map(|w| (w[1].range_m - w[0].range_m).abs())
            .collect();
        // each 0.04 m step either stays on a face or crosses one drop-off
        let big = jumps.iter().filter(|j| **j > 0.1).count();
        let steps = crate::scene::box_row(&params)
            .iter()
            .filter(|((x0, _), _)| *x0 > 0.0 && *x0 < 20.0)
            .count();
        assert_eq!(big, steps);
        assert!(jumps.iter().all(|j| *j < 1e-9 || *j > 0.1));
    }

    #[test]
    fn occluded_landmark_loses_its_track() {
        // a landmark on the floor passes under a box
        let mut mesh = Mesh::default();
        mesh.add_floor((-50.0, 50.0), (-50.0, 50.0), 0.0);
        mesh.add_box((4.0, 6.0), (-1.0, 1.0), 0.0, 8.0);
        let lm = Vector3::new(8.0, 0.0, 0.0);
        let scene = Scene {
            name: "occlusion",
            mesh,
            landmarks: vec![Landmark {
                id: 0,
                position: lm,
                face: 0,
                score: 0.5,
            }],
        };
        let p = TrajectoryProfile {
            duration: 6.0,
            ..Default::default()
        };
        let rig = SensorRig::noiseless();
        let s = synth_tracks(&p, &scene, &rig, 0).unwrap();
        let ids: Vec<Option<u64>> = s
            .frames
            .iter()
            .map(|f| f.features.first().map(|x| x.track_id))
            .collect();
        // ray-cast oracle: the sight line crosses the box
        for (f, id) in s.frames.iter().zip(&ids) {
            let (p_c, _) = camera_pose(&p, &rig, f.stamp);
            let d = lm - p_c;
            let blocked = scene
                .mesh
                .raycast(&p_c, &d)
                .is_some_and(|h| h.distance < 1.0 - 1e-6);
            if blocked {
                assert!(id.is_none(), "seen through the box at {}", f.stamp);
            }
        }
        let first_gap = ids.iter().position(|i| i.is_none()).unwrap();
        let back = ids[first_gap..].iter().position(|i| i.is_some()).unwrap() + first_gap;
        assert_ne!(ids[0], ids[back], "re-detection starts a new track");
        assert!(ids[..first_gap].iter().all(|i| *i == ids[0]));
    }

    #[test]
    fn limited_lifetime_splits_tracks() {
        let mut rig = SensorRig::noiseless();
        rig.tracks = TrackModel {
            mean_lifetime: Some(4.0),
            redetect_delay: 1,
            detection_probability: 1.0,
        };
        let s = synth_tracks(&hover(3.0), &flat(), &rig, 2).unwrap();
        let mut len: HashMap<u64, usize> = HashMap::new();
        for f in &s.frames {
            for x in &f.features {
                *len.entry(x.track_id).or_default() += 1;
            }
        }
        let mean = len.values().sum::<usize>() as f64 / len.len() as f64;
        assert!(mean > 2.5 && mean < 6.0, "{mean}");
    }

    #[test]
    fn zero_noise_tracks_triangulate_to_landmarks() {
        let p = TrajectoryProfile {
            duration: 1.0,
            ..Default::default()
        };
        let scene = flat();
        let rig = SensorRig::noiseless();
        let s = synth_tracks(&p, &scene, &rig, 0).unwrap();
        let mut obs: HashMap<u64, Vec<(f64, Vector2<f64>, u64)>> = HashMap::new();
        for (f, t) in s.frames.iter().zip(&s.truth) {
            for (x, lm) in f.features.iter().zip(&t.landmark_ids) {
                obs.entry(x.track_id)
                    .or_default()
                    .push((f.stamp, x.uv, *lm));
            }
        }
        let mut checked = 0;
        for views in obs.values().filter(|v| v.len() >= 20) {
            // linear least squares on the bearing cross-product constraints
            let mut a = nalgebra::DMatrix::zeros(0, 3);
            let mut b = nalgebra::DVector::zeros(0);
            for (t, uv, _) in views {
                let (p_c, r_wc) = camera_pose(&p, &rig, *t);
                let d = r_wc * Vector3::new(uv.x, uv.y, 1.0);
                let k = rvio_core::math::skew(&d);
                let n = a.nrows();
                a = a.insert_rows(n, 3, 0.0);
                b = b.insert_rows(n, 3, 0.0);
                a.view_mut((n, 0), (3, 3)).copy_from(&k);
                b.rows_mut(n, 3).copy_from(&(k * p_c));
            }
            let x = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
            let truth = scene.landmarks[views[0].2 as usize].position;
            assert!((Vector3::new(x[0], x[1], x[2]) - truth).norm() < 1e-9);
            checked += 1;
        }
        assert!(checked > 10);
    }
}
