//! Running the filter over simulated streams and scoring it against truth.

use std::time::Instant;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rvio_core::estimator::{run_streams, Estimator, Mode, Outcome};
use rvio_core::facet::RangeStatus;
use rvio_core::state::{InertialState, IMU_DIM};
use rvio_sim::synth::SensorStreams;
use rvio_sim::{simulate, Scene};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::Result;

/// Filter estimate at one frame stamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateRecord {
    pub stamp: f64,
    pub state: InertialState,
    /// Position standard deviations, world frame.
    pub sigma_p: Vector3<f64>,
    pub features: usize,
    pub clones: usize,
    /// Largest visual residual used at this frame.
    pub max_innovation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthRecord {
    pub stamp: f64,
    pub state: InertialState,
}

/// Errors in the traverse-aligned world frame (x along the initial heading).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRecord {
    pub stamp: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// World-frame rotation vector of the attitude error, radians.
    pub attitude: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GateRecord {
    pub t: f64,
    pub status: RangeStatus,
    pub measured: f64,
    pub predicted: f64,
    pub innovation: f64,
    pub innovation_var: f64,
    pub true_range: f64,
    pub outlier_m: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub mode: String,
    pub seed: u64,
    /// Path length of the truth positions at the logged stamps, meters.
    pub distance: f64,
    pub max_position_error: f64,
    pub final_position_error: f64,
    pub rms_position_error: f64,
    pub max_position_error_pct: f64,
    pub final_position_error_pct: f64,
    pub max_velocity_error: f64,
    pub max_attitude_error_deg: f64,
    pub range_accepted: usize,
    pub range_rejected: usize,
    pub range_skipped: usize,
    /// Injected outliers (random or scripted) seen by the range update.
    pub outliers: usize,
    pub outliers_rejected: usize,
    /// Largest visual residual over the run (normalized image plane).
    pub max_visual_innovation: f64,
    /// Largest absolute range innovation among accepted samples.
    pub max_range_innovation: f64,
    /// Visual updates skipped for a singular innovation covariance.
    pub visual_faults: usize,
    /// SLAM observations and MSCKF tracks rejected by their chi-square gates.
    pub visual_rejected: usize,
    pub runtime_s: f64,
    pub diverged: bool,
}

/// Why a run stopped early, with the last finite estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub stamp: f64,
    pub message: String,
    pub last_good: Option<EstimateRecord>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub truth: Vec<TruthRecord>,
    pub estimate: Vec<EstimateRecord>,
    pub errors: Vec<ErrorRecord>,
    pub gates: Vec<GateRecord>,
    pub failure: Option<Failure>,
}

/// Truth state at `t`: analytic kinematics with the biases of the last IMU
/// sample at or before `t`.
pub fn truth_at(cfg: &ScenarioConfig, streams: &SensorStreams, t: f64) -> InertialState {
    let k = cfg.trajectory.at(t);
    let truth = &streams.imu.truth;
    let i = truth.partition_point(|x| x.stamp <= t).saturating_sub(1);
    let (b_g, b_a) = truth
        .get(i)
        .map(|x| (x.state.b_g, x.state.b_a))
        .unwrap_or_default();
    k.inertial(b_g, b_a)
}

/// Initial covariance from the configured sigmas.
pub fn initial_covariance(cfg: &ScenarioConfig) -> DMatrix<f64> {
    let i = &cfg.init;
    let sig = [
        [i.sigma_position; 3],
        [i.sigma_velocity; 3],
        [i.sigma_tilt, i.sigma_tilt, i.sigma_yaw],
        [i.sigma_gyro_bias; 3],
        [i.sigma_accel_bias; 3],
    ];
    let d: Vec<f64> = sig.iter().flatten().map(|s| s * s).collect();
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d))
}

/// Initial estimate: truth, plus an error drawn from the initial covariance
/// when enabled, with the velocity scaled by the configured factor.
pub fn initial_estimate(cfg: &ScenarioConfig, truth: &InertialState) -> InertialState {
    let mut x = *truth;
    if cfg.init.sample_errors {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(0x494e_4954);
        let p0 = initial_covariance(cfg);
        let dx: Vec<f64> = (0..IMU_DIM)
            .map(|k| {
                let n: f64 = StandardNormal.sample(&mut rng);
                n * p0[(k, k)].sqrt()
            })
            .collect();
        x.inject(&dx);
    }
    x.v_w_i *= cfg.init.scale;
    x
}

fn heading_alignment(cfg: &ScenarioConfig) -> Matrix3<f64> {
    let yaw = cfg.trajectory.start.yaw;
    let (s, c) = yaw.sin_cos();
    // world to traverse-aligned frame
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Simulates the scenario's streams and runs the filter on them.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(RunOutput, Scene, SensorStreams)> {
    cfg.validate()?;
    let scene = cfg.scene.build(cfg.seed)?;
    let streams = simulate(&cfg.trajectory, &scene, &cfg.rig, cfg.seed)?;
    let out = run_filter(cfg, &streams)?;
    Ok((out, scene, streams))
}

/// Runs the configured filter over given streams. Divergence (a non-finite
/// state or an estimator error) ends the run early and is reported in
/// [`RunOutput::failure`] rather than as an error.
pub fn run_filter(cfg: &ScenarioConfig, streams: &SensorStreams) -> Result<RunOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let t0 = streams.imu.samples.first().map(|s| s.stamp).unwrap_or(0.0);
    let truth0 = truth_at(cfg, streams, t0);
    let x0 = initial_estimate(cfg, &truth0);
    let mut filter = cfg.filter;
    filter.prior.rho /= cfg.init.scale;
    let mut est = Estimator::new(x0, initial_covariance(cfg), t0, filter, cfg.mode)?;

    let align = heading_alignment(cfg);
    let mut truth = Vec::new();
    let mut estimate: Vec<EstimateRecord> = Vec::new();
    let mut errors = Vec::new();
    let mut gates = Vec::new();
    let mut failure = None;
    let mut faults = 0usize;
    let mut visual_rejected = 0usize;
    let range_truth = &streams.range.truth;

    let res = run_streams(
        &mut est,
        &streams.imu.samples,
        &streams.tracks.frames,
        &streams.range.samples,
        |e, outcome| {
            match outcome {
                Outcome::Imu(_) => {}
                Outcome::Frame(rep) => {
                    let st = &e.state;
                    if !st.is_finite() {
                        failure = Some(Failure {
                            stamp: rep.stamp,
                            message: "non-finite filter state after a frame".into(),
                            last_good: estimate.last().copied(),
                        });
                        return false;
                    }
                    faults += usize::from(rep.fault);
                    visual_rejected += rep.slam_rejected + rep.msckf.gated.len();
                    let tr = truth_at(cfg, streams, rep.stamp);
                    let sigma_p = Vector3::from_fn(|k, _| st.cov[(k, k)].sqrt());
                    estimate.push(EstimateRecord {
                        stamp: rep.stamp,
                        state: st.inertial,
                        sigma_p,
                        features: rep.features,
                        clones: rep.clones,
                        max_innovation: rep.max_innovation(),
                    });
                    truth.push(TruthRecord {
                        stamp: rep.stamp,
                        state: tr,
                    });
                    errors.push(ErrorRecord {
                        stamp: rep.stamp,
                        position: align * (st.inertial.p_w_i - tr.p_w_i),
                        velocity: align * (st.inertial.v_w_i - tr.v_w_i),
                        attitude: align * st.inertial.q_w_i.world_difference(&tr.q_w_i),
                    });
                }
                Outcome::Range(v) => {
                    let rt = range_truth
                        .get(range_truth.partition_point(|r| r.stamp < v.stamp))
                        .filter(|r| r.stamp == v.stamp);
                    gates.push(GateRecord {
                        t: v.stamp,
                        status: v.status,
                        measured: v.measured,
                        predicted: v.predicted,
                        innovation: v.innovation,
                        innovation_var: v.innovation_var,
                        true_range: rt.map(|r| r.range_m).unwrap_or(f64::NAN),
                        outlier_m: rt.map(|r| r.outlier_m).unwrap_or(0.0),
                    });
                    if !e.state.is_finite() {
                        failure = Some(Failure {
                            stamp: v.stamp,
                            message: "non-finite filter state after a range update".into(),
                            last_good: estimate.last().copied(),
                        });
                        return false;
                    }
                }
            }
            true
        },
    );
    if let Err(e) = res {
        failure = Some(Failure {
            stamp: est.state.stamp,
            message: e.to_string(),
            last_good: estimate.last().copied(),
        });
    }

    let mut metrics = compute_metrics(&truth, &estimate, &gates);
    metrics.mode = cfg.mode.name().into();
    metrics.seed = cfg.seed;
    metrics.diverged = failure.is_some();
    metrics.visual_faults = faults;
    metrics.visual_rejected = visual_rejected;
    metrics.max_velocity_error = errors
        .iter()
        .map(|e: &ErrorRecord| e.velocity.norm())
        .fold(0.0, f64::max);
    metrics.max_attitude_error_deg = errors
        .iter()
        .map(|e| e.attitude.norm().to_degrees())
        .fold(0.0, f64::max);
    metrics.runtime_s = started.elapsed().as_secs_f64();
    Ok(RunOutput {
        metrics,
        truth,
        estimate,
        errors,
        gates,
        failure,
    })
}

/// Position and gate metrics from the logged records. The post-processing
/// script recomputes the distance-based values from the CSV logs with the
/// same definitions.
pub fn compute_metrics(
    truth: &[TruthRecord],
    estimate: &[EstimateRecord],
    gates: &[GateRecord],
) -> RunMetrics {
    let distance: f64 = truth
        .windows(2)
        .map(|w| (w[1].state.p_w_i - w[0].state.p_w_i).norm())
        .sum();
    let err: Vec<f64> = truth
        .iter()
        .zip(estimate)
        .map(|(t, e)| (e.state.p_w_i - t.state.p_w_i).norm())
        .collect();
    let max = err.iter().copied().fold(0.0, f64::max);
    let last = err.last().copied().unwrap_or(0.0);
    let rms = if err.is_empty() {
        0.0
    } else {
        (err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64).sqrt()
    };
    let pct = |e: f64| {
        if distance > 0.0 {
            100.0 * e / distance
        } else {
            f64::NAN
        }
    };
    let count = |s: RangeStatus| gates.iter().filter(|g| g.status == s).count();
    let outliers: Vec<&GateRecord> = gates.iter().filter(|g| g.outlier_m != 0.0).collect();
    RunMetrics {
        distance,
        max_position_error: max,
        final_position_error: last,
        rms_position_error: rms,
        max_position_error_pct: pct(max),
        final_position_error_pct: pct(last),
        range_accepted: count(RangeStatus::Accepted),
        range_rejected: count(RangeStatus::Rejected),
        range_skipped: gates.len() - count(RangeStatus::Accepted) - count(RangeStatus::Rejected),
        outliers: outliers
            .iter()
            .filter(|g| g.status == RangeStatus::Accepted || g.status == RangeStatus::Rejected)
            .count(),
        outliers_rejected: outliers
            .iter()
            .filter(|g| g.status == RangeStatus::Rejected)
            .count(),
        max_visual_innovation: estimate
            .iter()
            .map(|e| e.max_innovation)
            .fold(0.0, f64::max),
        max_range_innovation: gates
            .iter()
            .filter(|g| g.status == RangeStatus::Accepted)
            .map(|g| g.innovation.abs())
            .fold(0.0, f64::max),
        ..Default::default()
    }
}

/// Both modes on one set of streams.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub vio: RunOutput,
    pub range_vio: RunOutput,
    /// SHA-256 of the streams both filters consumed.
    pub checksum: String,
}

/// Runs VIO and range-VIO on byte-identical streams; the streams are
/// checksummed before each run.
pub fn compare_modes(cfg: &ScenarioConfig) -> Result<(Comparison, Scene, SensorStreams)> {
    cfg.validate()?;
    let scene = cfg.scene.build(cfg.seed)?;
    let streams = simulate(&cfg.trajectory, &scene, &cfg.rig, cfg.seed)?;
    let checksum = crate::checksum::streams_checksum(&streams);
    let vio = run_filter(&cfg.with_mode(Mode::Vio), &streams)?;
    let again = crate::checksum::streams_checksum(&streams);
    if again != checksum {
        return Err(crate::error::HarnessError::StreamMismatch(checksum, again));
    }
    let range_vio = run_filter(&cfg.with_mode(Mode::RangeVio), &streams)?;
    Ok((
        Comparison {
            vio,
            range_vio,
            checksum,
        },
        scene,
        streams,
    ))
}
