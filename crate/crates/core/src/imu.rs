//! Strapdown propagation of the inertial state and its error covariance.
//!
//! Consecutive IMU samples are integrated with a midpoint scheme: the
//! attitude advances by the mean bias-corrected rate, velocity by the mean of
//! the world-frame accelerations at both ends of the interval, and position
//! by the mean velocity. The discrete error-state transition below is the
//! exact first-order linearization of that scheme.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{right_jacobian, skew};
use crate::state::{FilterState, InertialState, ATT, BA, BG, IMU_DIM, POS, VEL};

/// Longest interval accepted between two IMU samples.
pub const MAX_IMU_GAP: f64 = 0.1;

pub type Matrix15 = SMatrix<f64, IMU_DIM, IMU_DIM>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub omega_m: Vector3<f64>,
    pub accel_m: Vector3<f64>,
    pub stamp: f64,
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        self.stamp.is_finite()
            && self.omega_m.iter().all(|v| v.is_finite())
            && self.accel_m.iter().all(|v| v.is_finite())
    }

    /// Linear interpolation between two samples at time `t`.
    pub fn interpolate(a: &ImuSample, b: &ImuSample, t: f64) -> ImuSample {
        let span = b.stamp - a.stamp;
        let s = if span > 0.0 {
            (t - a.stamp) / span
        } else {
            1.0
        };
        ImuSample {
            omega_m: a.omega_m + (b.omega_m - a.omega_m) * s,
            accel_m: a.accel_m + (b.accel_m - a.accel_m) * s,
            stamp: t,
        }
    }
}

/// Continuous-time IMU noise densities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// rad/s/sqrt(Hz)
    pub gyro_noise_density: f64,
    /// m/s^2/sqrt(Hz)
    pub accel_noise_density: f64,
    /// rad/s^2/sqrt(Hz)
    pub gyro_bias_walk: f64,
    /// m/s^3/sqrt(Hz)
    pub accel_bias_walk: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            gyro_noise_density: 1e-4,
            accel_noise_density: 2e-3,
            gyro_bias_walk: 1e-6,
            accel_bias_walk: 3e-5,
        }
    }
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self {
            gyro_noise_density: 0.0,
            accel_noise_density: 0.0,
            gyro_bias_walk: 0.0,
            accel_bias_walk: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gyro_noise_density,
            self.accel_noise_density,
            self.gyro_bias_walk,
            self.accel_bias_walk,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Invalid(
                "noise densities must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Continuous process noise over the inertial error state.
    pub fn continuous(&self) -> Matrix15 {
        let mut q = Matrix15::zeros();
        let entries = [
            (ATT, self.gyro_noise_density),
            (VEL, self.accel_noise_density),
            (BG, self.gyro_bias_walk),
            (BA, self.accel_bias_walk),
        ];
        for (o, d) in entries {
            for k in 0..3 {
                q[(o + k, o + k)] = d * d;
            }
        }
        q
    }
}

/// Inertial error-state transition between two steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionBlocks {
    pub phi: Matrix15,
}

impl TransitionBlocks {
    pub fn identity() -> Self {
        Self {
            phi: Matrix15::identity(),
        }
    }

    fn block(&self, r: usize, c: usize) -> Matrix3<f64> {
        self.phi.fixed_view::<3, 3>(r, c).into_owned()
    }

    /// Attitude error response to a gyro bias error.
    pub fn attitude_gyro_bias(&self) -> Matrix3<f64> {
        self.block(ATT, BG)
    }

    /// Position error response to a gyro bias error.
    pub fn position_gyro_bias(&self) -> Matrix3<f64> {
        self.block(POS, BG)
    }

    /// Position error response to an accelerometer bias error.
    pub fn position_accel_bias(&self) -> Matrix3<f64> {
        self.block(POS, BA)
    }

    pub fn position_attitude(&self) -> Matrix3<f64> {
        self.block(POS, ATT)
    }

    pub fn position_velocity(&self) -> Matrix3<f64> {
        self.block(POS, VEL)
    }

    pub fn velocity_accel_bias(&self) -> Matrix3<f64> {
        self.block(VEL, BA)
    }

    /// `self` followed by `next`: returns `next.phi * self.phi`.
    pub fn then(&self, next: &TransitionBlocks) -> TransitionBlocks {
        TransitionBlocks {
            phi: next.phi * self.phi,
        }
    }
}

fn interval(prev: &ImuSample, cur: &ImuSample) -> Result<f64> {
    let dt = cur.stamp - prev.stamp;
    if !(dt > 0.0) {
        return Err(Error::NonMonotonicStamp {
            stamp: cur.stamp,
            previous: prev.stamp,
        });
    }
    if dt > MAX_IMU_GAP {
        return Err(Error::StreamGap {
            dt,
            max: MAX_IMU_GAP,
        });
    }
    Ok(dt)
}

/// Integrates the nominal inertial state from `prev.stamp` to `cur.stamp`.
pub fn integrate_nominal(
    x: &InertialState,
    prev: &ImuSample,
    cur: &ImuSample,
    gravity: &Vector3<f64>,
) -> Result<InertialState> {
    let dt = interval(prev, cur)?;
    Ok(integrate_unchecked(x, prev, cur, gravity, dt))
}

fn integrate_unchecked(
    x: &InertialState,
    prev: &ImuSample,
    cur: &ImuSample,
    gravity: &Vector3<f64>,
    dt: f64,
) -> InertialState {
    let omega = 0.5 * (prev.omega_m + cur.omega_m) - x.b_g;
    let r0 = x.rotation();
    let q1 = x.q_w_i.integrated_body(&(omega * dt));
    let r1 = q1.body_to_world();
    let acc0 = r0 * (prev.accel_m - x.b_a) + gravity;
    let acc1 = r1 * (cur.accel_m - x.b_a) + gravity;
    let acc = 0.5 * (acc0 + acc1);
    InertialState {
        p_w_i: x.p_w_i + x.v_w_i * dt + 0.5 * acc * dt * dt,
        v_w_i: x.v_w_i + acc * dt,
        q_w_i: q1,
        b_g: x.b_g,
        b_a: x.b_a,
    }
}

/// Single-step inertial error-state transition (15 x 15).
pub fn error_transition(
    x: &InertialState,
    prev: &ImuSample,
    cur: &ImuSample,
) -> Result<TransitionBlocks> {
    let dt = interval(prev, cur)?;
    Ok(transition_unchecked(x, prev, cur, dt))
}

fn transition_unchecked(
    x: &InertialState,
    prev: &ImuSample,
    cur: &ImuSample,
    dt: f64,
) -> TransitionBlocks {
    let omega = 0.5 * (prev.omega_m + cur.omega_m) - x.b_g;
    let r0 = x.rotation();
    let r1 = x.q_w_i.integrated_body(&(omega * dt)).body_to_world();
    let jr = right_jacobian(&(omega * dt));
    let f0w = r0 * (prev.accel_m - x.b_a);
    let f1w = r1 * (cur.accel_m - x.b_a);
    let i3 = Matrix3::identity();

    // attitude
    let dth_dbg = -r1 * jr * dt;
    // mean acceleration
    let da_dth = -0.5 * (skew(&f0w) + skew(&f1w));
    let da_dbg = -0.5 * skew(&f1w) * dth_dbg;
    let da_dba = -0.5 * (r0 + r1);

    let mut phi = Matrix15::identity();
    let mut set = |r: usize, c: usize, m: Matrix3<f64>| {
        phi.fixed_view_mut::<3, 3>(r, c).copy_from(&m);
    };
    set(POS, VEL, i3 * dt);
    set(POS, ATT, 0.5 * dt * dt * da_dth);
    set(POS, BG, 0.5 * dt * dt * da_dbg);
    set(POS, BA, 0.5 * dt * dt * da_dba);
    set(VEL, ATT, dt * da_dth);
    set(VEL, BG, dt * da_dbg);
    set(VEL, BA, dt * da_dba);
    set(ATT, BG, dth_dbg);
    TransitionBlocks { phi }
}

/// Trapezoidal discretization of the continuous process noise.
pub fn discrete_noise(phi: &Matrix15, noise: &NoiseModel, dt: f64) -> Matrix15 {
    let qc = noise.continuous();
    0.5 * dt * (phi * qc * phi.transpose() + qc)
}

/// Propagates the filter from `prev.stamp` to `cur.stamp`: nominal inertial
/// state integrated, inertial covariance blocks propagated to first order,
/// clones and features untouched. Returns the step transition.
pub fn propagate(
    state: &mut FilterState,
    prev: &ImuSample,
    cur: &ImuSample,
    noise: &NoiseModel,
    gravity: &Vector3<f64>,
) -> Result<TransitionBlocks> {
    if !cur.is_finite() {
        return Err(Error::Invalid("non-finite IMU sample".into()));
    }
    let dt = interval(prev, cur)?;
    let blocks = transition_unchecked(&state.inertial, prev, cur, dt);
    state.inertial = integrate_unchecked(&state.inertial, prev, cur, gravity, dt);
    state.stamp = cur.stamp;

    let n = state.dim();
    let phi = &blocks.phi;
    let p_ii: Matrix15 = state.cov.fixed_view::<IMU_DIM, IMU_DIM>(0, 0).into_owned();
    let p_ii_new = phi * p_ii * phi.transpose() + discrete_noise(phi, noise, dt);
    state
        .cov
        .fixed_view_mut::<IMU_DIM, IMU_DIM>(0, 0)
        .copy_from(&p_ii_new);
    if n > IMU_DIM {
        let rest = n - IMU_DIM;
        let p_ix = state.cov.view((0, IMU_DIM), (IMU_DIM, rest)).clone_owned();
        let p_ix_new = phi * p_ix;
        state
            .cov
            .view_mut((0, IMU_DIM), (IMU_DIM, rest))
            .copy_from(&p_ix_new);
        state
            .cov
            .view_mut((IMU_DIM, 0), (rest, IMU_DIM))
            .copy_from(&p_ix_new.transpose());
    }
    state.condition_covariance();
    Ok(blocks)
}

/// Ordered product of step transitions: `Phi(k,1) = Phi(k,k-1) ... Phi(2,1)`.
pub fn accumulate_transition(blocks: &[TransitionBlocks]) -> Result<TransitionBlocks> {
    let (first, rest) = blocks.split_first().ok_or(Error::EmptyTransition)?;
    Ok(rest.iter().fold(*first, |acc, b| acc.then(b)))
}
