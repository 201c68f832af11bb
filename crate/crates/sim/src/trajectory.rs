//! Analytic body trajectories with closed-form velocity, acceleration and
//! angular rate.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use rvio_core::state::InertialState;
use rvio_core::Quaternion;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Hover,
    ConstantVelocity,
    Excited,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartPose {
    pub position: [f64; 3],
    /// Heading of the body x axis and of the traverse, radians from world x.
    pub yaw: f64,
}

impl Default for StartPose {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0, 11.0],
            yaw: 0.0,
        }
    }
}

/// Sinusoidal excitation added on top of the traverse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Excitation {
    /// Position amplitude, meters.
    pub amplitude: f64,
    /// Base frequency, Hz.
    pub frequency: f64,
    /// Roll/pitch/yaw amplitude, radians.
    pub attitude_amplitude: f64,
}

impl Default for Excitation {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            frequency: 0.25,
            attitude_amplitude: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryProfile {
    pub kind: TrajectoryKind,
    /// Seconds.
    pub duration: f64,
    /// Cruise speed along the heading, m/s. Ignored for hover.
    pub speed: f64,
    pub start: StartPose,
    /// Quintic speed blend from rest to cruise over this many seconds; zero
    /// starts at cruise speed.
    pub ramp: f64,
    pub excitation: Excitation,
}

impl Default for TrajectoryProfile {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::ConstantVelocity,
            duration: 75.0,
            speed: 2.0,
            start: StartPose::default(),
            ramp: 0.0,
            excitation: Excitation::default(),
        }
    }
}

/// Kinematic truth at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinematics {
    pub stamp: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    /// Body to world.
    pub r_wb: Matrix3<f64>,
    /// Body-frame angular rate.
    pub omega_b: Vector3<f64>,
}

impl Kinematics {
    pub fn quaternion(&self) -> Quaternion {
        Quaternion::from_body_to_world(&self.r_wb)
    }

    /// Inertial state with the given biases.
    pub fn inertial(&self, b_g: Vector3<f64>, b_a: Vector3<f64>) -> InertialState {
        InertialState {
            p_w_i: self.p,
            v_w_i: self.v,
            q_w_i: self.quaternion(),
            b_g,
            b_a,
        }
    }

    /// Ideal accelerometer reading (specific force, body frame).
    pub fn specific_force(&self, gravity: &Vector3<f64>) -> Vector3<f64> {
        self.r_wb.transpose() * (self.a - gravity)
    }
}

/// One scalar sinusoid `amp * sin(TAU f t + phase)` and its derivatives.
fn sine(amp: f64, f: f64, phase: f64, t: f64) -> (f64, f64, f64) {
    let w = TAU * f;
    let (s, c) = (w * t + phase).sin_cos();
    (amp * s, amp * w * c, -amp * w * w * s)
}

impl TrajectoryProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive");
        }
        if self.kind != TrajectoryKind::Hover && !(self.speed >= 0.0 && self.speed.is_finite()) {
            return bad("speed must be non-negative");
        }
        if !(self.ramp >= 0.0 && self.ramp <= self.duration) {
            return bad("ramp must lie within the duration");
        }
        let e = &self.excitation;
        if self.kind == TrajectoryKind::Excited
            && !(e.amplitude >= 0.0 && e.frequency > 0.0 && e.attitude_amplitude.abs() < 0.5)
        {
            return bad("excitation needs non-negative amplitude, positive frequency and attitude amplitude below 0.5 rad");
        }
        if self
            .start
            .position
            .iter()
            .chain([&self.start.yaw])
            .any(|v| !v.is_finite())
        {
            return bad("start pose must be finite");
        }
        Ok(())
    }

    fn heading(&self) -> Vector3<f64> {
        Vector3::new(self.start.yaw.cos(), self.start.yaw.sin(), 0.0)
    }

    /// Distance along the heading and its first two derivatives.
    fn along(&self, t: f64) -> (f64, f64, f64) {
        if self.kind == TrajectoryKind::Hover {
            return (0.0, 0.0, 0.0);
        }
        let v = self.speed;
        if self.ramp > 0.0 && t < self.ramp {
            let ramp = self.ramp;
            let s = t / ramp;
            let b = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
            let db = 30.0 * s * s * (1.0 - s) * (1.0 - s);
            let int_b = s.powi(4) * (2.5 - 3.0 * s + s * s);
            (v * ramp * int_b, v * b, v * db / ramp)
        } else {
            (v * (0.5 * self.ramp + (t - self.ramp)), v, 0.0)
        }
    }

    /// Euler angles (roll, pitch, yaw) with first derivatives.
    fn euler(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        if self.kind != TrajectoryKind::Excited {
            return ([0.0, 0.0, self.start.yaw], [0.0; 3]);
        }
        let e = &self.excitation;
        let (r, dr, _) = sine(e.attitude_amplitude, 0.8 * e.frequency, 0.5, t);
        let (p, dp, _) = sine(e.attitude_amplitude, 0.6 * e.frequency, 1.5, t);
        let (y, dy, _) = sine(e.attitude_amplitude, 0.5 * e.frequency, 0.0, t);
        ([r, p, self.start.yaw + y], [dr, dp, dy])
    }

    pub fn at(&self, t: f64) -> Kinematics {
        let d = self.heading();
        let (s, ds, dds) = self.along(t);
        let p0 = Vector3::from(self.start.position);
        let mut p = p0 + d * s;
        let mut v = d * ds;
        let mut a = d * dds;
        if self.kind == TrajectoryKind::Excited {
            let e = &self.excitation;
            let axes = [
                sine(e.amplitude, e.frequency, 0.0, t),
                sine(e.amplitude, 1.3 * e.frequency, 1.0, t),
                sine(0.5 * e.amplitude, 0.7 * e.frequency, 2.0, t),
            ];
            for (k, (x, dx, ddx)) in axes.into_iter().enumerate() {
                p[k] += x;
                v[k] += dx;
                a[k] += ddx;
            }
        }
        let ([r, pt, y], [dr, dp, dy]) = self.euler(t);
        let (sr, cr) = r.sin_cos();
        let (sp, cp) = pt.sin_cos();
        let r_wb = rz(y) * ry(pt) * rx(r);
        let omega_b = Vector3::new(
            dr - dy * sp,
            dp * cr + dy * sr * cp,
            -dp * sr + dy * cr * cp,
        );
        Kinematics {
            stamp: t,
            p,
            v,
            a,
            r_wb,
            omega_b,
        }
    }

    /// Path length travelled over `[0, t]`, integrated numerically at 1 ms.
    pub fn distance(&self, t: f64) -> f64 {
        let n = (t / 1e-3).ceil().max(1.0) as usize;
        let h = t / n as f64;
        (0..n)
            .map(|k| {
                let (a, b) = (
                    self.at(k as f64 * h).v.norm(),
                    self.at((k + 1) as f64 * h).v.norm(),
                );
                0.5 * (a + b) * h
            })
            .sum()
    }
}

fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn ry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}
