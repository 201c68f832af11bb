#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvio_core::facet::LrfExtrinsics;
use rvio_core::state::{
    CameraExtrinsics, FilterState, InertialState, InverseDepthFeature, IMU_DIM,
};
use rvio_core::Quaternion;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn random_vec(rng: &mut ChaCha8Rng, half: f64) -> Vector3<f64> {
    Vector3::new(
        uniform(rng, -half, half),
        uniform(rng, -half, half),
        uniform(rng, -half, half),
    )
}

/// Roughly nadir-looking IMU pose 8 to 15 m up with arbitrary yaw.
pub fn random_inertial(rng: &mut ChaCha8Rng) -> InertialState {
    InertialState {
        p_w_i: Vector3::new(
            uniform(rng, -5.0, 5.0),
            uniform(rng, -5.0, 5.0),
            uniform(rng, 8.0, 15.0),
        ),
        v_w_i: random_vec(rng, 2.0),
        q_w_i: Quaternion::from_rotation_vector(&Vector3::new(
            uniform(rng, -0.2, 0.2),
            uniform(rng, -0.2, 0.2),
            uniform(rng, -PI, PI),
        )),
        b_g: random_vec(rng, 1e-3),
        b_a: random_vec(rng, 0.05),
    }
}

/// Three points on a random plane around `center`.
pub fn triangle_around(rng: &mut ChaCha8Rng, center: &Vector3<f64>) -> [Vector3<f64>; 3] {
    let tilt = uniform(rng, 0.0, 0.45);
    let az = uniform(rng, -PI, PI);
    let n = Vector3::new(tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos());
    let e1 = n.cross(&Vector3::x()).normalize();
    let e2 = n.cross(&e1);
    let phase = uniform(rng, -PI, PI);
    [0.0, 1.0, 2.0].map(|k| {
        let ang = phase + k * 2.0 * PI / 3.0 + uniform(rng, -0.3, 0.3);
        center + uniform(rng, 1.5, 4.0) * (ang.cos() * e1 + ang.sin() * e2)
    })
}

pub fn random_rig(rng: &mut ChaCha8Rng) -> (CameraExtrinsics, LrfExtrinsics) {
    let cam = CameraExtrinsics {
        cam_to_imu: Quaternion::from_rotation_vector(&random_vec(rng, 0.05)).body_to_world()
            * CameraExtrinsics::nadir().cam_to_imu,
        p_i_c: random_vec(rng, 0.1),
    };
    let lrf = LrfExtrinsics {
        u_r_cam: Vector3::new(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1), 1.0).normalize(),
    };
    (cam, lrf)
}

/// Filter state with four clones and three inverse-depth features forming a
/// facet around the current laser ray. `None` if a vertex ends up behind its
/// anchor.
pub fn random_filter_state(seed: u64) -> Option<(FilterState, CameraExtrinsics, LrfExtrinsics)> {
    let mut rng = rng(seed);
    let (cam, lrf) = random_rig(&mut rng);
    let mut st = FilterState::new(
        random_inertial(&mut rng),
        DMatrix::identity(IMU_DIM, IMU_DIM) * 1e-2,
        0.0,
    )
    .ok()?;
    for k in 0..4 {
        st.clone_pose(k as f64, &cam, 10).ok()?;
        st.inertial.p_w_i += random_vec(&mut rng, 1.0);
        st.inertial.q_w_i = st
            .inertial
            .q_w_i
            .perturbed_world(&random_vec(&mut rng, 0.05));
    }
    let (p_c, r_wc) = cam.camera_pose(&st.inertial);
    let hit = p_c + r_wc * lrf.u_r_cam * uniform(&mut rng, 5.0, 20.0);
    for (j, p) in triangle_around(&mut rng, &hit).iter().enumerate() {
        let anchor = rng.random_range(0..st.clones.len());
        let a = &st.clones[anchor];
        let pc = a.q_w_c.world_to_body() * (p - a.p_w_c);
        if pc.z < 0.5 {
            return None;
        }
        let f = InverseDepthFeature {
            id: 50 - 7 * j as u64,
            alpha: pc.x / pc.z,
            beta: pc.y / pc.z,
            rho: 1.0 / pc.z,
            anchor_index: anchor,
        };
        st.add_feature(
            f,
            &DMatrix::zeros(3, st.dim()),
            &(DMatrix::identity(3, 3) * 1e-3),
        )
        .ok()?;
    }
    Some((st, cam, lrf))
}

/// Central differences over the error state, one column per coordinate.
pub fn numeric_jacobian(
    st: &FilterState,
    rows: usize,
    eps: f64,
    f: impl Fn(&FilterState) -> DVector<f64>,
) -> DMatrix<f64> {
    let n = st.dim();
    let mut h = DMatrix::zeros(rows, n);
    for k in 0..n {
        let mut dx = DVector::zeros(n);
        dx[k] = eps;
        let mut sp = st.clone();
        sp.inject(&dx).unwrap();
        let mut sm = st.clone();
        sm.inject(&(-dx)).unwrap();
        h.set_column(k, &((f(&sp) - f(&sm)) / (2.0 * eps)));
    }
    h
}

/// Largest entry gap relative to the largest analytic entry.
pub fn relative_gap(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).amax() / analytic.amax()
}
