//! Observability analysis of the linearized range-VIO system.
//!
//! The analysis state holds the inertial error state followed by Cartesian
//! feature positions: `[dp dv dtheta dbg dba | dP_1 .. dP_N]`. A block row of
//! the observability matrix is `M_k = H_k Phi(k,1)`, with `H_k` the
//! measurement Jacobian at step `k` and `Phi(k,1)` the accumulated inertial
//! transition (identity over features). Step `k = 1` is the initial state.

use nalgebra::{DMatrix, DVector, Matrix3, RowVector3, Vector2, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::facet::{delaunay, range_gradient, Facet, LrfExtrinsics};
use crate::imu::{error_transition, integrate_nominal, ImuSample, Matrix15, TransitionBlocks};
use crate::math::skew;
use crate::state::{
    point_in_camera, CameraExtrinsics, InertialState, ATT, BA, BG, IMU_DIM, POS, VEL,
};
use crate::visual::{project, projection_jacobian};

/// Relative singular-value cutoff of the numerical nullspace.
pub const NULLSPACE_TOLERANCE: f64 = 1e-8;

/// Inertial state plus Cartesian features.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisState {
    pub inertial: InertialState,
    pub features_cartesian: Vec<Vector3<f64>>,
}

impl AnalysisState {
    pub fn dim(&self) -> usize {
        IMU_DIM + 3 * self.features_cartesian.len()
    }
}

/// A nominal trajectory with the accumulated error transition at every step.
#[derive(Clone, Debug)]
pub struct AnalysisTrajectory {
    pub states: Vec<InertialState>,
    pub stamps: Vec<f64>,
    pub samples: Vec<ImuSample>,
    /// `Phi(k,1)` for `k = 1..=len`, stored at `k - 1`.
    pub transitions: Vec<Matrix15>,
    pub features: Vec<Vector3<f64>>,
    pub gravity: Vector3<f64>,
}

impl AnalysisTrajectory {
    /// Integrates `samples` from `initial`; `samples[0]` carries the initial
    /// stamp.
    pub fn from_samples(
        initial: InertialState,
        samples: Vec<ImuSample>,
        gravity: Vector3<f64>,
        features: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyTransition)?;
        let mut states = vec![initial];
        let mut stamps = vec![first.stamp];
        let mut transitions = vec![Matrix15::identity()];
        for w in samples.windows(2) {
            let x = states.last().unwrap();
            let step = error_transition(x, &w[0], &w[1])?;
            let next = integrate_nominal(x, &w[0], &w[1], &gravity)?;
            let acc = step.phi * transitions.last().unwrap();
            states.push(next);
            stamps.push(w[1].stamp);
            transitions.push(acc);
        }
        Ok(Self {
            states,
            stamps,
            samples,
            transitions,
            features,
            gravity,
        })
    }

    /// Non-rotating trajectory with piecewise-constant world acceleration:
    /// each segment is `(steps, acceleration)`.
    pub fn piecewise_acceleration(
        initial: InertialState,
        segments: &[(usize, Vector3<f64>)],
        dt: f64,
        gravity: Vector3<f64>,
        features: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        let c = initial.q_w_i.world_to_body();
        let mut accel: Vec<Vector3<f64>> = segments
            .iter()
            .flat_map(|(n, a)| std::iter::repeat_n(*a, *n))
            .collect();
        let last = segments.last().map(|s| s.1).ok_or(Error::EmptyTransition)?;
        accel.push(last);
        let samples = accel
            .iter()
            .enumerate()
            .map(|(k, a_w)| ImuSample {
                omega_m: initial.b_g,
                accel_m: c * (a_w - gravity) + initial.b_a,
                stamp: k as f64 * dt,
            })
            .collect();
        Self::from_samples(initial, samples, gravity, features)
    }

    /// Constant world acceleration without rotation, `steps` intervals.
    pub fn constant_acceleration(
        initial: InertialState,
        accel_w: Vector3<f64>,
        steps: usize,
        dt: f64,
        gravity: Vector3<f64>,
        features: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        Self::piecewise_acceleration(initial, &[(steps, accel_w)], dt, gravity, features)
    }

    /// Number of steps, i.e. the largest valid `k`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        IMU_DIM + 3 * self.features.len()
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.len() {
            return Err(Error::Invalid(format!(
                "step {k} outside 1..={}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn state(&self, k: usize) -> &InertialState {
        &self.states[k - 1]
    }

    pub fn phi(&self, k: usize) -> TransitionBlocks {
        TransitionBlocks {
            phi: self.transitions[k - 1],
        }
    }

    /// Elapsed time between step 1 and step `k`.
    pub fn elapsed(&self, k: usize) -> f64 {
        self.stamps[k - 1] - self.stamps[0]
    }

    /// Body-frame kinematic acceleration at every sample,
    /// `f - b_a + C(q) g`.
    pub fn body_accelerations(&self) -> Vec<Vector3<f64>> {
        self.samples
            .iter()
            .zip(&self.states)
            .map(|(s, x)| s.accel_m - x.b_a + x.q_w_i.world_to_body() * self.gravity)
            .collect()
    }
}

/// Camera centre, camera-to-world rotation and world laser axis at an
/// inertial state.
fn ray_at(
    x: &InertialState,
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
) -> (Vector3<f64>, Matrix3<f64>, Vector3<f64>) {
    let (p_c, r_wc) = cam.camera_pose(x);
    (p_c, r_wc, r_wc * lrf.u_r_cam)
}

/// Range prediction and its Jacobian over the analysis state.
pub fn cartesian_range_jacobian(
    x: &InertialState,
    features: &[Vector3<f64>],
    facet: [usize; 3],
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
) -> Result<(Facet, DMatrix<f64>)> {
    let (p_c, _, u_w) = ray_at(x, cam, lrf);
    let f = Facet::new(
        facet.map(|j| j as u64),
        facet.map(|j| features[j]),
        &p_c,
        &u_w,
    );
    let g = range_gradient(&p_c, &u_w, &f.points, 0.0)?;
    let lever = x.rotation() * cam.p_i_c;
    let mut h = DMatrix::zeros(1, IMU_DIM + 3 * features.len());
    let mut put = |c: usize, row: RowVector3<f64>| {
        let mut v = h.view_mut((0, c), (1, 3));
        v += row;
    };
    put(POS, g.d_cam_pos);
    put(ATT, -g.d_ray * skew(&u_w) - g.d_cam_pos * skew(&lever));
    for k in 0..3 {
        put(IMU_DIM + 3 * f.feature_ids[k] as usize, g.d_points[k]);
    }
    Ok((f, h))
}

/// Projection of feature `j` and its Jacobian over the analysis state.
pub fn cartesian_visual_jacobian(
    x: &InertialState,
    features: &[Vector3<f64>],
    j: usize,
    cam: &CameraExtrinsics,
) -> Result<(Vector2<f64>, DMatrix<f64>)> {
    let (p_c, r_wc) = cam.camera_pose(x);
    let cp = point_in_camera(&features[j], &p_c, &r_wc);
    let uv = project(&cp.p)?;
    let jp = projection_jacobian(&cp.p);
    let lever = x.rotation() * cam.p_i_c;
    let mut h = DMatrix::zeros(2, IMU_DIM + 3 * features.len());
    h.view_mut((0, POS), (2, 3)).copy_from(&(jp * cp.d_cam_pos));
    h.view_mut((0, ATT), (2, 3))
        .copy_from(&(jp * (cp.d_cam_att - cp.d_cam_pos * skew(&lever))));
    h.view_mut((0, IMU_DIM + 3 * j), (2, 3))
        .copy_from(&(jp * cp.d_world));
    Ok((uv, h))
}

/// Right-multiplies an analysis-state Jacobian by `Phi(k,1)`.
fn times_transition(h: &DMatrix<f64>, phi: &Matrix15) -> DMatrix<f64> {
    let mut m = h.clone();
    let hi = h.columns(0, IMU_DIM).clone_owned();
    let phi_d = DMatrix::from_column_slice(IMU_DIM, IMU_DIM, phi.as_slice());
    m.columns_mut(0, IMU_DIM).copy_from(&(hi * phi_d));
    m
}

/// One range block row with named sub-blocks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservabilityRow {
    pub k: usize,
    pub p: RowVector3<f64>,
    pub v: RowVector3<f64>,
    pub theta: RowVector3<f64>,
    pub bg: RowVector3<f64>,
    pub ba: RowVector3<f64>,
    /// `(feature index, block)` for `F1, F2, F3`.
    pub features: [(usize, RowVector3<f64>); 3],
    pub inv_b: f64,
    pub dim: usize,
}

impl ObservabilityRow {
    pub fn assemble(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(1, self.dim);
        for (c, b) in [
            (POS, self.p),
            (VEL, self.v),
            (ATT, self.theta),
            (BG, self.bg),
            (BA, self.ba),
        ] {
            m.view_mut((0, c), (1, 3)).copy_from(&b);
        }
        for (j, b) in &self.features {
            let mut v = m.view_mut((0, IMU_DIM + 3 * j), (1, 3));
            v += b;
        }
        m
    }
}

/// Range block row from its closed-form sub-blocks. Only the gyro and
/// accelerometer bias blocks use the accumulated transition.
pub fn build_row_analytic(
    traj: &AnalysisTrajectory,
    k: usize,
    facet: [usize; 3],
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
) -> Result<ObservabilityRow> {
    traj.check_k(k)?;
    if cam.p_i_c != Vector3::zeros() {
        return Err(Error::Invalid(
            "closed-form rows assume a zero camera lever arm".into(),
        ));
    }
    let x1 = traj.state(1);
    let xk = traj.state(k);
    let (p_c, _, u_w) = ray_at(xk, cam, lrf);
    let f = Facet::new(
        facet.map(|j| j as u64),
        facet.map(|j| traj.features[j]),
        &p_c,
        &u_w,
    );
    let g = range_gradient(&p_c, &u_w, &f.points, 0.0)?;
    let n = f.n_w.transpose();
    let (a, b) = (f.a, f.b);
    let t = traj.elapsed(k);
    let phi = traj.phi(k);
    let drift = x1.p_w_i + x1.v_w_i * t + 0.5 * traj.gravity * t * t - xk.p_w_i;
    let ray = (a / b) * n * skew(&u_w);
    Ok(ObservabilityRow {
        k,
        p: -n / b,
        v: -t * n / b,
        theta: (-n * skew(&drift) + ray) / b,
        bg: (ray * phi.attitude_gyro_bias() - n * phi.position_gyro_bias()) / b,
        ba: -(n * phi.position_accel_bias()) / b,
        features: [0, 1, 2].map(|i| (f.feature_ids[i] as usize, g.d_points[i])),
        inv_b: 1.0 / b,
        dim: traj.dim(),
    })
}

/// `H_k Phi(k,1)` with the analytic range Jacobian and accumulated
/// transition.
pub fn build_row_product(
    traj: &AnalysisTrajectory,
    k: usize,
    facet: [usize; 3],
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
) -> Result<DMatrix<f64>> {
    traj.check_k(k)?;
    let (_, h) = cartesian_range_jacobian(traj.state(k), &traj.features, facet, cam, lrf)?;
    Ok(times_transition(&h, &traj.transitions[k - 1]))
}

fn range_of(
    x: &InertialState,
    features: &[Vector3<f64>],
    facet: [usize; 3],
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
) -> f64 {
    let (p_c, _, u_w) = ray_at(x, cam, lrf);
    Facet::new(
        facet.map(|j| j as u64),
        facet.map(|j| features[j]),
        &p_c,
        &u_w,
    )
    .range()
}

/// Propagates a perturbed initial state through the trajectory's samples.
fn repropagate(traj: &AnalysisTrajectory, x1: InertialState, k: usize) -> Result<InertialState> {
    let mut x = x1;
    for w in traj.samples[..k].windows(2) {
        x = integrate_nominal(&x, &w[0], &w[1], &traj.gravity)?;
    }
    Ok(x)
}

/// Range block row from a central-difference measurement Jacobian times a
/// central-difference transition obtained by re-propagating perturbed
/// initial states.
pub fn build_row_numeric(
    traj: &AnalysisTrajectory,
    k: usize,
    facet: [usize; 3],
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
    step: f64,
) -> Result<DMatrix<f64>> {
    traj.check_k(k)?;
    let dim = traj.dim();
    let xk = *traj.state(k);

    let mut h = DMatrix::zeros(1, dim);
    for c in 0..IMU_DIM {
        let mut d = [0.0; IMU_DIM];
        d[c] = step;
        let mut xp = xk;
        xp.inject(&d);
        d[c] = -step;
        let mut xm = xk;
        xm.inject(&d);
        h[(0, c)] = (range_of(&xp, &traj.features, facet, cam, lrf)
            - range_of(&xm, &traj.features, facet, cam, lrf))
            / (2.0 * step);
    }
    for j in facet {
        for axis in 0..3 {
            let mut fp = traj.features.clone();
            fp[j][axis] += step;
            let mut fm = traj.features.clone();
            fm[j][axis] -= step;
            h[(0, IMU_DIM + 3 * j + axis)] = (range_of(&xk, &fp, facet, cam, lrf)
                - range_of(&xk, &fm, facet, cam, lrf))
                / (2.0 * step);
        }
    }

    let x1 = *traj.state(1);
    let mut phi = Matrix15::zeros();
    for c in 0..IMU_DIM {
        let mut d = [0.0; IMU_DIM];
        d[c] = step;
        let mut xp = x1;
        xp.inject(&d);
        d[c] = -step;
        let mut xm = x1;
        xm.inject(&d);
        let yp = repropagate(traj, xp, k)?.difference(&xk);
        let ym = repropagate(traj, xm, k)?.difference(&xk);
        for r in 0..IMU_DIM {
            phi[(r, c)] = (yp[r] - ym[r]) / (2.0 * step);
        }
    }
    Ok(times_transition(&h, &phi))
}

/// Visual block rows (2 per feature) at step `k`.
pub fn visual_rows(
    traj: &AnalysisTrajectory,
    k: usize,
    j: usize,
    cam: &CameraExtrinsics,
) -> Result<DMatrix<f64>> {
    traj.check_k(k)?;
    let (_, h) = cartesian_visual_jacobian(traj.state(k), &traj.features, j, cam)?;
    Ok(times_transition(&h, &traj.transitions[k - 1]))
}

/// Scale direction `[p_1, v_1, 0, 0, -a_body, P_1 .. P_N]`.
pub fn scale_direction_from(
    p1: &Vector3<f64>,
    v1: &Vector3<f64>,
    accel_body: &Vector3<f64>,
    features: &[Vector3<f64>],
) -> DVector<f64> {
    let mut d = DVector::zeros(IMU_DIM + 3 * features.len());
    d.rows_mut(POS, 3).copy_from(p1);
    d.rows_mut(VEL, 3).copy_from(v1);
    d.rows_mut(BA, 3).copy_from(&(-accel_body));
    for (j, p) in features.iter().enumerate() {
        d.rows_mut(IMU_DIM + 3 * j, 3).copy_from(p);
    }
    d
}

/// Scale direction of a trajectory with constant body-frame acceleration.
pub fn scale_direction(traj: &AnalysisTrajectory) -> Result<DVector<f64>> {
    let acc = traj.body_accelerations();
    let first = *acc.first().ok_or(Error::EmptyTransition)?;
    let spread = acc.iter().map(|a| (a - first).norm()).fold(0.0, f64::max);
    if spread > 1e-9 * (1.0 + first.norm()) {
        return Err(Error::NonConstantAcceleration(spread));
    }
    let x1 = traj.state(1);
    Ok(scale_direction_from(
        &x1.p_w_i,
        &x1.v_w_i,
        &first,
        &traj.features,
    ))
}

/// Depth direction of the features outside the facet: zero except
/// `P_j` for every feature `j` not in `facet`.
pub fn hover_direction(features: &[Vector3<f64>], facet: &[usize]) -> DVector<f64> {
    let mut d = DVector::zeros(IMU_DIM + 3 * features.len());
    for (j, p) in features.iter().enumerate() {
        if !facet.contains(&j) {
            d.rows_mut(IMU_DIM + 3 * j, 3).copy_from(p);
        }
    }
    d
}

/// Global translation along world axis `axis`.
pub fn translation_direction(axis: usize, n_features: usize) -> DVector<f64> {
    let mut d = DVector::zeros(IMU_DIM + 3 * n_features);
    d[POS + axis] = 1.0;
    for j in 0..n_features {
        d[IMU_DIM + 3 * j + axis] = 1.0;
    }
    d
}

/// Rotation about the gravity axis (world z) at step 1.
pub fn yaw_direction(x1: &InertialState, features: &[Vector3<f64>]) -> DVector<f64> {
    let ez = Vector3::z();
    let mut d = DVector::zeros(IMU_DIM + 3 * features.len());
    d.rows_mut(POS, 3).copy_from(&ez.cross(&x1.p_w_i));
    d.rows_mut(VEL, 3).copy_from(&ez.cross(&x1.v_w_i));
    d.rows_mut(ATT, 3).copy_from(&ez);
    for (j, p) in features.iter().enumerate() {
        d.rows_mut(IMU_DIM + 3 * j, 3).copy_from(&ez.cross(p));
    }
    d
}

/// `(k, M_k N_s, closed form)` for the requested steps.
pub fn scale_residuals(
    traj: &AnalysisTrajectory,
    ks: &[usize],
    facet: [usize; 3],
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
) -> Result<Vec<(usize, f64, f64)>> {
    let ns = scale_direction(traj)?;
    ks.iter()
        .map(|&k| {
            let row = build_row_analytic(traj, k, facet, cam, lrf)?.assemble();
            let xk = traj.state(k);
            let (p_c, _, u_w) = ray_at(xk, cam, lrf);
            let f = Facet::new(
                facet.map(|j| j as u64),
                facet.map(|j| traj.features[j]),
                &p_c,
                &u_w,
            );
            let closed = f.n_w.dot(&(f.points[1] - xk.p_w_i)) / f.b;
            Ok((k, (row * &ns)[(0, 0)], closed))
        })
        .collect()
}

/// Largest `|M_k N_h| / (|M_k| |N_h|)` over the requested steps.
pub fn hover_residual(
    traj: &AnalysisTrajectory,
    ks: &[usize],
    facet: [usize; 3],
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
) -> Result<f64> {
    let nh = hover_direction(&traj.features, &facet);
    let norm_h = nh.norm();
    let mut worst: f64 = 0.0;
    for &k in ks {
        let m = build_row_analytic(traj, k, facet, cam, lrf)?.assemble();
        let r = (&m * &nh)[(0, 0)].abs();
        let scale = m.norm() * norm_h;
        if scale > 0.0 {
            worst = worst.max(r / scale);
        }
    }
    Ok(worst)
}

/// Which rows go into a stacked observability matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StackOptions {
    pub visual: bool,
    pub range: bool,
    /// Features are used only when their projection lies within these
    /// half-extents of the normalized image plane.
    pub half_width: f64,
    pub half_height: f64,
}

impl Default for StackOptions {
    fn default() -> Self {
        Self {
            visual: true,
            range: true,
            half_width: 0.6,
            half_height: 0.45,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Stack {
    pub m: DMatrix<f64>,
    pub visual_rows: usize,
    pub range_rows: usize,
    /// Facet used at each step with a range row.
    pub facets: Vec<(usize, [usize; 3])>,
}

/// Visible features at step `k` and their image points.
pub fn visible_features(
    traj: &AnalysisTrajectory,
    k: usize,
    cam: &CameraExtrinsics,
    opts: &StackOptions,
) -> Vec<(usize, Vector2<f64>)> {
    let (p_c, r_wc) = cam.camera_pose(traj.state(k));
    traj.features
        .iter()
        .enumerate()
        .filter_map(|(j, p)| {
            let uv = project(&(r_wc.transpose() * (p - p_c))).ok()?;
            (uv.x.abs() <= opts.half_width && uv.y.abs() <= opts.half_height).then_some((j, uv))
        })
        .collect()
}

/// Facet containing the laser axis among the visible features at step `k`.
pub fn facet_at(
    traj: &AnalysisTrajectory,
    k: usize,
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
    opts: &StackOptions,
) -> Option<[usize; 3]> {
    let vis = visible_features(traj, k, cam, opts);
    let pts: Vec<Vector2<f64>> = vis.iter().map(|(_, uv)| *uv).collect();
    let tri = delaunay(&pts).ok()?;
    let t = tri.locate(&lrf.image_point())?;
    Some(tri.triangles[t].map(|i| vis[i].0))
}

/// Stacks visual and/or range block rows over the steps `ks`.
pub fn build_stack(
    traj: &AnalysisTrajectory,
    ks: &[usize],
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
    opts: &StackOptions,
) -> Result<Stack> {
    let dim = traj.dim();
    let mut rows: Vec<DMatrix<f64>> = Vec::new();
    let mut out = Stack::default();
    for &k in ks {
        traj.check_k(k)?;
        if opts.visual {
            for (j, _) in visible_features(traj, k, cam, opts) {
                rows.push(visual_rows(traj, k, j, cam)?);
                out.visual_rows += 2;
            }
        }
        if opts.range {
            if let Some(facet) = facet_at(traj, k, cam, lrf, opts) {
                match build_row_product(traj, k, facet, cam, lrf) {
                    Ok(r) => {
                        rows.push(r);
                        out.range_rows += 1;
                        out.facets.push((k, facet));
                    }
                    Err(Error::DegenerateFacet(_)) | Err(Error::NegativeRange(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let total: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut m = DMatrix::zeros(total, dim);
    let mut at = 0;
    for r in rows {
        m.view_mut((at, 0), (r.nrows(), dim)).copy_from(&r);
        at += r.nrows();
    }
    out.m = m;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionResidual {
    pub name: String,
    /// Distance of the normalized direction from the numerical nullspace.
    pub residual: f64,
    pub in_nullspace: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NullspaceReport {
    pub rows: usize,
    pub cols: usize,
    pub nullity: usize,
    pub sigma_max: f64,
    /// Smallest singular value kept as observable.
    pub sigma_min_kept: f64,
    /// Ratio of the smallest to the largest singular value overall.
    pub conditioning: f64,
    pub directions: Vec<DirectionResidual>,
    #[serde(skip)]
    pub basis: DMatrix<f64>,
}

impl NullspaceReport {
    pub fn direction(&self, name: &str) -> Option<&DirectionResidual> {
        self.directions.iter().find(|d| d.name == name)
    }
}

/// Numerical right nullspace of `m` (singular values below
/// `tolerance * sigma_max`, plus any columns beyond the row count) and the
/// distance of each named direction from it.
pub fn nullspace_report(
    m: &DMatrix<f64>,
    directions: &[(String, DVector<f64>)],
    tolerance: f64,
    membership: f64,
) -> Result<NullspaceReport> {
    let (rows, cols) = m.shape();
    if rows == 0 {
        return Err(Error::InsufficientRows {
            needed: cols,
            got: 0,
        });
    }
    // tall stacks are reduced to their square QR factor first
    let reduced = if rows > cols {
        m.clone().qr().r()
    } else {
        m.clone()
    };
    let svd = reduced.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sv = &svd.singular_values;
    let sigma_max = sv.max();
    let mut null_rows: Vec<usize> = Vec::new();
    let mut sigma_min_kept = f64::INFINITY;
    for (i, s) in sv.iter().enumerate() {
        if *s < tolerance * sigma_max {
            null_rows.push(i);
        } else {
            sigma_min_kept = sigma_min_kept.min(*s);
        }
    }
    // distances are measured against the kept (row-space) basis, which also
    // covers wide matrices whose thin SVD omits part of the nullspace
    let kept: Vec<usize> = (0..sv.len()).filter(|i| !null_rows.contains(i)).collect();
    let mut kept_basis = DMatrix::zeros(cols, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        kept_basis.set_column(c, &v_t.row(i).transpose());
    }
    let project_out = |d: &DVector<f64>| -> f64 {
        let u = d / d.norm();
        // distance to the nullspace = norm of the component in the row space
        (kept_basis.transpose() * &u).norm()
    };
    let nullity = cols - kept.len();
    let mut basis = DMatrix::zeros(cols, null_rows.len());
    for (c, &i) in null_rows.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    let out = directions
        .iter()
        .map(|(name, d)| {
            let residual = project_out(d);
            DirectionResidual {
                name: name.clone(),
                residual,
                in_nullspace: residual < membership,
            }
        })
        .collect();
    Ok(NullspaceReport {
        rows,
        cols,
        nullity,
        sigma_max,
        sigma_min_kept,
        conditioning: sv.min() / sigma_max,
        directions: out,
        basis,
    })
}
