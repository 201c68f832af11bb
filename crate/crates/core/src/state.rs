//! Filter state, error-state layout and covariance bookkeeping.
//!
//! Error-state ordering:
//!
//! ```text
//! [ dp dv dtheta dbg dba | (dp_c dtheta_c) x clones | (dalpha dbeta drho) x features ]
//!   0  3  6      9   12    15 + 6 i                   15 + 6 M + 3 j
//! ```
//!
//! Attitude errors are world-frame rotation vectors, see [`crate::quaternion`].

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{skew, symmetrize};
use crate::quaternion::Quaternion;

pub const IMU_DIM: usize = 15;
pub const CLONE_DIM: usize = 6;
pub const FEATURE_DIM: usize = 3;

pub const POS: usize = 0;
pub const VEL: usize = 3;
pub const ATT: usize = 6;
pub const BG: usize = 9;
pub const BA: usize = 12;

/// Lower bound applied to covariance diagonal entries.
pub const COVARIANCE_FLOOR: f64 = 1e-12;

/// Default smallest |rho| accepted by [`inverse_depth_to_cartesian`].
pub const DEFAULT_MIN_INVERSE_DEPTH: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InertialState {
    pub p_w_i: Vector3<f64>,
    pub v_w_i: Vector3<f64>,
    pub q_w_i: Quaternion,
    pub b_g: Vector3<f64>,
    pub b_a: Vector3<f64>,
}

impl Default for InertialState {
    fn default() -> Self {
        Self {
            p_w_i: Vector3::zeros(),
            v_w_i: Vector3::zeros(),
            q_w_i: Quaternion::identity(),
            b_g: Vector3::zeros(),
            b_a: Vector3::zeros(),
        }
    }
}

impl InertialState {
    pub fn is_finite(&self) -> bool {
        self.p_w_i.iter().all(|v| v.is_finite())
            && self.v_w_i.iter().all(|v| v.is_finite())
            && self.q_w_i.is_finite()
            && self.b_g.iter().all(|v| v.is_finite())
            && self.b_a.iter().all(|v| v.is_finite())
    }

    /// Body (IMU) to world rotation.
    pub fn rotation(&self) -> Matrix3<f64> {
        self.q_w_i.body_to_world()
    }

    /// Applies a 15-dimensional error-state correction.
    pub fn inject(&mut self, dx: &[f64]) {
        let v = |o: usize| Vector3::new(dx[o], dx[o + 1], dx[o + 2]);
        self.p_w_i += v(POS);
        self.v_w_i += v(VEL);
        self.q_w_i = self.q_w_i.perturbed_world(&v(ATT));
        self.b_g += v(BG);
        self.b_a += v(BA);
    }

    /// Error state `self - reference` in the filter's error convention.
    pub fn difference(&self, reference: &InertialState) -> [f64; IMU_DIM] {
        let mut out = [0.0; IMU_DIM];
        let blocks = [
            self.p_w_i - reference.p_w_i,
            self.v_w_i - reference.v_w_i,
            self.q_w_i.world_difference(&reference.q_w_i),
            self.b_g - reference.b_g,
            self.b_a - reference.b_a,
        ];
        for (k, b) in blocks.iter().enumerate() {
            out[3 * k..3 * k + 3].copy_from_slice(b.as_slice());
        }
        out
    }
}

/// Camera pose kept in the sliding window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPoseClone {
    pub p_w_c: Vector3<f64>,
    pub q_w_c: Quaternion,
    pub stamp: f64,
}

impl CameraPoseClone {
    pub fn identity_at(p_w_c: Vector3<f64>) -> Self {
        Self {
            p_w_c,
            q_w_c: Quaternion::identity(),
            stamp: 0.0,
        }
    }

    /// Camera to world rotation.
    pub fn rotation(&self) -> Matrix3<f64> {
        self.q_w_c.body_to_world()
    }
}

/// Inverse-depth feature `(alpha, beta, rho)` anchored on a clone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseDepthFeature {
    /// Track id of the landmark.
    pub id: u64,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub anchor_index: usize,
}

impl InverseDepthFeature {
    pub fn bearing(&self) -> Vector3<f64> {
        Vector3::new(self.alpha, self.beta, 1.0)
    }
}

/// Camera mounting on the IMU body.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraExtrinsics {
    /// Rotation taking camera coordinates into IMU coordinates.
    pub cam_to_imu: Matrix3<f64>,
    /// Camera optical centre expressed in the IMU frame, meters.
    pub p_i_c: Vector3<f64>,
}

impl Default for CameraExtrinsics {
    fn default() -> Self {
        Self::nadir()
    }
}

impl CameraExtrinsics {
    /// Camera looking along IMU -z, image x along IMU -y and image y along IMU -x.
    pub fn nadir() -> Self {
        Self {
            cam_to_imu: Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0),
            p_i_c: Vector3::zeros(),
        }
    }

    /// Camera pose for a given IMU pose.
    pub fn camera_pose(&self, inertial: &InertialState) -> (Vector3<f64>, Matrix3<f64>) {
        let r_wi = inertial.rotation();
        (inertial.p_w_i + r_wi * self.p_i_c, r_wi * self.cam_to_imu)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConstants {
    pub gravity_w: Vector3<f64>,
    /// Nominal IMU step, seconds.
    pub dt: f64,
}

impl Default for WorldConstants {
    fn default() -> Self {
        Self {
            gravity_w: Vector3::new(0.0, 0.0, -9.81),
            dt: 1.0 / 250.0,
        }
    }
}

impl WorldConstants {
    /// Gravity magnitude must stay within 0.5 m/s^2 of 9.81 unless
    /// `allow_override` is set.
    pub fn validate(&self, allow_override: bool) -> Result<()> {
        if !allow_override && (self.gravity_w.norm() - 9.81).abs() > 0.5 {
            return Err(Error::Invalid(format!(
                "gravity magnitude {} is not within 0.5 of 9.81",
                self.gravity_w.norm()
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Invalid("nominal dt must be positive".into()));
        }
        Ok(())
    }
}

/// World position of an anchored inverse-depth feature together with its
/// partial derivatives.
#[derive(Clone, Copy, Debug)]
pub struct AnchoredPoint {
    pub world: Vector3<f64>,
    pub d_anchor_pos: Matrix3<f64>,
    pub d_anchor_att: Matrix3<f64>,
    pub d_feature: Matrix3<f64>,
}

pub fn anchored_point(f: &InverseDepthFeature, anchor: &CameraPoseClone) -> Result<AnchoredPoint> {
    if f.rho.abs() < DEFAULT_MIN_INVERSE_DEPTH {
        return Err(Error::FeatureAtInfinity { rho: f.rho });
    }
    let r_a = anchor.rotation();
    let m = f.bearing();
    let offset = r_a * m / f.rho;
    let mut d_feature = Matrix3::zeros();
    d_feature.set_column(0, &(r_a.column(0) / f.rho));
    d_feature.set_column(1, &(r_a.column(1) / f.rho));
    d_feature.set_column(2, &(-offset / f.rho));
    Ok(AnchoredPoint {
        world: anchor.p_w_c + offset,
        d_anchor_pos: Matrix3::identity(),
        d_anchor_att: -skew(&offset),
        d_feature,
    })
}

/// A world point expressed in a camera frame, with derivatives.
#[derive(Clone, Copy, Debug)]
pub struct CameraPoint {
    pub p: Vector3<f64>,
    pub d_cam_pos: Matrix3<f64>,
    pub d_cam_att: Matrix3<f64>,
    pub d_world: Matrix3<f64>,
}

pub fn point_in_camera(
    world: &Vector3<f64>,
    p_w_c: &Vector3<f64>,
    r_wc: &Matrix3<f64>,
) -> CameraPoint {
    let rt = r_wc.transpose();
    let rel = world - p_w_c;
    CameraPoint {
        p: rt * rel,
        d_cam_pos: -rt,
        d_cam_att: rt * skew(&rel),
        d_world: rt,
    }
}

/// Cartesian coordinates of an inverse-depth feature in camera `cam`.
pub fn inverse_depth_to_cartesian(
    f: &InverseDepthFeature,
    anchor: &CameraPoseClone,
    cam: &CameraPoseClone,
) -> Result<Vector3<f64>> {
    inverse_depth_to_cartesian_eps(f, anchor, cam, DEFAULT_MIN_INVERSE_DEPTH)
}

pub fn inverse_depth_to_cartesian_eps(
    f: &InverseDepthFeature,
    anchor: &CameraPoseClone,
    cam: &CameraPoseClone,
    min_rho: f64,
) -> Result<Vector3<f64>> {
    if f.rho.abs() < min_rho {
        return Err(Error::FeatureAtInfinity { rho: f.rho });
    }
    let world = anchor.p_w_c + anchor.q_w_c.body_to_world() * f.bearing() / f.rho;
    Ok(cam.q_w_c.world_to_body() * (world - cam.p_w_c))
}

/// What [`FilterState::clone_pose`] did to keep the window bounded.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CloneOutcome {
    /// Stamp of the marginalized clone, if any.
    pub dropped: Option<f64>,
    /// Ids of features moved onto the newest clone before the drop.
    pub reanchored: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterState {
    pub inertial: InertialState,
    pub clones: Vec<CameraPoseClone>,
    pub features: Vec<InverseDepthFeature>,
    pub cov: DMatrix<f64>,
    pub stamp: f64,
}

impl FilterState {
    pub fn new(inertial: InertialState, cov: DMatrix<f64>, stamp: f64) -> Result<Self> {
        if cov.nrows() != IMU_DIM || cov.ncols() != IMU_DIM {
            return Err(Error::DimensionMismatch {
                expected: IMU_DIM,
                got: cov.nrows(),
            });
        }
        Ok(Self {
            inertial,
            clones: Vec::new(),
            features: Vec::new(),
            cov,
            stamp,
        })
    }

    pub fn dim(&self) -> usize {
        IMU_DIM + CLONE_DIM * self.clones.len() + FEATURE_DIM * self.features.len()
    }

    pub fn clone_offset(&self, i: usize) -> usize {
        IMU_DIM + CLONE_DIM * i
    }

    pub fn feature_offset(&self, j: usize) -> usize {
        IMU_DIM + CLONE_DIM * self.clones.len() + FEATURE_DIM * j
    }

    pub fn clone_index_at(&self, stamp: f64) -> Option<usize> {
        self.clones.iter().position(|c| c.stamp == stamp)
    }

    pub fn feature_index(&self, id: u64) -> Option<usize> {
        self.features.iter().position(|f| f.id == id)
    }

    /// World position of feature `j`.
    pub fn feature_world(&self, j: usize) -> Result<AnchoredPoint> {
        let f = &self.features[j];
        let anchor = self
            .clones
            .get(f.anchor_index)
            .ok_or(Error::UnknownClone(f.anchor_index))?;
        anchored_point(f, anchor)
    }

    pub fn is_finite(&self) -> bool {
        self.inertial.is_finite()
            && self.cov.iter().all(|v| v.is_finite())
            && self
                .features
                .iter()
                .all(|f| f.rho.is_finite() && f.alpha.is_finite() && f.beta.is_finite())
            && self
                .clones
                .iter()
                .all(|c| c.q_w_c.is_finite() && c.p_w_c.iter().all(|v| v.is_finite()))
    }

    /// Symmetrizes the covariance and floors its diagonal.
    pub fn condition_covariance(&mut self) {
        symmetrize(&mut self.cov);
        for i in 0..self.cov.nrows() {
            if self.cov[(i, i)] < COVARIANCE_FLOOR {
                self.cov[(i, i)] = COVARIANCE_FLOOR;
            }
        }
    }

    /// Applies an error-state correction to every sub-state.
    pub fn inject(&mut self, dx: &DVector<f64>) -> Result<()> {
        if dx.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: dx.len(),
            });
        }
        self.inertial.inject(&dx.as_slice()[..IMU_DIM]);
        for i in 0..self.clones.len() {
            let o = self.clone_offset(i);
            let c = &mut self.clones[i];
            c.p_w_c += Vector3::new(dx[o], dx[o + 1], dx[o + 2]);
            c.q_w_c = c
                .q_w_c
                .perturbed_world(&Vector3::new(dx[o + 3], dx[o + 4], dx[o + 5]));
        }
        for j in 0..self.features.len() {
            let o = self.feature_offset(j);
            let f = &mut self.features[j];
            f.alpha += dx[o];
            f.beta += dx[o + 1];
            f.rho += dx[o + 2];
        }
        Ok(())
    }

    /// Appends a camera clone for the current IMU pose and, if the window
    /// then exceeds `max_clones`, marginalizes one clone.
    ///
    /// The clone dropped is the oldest one that anchors no feature. When every
    /// clone is an anchor, features anchored on the oldest clone are moved to
    /// the newest one and the oldest clone is dropped.
    pub fn clone_pose(
        &mut self,
        stamp: f64,
        extrinsics: &CameraExtrinsics,
        max_clones: usize,
    ) -> Result<CloneOutcome> {
        if let Some(last) = self.clones.last() {
            if stamp <= last.stamp {
                return Err(Error::NonMonotonicStamp {
                    stamp,
                    previous: last.stamp,
                });
            }
        }
        let r_wi = self.inertial.rotation();
        let lever = r_wi * extrinsics.p_i_c;
        let (p_w_c, r_wc) = extrinsics.camera_pose(&self.inertial);
        let clone = CameraPoseClone {
            p_w_c,
            q_w_c: Quaternion::from_body_to_world(&r_wc),
            stamp,
        };

        // d clone / d inertial error
        let n = self.dim();
        let mut jac = DMatrix::zeros(CLONE_DIM, n);
        jac.view_mut((0, POS), (3, 3))
            .copy_from(&Matrix3::identity());
        jac.view_mut((0, ATT), (3, 3)).copy_from(&(-skew(&lever)));
        jac.view_mut((3, ATT), (3, 3))
            .copy_from(&Matrix3::identity());

        let cross = &jac * &self.cov;
        let block = &cross * jac.transpose();
        let at = self.clone_offset(self.clones.len());
        self.cov = insert_block(&self.cov, at, &cross, &block);
        self.clones.push(clone);
        self.condition_covariance();

        let mut outcome = CloneOutcome::default();
        while self.clones.len() > max_clones.max(1) {
            let (idx, reanchored) = self.marginalize_one_clone()?;
            outcome.dropped = Some(idx);
            outcome.reanchored.extend(reanchored);
        }
        Ok(outcome)
    }

    /// Marginalizes clones until at most `max_clones` remain.
    pub fn shrink_window(&mut self, max_clones: usize) -> Result<CloneOutcome> {
        let mut outcome = CloneOutcome::default();
        while self.clones.len() > max_clones.max(1) {
            let (stamp, reanchored) = self.marginalize_one_clone()?;
            outcome.dropped = Some(stamp);
            outcome.reanchored.extend(reanchored);
        }
        Ok(outcome)
    }

    /// Index of the clone the marginalization policy would drop, and whether
    /// re-anchoring is needed first.
    pub fn clone_to_marginalize(&self) -> Option<(usize, bool)> {
        if self.clones.is_empty() {
            return None;
        }
        let newest = self.clones.len() - 1;
        let is_anchor = |i: usize| self.features.iter().any(|f| f.anchor_index == i);
        match (0..newest).find(|&i| !is_anchor(i)) {
            Some(i) => Some((i, false)),
            None if newest == 0 => None,
            None => Some((0, true)),
        }
    }

    fn marginalize_one_clone(&mut self) -> Result<(f64, Vec<u64>)> {
        let (idx, reanchor) = self
            .clone_to_marginalize()
            .ok_or_else(|| Error::Invalid("cannot marginalize the only clone".into()))?;
        let mut moved = Vec::new();
        if reanchor {
            let newest = self.clones.len() - 1;
            for j in 0..self.features.len() {
                if self.features[j].anchor_index == idx {
                    self.reanchor_feature(j, newest)?;
                    moved.push(self.features[j].id);
                }
            }
        }
        let stamp = self.clones[idx].stamp;
        self.remove_clone(idx);
        Ok((stamp, moved))
    }

    fn remove_clone(&mut self, idx: usize) {
        let at = self.clone_offset(idx);
        self.cov = remove_block(&self.cov, at, CLONE_DIM);
        self.clones.remove(idx);
        for f in &mut self.features {
            debug_assert_ne!(f.anchor_index, idx);
            if f.anchor_index > idx {
                f.anchor_index -= 1;
            }
        }
    }

    /// Re-expresses feature `j` relative to clone `new_anchor`, transforming
    /// the covariance with the exact Jacobian of the re-parametrization.
    pub fn reanchor_feature(&mut self, j: usize, new_anchor: usize) -> Result<()> {
        let old_anchor = self.features[j].anchor_index;
        if old_anchor == new_anchor {
            return Ok(());
        }
        if new_anchor >= self.clones.len() {
            return Err(Error::UnknownClone(new_anchor));
        }
        let ap = self.feature_world(j)?;
        let cam = &self.clones[new_anchor];
        let cp = point_in_camera(&ap.world, &cam.p_w_c, &cam.rotation());
        let (x, y, z) = (cp.p.x, cp.p.y, cp.p.z);
        if z.abs() < 1e-9 {
            return Err(Error::BehindCamera { depth: z });
        }
        let dg = Matrix3::new(
            1.0 / z,
            0.0,
            -x / (z * z),
            0.0,
            1.0 / z,
            -y / (z * z),
            0.0,
            0.0,
            -1.0 / (z * z),
        );
        let n = self.dim();
        let mut jac = DMatrix::zeros(FEATURE_DIM, n);
        let old_off = self.clone_offset(old_anchor);
        let new_off = self.clone_offset(new_anchor);
        let f_off = self.feature_offset(j);
        let d_world = dg * cp.d_world;
        add_block(&mut jac, 0, old_off, &(d_world * ap.d_anchor_pos));
        add_block(&mut jac, 0, old_off + 3, &(d_world * ap.d_anchor_att));
        add_block(&mut jac, 0, new_off, &(dg * cp.d_cam_pos));
        add_block(&mut jac, 0, new_off + 3, &(dg * cp.d_cam_att));
        add_block(&mut jac, 0, f_off, &(d_world * ap.d_feature));

        let rows = &jac * &self.cov;
        let block = &rows * jac.transpose();
        self.cov
            .view_mut((f_off, 0), (FEATURE_DIM, n))
            .copy_from(&rows);
        self.cov
            .view_mut((0, f_off), (n, FEATURE_DIM))
            .copy_from(&rows.transpose());
        self.cov
            .view_mut((f_off, f_off), (FEATURE_DIM, FEATURE_DIM))
            .copy_from(&block);

        let f = &mut self.features[j];
        f.alpha = x / z;
        f.beta = y / z;
        f.rho = 1.0 / z;
        f.anchor_index = new_anchor;
        self.condition_covariance();
        Ok(())
    }

    /// Appends a feature with the given cross-covariance (`3 x dim`) and
    /// marginal covariance (`3 x 3`).
    pub fn add_feature(
        &mut self,
        feature: InverseDepthFeature,
        cross: &DMatrix<f64>,
        block: &DMatrix<f64>,
    ) -> Result<()> {
        if feature.anchor_index >= self.clones.len() {
            return Err(Error::UnknownClone(feature.anchor_index));
        }
        if cross.nrows() != FEATURE_DIM || cross.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: cross.ncols(),
            });
        }
        let at = self.dim();
        self.cov = insert_block(&self.cov, at, cross, block);
        self.features.push(feature);
        self.condition_covariance();
        Ok(())
    }

    pub fn remove_feature(&mut self, j: usize) {
        let at = self.feature_offset(j);
        self.cov = remove_block(&self.cov, at, FEATURE_DIM);
        self.features.remove(j);
    }

    /// Largest relative asymmetry `|P - P^T| / |P|` (max norm).
    pub fn covariance_asymmetry(&self) -> f64 {
        let scale = self.cov.amax().max(f64::MIN_POSITIVE);
        (&self.cov - self.cov.transpose()).amax() / scale
    }
}

/// Accumulates `block` into `m` at `(r, c)`.
pub fn add_block(m: &mut DMatrix<f64>, r: usize, c: usize, block: &Matrix3<f64>) {
    let mut v = m.view_mut((r, c), (3, 3));
    v += block;
}

/// Inserts `k` new rows/columns at index `at`.
pub fn insert_block(
    cov: &DMatrix<f64>,
    at: usize,
    cross: &DMatrix<f64>,
    block: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = cov.nrows();
    let k = block.nrows();
    let mut out = DMatrix::zeros(n + k, n + k);
    let tail = n - at;
    out.view_mut((0, 0), (at, at))
        .copy_from(&cov.view((0, 0), (at, at)));
    out.view_mut((0, at + k), (at, tail))
        .copy_from(&cov.view((0, at), (at, tail)));
    out.view_mut((at + k, 0), (tail, at))
        .copy_from(&cov.view((at, 0), (tail, at)));
    out.view_mut((at + k, at + k), (tail, tail))
        .copy_from(&cov.view((at, at), (tail, tail)));
    out.view_mut((at, 0), (k, at))
        .copy_from(&cross.view((0, 0), (k, at)));
    out.view_mut((at, at + k), (k, tail))
        .copy_from(&cross.view((0, at), (k, tail)));
    out.view_mut((0, at), (at, k))
        .copy_from(&cross.view((0, 0), (k, at)).transpose());
    out.view_mut((at + k, at), (tail, k))
        .copy_from(&cross.view((0, at), (k, tail)).transpose());
    out.view_mut((at, at), (k, k)).copy_from(block);
    out
}

/// Removes `k` rows/columns starting at `at`.
pub fn remove_block(cov: &DMatrix<f64>, at: usize, k: usize) -> DMatrix<f64> {
    cov.clone().remove_rows(at, k).remove_columns(at, k)
}
