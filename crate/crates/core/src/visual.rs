//! Pinhole feature measurements: SLAM updates for in-state features, MSCKF
//! updates for out-of-state tracks, and delayed initialization of new SLAM
//! features.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::ekf::{chi2_threshold, ekf_update, innovation_covariance, mahalanobis2};
use crate::error::{Error, Result};
use crate::state::{
    anchored_point, point_in_camera, CameraPoseClone, FilterState, InverseDepthFeature, FEATURE_DIM,
};
use crate::tracks::Track;

/// Smallest depth accepted by [`project`], meters.
pub const MIN_PROJECTION_DEPTH: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementNoise {
    /// Feature noise std on the normalized image plane.
    pub sigma_v: f64,
    /// Range noise std, meters.
    pub sigma_r: f64,
}

impl Default for MeasurementNoise {
    fn default() -> Self {
        Self {
            sigma_v: 1.5e-3,
            sigma_r: 0.025,
        }
    }
}

/// One feature measurement on the normalized image plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureObservation {
    pub track_id: u64,
    /// Frame stamp; identifies the clone the observation belongs to.
    pub stamp: f64,
    pub uv: Vector2<f64>,
}

/// Pinhole projection onto the `z = 1` plane.
pub fn project(p: &Vector3<f64>) -> Result<Vector2<f64>> {
    if p.z <= MIN_PROJECTION_DEPTH {
        return Err(Error::BehindCamera { depth: p.z });
    }
    Ok(Vector2::new(p.x / p.z, p.y / p.z))
}

pub fn projection_jacobian(p: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / p.z;
    Matrix2x3::new(iz, 0.0, -p.x * iz * iz, 0.0, iz, -p.y * iz * iz)
}

fn set_rows(h: &mut DMatrix<f64>, row: usize, col: usize, m: &Matrix2x3<f64>) {
    let mut v = h.view_mut((row, col), (2, 3));
    v += m;
}

/// Predicted measurement of in-state feature `j` from clone `i` with its
/// Jacobian over the full error state.
pub fn slam_measurement(
    state: &FilterState,
    j: usize,
    i: usize,
) -> Result<(Vector2<f64>, DMatrix<f64>)> {
    let f = &state.features[j];
    let anchor = state
        .clones
        .get(f.anchor_index)
        .ok_or(Error::UnknownClone(f.anchor_index))?;
    let cam = state.clones.get(i).ok_or(Error::UnknownClone(i))?;
    let ap = anchored_point(f, anchor)?;
    let cp = point_in_camera(&ap.world, &cam.p_w_c, &cam.rotation());
    let uv = project(&cp.p)?;
    let jp = projection_jacobian(&cp.p);
    let n = state.dim();
    let mut h = DMatrix::zeros(2, n);
    let co = state.clone_offset(i);
    let ao = state.clone_offset(f.anchor_index);
    set_rows(&mut h, 0, co, &(jp * cp.d_cam_pos));
    set_rows(&mut h, 0, co + 3, &(jp * cp.d_cam_att));
    let jw = jp * cp.d_world;
    set_rows(&mut h, 0, ao, &(jw * ap.d_anchor_pos));
    set_rows(&mut h, 0, ao + 3, &(jw * ap.d_anchor_att));
    set_rows(&mut h, 0, state.feature_offset(j), &(jw * ap.d_feature));
    Ok((uv, h))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlamInnovation {
    pub track_id: u64,
    pub innovation: Vector2<f64>,
    pub chi2: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SlamReport {
    pub innovations: Vec<SlamInnovation>,
    pub rows: usize,
    /// Set when the stacked innovation covariance could not be inverted.
    pub fault: bool,
}

/// EKF update with observations of features already in the state. Each
/// feature is gated on its own 2-dof chi-square test before stacking.
pub fn slam_update(
    state: &mut FilterState,
    observations: &[FeatureObservation],
    noise: &MeasurementNoise,
    confidence: f64,
) -> Result<SlamReport> {
    let var = noise.sigma_v * noise.sigma_v;
    let threshold = chi2_threshold(2, confidence);
    let mut report = SlamReport::default();
    let mut hs = Vec::new();
    let mut rs = Vec::new();
    for obs in observations {
        let j = state
            .feature_index(obs.track_id)
            .ok_or_else(|| Error::Invalid(format!("feature {} not in state", obs.track_id)))?;
        let i = state
            .clone_index_at(obs.stamp)
            .ok_or_else(|| Error::Invalid(format!("no clone at stamp {}", obs.stamp)))?;
        let (pred, h) = match slam_measurement(state, j, i) {
            Ok(v) => v,
            Err(Error::BehindCamera { .. }) | Err(Error::FeatureAtInfinity { .. }) => {
                report.innovations.push(SlamInnovation {
                    track_id: obs.track_id,
                    innovation: Vector2::repeat(f64::NAN),
                    chi2: f64::INFINITY,
                    accepted: false,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let r = obs.uv - pred;
        let rv = DVector::from_column_slice(r.as_slice());
        let s = innovation_covariance(&state.cov, &h, var);
        let chi2 = mahalanobis2(&rv, &s).unwrap_or(f64::INFINITY);
        let accepted = chi2 <= threshold;
        report.innovations.push(SlamInnovation {
            track_id: obs.track_id,
            innovation: r,
            chi2,
            accepted,
        });
        if accepted {
            hs.push(h);
            rs.push(r);
        }
    }
    if hs.is_empty() {
        return Ok(report);
    }
    let n = state.dim();
    let mut h = DMatrix::zeros(2 * hs.len(), n);
    let mut r = DVector::zeros(2 * hs.len());
    for (k, (hk, rk)) in hs.iter().zip(&rs).enumerate() {
        h.view_mut((2 * k, 0), (2, n)).copy_from(hk);
        r[2 * k] = rk.x;
        r[2 * k + 1] = rk.y;
    }
    match ekf_update(state, &h, &r, var) {
        Ok(_) => report.rows = h.nrows(),
        Err(Error::SingularInnovation) => report.fault = true,
        Err(e) => return Err(e),
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriangulationConfig {
    /// Smallest ray angle, degrees, between any two views.
    pub min_parallax_deg: f64,
    pub max_iterations: usize,
    /// Largest accepted RMS reprojection error on the normalized plane.
    pub max_rms: f64,
    pub min_depth: f64,
    pub max_depth: f64,
}

impl Default for TriangulationConfig {
    fn default() -> Self {
        Self {
            min_parallax_deg: 0.5,
            max_iterations: 10,
            max_rms: 0.02,
            min_depth: 0.1,
            max_depth: 200.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriangulationFailure {
    InsufficientBaseline,
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangulated {
    pub world: Vector3<f64>,
    /// Inverse-depth parameters relative to the anchor view.
    pub inverse_depth: Vector3<f64>,
    pub rms: f64,
}

/// Largest angle between the world-frame viewing rays of the views.
pub fn parallax(views: &[(CameraPoseClone, Vector2<f64>)]) -> f64 {
    let rays: Vec<Vector3<f64>> = views
        .iter()
        .map(|(c, uv)| (c.rotation() * Vector3::new(uv.x, uv.y, 1.0)).normalize())
        .collect();
    let mut best: f64 = 0.0;
    for a in 0..rays.len() {
        for b in (a + 1)..rays.len() {
            best = best.max(rays[a].dot(&rays[b]).clamp(-1.0, 1.0).acos());
        }
    }
    best
}

/// Least-squares ray intersection.
pub fn linear_triangulation(views: &[(CameraPoseClone, Vector2<f64>)]) -> Option<Vector3<f64>> {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (c, uv) in views {
        let d = (c.rotation() * Vector3::new(uv.x, uv.y, 1.0)).normalize();
        let proj = Matrix3::identity() - d * d.transpose();
        a += proj;
        b += proj * c.p_w_c;
    }
    let svd = a.svd(false, false);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if smin <= 1e-12 * smax.max(1e-300) {
        return None;
    }
    a.lu().solve(&b)
}

/// Triangulates a feature from two or more views: linear initialization,
/// then Gauss-Newton on inverse depth relative to `views[anchor]`.
pub fn triangulate(
    views: &[(CameraPoseClone, Vector2<f64>)],
    anchor: usize,
    cfg: &TriangulationConfig,
) -> std::result::Result<Triangulated, TriangulationFailure> {
    if views.len() < 2 || parallax(views) < cfg.min_parallax_deg.to_radians() {
        return Err(TriangulationFailure::InsufficientBaseline);
    }
    let init = linear_triangulation(views).ok_or(TriangulationFailure::InsufficientBaseline)?;
    let (ac, _) = &views[anchor];
    let ra = ac.rotation();
    let pa = ra.transpose() * (init - ac.p_w_c);
    if pa.z <= cfg.min_depth {
        return Err(TriangulationFailure::Diverged);
    }
    let mut x = Vector3::new(pa.x / pa.z, pa.y / pa.z, 1.0 / pa.z);

    // Residuals use the rho-scaled point C_i (R_a [a b 1] + rho (p_a - p_i)),
    // which projects identically for rho > 0.
    let eval = |x: &Vector3<f64>| -> Option<(DVector<f64>, DMatrix<f64>)> {
        let m = views.len();
        let mut r = DVector::zeros(2 * m);
        let mut j = DMatrix::zeros(2 * m, 3);
        for (k, (c, uv)) in views.iter().enumerate() {
            let ct = c.rotation().transpose();
            let dp = ac.p_w_c - c.p_w_c;
            let h = ct * (ra * Vector3::new(x.x, x.y, 1.0) + x.z * dp);
            if h.z <= 1e-9 {
                return None;
            }
            let pred = Vector2::new(h.x / h.z, h.y / h.z);
            let res = uv - pred;
            r[2 * k] = res.x;
            r[2 * k + 1] = res.y;
            let jp = projection_jacobian(&h);
            let mut dh = Matrix3::zeros();
            dh.set_column(0, &(ct * ra.column(0)));
            dh.set_column(1, &(ct * ra.column(1)));
            dh.set_column(2, &(ct * dp));
            j.view_mut((2 * k, 0), (2, 3)).copy_from(&(jp * dh));
        }
        Some((r, j))
    };

    let mut lambda = 1e-6;
    let (mut r, mut jac) = eval(&x).ok_or(TriangulationFailure::Diverged)?;
    let mut cost = r.norm_squared();
    for _ in 0..cfg.max_iterations {
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut damped = jtj.clone();
        for d in 0..3 {
            damped[(d, d)] *= 1.0 + lambda;
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&jtr),
            None => return Err(TriangulationFailure::Diverged),
        };
        let cand = x + Vector3::new(step[0], step[1], step[2]);
        match eval(&cand) {
            Some((rc, jc)) if rc.norm_squared() <= cost => {
                x = cand;
                r = rc;
                jac = jc;
                cost = r.norm_squared();
                lambda *= 0.1;
                if step.norm() < 1e-12 * (1.0 + x.norm()) {
                    break;
                }
            }
            _ => {
                lambda *= 10.0;
                if lambda > 1e6 {
                    break;
                }
            }
        }
    }
    let rho = x.z;
    if !rho.is_finite() || rho <= 1.0 / cfg.max_depth {
        return Err(TriangulationFailure::Diverged);
    }
    let world = ac.p_w_c + ra * Vector3::new(x.x, x.y, 1.0) / rho;
    for (c, _) in views {
        let z = (c.rotation().transpose() * (world - c.p_w_c)).z;
        if z < cfg.min_depth {
            return Err(TriangulationFailure::Diverged);
        }
    }
    let rms = (cost / (views.len() as f64)).sqrt();
    if rms > cfg.max_rms {
        return Err(TriangulationFailure::Diverged);
    }
    Ok(Triangulated {
        world,
        inverse_depth: x,
        rms,
    })
}

/// Residuals and Jacobians of a track against a world point: `(r, H_x, H_f)`
/// with `H_f` over the world point.
pub fn msckf_jacobians(
    state: &FilterState,
    views: &[(usize, Vector2<f64>)],
    world: &Vector3<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = state.dim();
    let m = views.len();
    let mut r = DVector::zeros(2 * m);
    let mut hx = DMatrix::zeros(2 * m, n);
    let mut hf = DMatrix::zeros(2 * m, 3);
    for (k, (i, uv)) in views.iter().enumerate() {
        let cam = state.clones.get(*i).ok_or(Error::UnknownClone(*i))?;
        let cp = point_in_camera(world, &cam.p_w_c, &cam.rotation());
        let pred = project(&cp.p)?;
        let jp = projection_jacobian(&cp.p);
        let res = uv - pred;
        r[2 * k] = res.x;
        r[2 * k + 1] = res.y;
        let co = state.clone_offset(*i);
        set_rows(&mut hx, 2 * k, co, &(jp * cp.d_cam_pos));
        set_rows(&mut hx, 2 * k, co + 3, &(jp * cp.d_cam_att));
        hf.view_mut((2 * k, 0), (2, 3))
            .copy_from(&(jp * cp.d_world));
    }
    Ok((r, hx, hf))
}

/// Projects `(r, H_x)` onto the left nullspace of `H_f` and returns the
/// projected pair. Also returns the leading `(R1, Q1^T H_x, Q1^T r)` blocks,
/// used by delayed initialization.
pub struct NullspaceSplit {
    pub r_null: DVector<f64>,
    pub h_null: DMatrix<f64>,
    pub r_feat: DVector<f64>,
    pub h_feat: DMatrix<f64>,
    pub r1: DMatrix<f64>,
}

pub fn nullspace_split(r: &DVector<f64>, hx: &DMatrix<f64>, hf: &DMatrix<f64>) -> NullspaceSplit {
    let k = hf.ncols();
    let rows = hf.nrows();
    let qr = hf.clone().qr();
    let mut qt_hx = hx.clone();
    qr.q_tr_mul(&mut qt_hx);
    let mut qt_r = DMatrix::from_column_slice(rows, 1, r.as_slice());
    qr.q_tr_mul(&mut qt_r);
    let r1 = qr.r();
    NullspaceSplit {
        r_null: DVector::from_iterator(rows - k, qt_r.view((k, 0), (rows - k, 1)).iter().copied()),
        h_null: qt_hx.rows(k, rows - k).clone_owned(),
        r_feat: DVector::from_iterator(k, qt_r.view((0, 0), (k, 1)).iter().copied()),
        h_feat: qt_hx.rows(0, k).clone_owned(),
        r1,
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MsckfReport {
    pub used: Vec<u64>,
    pub skipped_baseline: Vec<u64>,
    pub diverged: Vec<u64>,
    pub gated: Vec<u64>,
    pub rows: usize,
    /// Largest absolute raw reprojection residual among used tracks.
    pub max_residual: f64,
    pub fault: bool,
}

fn live_views(state: &FilterState, track: &Track) -> Vec<(usize, Vector2<f64>)> {
    track
        .observations
        .iter()
        .filter_map(|o| state.clone_index_at(o.stamp).map(|i| (i, o.uv)))
        .collect()
}

/// MSCKF update: each track is triangulated, its residual is projected onto
/// the left nullspace of the feature Jacobian, gated, and all surviving
/// tracks are applied in one stacked update.
pub fn msckf_update(
    state: &mut FilterState,
    tracks: &[&Track],
    noise: &MeasurementNoise,
    tri: &TriangulationConfig,
    confidence: f64,
) -> Result<MsckfReport> {
    let var = noise.sigma_v * noise.sigma_v;
    let mut report = MsckfReport::default();
    let mut blocks: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
    for track in tracks {
        let views = live_views(state, track);
        if views.len() < 2 {
            report.skipped_baseline.push(track.track_id);
            continue;
        }
        let poses: Vec<(CameraPoseClone, Vector2<f64>)> = views
            .iter()
            .map(|(i, uv)| (state.clones[*i], *uv))
            .collect();
        let anchor = poses.len() - 1;
        let t = match triangulate(&poses, anchor, tri) {
            Ok(t) => t,
            Err(TriangulationFailure::InsufficientBaseline) => {
                report.skipped_baseline.push(track.track_id);
                continue;
            }
            Err(TriangulationFailure::Diverged) => {
                report.diverged.push(track.track_id);
                continue;
            }
        };
        let (r, hx, hf) = match msckf_jacobians(state, &views, &t.world) {
            Ok(v) => v,
            Err(Error::BehindCamera { .. }) => {
                report.diverged.push(track.track_id);
                continue;
            }
            Err(e) => return Err(e),
        };
        let split = nullspace_split(&r, &hx, &hf);
        if split.r_null.is_empty() {
            report.skipped_baseline.push(track.track_id);
            continue;
        }
        let s = innovation_covariance(&state.cov, &split.h_null, var);
        let chi2 = mahalanobis2(&split.r_null, &s).unwrap_or(f64::INFINITY);
        if chi2 > chi2_threshold(split.r_null.len(), confidence) {
            report.gated.push(track.track_id);
            continue;
        }
        report.max_residual = report.max_residual.max(r.amax());
        report.used.push(track.track_id);
        blocks.push((split.h_null, split.r_null));
    }
    if blocks.is_empty() {
        return Ok(report);
    }
    let n = state.dim();
    let total: usize = blocks.iter().map(|(_, r)| r.len()).sum();
    let mut h = DMatrix::zeros(total, n);
    let mut r = DVector::zeros(total);
    let mut row = 0;
    for (hb, rb) in &blocks {
        h.view_mut((row, 0), (hb.nrows(), n)).copy_from(hb);
        r.rows_mut(row, rb.len()).copy_from(rb);
        row += rb.len();
    }
    // Large stacks are compressed with a QR of H before the update.
    let (h, r) = if total > n {
        let qr = h.clone().qr();
        let mut qt_r = DMatrix::from_column_slice(total, 1, r.as_slice());
        qr.q_tr_mul(&mut qt_r);
        let rr = qr.r();
        (
            rr,
            DVector::from_iterator(n, qt_r.view((0, 0), (n, 1)).iter().copied()),
        )
    } else {
        (h, r)
    };
    match ekf_update(state, &h, &r, var) {
        Ok(_) => report.rows = total,
        Err(Error::SingularInnovation) => report.fault = true,
        Err(e) => return Err(e),
    }
    Ok(report)
}

/// Prior used for SLAM features that cannot be triangulated yet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InverseDepthPrior {
    /// Initial inverse depth, 1/m.
    pub rho: f64,
    /// Inverse-depth standard deviation, 1/m.
    pub sigma_rho: f64,
}

impl Default for InverseDepthPrior {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma_rho: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlamInit {
    /// Triangulated from the track, with the remaining residual applied as
    /// an MSCKF-style update.
    Triangulated,
    /// Semi-infinite depth prior on the newest observation.
    SemiInfinite,
    /// Initialization was refused (gate or numerical failure).
    Rejected,
}

/// Adds `track` as a SLAM feature anchored on the newest clone.
pub fn initialize_slam_feature(
    state: &mut FilterState,
    track: &Track,
    noise: &MeasurementNoise,
    tri: &TriangulationConfig,
    prior: &InverseDepthPrior,
    confidence: f64,
) -> Result<SlamInit> {
    let anchor = state
        .clones
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::Invalid("no clone to anchor on".into()))?;
    let views = live_views(state, track);
    let newest = views
        .iter()
        .find(|(i, _)| *i == anchor)
        .map(|(_, uv)| *uv)
        .ok_or_else(|| {
            Error::Invalid(format!("track {} not seen in newest frame", track.track_id))
        })?;
    let var = noise.sigma_v * noise.sigma_v;

    if views.len() >= 2 {
        let poses: Vec<(CameraPoseClone, Vector2<f64>)> = views
            .iter()
            .map(|(i, uv)| (state.clones[*i], *uv))
            .collect();
        let anchor_view = views
            .iter()
            .position(|(i, _)| *i == anchor)
            .unwrap_or(poses.len() - 1);
        if let Ok(t) = triangulate(&poses, anchor_view, tri) {
            return delayed_initialization(
                state,
                track.track_id,
                &views,
                anchor,
                &t,
                var,
                confidence,
            );
        }
    }

    let feature = InverseDepthFeature {
        id: track.track_id,
        alpha: newest.x,
        beta: newest.y,
        rho: prior.rho,
        anchor_index: anchor,
    };
    let cross = DMatrix::zeros(FEATURE_DIM, state.dim());
    let block = DMatrix::from_diagonal(&DVector::from_vec(vec![
        var,
        var,
        prior.sigma_rho * prior.sigma_rho,
    ]));
    state.add_feature(feature, &cross, &block)?;
    Ok(SlamInit::SemiInfinite)
}

fn delayed_initialization(
    state: &mut FilterState,
    id: u64,
    views: &[(usize, Vector2<f64>)],
    anchor: usize,
    t: &Triangulated,
    var: f64,
    confidence: f64,
) -> Result<SlamInit> {
    let f = InverseDepthFeature {
        id,
        alpha: t.inverse_depth.x,
        beta: t.inverse_depth.y,
        rho: t.inverse_depth.z,
        anchor_index: anchor,
    };
    let ap = anchored_point(&f, &state.clones[anchor])?;
    let n = state.dim();
    let m = views.len();
    let mut r = DVector::zeros(2 * m);
    let mut hx = DMatrix::zeros(2 * m, n);
    let mut hf = DMatrix::zeros(2 * m, 3);
    let ao = state.clone_offset(anchor);
    for (k, (i, uv)) in views.iter().enumerate() {
        let cam = &state.clones[*i];
        let cp = point_in_camera(&ap.world, &cam.p_w_c, &cam.rotation());
        let pred = match project(&cp.p) {
            Ok(p) => p,
            Err(_) => return Ok(SlamInit::Rejected),
        };
        let jp = projection_jacobian(&cp.p);
        let res = uv - pred;
        r[2 * k] = res.x;
        r[2 * k + 1] = res.y;
        let co = state.clone_offset(*i);
        set_rows(&mut hx, 2 * k, co, &(jp * cp.d_cam_pos));
        set_rows(&mut hx, 2 * k, co + 3, &(jp * cp.d_cam_att));
        let jw = jp * cp.d_world;
        set_rows(&mut hx, 2 * k, ao, &(jw * ap.d_anchor_pos));
        set_rows(&mut hx, 2 * k, ao + 3, &(jw * ap.d_anchor_att));
        hf.view_mut((2 * k, 0), (2, 3))
            .copy_from(&(jw * ap.d_feature));
    }
    let split = nullspace_split(&r, &hx, &hf);
    let r1_inv = match split.r1.clone().try_inverse() {
        Some(inv) => inv,
        None => return Ok(SlamInit::Rejected),
    };
    if !split.r_null.is_empty() {
        let s = innovation_covariance(&state.cov, &split.h_null, var);
        let chi2 = mahalanobis2(&split.r_null, &s).unwrap_or(f64::INFINITY);
        if chi2 > chi2_threshold(split.r_null.len(), confidence) {
            return Ok(SlamInit::Rejected);
        }
    }
    let mut feature = f;
    let df = &r1_inv * &split.r_feat;
    feature.alpha += df[0];
    feature.beta += df[1];
    feature.rho += df[2];
    let hp = &split.h_feat * &state.cov;
    let mut inner = &hp * split.h_feat.transpose();
    for d in 0..3 {
        inner[(d, d)] += var;
    }
    let block = &r1_inv * inner * r1_inv.transpose();
    let cross = -(&r1_inv * hp);
    state.add_feature(feature, &cross, &block)?;
    if !split.r_null.is_empty() {
        let mut h = DMatrix::zeros(split.h_null.nrows(), state.dim());
        h.view_mut((0, 0), (split.h_null.nrows(), n))
            .copy_from(&split.h_null);
        match ekf_update(state, &h, &split.r_null, var) {
            Ok(_) | Err(Error::SingularInnovation) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(SlamInit::Triangulated)
}

/// Measurement Jacobian of a world point seen from a clone, used by tests
/// and the observability lab: `(uv, d uv / d p_c, d uv / d theta_c, d uv / d P)`.
pub fn point_measurement(
    world: &Vector3<f64>,
    p_w_c: &Vector3<f64>,
    r_wc: &Matrix3<f64>,
) -> Result<(Vector2<f64>, Matrix2x3<f64>, Matrix2x3<f64>, Matrix2x3<f64>)> {
    let cp = point_in_camera(world, p_w_c, r_wc);
    let uv = project(&cp.p)?;
    let jp = projection_jacobian(&cp.p);
    Ok((uv, jp * cp.d_cam_pos, jp * cp.d_cam_att, jp * cp.d_world))
}
