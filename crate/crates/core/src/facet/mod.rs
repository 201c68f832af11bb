//! Ranged-facet range measurements.
//!
//! The current SLAM features are projected into the image and triangulated.
//! The triangle containing the image of the laser axis defines a local plane,
//! and the range is the distance along the laser ray to that plane:
//!
//! ```text
//! n = (P1 - P2) x (P3 - P2)     a = (P2 - p_c) . n     b = u . n     h = a / b
//! ```
//!
//! with `p_c` the camera centre, `u` the world-frame unit laser axis and
//! `P2` the facet vertex with the smallest feature id.

pub mod delaunay;
pub mod predicates;

use nalgebra::{DMatrix, Matrix3, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::ekf::ekf_update;
use crate::error::{Error, Result};
use crate::math::skew;
use crate::state::{CameraExtrinsics, FilterState, ATT, POS};
use crate::visual::project;

pub use delaunay::{delaunay, triangle_min_angle, Triangulation};

/// Smallest accepted `|u . n|`, in the squared-meter units of `n`.
pub const DEFAULT_GRAZING_EPS: f64 = 1e-6;
/// Smallest accepted image-space angle of a facet, degrees.
pub const DEFAULT_MIN_FACET_ANGLE_DEG: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeSample {
    pub range_m: f64,
    pub stamp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrfExtrinsics {
    /// Unit laser axis in the camera frame.
    pub u_r_cam: Vector3<f64>,
}

impl Default for LrfExtrinsics {
    fn default() -> Self {
        Self {
            u_r_cam: Vector3::new(0.0, 0.0, 1.0),
        }
    }
}

impl LrfExtrinsics {
    pub fn validate(&self) -> Result<()> {
        if (self.u_r_cam.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid("laser axis must be a unit vector".into()));
        }
        if self.u_r_cam.z <= 0.0 {
            return Err(Error::Invalid(
                "laser axis must point in front of the camera".into(),
            ));
        }
        Ok(())
    }

    /// Image of the laser axis on the normalized plane.
    pub fn image_point(&self) -> Vector2<f64> {
        Vector2::new(
            self.u_r_cam.x / self.u_r_cam.z,
            self.u_r_cam.y / self.u_r_cam.z,
        )
    }
}

/// Plane geometry of a facet seen along a laser ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Facet {
    /// `[F1, F2, F3]`; `F2` has the smallest id.
    pub feature_ids: [u64; 3],
    pub points: [Vector3<f64>; 3],
    pub n_w: Vector3<f64>,
    pub a: f64,
    pub b: f64,
}

impl Facet {
    /// Orders the vertices so that `F2` has the smallest id and evaluates the
    /// ray geometry.
    pub fn new(
        ids: [u64; 3],
        points: [Vector3<f64>; 3],
        p_c: &Vector3<f64>,
        u_w: &Vector3<f64>,
    ) -> Self {
        let mut order = [0usize, 1, 2];
        order.sort_by_key(|&k| ids[k]);
        // F2 = smallest, F1 = middle, F3 = largest
        let idx = [order[1], order[0], order[2]];
        let feature_ids = idx.map(|k| ids[k]);
        let points = idx.map(|k| points[k]);
        let n_w = facet_normal(&points);
        Self {
            feature_ids,
            points,
            n_w,
            a: (points[1] - p_c).dot(&n_w),
            b: u_w.dot(&n_w),
        }
    }

    pub fn range(&self) -> f64 {
        self.a / self.b
    }
}

/// `(P1 - P2) x (P3 - P2)`.
pub fn facet_normal(p: &[Vector3<f64>; 3]) -> Vector3<f64> {
    (p[0] - p[1]).cross(&(p[2] - p[1]))
}

/// Range along the ray `p_c + t u_w` to the plane through the three points.
pub fn predict_range(
    p_c: &Vector3<f64>,
    u_w: &Vector3<f64>,
    points: &[Vector3<f64>; 3],
    eps: f64,
) -> Result<f64> {
    let n = facet_normal(points);
    let b = u_w.dot(&n);
    if b.abs() <= eps {
        return Err(Error::DegenerateFacet("laser ray grazes the facet"));
    }
    let h = (points[1] - p_c).dot(&n) / b;
    if h < 0.0 {
        return Err(Error::NegativeRange(h));
    }
    Ok(h)
}

/// Partial derivatives of the predicted range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeGradient {
    pub range: f64,
    pub d_cam_pos: RowVector3<f64>,
    /// Derivative with respect to the world-frame ray direction.
    pub d_ray: RowVector3<f64>,
    /// Derivative with respect to `[P1, P2, P3]`.
    pub d_points: [RowVector3<f64>; 3],
}

pub fn range_gradient(
    p_c: &Vector3<f64>,
    u_w: &Vector3<f64>,
    points: &[Vector3<f64>; 3],
    eps: f64,
) -> Result<RangeGradient> {
    let range = predict_range(p_c, u_w, points, eps)?;
    let n = facet_normal(points);
    let b = u_w.dot(&n);
    let [p1, p2, p3] = points;
    // d h / d n = (P2 - I)^T / b with I the intersection point
    let dn = (p2 - (p_c + range * u_w)).transpose() / b;
    Ok(RangeGradient {
        range,
        d_cam_pos: -n.transpose() / b,
        d_ray: -range * n.transpose() / b,
        d_points: [
            dn * skew(&(p2 - p3)),
            n.transpose() / b + dn * skew(&(p3 - p1)),
            dn * skew(&(p1 - p2)),
        ],
    })
}

/// Camera centre and world laser axis for the current IMU pose.
pub fn laser_ray(
    state: &FilterState,
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
) -> (Vector3<f64>, Vector3<f64>, Matrix3<f64>) {
    let (p_c, r_wc) = cam.camera_pose(&state.inertial);
    (p_c, r_wc * lrf.u_r_cam, r_wc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RangeConfig {
    /// Gate width in standard deviations of the innovation.
    pub gate_sigma: f64,
    pub grazing_eps: f64,
    pub min_facet_angle_deg: f64,
}

impl Default for RangeConfig {
    fn default() -> Self {
        Self {
            gate_sigma: 2.0,
            grazing_eps: DEFAULT_GRAZING_EPS,
            min_facet_angle_deg: DEFAULT_MIN_FACET_ANGLE_DEG,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeStatus {
    Accepted,
    Rejected,
    /// Fewer than three usable SLAM features, or the ray misses the hull.
    NoFacet,
    Degenerate,
    NegativeRange,
    Fault,
    /// Range updates are off (VIO mode).
    Disabled,
}

/// Outcome of one range sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeVerdict {
    pub stamp: f64,
    pub status: RangeStatus,
    pub measured: f64,
    pub predicted: f64,
    pub innovation: f64,
    pub innovation_var: f64,
    pub facet: Option<[u64; 3]>,
}

impl RangeVerdict {
    fn skipped(sample: &RangeSample, status: RangeStatus) -> Self {
        Self {
            stamp: sample.stamp,
            status,
            measured: sample.range_m,
            predicted: f64::NAN,
            innovation: f64::NAN,
            innovation_var: f64::NAN,
            facet: None,
        }
    }
}

/// Triangle, in feature indices, of the image triangulation of the SLAM
/// features that contains the laser axis.
pub fn select_facet(
    state: &FilterState,
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
) -> Result<Option<([usize; 3], f64)>> {
    let (p_c, _, r_wc) = laser_ray(state, cam, lrf);
    let mut uv = Vec::new();
    let mut index = Vec::new();
    for j in 0..state.features.len() {
        let world = match state.feature_world(j) {
            Ok(ap) => ap.world,
            Err(_) => continue,
        };
        if let Ok(p) = project(&(r_wc.transpose() * (world - p_c))) {
            uv.push(p);
            index.push(j);
        }
    }
    let tri = match delaunay(&uv) {
        Ok(t) => t,
        Err(_) => return Ok(None),
    };
    Ok(tri.locate(&lrf.image_point()).map(|t| {
        let ids = tri.triangles[t].map(|k| index[k]);
        (ids, tri.min_angle(t))
    }))
}

/// Predicted range and its Jacobian over the full error state for the
/// facet made of features `facet` (state indices), differentiated at the
/// current IMU pose.
pub fn range_row(
    state: &FilterState,
    facet: [usize; 3],
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
    eps: f64,
) -> Result<(Facet, DMatrix<f64>)> {
    let (p_c, u_w, _) = laser_ray(state, cam, lrf);
    let aps = [
        state.feature_world(facet[0])?,
        state.feature_world(facet[1])?,
        state.feature_world(facet[2])?,
    ];
    let ids = facet.map(|j| state.features[j].id);
    let f = Facet::new(ids, [aps[0].world, aps[1].world, aps[2].world], &p_c, &u_w);
    let ordered: [usize; 3] = f
        .feature_ids
        .map(|id| state.feature_index(id).expect("facet feature"));
    let g = range_gradient(&p_c, &u_w, &f.points, eps)?;

    let n = state.dim();
    let mut h = DMatrix::zeros(1, n);
    let lever = state.inertial.rotation() * cam.p_i_c;
    let mut put = |c: usize, row: RowVector3<f64>| {
        let mut v = h.view_mut((0, c), (1, 3));
        v += row;
    };
    put(POS, g.d_cam_pos);
    put(ATT, -g.d_ray * skew(&u_w) - g.d_cam_pos * skew(&lever));
    for (k, &j) in ordered.iter().enumerate() {
        let ap = state.feature_world(j)?;
        let a = state.clone_offset(state.features[j].anchor_index);
        put(a, g.d_points[k] * ap.d_anchor_pos);
        put(a + 3, g.d_points[k] * ap.d_anchor_att);
        put(state.feature_offset(j), g.d_points[k] * ap.d_feature);
    }
    Ok((f, h))
}

/// Gated scalar EKF update with one range sample. The state is only
/// modified when the verdict is [`RangeStatus::Accepted`].
pub fn range_update(
    state: &mut FilterState,
    sample: &RangeSample,
    cam: &CameraExtrinsics,
    lrf: &LrfExtrinsics,
    sigma_r: f64,
    cfg: &RangeConfig,
) -> Result<RangeVerdict> {
    let (facet, angle) = match select_facet(state, cam, lrf)? {
        Some(v) => v,
        None => return Ok(RangeVerdict::skipped(sample, RangeStatus::NoFacet)),
    };
    if angle < cfg.min_facet_angle_deg.to_radians() {
        return Ok(RangeVerdict::skipped(sample, RangeStatus::Degenerate));
    }
    let (f, h) = match range_row(state, facet, cam, lrf, cfg.grazing_eps) {
        Ok(v) => v,
        Err(Error::DegenerateFacet(_)) | Err(Error::FeatureAtInfinity { .. }) => {
            return Ok(RangeVerdict::skipped(sample, RangeStatus::Degenerate))
        }
        Err(Error::NegativeRange(_)) => {
            return Ok(RangeVerdict::skipped(sample, RangeStatus::NegativeRange))
        }
        Err(e) => return Err(e),
    };
    let predicted = f.range();
    let innovation = sample.range_m - predicted;
    let var = sigma_r * sigma_r;
    let s = (&h * &state.cov * h.transpose())[(0, 0)] + var;
    let mut verdict = RangeVerdict {
        stamp: sample.stamp,
        status: RangeStatus::Accepted,
        measured: sample.range_m,
        predicted,
        innovation,
        innovation_var: s,
        facet: Some(f.feature_ids),
    };
    if !(s > 0.0) || !s.is_finite() {
        verdict.status = RangeStatus::Fault;
        return Ok(verdict);
    }
    if innovation * innovation > cfg.gate_sigma * cfg.gate_sigma * s {
        verdict.status = RangeStatus::Rejected;
        return Ok(verdict);
    }
    let r = nalgebra::DVector::from_element(1, innovation);
    match ekf_update(state, &h, &r, var) {
        Ok(_) => {}
        Err(Error::SingularInnovation) => verdict.status = RangeStatus::Fault,
        Err(e) => return Err(e),
    }
    Ok(verdict)
}
