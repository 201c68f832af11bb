//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Scenario files live in `configs/` at
//! the workspace root.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvio_core::facet::predicates::{incircle_exact, orient2d, orient2d_exact, sign};
use rvio_core::facet::{delaunay, range_row, triangle_min_angle, LrfExtrinsics};
use rvio_core::observability::{scale_residuals, AnalysisTrajectory};
use rvio_core::state::{
    CameraExtrinsics, FilterState, InertialState, InverseDepthFeature, IMU_DIM,
};
use rvio_core::visual::{msckf_jacobians, slam_measurement};
use rvio_core::Quaternion;
use rvio_harness::report::run_observability;
use rvio_harness::sweep::{spike_trials, sweep};
use rvio_harness::{run_scenario, ScenarioConfig};
use rvio_sim::rig::RangeSpike;

type Check = Result<(bool, String), String>;

fn config(name: &str) -> Result<ScenarioConfig, String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    ScenarioConfig::load(&path).map_err(|e| format!("{}: {e}", path.display()))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn seeds() -> Vec<u64> {
    (0..10).collect()
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_vec(rng: &mut ChaCha8Rng, half: f64) -> Vector3<f64> {
    Vector3::new(
        uniform(rng, -half, half),
        uniform(rng, -half, half),
        uniform(rng, -half, half),
    )
}

/// Three points on a random plane, roughly 120 degrees apart around `center`.
fn triangle_around(rng: &mut ChaCha8Rng, center: &Vector3<f64>) -> [Vector3<f64>; 3] {
    let tilt = uniform(rng, 0.0, 0.45);
    let az = uniform(rng, -PI, PI);
    let n = Vector3::new(tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos());
    let e1 = n.cross(&Vector3::x()).normalize();
    let e2 = n.cross(&e1);
    let phase = uniform(rng, -PI, PI);
    [0.0, 1.0, 2.0].map(|k| {
        let ang = phase + k * 2.0 * PI / 3.0 + uniform(rng, -0.3, 0.3);
        let r = uniform(rng, 1.5, 4.0);
        center + r * (ang.cos() * e1 + ang.sin() * e2)
    })
}

// 1. Range rows make the scale direction observable on a straight traverse.
fn criterion_1() -> Check {
    let out = run_observability(&config("observability_cv.json")?).map_err(err)?;
    let residual = |r: &rvio_harness::report::StackReport| {
        r.nullspace
            .direction("scale")
            .map(|d| d.residual)
            .ok_or("no scale direction".to_string())
    };
    let (rv, v) = (residual(&out.range_vio)?, residual(&out.vio)?);
    Ok((
        rv > 1e-3 && v < 1e-6,
        format!(
            "{} features; range-VIO residual {rv:.3e} (> 1e-3), VIO residual {v:.3e} (< 1e-6)",
            out.features.len()
        ),
    ))
}

// 2. Range row times the scale direction against its closed form.
fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cam = CameraExtrinsics::nadir();
    let lrf = LrfExtrinsics::default();
    let g = Vector3::new(0.0, 0.0, -9.81);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x0 = InertialState {
            p_w_i: Vector3::new(
                uniform(&mut rng, -5.0, 5.0),
                uniform(&mut rng, -5.0, 5.0),
                uniform(&mut rng, 8.0, 15.0),
            ),
            v_w_i: Vector3::new(
                uniform(&mut rng, -3.0, 3.0),
                uniform(&mut rng, -3.0, 3.0),
                uniform(&mut rng, -0.5, 0.5),
            ),
            q_w_i: Quaternion::from_rotation_vector(&Vector3::new(
                uniform(&mut rng, -0.2, 0.2),
                uniform(&mut rng, -0.2, 0.2),
                uniform(&mut rng, -PI, PI),
            )),
            ..Default::default()
        };
        let accel = random_vec(&mut rng, 0.5);
        let (p_c, r_wc) = cam.camera_pose(&x0);
        let u_w = r_wc * lrf.u_r_cam;
        let hit = p_c + u_w * (p_c.z / -u_w.z);
        let features = triangle_around(&mut rng, &hit).to_vec();
        let traj = AnalysisTrajectory::constant_acceleration(x0, accel, 60, 0.004, g, features)
            .map_err(err)?;
        for (_, m, closed) in
            scale_residuals(&traj, &[2, 10, 50], [0, 1, 2], &cam, &lrf).map_err(err)?
        {
            worst = worst.max((m - closed).abs() / closed.abs());
        }
    }
    Ok((
        worst <= 1e-6,
        format!("20 trajectories, k in {{2, 10, 50}}; worst relative gap {worst:.3e} (<= 1e-6)"),
    ))
}

// 3. Hover direction: in the range rows' nullspace while hovering, out of
// the combined nullspace after one meter of translation.
fn criterion_3() -> Check {
    let hover = run_observability(&config("observability_hover.json")?).map_err(err)?;
    let moved = run_observability(&config("observability_translate.json")?).map_err(err)?;
    let row = hover
        .hover_row_residual
        .ok_or("no facet at the hover point")?;
    let combined = moved
        .range_vio
        .nullspace
        .direction("hover")
        .map(|d| d.residual)
        .ok_or("no hover direction after translation")?;
    let n = hover.features.len();
    Ok((
        n == 27 && row < 1e-8 && combined > 1e-3,
        format!("N = {n}; hover max_k |M_k N_h| / |M_k||N_h| = {row:.3e} (< 1e-8); after 1 m combined residual {combined:.3e} (> 1e-3)"),
    ))
}

// 4. Drift over 150 m of urban strip.
fn criterion_4() -> Check {
    let s = sweep(&config("urban_strip.json")?, &seeds()).map_err(err)?;
    Ok((
        s.median_range_vio_max_pct < 1.5 && s.median_ratio >= 3.0,
        format!(
            "median range-VIO max error {:.3}% of {:.0} m (< 1.5%); median VIO/range-VIO ratio {:.2} (>= 3)",
            s.median_range_vio_max_pct, s.rows[0].distance, s.median_ratio
        ),
    ))
}

// 5. Box drop-offs and short tracks.
fn criterion_5() -> Check {
    let s = sweep(&config("indoor_boxes.json")?, &seeds()).map_err(err)?;
    let diverged = s
        .rows
        .iter()
        .filter(|r| r.vio_diverged || r.range_vio_diverged)
        .count();
    let frac = s.median_range_vio_max_error / s.median_vio_max_error;
    Ok((
        frac <= 0.4 && diverged == 0,
        format!(
            "median max error range-VIO {:.3} m vs VIO {:.3} m, fraction {:.3} (<= 0.4); diverged runs {diverged} (0)",
            s.median_range_vio_max_error, s.median_vio_max_error, frac
        ),
    ))
}

// 6. A +7 m range spike is gated and leaves the estimate alone.
fn criterion_6() -> Check {
    let spike = RangeSpike {
        stamp: 20.0,
        magnitude: 7.0,
    };
    let trials = spike_trials(&config("spike.json")?, spike, &seeds()).map_err(err)?;
    let rejected = trials
        .iter()
        .filter(|t| t.status == rvio_core::facet::RangeStatus::Rejected)
        .count();
    let worst = trials.iter().map(|t| t.rms_difference).fold(0.0, f64::max);
    let diverged = trials.iter().any(|t| t.diverged);
    Ok((
        rejected >= 9 && worst < 0.01 && !diverged,
        format!("rejected in {rejected}/10 seeds (>= 9); worst post-spike RMS difference {:.3e} m (< 1e-2)", worst),
    ))
}

/// Random state with four clones and three features forming a facet around
/// the current laser ray.
fn random_filter_state(
    rng: &mut ChaCha8Rng,
) -> Result<(FilterState, CameraExtrinsics, LrfExtrinsics), String> {
    let cam = CameraExtrinsics {
        cam_to_imu: Quaternion::from_rotation_vector(&random_vec(rng, 0.05)).body_to_world()
            * CameraExtrinsics::nadir().cam_to_imu,
        p_i_c: random_vec(rng, 0.1),
    };
    let lrf = LrfExtrinsics {
        u_r_cam: Vector3::new(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1), 1.0).normalize(),
    };
    let inertial = InertialState {
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
    };
    let mut st =
        FilterState::new(inertial, DMatrix::identity(IMU_DIM, IMU_DIM) * 1e-2, 0.0).map_err(err)?;
    for k in 0..4 {
        st.clone_pose(k as f64, &cam, 10).map_err(err)?;
        st.inertial.p_w_i += random_vec(rng, 1.0);
        st.inertial.q_w_i = st.inertial.q_w_i.perturbed_world(&random_vec(rng, 0.05));
    }
    let (p_c, r_wc) = cam.camera_pose(&st.inertial);
    let u_w = r_wc * lrf.u_r_cam;
    let hit = p_c + u_w * uniform(rng, 5.0, 20.0);
    for (j, p) in triangle_around(rng, &hit).iter().enumerate() {
        let anchor = rng.random_range(0..st.clones.len());
        let a = &st.clones[anchor];
        let pc = a.q_w_c.world_to_body() * (p - a.p_w_c);
        if pc.z < 0.5 {
            return Err("facet vertex behind its anchor".into());
        }
        let f = InverseDepthFeature {
            id: 100 - j as u64 * 7,
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
        .map_err(err)?;
    }
    Ok((st, cam, lrf))
}

/// Central differences of `f` over the error state of `st`, one column per
/// error coordinate.
fn numeric_jacobian(
    st: &FilterState,
    rows: usize,
    f: impl Fn(&FilterState) -> DVector<f64>,
) -> DMatrix<f64> {
    let n = st.dim();
    let eps = 1e-6;
    let mut h = DMatrix::zeros(rows, n);
    for k in 0..n {
        let mut dx = DVector::zeros(n);
        dx[k] = eps;
        let mut sp = st.clone();
        sp.inject(&dx).expect("dimension");
        let mut sm = st.clone();
        sm.inject(&(-dx)).expect("dimension");
        h.set_column(k, &((f(&sp) - f(&sm)) / (2.0 * eps)));
    }
    h
}

/// Largest entry gap relative to the largest entry of the analytic matrix.
fn relative_gap(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).amax() / analytic.amax()
}

// 7. Range and visual Jacobians against central differences.
fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_range, mut worst_visual): (f64, f64) = (0.0, 0.0);
    let (mut n_range, mut n_visual) = (0, 0);
    while n_range < 100 {
        let Ok((st, cam, lrf)) = random_filter_state(&mut rng) else {
            continue;
        };
        let facet = [0, 1, 2];
        let (_, h) = range_row(&st, facet, &cam, &lrf, 1e-9).map_err(err)?;
        let num = numeric_jacobian(&st, 1, |s| {
            DVector::from_element(
                1,
                range_row(s, facet, &cam, &lrf, 1e-9)
                    .expect("range row")
                    .0
                    .range(),
            )
        });
        worst_range = worst_range.max(relative_gap(&h, &num));
        n_range += 1;
    }
    while n_visual < 100 {
        let Ok((st, _, _)) = random_filter_state(&mut rng) else {
            continue;
        };
        let j = rng.random_range(0..st.features.len());
        let i = rng.random_range(0..st.clones.len());
        if slam_measurement(&st, j, i).is_err() {
            continue;
        }
        let (_, h) = slam_measurement(&st, j, i).map_err(err)?;
        let num = numeric_jacobian(&st, 2, |s| {
            let uv = slam_measurement(s, j, i).expect("in front").0;
            DVector::from_column_slice(uv.as_slice())
        });
        worst_visual = worst_visual.max(relative_gap(&h, &num));

        // MSCKF rows over clone poses and the world point; the residual is
        // measured minus predicted, so its Jacobian is minus the prediction's.
        let world = st.feature_world(j).map_err(err)?.world;
        let views: Vec<(usize, Vector2<f64>)> = (0..st.clones.len())
            .map(|c| (c, Vector2::zeros()))
            .collect();
        let Ok((_, hx, hf)) = msckf_jacobians(&st, &views, &world) else {
            continue;
        };
        let rows = 2 * views.len();
        let num_x = numeric_jacobian(&st, rows, |s| {
            -msckf_jacobians(s, &views, &world).expect("in front").0
        });
        worst_visual = worst_visual.max(relative_gap(&hx, &num_x));
        let eps = 1e-6;
        let mut num_f = DMatrix::zeros(rows, 3);
        for a in 0..3 {
            let mut d = Vector3::zeros();
            d[a] = eps;
            let rp = msckf_jacobians(&st, &views, &(world + d)).map_err(err)?.0;
            let rm = msckf_jacobians(&st, &views, &(world - d)).map_err(err)?.0;
            num_f.set_column(a, &(-(rp - rm) / (2.0 * eps)));
        }
        worst_visual = worst_visual.max(relative_gap(&hf, &num_f));
        n_visual += 1;
    }
    Ok((
        worst_range <= 1e-5 && worst_visual <= 1e-5,
        format!(
            "{n_range} range, {n_visual} visual configurations; worst relative gap range {worst_range:.3e}, visual {worst_visual:.3e} (<= 1e-5)"
        ),
    ))
}

/// `(a, b, c)` of `t` rotated so that `{a, b}` is the edge `{u, v}`.
fn with_edge(t: &[usize; 3], u: usize, v: usize) -> [usize; 3] {
    (0..3)
        .map(|k| [t[k], t[(k + 1) % 3], t[(k + 2) % 3]])
        .find(|r| (r[0] == u && r[1] == v) || (r[0] == v && r[1] == u))
        .expect("edge of triangle")
}

/// Applies up to `count` random legal edge flips.
fn random_flips(
    tris: &mut [[usize; 3]],
    pts: &[Vector2<f64>],
    rng: &mut ChaCha8Rng,
    count: usize,
) -> usize {
    let mut done = 0;
    for _ in 0..count {
        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (i, t) in tris.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push(i);
            }
        }
        let mut legal: Vec<(usize, usize, [usize; 3], [usize; 3])> = Vec::new();
        let mut keys: Vec<_> = edges.iter().filter(|(_, v)| v.len() == 2).collect();
        keys.sort();
        for (&(u, v), ts) in keys {
            let t1 = with_edge(&tris[ts[0]], u, v);
            let (a, b, c) = (t1[0], t1[1], t1[2]);
            let t2 = with_edge(&tris[ts[1]], u, v);
            let d = t2[2];
            let n1 = [a, d, c];
            let n2 = [d, b, c];
            let ccw = |t: &[usize; 3]| orient2d(&pts[t[0]], &pts[t[1]], &pts[t[2]]) > 0.0;
            if ccw(&n1) && ccw(&n2) {
                legal.push((ts[0], ts[1], n1, n2));
            }
        }
        if legal.is_empty() {
            break;
        }
        let (i1, i2, n1, n2) = legal[rng.random_range(0..legal.len())];
        tris[i1] = n1;
        tris[i2] = n2;
        done += 1;
    }
    done
}

fn global_min_angle(tris: &[[usize; 3]], pts: &[Vector2<f64>]) -> f64 {
    tris.iter()
        .map(|t| triangle_min_angle(&pts[t[0]], &pts[t[1]], &pts[t[2]]))
        .fold(f64::INFINITY, f64::min)
}

// 8. Delaunay: empty circumcircles and the max-min angle property.
fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut violations, mut angle_failures, mut flipped, mut degenerate) = (0, 0, 0, 0);
    for trial in 0..1000 {
        let n = rng.random_range(3..=30);
        let grid = trial % 10 == 0;
        let pts: Vec<Vector2<f64>> = (0..n)
            .map(|_| {
                let (x, y) = (uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0));
                if grid {
                    Vector2::new((x * 3.0).round(), (y * 3.0).round())
                } else {
                    Vector2::new(x, y)
                }
            })
            .collect();
        let tri = match delaunay(&pts) {
            Ok(t) => t,
            Err(_) => {
                // only acceptable when every point lies on one line
                let a = pts[0];
                let b = pts.iter().find(|p| **p != a).copied().unwrap_or(a);
                if pts.iter().any(|p| sign(&orient2d_exact(&a, &b, p)) != 0) {
                    violations += 1;
                }
                degenerate += 1;
                continue;
            }
        };
        for t in &tri.triangles {
            let [a, b, c] = t.map(|i| pts[i]);
            if pts
                .iter()
                .enumerate()
                .any(|(k, d)| !t.contains(&k) && sign(&incircle_exact(&a, &b, &c, d)) > 0)
            {
                violations += 1;
            }
        }
        let dt_angle = tri.global_min_angle();
        for _ in 0..5 {
            let mut alt = tri.triangles.clone();
            let k = rng.random_range(1..=6);
            if random_flips(&mut alt, &pts, &mut rng, k) == 0 {
                continue;
            }
            flipped += 1;
            if global_min_angle(&alt, &pts) > dt_angle + 1e-12 {
                angle_failures += 1;
            }
        }
    }
    Ok((
        violations == 0 && angle_failures == 0,
        format!(
            "1000 sets ({degenerate} collinear); circumcircle violations {violations}; {flipped} flipped alternatives, {angle_failures} with a larger min angle"
        ),
    ))
}

// 9. Noiseless streams keep the filter on the truth.
fn criterion_9() -> Check {
    let cfg = config("zero_noise.json")?;
    let (out, _, _) = run_scenario(&cfg).map_err(err)?;
    let m = &out.metrics;
    let range = out
        .gates
        .iter()
        .filter(|g| g.innovation.is_finite())
        .map(|g| g.innovation.abs())
        .fold(0.0, f64::max);
    let innov = m.max_visual_innovation.max(range);
    let duration = out.estimate.last().map(|e| e.stamp).unwrap_or(0.0);
    Ok((
        out.failure.is_none() && m.visual_rejected == 0 && innov < 1e-7 && m.final_position_error < 1e-4 && duration >= 60.0,
        format!(
            "{duration:.0} s; largest innovation {innov:.3e} (< 1e-7), rejected visual {}; final position error {:.3e} m (< 1e-4)",
            m.visual_rejected, m.final_position_error
        ),
    ))
}

// 10. With excitation VIO is on par with range-VIO.
fn criterion_10() -> Check {
    let s = sweep(&config("excited.json")?, &seeds()).map_err(err)?;
    Ok((
        s.median_ratio <= 2.0,
        format!(
            "median max error VIO {:.3} m, range-VIO {:.3} m; median VIO/range-VIO ratio {:.3} (<= 2)",
            s.median_vio_max_error, s.median_range_vio_max_error, s.median_ratio
        ),
    ))
}

fn main() -> ExitCode {
    #[allow(clippy::type_complexity)]
    let criteria: [(u32, &str, fn() -> Check, Option<f64>); 10] = [
        (
            1,
            "observability, constant velocity",
            criterion_1,
            Some(10.0),
        ),
        (2, "closed-form scale identity", criterion_2, Some(10.0)),
        (3, "hover nullspace", criterion_3, Some(10.0)),
        (4, "drift reduction, urban strip", criterion_4, Some(300.0)),
        (
            5,
            "stress robustness, indoor boxes",
            criterion_5,
            Some(180.0),
        ),
        (6, "outlier gating", criterion_6, None),
        (7, "Jacobian suite", criterion_7, None),
        (8, "Delaunay property suite", criterion_8, None),
        (9, "zero-noise consistency", criterion_9, None),
        (10, "excited-trajectory parity", criterion_10, None),
    ];
    // libtest-style arguments (filters, --nocapture) are accepted and ignored
    let mut failed = 0;
    for (id, name, check, limit) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let in_time = limit.is_none_or(|l| secs < l);
        let (pass, detail) = match result {
            Ok((pass, detail)) => (pass && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let budget = limit
            .map(|l| format!(", limit {l:.0} s"))
            .unwrap_or_default();
        println!(
            "[{}] {id:>2} {name}: {detail} ({secs:.1} s{budget})",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed += 1;
        }
    }
    println!("acceptance: {}/10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
