//! Observability reports over a configured trajectory and scene.
//!
//! The analysed state holds the inertial error state and the Cartesian
//! positions of a feature subset picked along the run (see
//! [`ObservabilityConfig`](crate::config::ObservabilityConfig)).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DVector, Vector2, Vector3};
use rvio_core::facet::delaunay::delaunay;
use rvio_core::imu::NoiseModel;
use rvio_core::observability::{
    build_stack, hover_direction, hover_residual, nullspace_report, scale_direction,
    translation_direction, yaw_direction, AnalysisTrajectory, NullspaceReport, StackOptions,
};
use rvio_sim::synth::{camera_pose, stamps, synth_imu, visible};
use rvio_sim::Scene;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Observable,
    Unobservable,
    Indeterminate,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Observable => "observable",
            Verdict::Unobservable => "unobservable",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Clone, Debug)]
pub struct StackReport {
    /// `vio` or `range_vio`.
    pub name: &'static str,
    pub visual_rows: usize,
    pub range_rows: usize,
    pub nullspace: NullspaceReport,
    pub verdicts: Vec<(String, Verdict)>,
}

impl StackReport {
    pub fn verdict(&self, direction: &str) -> Option<Verdict> {
        self.verdicts
            .iter()
            .find(|(n, _)| n == direction)
            .map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug)]
pub struct ObservabilityOutput {
    pub features: Vec<Vector3<f64>>,
    /// Facet around the laser axis at the first step, if any.
    pub first_facet: Option<[usize; 3]>,
    /// Largest per-row hover residual over the steps whose facet equals the
    /// first facet, when the first facet exists.
    pub hover_row_residual: Option<f64>,
    pub vio: StackReport,
    pub range_vio: StackReport,
}

/// Picks analysis features along the run.
pub fn pick_features(cfg: &ScenarioConfig, scene: &Scene) -> Vec<Vector3<f64>> {
    let o = &cfg.observability;
    let axis = cfg.rig.lrf.image_point();
    let mut chosen: Vec<usize> = Vec::new();
    for t in stamps(1.0 / o.facet_spacing, cfg.trajectory.duration) {
        if chosen.len() >= o.max_features {
            break;
        }
        let (p_c, r_wc) = camera_pose(&cfg.trajectory, &cfg.rig, t);
        let mut vis: Vec<(usize, Vector2<f64>)> = (0..scene.landmarks.len())
            .filter(|&i| visible(scene, &cfg.rig, i, &p_c, &r_wc))
            .map(|i| {
                let p = r_wc.transpose() * (scene.landmarks[i].position - p_c);
                (i, Vector2::new(p.x / p.z, p.y / p.z))
            })
            .collect();
        vis.sort_by(|a, b| {
            (a.1 - axis)
                .norm()
                .total_cmp(&(b.1 - axis).norm())
                .then(a.0.cmp(&b.0))
        });
        let mut take: Vec<usize> = Vec::new();
        let pts: Vec<Vector2<f64>> = vis.iter().map(|v| v.1).collect();
        if let Ok(tri) = delaunay(&pts) {
            if let Some(t) = tri.locate(&axis) {
                take.extend(tri.triangles[t].iter().map(|&k| vis[k].0));
            }
        }
        take.extend(vis.iter().map(|v| v.0));
        let mut added = 0;
        for i in take {
            if added >= o.features_per_stamp || chosen.len() >= o.max_features {
                break;
            }
            if !chosen.contains(&i) {
                chosen.push(i);
                added += 1;
            }
        }
    }
    chosen
        .into_iter()
        .map(|i| scene.landmarks[i].position)
        .collect()
}

/// Noise-free analysis trajectory of the configured profile, in a world
/// frame translated so the IMU starts at the origin. Feature depth
/// directions about the origin are then depth directions of the first
/// camera.
pub fn analysis_trajectory(
    cfg: &ScenarioConfig,
    features: &[Vector3<f64>],
) -> Result<AnalysisTrajectory> {
    let mut rig = cfg.rig.clone();
    rig.imu_noise = NoiseModel::zero();
    let imu = synth_imu(&cfg.trajectory, &rig, cfg.seed)?;
    let mut x0 = imu.truth[0].state;
    let origin = x0.p_w_i;
    x0.p_w_i = Vector3::zeros();
    let local = features.iter().map(|p| p - origin).collect();
    Ok(AnalysisTrajectory::from_samples(
        x0,
        imu.samples,
        rig.gravity(),
        local,
    )?)
}

fn verdict(residual: f64, cfg: &ScenarioConfig) -> Verdict {
    let o = &cfg.observability;
    if residual < o.membership {
        Verdict::Unobservable
    } else if residual > o.observable_above {
        Verdict::Observable
    } else {
        Verdict::Indeterminate
    }
}

pub fn run_observability(cfg: &ScenarioConfig) -> Result<ObservabilityOutput> {
    cfg.validate()?;
    let scene = cfg.scene.build(cfg.seed)?;
    let features = pick_features(cfg, &scene);
    let traj = analysis_trajectory(cfg, &features)?;
    let o = &cfg.observability;
    let stride = ((o.row_spacing * cfg.rig.rates.imu).round() as usize).max(1);
    let ks: Vec<usize> = (1..=traj.len()).step_by(stride).collect();

    let (cam, lrf) = (&cfg.rig.camera, &cfg.rig.lrf);
    let opts = StackOptions {
        visual: true,
        range: false,
        half_width: cfg.rig.frustum.half_width,
        half_height: cfg.rig.frustum.half_height,
    };
    let first_facet = rvio_core::observability::facet_at(&traj, 1, cam, lrf, &opts);

    let mut directions: Vec<(String, DVector<f64>)> = Vec::new();
    if let Ok(ns) = scale_direction(&traj) {
        directions.push(("scale".into(), ns));
    }
    if let Some(f) = first_facet {
        directions.push(("hover".into(), hover_direction(&traj.features, &f)));
    }
    for (axis, name) in ["translation_x", "translation_y", "translation_z"]
        .iter()
        .enumerate()
    {
        directions.push((
            name.to_string(),
            translation_direction(axis, features.len()),
        ));
    }
    directions.push(("yaw".into(), yaw_direction(traj.state(1), &traj.features)));

    let stack_report = |name: &'static str, range: bool| -> Result<StackReport> {
        let stack = build_stack(&traj, &ks, cam, lrf, &StackOptions { range, ..opts })?;
        let nullspace = nullspace_report(&stack.m, &directions, o.tolerance, o.membership)?;
        let verdicts = nullspace
            .directions
            .iter()
            .map(|d| (d.name.clone(), verdict(d.residual, cfg)))
            .collect();
        Ok(StackReport {
            name,
            visual_rows: stack.visual_rows,
            range_rows: stack.range_rows,
            nullspace,
            verdicts,
        })
    };
    let vio = stack_report("vio", false)?;
    let range_vio = stack_report("range_vio", true)?;

    let hover_row_residual = match first_facet {
        Some(f) => {
            let same: Vec<usize> = ks
                .iter()
                .copied()
                .filter(|&k| {
                    rvio_core::observability::facet_at(&traj, k, cam, lrf, &opts) == Some(f)
                })
                .collect();
            Some(hover_residual(&traj, &same, f, cam, lrf)?)
        }
        None => None,
    };

    Ok(ObservabilityOutput {
        features,
        first_facet,
        hover_row_residual,
        vio,
        range_vio,
    })
}

/// Plain-text report. The headline lines (`scale: ...`) refer to the
/// configured mode's stack.
pub fn render(cfg: &ScenarioConfig, out: &ObservabilityOutput) -> String {
    let mut s = String::new();
    let main = match cfg.mode {
        rvio_core::estimator::Mode::Vio => &out.vio,
        rvio_core::estimator::Mode::RangeVio => &out.range_vio,
    };
    let _ = writeln!(s, "mode: {}", cfg.mode.name());
    let _ = writeln!(
        s,
        "trajectory: {:?}, {} s",
        cfg.trajectory.kind, cfg.trajectory.duration
    );
    let _ = writeln!(s, "features: {}", out.features.len());
    for (name, v) in &main.verdicts {
        let _ = writeln!(s, "{name}: {}", v.name());
    }
    if let Some(r) = out.hover_row_residual {
        let _ = writeln!(
            s,
            "hover row residual (max_k |M_k N_h| / |M_k||N_h|): {r:.3e}"
        );
    }
    for st in [&out.vio, &out.range_vio] {
        let n = &st.nullspace;
        let _ = writeln!(
            s,
            "\n[{}] rows {} ({} visual, {} range), cols {}, nullity {}, sigma_max {:.3e}, smallest kept {:.3e}",
            st.name, n.rows, st.visual_rows, st.range_rows, n.cols, n.nullity, n.sigma_max, n.sigma_min_kept
        );
        for d in &n.directions {
            let _ = writeln!(
                s,
                "  {:<14} residual {:.3e}  {}",
                d.name,
                d.residual,
                verdict(d.residual, cfg).name()
            );
        }
    }
    s
}

#[derive(Serialize)]
struct Row<'a> {
    stack: &'a str,
    direction: &'a str,
    residual: f64,
    verdict: Verdict,
}

pub fn write_observability(
    dir: &Path,
    cfg: &ScenarioConfig,
    out: &ObservabilityOutput,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("observability.csv"))?;
    for st in [&out.vio, &out.range_vio] {
        for d in &st.nullspace.directions {
            w.serialize(Row {
                stack: st.name,
                direction: &d.name,
                residual: d.residual,
                verdict: verdict(d.residual, cfg),
            })?;
        }
    }
    w.flush()?;
    fs::write(dir.join("observability.txt"), render(cfg, out))?;
    fs::write(dir.join("config.json"), cfg.to_json())?;
    Ok(())
}
