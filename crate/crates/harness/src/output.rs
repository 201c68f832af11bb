//! Run directories.
//!
//! A run directory holds `config.json` (the effective configuration),
//! `truth.csv`, `estimate.csv`, `errors.csv`, `metrics.csv`, `gates.csv`,
//! `report.txt`, the sensor logs under `sensors/` (see `rvio_sim::logs`)
//! and, for a diverged run, `divergence.json` with the last finite estimate.
//!
//! | file           | columns                                                                      |
//! |----------------|------------------------------------------------------------------------------|
//! | `truth.csv`    | `t, px, py, pz, vx, vy, vz, qw, qx, qy, qz, bgx, bgy, bgz, bax, bay, baz`    |
//! | `estimate.csv` | same as `truth.csv`, then `sigma_px, sigma_py, sigma_pz, features, clones, max_innovation` |
//! | `errors.csv`   | `t, ex, ey, ez, evx, evy, evz, ethx, ethy, ethz` (traverse-aligned frame)    |
//! | `gates.csv`    | `t, status, measured, predicted, innovation, innovation_var, true_range, outlier_m` |
//! | `metrics.csv`  | `name, value`, one row per [`RunMetrics`] field except the runtime           |
//!
//! Truth and estimate rows share stamps (one per processed frame). Every
//! file except `report.txt` is a pure function of the configuration.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rvio_core::state::InertialState;
use rvio_sim::logs::{write_landmarks, write_streams};
use rvio_sim::synth::SensorStreams;
use rvio_sim::Scene;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::run::{Comparison, RunMetrics, RunOutput};

#[derive(Serialize)]
struct StateRow {
    t: f64,
    px: f64,
    py: f64,
    pz: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    bgx: f64,
    bgy: f64,
    bgz: f64,
    bax: f64,
    bay: f64,
    baz: f64,
}

impl StateRow {
    fn new(t: f64, x: &InertialState) -> Self {
        Self {
            t,
            px: x.p_w_i.x,
            py: x.p_w_i.y,
            pz: x.p_w_i.z,
            vx: x.v_w_i.x,
            vy: x.v_w_i.y,
            vz: x.v_w_i.z,
            qw: x.q_w_i.w,
            qx: x.q_w_i.x,
            qy: x.q_w_i.y,
            qz: x.q_w_i.z,
            bgx: x.b_g.x,
            bgy: x.b_g.y,
            bgz: x.b_g.z,
            bax: x.b_a.x,
            bay: x.b_a.y,
            baz: x.b_a.z,
        }
    }
}

#[derive(Serialize)]
struct EstimateRow {
    t: f64,
    px: f64,
    py: f64,
    pz: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    bgx: f64,
    bgy: f64,
    bgz: f64,
    bax: f64,
    bay: f64,
    baz: f64,
    sigma_px: f64,
    sigma_py: f64,
    sigma_pz: f64,
    features: usize,
    clones: usize,
    max_innovation: f64,
}

#[derive(Serialize)]
struct ErrorRow {
    t: f64,
    ex: f64,
    ey: f64,
    ez: f64,
    evx: f64,
    evy: f64,
    evz: f64,
    ethx: f64,
    ethy: f64,
    ethz: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// `(name, value)` pairs of the metrics, runtime excluded so the file is
/// reproducible.
pub fn metric_rows(m: &RunMetrics) -> Vec<(String, String)> {
    let v = serde_json::to_value(m).expect("metrics serialize");
    v.as_object()
        .expect("metrics are a struct")
        .iter()
        .filter(|(k, _)| k.as_str() != "runtime_s")
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            (k.clone(), s)
        })
        .collect()
}

pub fn write_metrics(path: &Path, m: &RunMetrics) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "value"])?;
    for (k, v) in metric_rows(m) {
        w.write_record([k, v])?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary(cfg: &ScenarioConfig, out: &RunOutput) -> String {
    let m = &out.metrics;
    let mut s = String::new();
    s += &format!("scene: {}\n", cfg.scene.name());
    s += &format!(
        "trajectory: {:?}, {} s\n",
        cfg.trajectory.kind, cfg.trajectory.duration
    );
    s += &format!("mode: {}\nseed: {}\n", m.mode, m.seed);
    s += &format!("distance travelled: {:.3} m\n", m.distance);
    s += &format!(
        "max position error: {:.4} m ({:.3}% of distance)\n",
        m.max_position_error, m.max_position_error_pct
    );
    s += &format!(
        "final position error: {:.4} m ({:.3}% of distance)\n",
        m.final_position_error, m.final_position_error_pct
    );
    s += &format!("rms position error: {:.4} m\n", m.rms_position_error);
    s += &format!("max velocity error: {:.4} m/s\n", m.max_velocity_error);
    s += &format!("max attitude error: {:.4} deg\n", m.max_attitude_error_deg);
    s += &format!(
        "range samples: {} accepted, {} rejected, {} skipped; outliers rejected {}/{}\n",
        m.range_accepted, m.range_rejected, m.range_skipped, m.outliers_rejected, m.outliers
    );
    s += &format!("runtime: {:.2} s\n", m.runtime_s);
    match &out.failure {
        Some(f) => s += &format!("status: DIVERGED at t={} ({})\n", f.stamp, f.message),
        None => s += "status: ok\n",
    }
    s
}

/// Writes the per-run artifacts (everything except the sensor logs).
pub fn write_run(dir: &Path, cfg: &ScenarioConfig, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_text(&dir.join("config.json"), &cfg.to_json())?;
    write_csv(
        &dir.join("truth.csv"),
        out.truth.iter().map(|r| StateRow::new(r.stamp, &r.state)),
    )?;
    write_csv(
        &dir.join("estimate.csv"),
        out.estimate.iter().map(|r| {
            let s = StateRow::new(r.stamp, &r.state);
            EstimateRow {
                t: s.t,
                px: s.px,
                py: s.py,
                pz: s.pz,
                vx: s.vx,
                vy: s.vy,
                vz: s.vz,
                qw: s.qw,
                qx: s.qx,
                qy: s.qy,
                qz: s.qz,
                bgx: s.bgx,
                bgy: s.bgy,
                bgz: s.bgz,
                bax: s.bax,
                bay: s.bay,
                baz: s.baz,
                sigma_px: r.sigma_p.x,
                sigma_py: r.sigma_p.y,
                sigma_pz: r.sigma_p.z,
                features: r.features,
                clones: r.clones,
                max_innovation: r.max_innovation,
            }
        }),
    )?;
    write_csv(
        &dir.join("errors.csv"),
        out.errors.iter().map(|e| ErrorRow {
            t: e.stamp,
            ex: e.position.x,
            ey: e.position.y,
            ez: e.position.z,
            evx: e.velocity.x,
            evy: e.velocity.y,
            evz: e.velocity.z,
            ethx: e.attitude.x,
            ethy: e.attitude.y,
            ethz: e.attitude.z,
        }),
    )?;
    write_csv(&dir.join("gates.csv"), out.gates.iter())?;
    write_metrics(&dir.join("metrics.csv"), &out.metrics)?;
    write_text(&dir.join("report.txt"), &summary(cfg, out))?;
    if let Some(f) = &out.failure {
        let last = f.last_good.map(|r| {
            serde_json::json!({
                "t": r.stamp,
                "state": r.state,
                "sigma_p": r.sigma_p,
            })
        });
        let doc = serde_json::json!({ "stamp": f.stamp, "message": f.message, "last_good": last });
        write_text(
            &dir.join("divergence.json"),
            &serde_json::to_string_pretty(&doc).expect("json"),
        )?;
    }
    Ok(())
}

/// Writes sensor and truth logs plus the landmark table under `dir/sensors`.
pub fn write_sensors(dir: &Path, scene: &Scene, streams: &SensorStreams) -> Result<()> {
    let d = dir.join("sensors");
    fs::create_dir_all(&d)?;
    write_streams(&d, streams)?;
    write_landmarks(&d.join("landmarks.csv"), &scene.landmarks)?;
    Ok(())
}

/// Writes `vio/` and `range_vio/` run directories and a side-by-side table.
pub fn write_comparison(dir: &Path, cfg: &ScenarioConfig, c: &Comparison) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_run(
        &dir.join("vio"),
        &cfg.with_mode(rvio_core::estimator::Mode::Vio),
        &c.vio,
    )?;
    write_run(
        &dir.join("range_vio"),
        &cfg.with_mode(rvio_core::estimator::Mode::RangeVio),
        &c.range_vio,
    )?;
    let (a, b) = (
        metric_rows(&c.vio.metrics),
        metric_rows(&c.range_vio.metrics),
    );
    let mut w = csv::Writer::from_path(dir.join("comparison.csv"))?;
    w.write_record(["name", "vio", "range_vio"])?;
    for ((k, va), (_, vb)) in a.into_iter().zip(b) {
        w.write_record([k, va, vb])?;
    }
    w.write_record(["streams_sha256", &c.checksum, &c.checksum])?;
    w.flush()?;
    let ratio = c.vio.metrics.max_position_error / c.range_vio.metrics.max_position_error;
    let text = format!(
        "streams sha256: {}\nVIO max position error: {:.4} m\nrange-VIO max position error: {:.4} m\nratio VIO/range-VIO: {:.3}\n",
        c.checksum, c.vio.metrics.max_position_error, c.range_vio.metrics.max_position_error, ratio
    );
    write_text(&dir.join("report.txt"), &text)
}
