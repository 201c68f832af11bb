//! CSV sensor and truth logs, one file per stream, header row first.
//!
//! | file              | columns                                                               |
//! |-------------------|-----------------------------------------------------------------------|
//! | `imu.csv`         | `t, wx, wy, wz, ax, ay, az` (rad/s, m/s^2, body frame)                |
//! | `imu_truth.csv`   | `t, px, py, pz, vx, vy, vz, qw, qx, qy, qz, bgx, bgy, bgz, bax, bay, baz` |
//! | `frames.csv`      | `t, track_id, landmark_id, u, v, score` (normalized image plane)      |
//! | `range.csv`       | `t, range_m`                                                          |
//! | `range_truth.csv` | `t, range_m, hit_x, hit_y, hit_z, face, outlier_m`                    |
//! | `landmarks.csv`   | `id, x, y, z, face, score`                                            |
//!
//! Quaternions are Hamilton, scalar first, body to world. Positions and
//! velocities are world frame, z up.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rvio_core::estimator::{Frame, TrackedFeature};
use rvio_core::facet::RangeSample;
use rvio_core::imu::ImuSample;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scene::Landmark;
use crate::synth::SensorStreams;

#[derive(Debug, Serialize, Deserialize)]
struct ImuRow {
    t: f64,
    wx: f64,
    wy: f64,
    wz: f64,
    ax: f64,
    ay: f64,
    az: f64,
}

#[derive(Debug, Serialize)]
struct ImuTruthRow {
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

#[derive(Debug, Serialize, Deserialize)]
struct FrameRow {
    t: f64,
    track_id: u64,
    landmark_id: u64,
    u: f64,
    v: f64,
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RangeRow {
    t: f64,
    range_m: f64,
}

#[derive(Debug, Serialize)]
struct RangeTruthRow {
    t: f64,
    range_m: f64,
    hit_x: f64,
    hit_y: f64,
    hit_z: f64,
    face: usize,
    outlier_m: f64,
}

#[derive(Debug, Serialize)]
struct LandmarkRow {
    id: u64,
    x: f64,
    y: f64,
    z: f64,
    face: usize,
    score: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes all sensor and truth logs into `dir` (which must exist).
pub fn write_streams(dir: &Path, s: &SensorStreams) -> Result<()> {
    write_rows(
        &dir.join("imu.csv"),
        s.imu.samples.iter().map(|x| ImuRow {
            t: x.stamp,
            wx: x.omega_m.x,
            wy: x.omega_m.y,
            wz: x.omega_m.z,
            ax: x.accel_m.x,
            ay: x.accel_m.y,
            az: x.accel_m.z,
        }),
    )?;
    write_rows(
        &dir.join("imu_truth.csv"),
        s.imu.truth.iter().map(|x| {
            let st = &x.state;
            ImuTruthRow {
                t: x.stamp,
                px: st.p_w_i.x,
                py: st.p_w_i.y,
                pz: st.p_w_i.z,
                vx: st.v_w_i.x,
                vy: st.v_w_i.y,
                vz: st.v_w_i.z,
                qw: st.q_w_i.w,
                qx: st.q_w_i.x,
                qy: st.q_w_i.y,
                qz: st.q_w_i.z,
                bgx: st.b_g.x,
                bgy: st.b_g.y,
                bgz: st.b_g.z,
                bax: st.b_a.x,
                bay: st.b_a.y,
                baz: st.b_a.z,
            }
        }),
    )?;
    write_rows(
        &dir.join("frames.csv"),
        s.tracks
            .frames
            .iter()
            .zip(&s.tracks.truth)
            .flat_map(|(f, t)| {
                f.features
                    .iter()
                    .zip(&t.landmark_ids)
                    .map(|(x, lm)| FrameRow {
                        t: f.stamp,
                        track_id: x.track_id,
                        landmark_id: *lm,
                        u: x.uv.x,
                        v: x.uv.y,
                        score: x.score,
                    })
            }),
    )?;
    write_rows(
        &dir.join("range.csv"),
        s.range.samples.iter().map(|x| RangeRow {
            t: x.stamp,
            range_m: x.range_m,
        }),
    )?;
    write_rows(
        &dir.join("range_truth.csv"),
        s.range.truth.iter().map(|x| RangeTruthRow {
            t: x.stamp,
            range_m: x.range_m,
            hit_x: x.hit.x,
            hit_y: x.hit.y,
            hit_z: x.hit.z,
            face: x.face,
            outlier_m: x.outlier_m,
        }),
    )
}

pub fn write_landmarks(path: &Path, landmarks: &[Landmark]) -> Result<()> {
    write_rows(
        path,
        landmarks.iter().map(|l| LandmarkRow {
            id: l.id,
            x: l.position.x,
            y: l.position.y,
            z: l.position.z,
            face: l.face,
            score: l.score,
        }),
    )
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()?)
}

/// Sensor streams as the filter consumes them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorLogs {
    pub imu: Vec<ImuSample>,
    pub frames: Vec<Frame>,
    pub ranges: Vec<RangeSample>,
}

/// Reads `imu.csv`, `frames.csv` and `range.csv` from `dir`. Frames with no
/// features are absent from `frames.csv` and therefore not reconstructed.
pub fn read_sensor_logs(dir: &Path) -> Result<SensorLogs> {
    let imu = read_rows::<ImuRow>(&dir.join("imu.csv"))?
        .into_iter()
        .map(|r| ImuSample {
            omega_m: Vector3::new(r.wx, r.wy, r.wz),
            accel_m: Vector3::new(r.ax, r.ay, r.az),
            stamp: r.t,
        })
        .collect();
    let mut frames: BTreeMap<u64, Frame> = BTreeMap::new();
    for r in read_rows::<FrameRow>(&dir.join("frames.csv"))? {
        frames
            .entry(r.t.to_bits())
            .or_insert_with(|| Frame {
                stamp: r.t,
                features: Vec::new(),
            })
            .features
            .push(TrackedFeature {
                track_id: r.track_id,
                uv: Vector2::new(r.u, r.v),
                score: r.score,
            });
    }
    let ranges = read_rows::<RangeRow>(&dir.join("range.csv"))?
        .into_iter()
        .map(|r| RangeSample {
            range_m: r.range_m,
            stamp: r.t,
        })
        .collect();
    Ok(SensorLogs {
        imu,
        // non-negative stamps order like their bit patterns
        frames: frames.into_values().collect(),
        ranges,
    })
}

/// Writes a small text file; used for config echoes.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}
