//! Seed sweeps: the same scenario in both modes over many seeds, in parallel.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use rvio_core::estimator::Mode;
use rvio_core::facet::RangeStatus;
use rvio_sim::rig::RangeSpike;
use rvio_sim::simulate;

use crate::config::ScenarioConfig;
use crate::error::{HarnessError, Result};
use crate::run::{compare_modes, run_filter};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub distance: f64,
    pub vio_max_error: f64,
    pub range_vio_max_error: f64,
    pub vio_max_pct: f64,
    pub range_vio_max_pct: f64,
    pub vio_diverged: bool,
    pub range_vio_diverged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub median_vio_max_error: f64,
    pub median_range_vio_max_error: f64,
    pub median_range_vio_max_pct: f64,
    /// Ratio of the medians.
    pub ratio: f64,
    /// Median of the per-seed ratios.
    pub median_ratio: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Runs `compare_modes` for each seed. Results are ordered by seed.
pub fn sweep(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<SweepSummary> {
    cfg.validate()?;
    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let (c, _, _) = compare_modes(&cfg.with_seed(seed))?;
            let (a, b) = (&c.vio.metrics, &c.range_vio.metrics);
            Ok(SweepRow {
                seed,
                distance: b.distance,
                vio_max_error: a.max_position_error,
                range_vio_max_error: b.max_position_error,
                vio_max_pct: a.max_position_error_pct,
                range_vio_max_pct: b.max_position_error_pct,
                vio_diverged: a.diverged,
                range_vio_diverged: b.diverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&SweepRow) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    let median_vio_max_error = col(|r| r.vio_max_error);
    let median_range_vio_max_error = col(|r| r.range_vio_max_error);
    let median_range_vio_max_pct = col(|r| r.range_vio_max_pct);
    Ok(SweepSummary {
        median_vio_max_error,
        median_range_vio_max_error,
        median_range_vio_max_pct,
        ratio: median_vio_max_error / median_range_vio_max_error,
        median_ratio: col(|r| r.vio_max_error / r.range_vio_max_error),
        rows,
    })
}

pub fn write_sweep(dir: &Path, s: &SweepSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    for r in &s.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let text = format!(
        "seeds: {}\nmedian VIO max position error: {:.4} m\nmedian range-VIO max position error: {:.4} m ({:.3}% of distance)\nratio of medians VIO/range-VIO: {:.3}\nmedian of per-seed ratios: {:.3}\n",
        s.rows.len(),
        s.median_vio_max_error,
        s.median_range_vio_max_error,
        s.median_range_vio_max_pct,
        s.ratio,
        s.median_ratio
    );
    fs::write(dir.join("summary.txt"), text)?;
    Ok(())
}

/// One scripted range spike against the spike-free run on otherwise
/// identical streams, both in range-VIO mode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpikeTrial {
    pub seed: u64,
    /// Stamp of the range sample carrying the spike.
    pub stamp: f64,
    pub status: RangeStatus,
    /// Normalized innovation `|r| / sqrt(S)` of the spiked sample.
    pub normalized_innovation: f64,
    /// RMS over frames from the spike on of the distance between the two
    /// position estimates.
    pub rms_difference: f64,
    pub diverged: bool,
}

pub fn spike_trial(cfg: &ScenarioConfig, spike: RangeSpike) -> Result<SpikeTrial> {
    let cfg = cfg.with_mode(Mode::RangeVio);
    cfg.validate()?;
    let scene = cfg.scene.build(cfg.seed)?;
    let clean = simulate(&cfg.trajectory, &scene, &cfg.rig, cfg.seed)?;
    let mut spiked_cfg = cfg.clone();
    spiked_cfg.rig.outliers.spikes.push(spike);
    let spiked = simulate(&spiked_cfg.trajectory, &scene, &spiked_cfg.rig, cfg.seed)?;
    let truth = spiked
        .range
        .truth
        .iter()
        .zip(&clean.range.truth)
        .find(|(s, c)| s.outlier_m != c.outlier_m)
        .map(|(s, _)| s)
        .ok_or_else(|| {
            HarnessError::Config(format!(
                "no range sample carries the spike at {}",
                spike.stamp
            ))
        })?;
    let stamp = truth.stamp;
    let a = run_filter(&cfg, &clean)?;
    let b = run_filter(&spiked_cfg, &spiked)?;
    let gate = b.gates.iter().find(|g| g.t == stamp).ok_or_else(|| {
        HarnessError::Config(format!("spiked sample at {stamp} was not processed"))
    })?;
    let diffs: Vec<f64> = a
        .estimate
        .iter()
        .zip(&b.estimate)
        .filter(|(x, _)| x.stamp >= stamp)
        .map(|(x, y)| (x.state.p_w_i - y.state.p_w_i).norm_squared())
        .collect();
    let rms_difference = if diffs.is_empty() {
        0.0
    } else {
        (diffs.iter().sum::<f64>() / diffs.len() as f64).sqrt()
    };
    Ok(SpikeTrial {
        seed: cfg.seed,
        stamp,
        status: gate.status,
        normalized_innovation: gate.innovation.abs() / gate.innovation_var.sqrt(),
        rms_difference,
        diverged: a.failure.is_some()
            || b.failure.is_some()
            || a.estimate.len() != b.estimate.len(),
    })
}

pub fn spike_trials(
    cfg: &ScenarioConfig,
    spike: RangeSpike,
    seeds: &[u64],
) -> Result<Vec<SpikeTrial>> {
    seeds
        .par_iter()
        .map(|&s| spike_trial(&cfg.with_seed(s), spike))
        .collect()
}
