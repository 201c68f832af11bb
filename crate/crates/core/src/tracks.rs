//! Feature tracks and the policy deciding which tracks become SLAM features
//! and which are consumed by MSCKF updates.

use std::collections::HashSet;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::visual::FeatureObservation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    /// Accumulating observations.
    Candidate,
    /// Promoted into the state vector.
    Slam,
    /// Consumed by an MSCKF update.
    Msckf,
    Dead,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub observations: Vec<FeatureObservation>,
    pub status: TrackStatus,
    /// Tracker quality; higher is better.
    pub score: f64,
}

impl Track {
    pub fn new(first: FeatureObservation, score: f64) -> Self {
        Self {
            track_id: first.track_id,
            observations: vec![first],
            status: TrackStatus::Candidate,
            score,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn latest(&self) -> Option<&FeatureObservation> {
        self.observations.last()
    }
}

/// Regular grid over the normalized image plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TileGrid {
    pub cols: usize,
    pub rows: usize,
    /// Half-extent of the image on the normalized plane along u and v.
    pub half_width: f64,
    pub half_height: f64,
}

impl Default for TileGrid {
    fn default() -> Self {
        Self {
            cols: 4,
            rows: 3,
            half_width: 0.6,
            half_height: 0.45,
        }
    }
}

impl TileGrid {
    pub fn tiles(&self) -> usize {
        self.cols * self.rows
    }

    /// Tile index of `uv`, or `None` outside the image.
    pub fn tile_of(&self, uv: &Vector2<f64>) -> Option<usize> {
        let fx = (uv.x + self.half_width) / (2.0 * self.half_width);
        let fy = (uv.y + self.half_height) / (2.0 * self.half_height);
        if !(0.0..=1.0).contains(&fx) || !(0.0..=1.0).contains(&fy) {
            return None;
        }
        let c = ((fx * self.cols as f64) as usize).min(self.cols - 1);
        let r = ((fy * self.rows as f64) as usize).min(self.rows - 1);
        Some(r * self.cols + c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotCandidate {
    pub track_id: u64,
    pub uv: Vector2<f64>,
    pub score: f64,
    pub length: usize,
}

/// Chooses up to `free_slots` candidates so that SLAM features spread over
/// the tiles: a candidate is only taken from a tile whose current count is
/// the lowest among tiles that still have candidates. Within that set the
/// best score wins, then the longer track, then the lower id.
pub fn select_slam_candidates(
    candidates: &[SlotCandidate],
    occupied: &[Vector2<f64>],
    free_slots: usize,
    grid: &TileGrid,
) -> Vec<u64> {
    let mut counts = vec![0usize; grid.tiles()];
    for uv in occupied {
        if let Some(t) = grid.tile_of(uv) {
            counts[t] += 1;
        }
    }
    let mut pool: Vec<(usize, &SlotCandidate)> = candidates
        .iter()
        .filter_map(|c| grid.tile_of(&c.uv).map(|t| (t, c)))
        .collect();
    pool.sort_by(|a, b| {
        b.1.score
            .total_cmp(&a.1.score)
            .then(b.1.length.cmp(&a.1.length))
            .then(a.1.track_id.cmp(&b.1.track_id))
    });
    let mut chosen = Vec::new();
    while chosen.len() < free_slots && !pool.is_empty() {
        let level = pool.iter().map(|(t, _)| counts[*t]).min().unwrap_or(0);
        let k = pool
            .iter()
            .position(|(t, _)| counts[*t] == level)
            .expect("a tile at the minimum level has a candidate");
        let (t, c) = pool.remove(k);
        counts[t] += 1;
        chosen.push(c.track_id);
    }
    chosen
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackPolicy {
    /// Number of SLAM feature slots.
    pub max_slam: usize,
    /// Observations a track needs before it may be used by any update.
    pub min_track_length: usize,
    pub grid: TileGrid,
}

impl Default for TrackPolicy {
    fn default() -> Self {
        Self {
            max_slam: 27,
            min_track_length: 3,
            grid: TileGrid::default(),
        }
    }
}

/// Decisions taken for one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackDecisions {
    /// Tracks to promote into the state, in selection order.
    pub promote: Vec<u64>,
    /// Tracks to hand to the MSCKF update.
    pub msckf: Vec<u64>,
    /// Tracks dropped without being used.
    pub discard: Vec<u64>,
}

/// Classifies candidate tracks after a frame.
///
/// `seen_now` lists tracks observed in the newest frame, `window` is the
/// number of clones after the frame's clone was added, and `slam_uv` holds
/// the newest image positions of features already in the state.
pub fn decide_tracks(
    tracks: &[&Track],
    seen_now: &HashSet<u64>,
    window: usize,
    slam_uv: &[Vector2<f64>],
    policy: &TrackPolicy,
) -> TrackDecisions {
    let mut out = TrackDecisions::default();
    let mut candidates = Vec::new();
    let mut mature = Vec::new();
    for t in tracks {
        if t.status != TrackStatus::Candidate {
            continue;
        }
        let long_enough = t.len() >= policy.min_track_length;
        if !seen_now.contains(&t.track_id) {
            if long_enough {
                out.msckf.push(t.track_id);
            } else {
                out.discard.push(t.track_id);
            }
            continue;
        }
        if !long_enough {
            continue;
        }
        if let Some(last) = t.latest() {
            candidates.push(SlotCandidate {
                track_id: t.track_id,
                uv: last.uv,
                score: t.score,
                length: t.len(),
            });
        }
        if t.len() >= window {
            mature.push(t.track_id);
        }
    }
    let free = policy.max_slam.saturating_sub(slam_uv.len());
    out.promote = select_slam_candidates(&candidates, slam_uv, free, &policy.grid);
    let promoted: HashSet<u64> = out.promote.iter().copied().collect();
    out.msckf
        .extend(mature.into_iter().filter(|id| !promoted.contains(id)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(id: u64, len: usize, uv: Vector2<f64>, score: f64) -> Track {
        Track {
            track_id: id,
            observations: (0..len)
                .map(|k| FeatureObservation {
                    track_id: id,
                    stamp: k as f64,
                    uv,
                })
                .collect(),
            status: TrackStatus::Candidate,
            score,
        }
    }

    fn tile_centre(grid: &TileGrid, t: usize) -> Vector2<f64> {
        let (r, c) = (t / grid.cols, t % grid.cols);
        Vector2::new(
            -grid.half_width + (c as f64 + 0.5) * 2.0 * grid.half_width / grid.cols as f64,
            -grid.half_height + (r as f64 + 0.5) * 2.0 * grid.half_height / grid.rows as f64,
        )
    }

    #[test]
    fn tiles_cover_the_image() {
        let g = TileGrid::default();
        for t in 0..g.tiles() {
            assert_eq!(g.tile_of(&tile_centre(&g, t)), Some(t));
        }
        assert_eq!(g.tile_of(&Vector2::new(0.61, 0.0)), None);
        assert_eq!(g.tile_of(&Vector2::new(0.6, 0.45)), Some(11));
    }

    #[test]
    fn forty_candidates_fill_27_slots_evenly() {
        let g = TileGrid::default();
        let tracks: Vec<Track> = (0..40)
            .map(|k| track(k, 5, tile_centre(&g, (k as usize) % 12), k as f64))
            .collect();
        let refs: Vec<&Track> = tracks.iter().collect();
        let seen: HashSet<u64> = (0..40).collect();
        let d = decide_tracks(&refs, &seen, 5, &[], &TrackPolicy::default());
        assert_eq!(d.promote.len(), 27);
        let mut per_tile = vec![0; 12];
        for id in &d.promote {
            per_tile[(*id as usize) % 12] += 1;
        }
        let (lo, hi) = (
            per_tile.iter().min().unwrap(),
            per_tile.iter().max().unwrap(),
        );
        assert!(hi - lo <= 1, "{per_tile:?}");
        // the 13 mature tracks not promoted go to the MSCKF update
        assert_eq!(d.msckf.len(), 13);
    }

    #[test]
    fn lost_track_with_enough_observations_goes_to_msckf() {
        let g = TileGrid::default();
        let lost = track(1, 3, tile_centre(&g, 0), 1.0);
        let short = track(2, 2, tile_centre(&g, 0), 1.0);
        let d = decide_tracks(
            &[&lost, &short],
            &HashSet::new(),
            5,
            &[],
            &TrackPolicy::default(),
        );
        assert_eq!(d.msckf, vec![1]);
        assert_eq!(d.discard, vec![2]);
        assert!(d.promote.is_empty());
    }

    #[test]
    fn full_tile_defers_to_next_best_tile() {
        let g = TileGrid::default();
        // every tile but 0 already holds one SLAM feature, tile 0 holds two
        let mut occupied: Vec<Vector2<f64>> = (0..12).map(|t| tile_centre(&g, t)).collect();
        occupied.push(tile_centre(&g, 0));
        let best_in_full = SlotCandidate {
            track_id: 1,
            uv: tile_centre(&g, 0),
            score: 10.0,
            length: 5,
        };
        let other = SlotCandidate {
            track_id: 2,
            uv: tile_centre(&g, 7),
            score: 1.0,
            length: 5,
        };
        assert_eq!(
            select_slam_candidates(&[best_in_full, other], &occupied, 1, &g),
            vec![2]
        );
        // with two slots the duplicate tile is used once the others are even
        assert_eq!(
            select_slam_candidates(&[best_in_full, other], &occupied, 2, &g),
            vec![2, 1]
        );
    }

    #[test]
    fn no_free_slots_means_no_promotion() {
        let g = TileGrid::default();
        let occupied: Vec<Vector2<f64>> = (0..27).map(|k| tile_centre(&g, k % 12)).collect();
        let t = track(5, 4, tile_centre(&g, 3), 1.0);
        let seen: HashSet<u64> = [5].into_iter().collect();
        let d = decide_tracks(&[&t], &seen, 4, &occupied, &TrackPolicy::default());
        assert!(d.promote.is_empty());
        assert_eq!(d.msckf, vec![5]);
    }
}
