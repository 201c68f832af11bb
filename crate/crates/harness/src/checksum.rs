//! Stream fingerprints used to prove both modes saw identical input.

use rvio_sim::synth::SensorStreams;
use sha2::{Digest, Sha256};

/// SHA-256 over every sensor value in a fixed order, as little-endian bytes.
pub fn streams_checksum(s: &SensorStreams) -> String {
    let mut h = Sha256::new();
    let mut put = |v: f64| h.update(v.to_le_bytes());
    for x in &s.imu.samples {
        put(x.stamp);
        x.omega_m
            .iter()
            .chain(x.accel_m.iter())
            .for_each(|v| put(*v));
    }
    for f in &s.tracks.frames {
        put(f.stamp);
        put(f.features.len() as f64);
        for x in &f.features {
            put(x.track_id as f64);
            put(x.uv.x);
            put(x.uv.y);
            put(x.score);
        }
    }
    for r in &s.range.samples {
        put(r.stamp);
        put(r.range_m);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
