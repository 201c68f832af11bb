//! Synthetic ground truth for range-VIO: triangle-mesh scenes with
//! landmarks, analytic trajectories, and IMU, feature-track and laser range
//! streams generated from them.
//!
//! Generation is pure: a (scene, trajectory, rig, seed) tuple always yields
//! bit-identical streams. See [`logs`] for the CSV layout.

pub mod error;
pub mod logs;
pub mod mesh;
pub mod rig;
pub mod scene;
pub mod synth;
pub mod trajectory;

pub use error::{Result, SimError};
pub use rig::SensorRig;
pub use scene::{builtin_scenes, Scene, SceneConfig};
pub use synth::{simulate, synth_imu, synth_range, synth_tracks, SensorStreams};
pub use trajectory::{TrajectoryKind, TrajectoryProfile};
