//! Range-visual-inertial odometry.
//!
//! The crate is organised bottom-up:
//!
//! * [`quaternion`], [`state`]: rotation conventions, the filter state and
//!   its covariance bookkeeping (pose clones, inverse-depth features).
//! * [`imu`]: strapdown propagation and the discrete error-state transition.
//! * [`visual`], [`tracks`]: pinhole measurements, SLAM and MSCKF updates,
//!   and the policy that assigns feature tracks to either paradigm.
//! * [`facet`]: Delaunay facets over SLAM features and the ranged-facet
//!   range update.
//! * [`observability`]: block rows of the linearized observability matrix
//!   and nullspace checks for the scale and hover directions.
//! * [`estimator`]: the event-driven filter tying everything together.

pub mod ekf;
pub mod error;
pub mod estimator;
pub mod facet;
pub mod imu;
pub mod math;
pub mod observability;
pub mod quaternion;
pub mod state;
pub mod tracks;
pub mod visual;

pub use error::{Error, Result};
pub use quaternion::Quaternion;
