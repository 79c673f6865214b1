//! Multi-target tracking: constant-velocity Kalman filter, ellipsoidal gating,
//! global-nearest-neighbour association and a track lifecycle that keeps
//! silent tracks around for re-association.

mod associate;
mod kalman;
mod tracker;

pub use associate::{associate, Association};
pub use kalman::{mahalanobis2, KalmanModel, KalmanTrack, Residual, TrackId, TrackStatus};
pub use tracker::{MatchKind, StepOutcome, TrackSnapshot, TrackUpdate, Tracker, TrackerConfig};

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::trace::Step;

/// Opaque pseudonym identifier carried in beacons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pseudonym(pub u64);

impl std::fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// One pseudonymous broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beacon {
    pub pseudonym: Pseudonym,
    pub step: Step,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
}

impl Beacon {
    /// Measurement vector `(x, y, ẋ, ẏ)`, velocity rebuilt from speed and heading.
    pub fn measurement(&self) -> Vector4<f64> {
        Vector4::new(
            self.x,
            self.y,
            self.speed * self.heading.cos(),
            self.speed * self.heading.sin(),
        )
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }

    fn canonical_cmp(&self, other: &Beacon) -> std::cmp::Ordering {
        self.pseudonym
            .cmp(&other.pseudonym)
            .then(self.step.cmp(&other.step))
            .then(self.x.total_cmp(&other.x))
            .then(self.y.total_cmp(&other.y))
            .then(self.speed.total_cmp(&other.speed))
            .then(self.heading.total_cmp(&other.heading))
    }
}
