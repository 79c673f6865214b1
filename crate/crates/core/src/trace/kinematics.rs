use serde::{Deserialize, Serialize};

use super::{normalize_angle, Trace, TraceSet};
use crate::error::{Error, Result};

/// Computes speed and heading from consecutive positions.
///
/// Sample `k` gets the displacement towards `k + 1`; the last sample repeats
/// the previous values. A zero displacement yields speed 0 and keeps the last
/// known heading (leading stops take the first heading the vehicle moves
/// with, or 0 if it never moves).
pub fn derive_kinematics(set: TraceSet) -> Result<TraceSet> {
    let dt = set.step_duration_s();
    let mut traces = set.into_traces();
    for t in &mut traces {
        derive_one(t, dt)?;
    }
    TraceSet::new(traces, dt)
}

fn derive_one(t: &mut Trace, dt: f64) -> Result<()> {
    let n = t.samples.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "trace {} has a single sample; kinematics need two",
            t.vehicle_id
        )));
    }
    let headings: Vec<Option<f64>> = t
        .samples
        .windows(2)
        .map(|w| {
            let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            (dx != 0.0 || dy != 0.0).then(|| normalize_angle(dy.atan2(dx)))
        })
        .collect();
    let mut last_heading = headings.iter().flatten().next().copied().unwrap_or(0.0);
    for k in 0..n - 1 {
        let (a, b) = (t.samples[k], t.samples[k + 1]);
        let s = &mut t.samples[k];
        s.speed = (b.x - a.x).hypot(b.y - a.y) / dt;
        if let Some(h) = headings[k] {
            last_heading = h;
        }
        s.heading = last_heading;
    }
    let prev = t.samples[n - 2];
    let last = &mut t.samples[n - 1];
    last.speed = prev.speed;
    last.heading = prev.heading;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_area_m2: f64,
    pub min_duration_s: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_area_m2: 100.0,
            min_duration_s: 15.0,
        }
    }
}

/// Area of the smallest axis-aligned square holding every position of `t`.
///
/// A plain bounding-box area would be zero for a vehicle driving along a
/// straight axis-parallel road, however far it goes.
pub fn movement_area(t: &Trace) -> f64 {
    t.bounds().map_or(0.0, |b| {
        let side = (b.max_x - b.min_x).max(b.max_y - b.min_y);
        side * side
    })
}

/// Drops traces that move within less than `min_area_m2` (see
/// [`movement_area`]) or whose first-to-last sample span is shorter than
/// `min_duration_s`.
pub fn filter_traces(set: TraceSet, min_area_m2: f64, min_duration_s: f64) -> TraceSet {
    let dt = set.step_duration_s();
    set.retain(|t| {
        let duration = (t.last_step() - t.first_step()) as f64 * dt;
        let area = movement_area(t);
        area >= min_area_m2 && duration >= min_duration_s
    })
}
