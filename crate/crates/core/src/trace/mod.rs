//! Ground-truth vehicle traces on a fixed discrete time grid.

mod io;
mod kinematics;
mod synth;

pub use io::{load_traces, load_traces_from_reader, write_traces};
pub use kinematics::{derive_kinematics, filter_traces, movement_area, FilterConfig};
pub use synth::{generate_synthetic, grid_bounds, SynthConfig};

use std::collections::HashSet;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Step = i64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub step: Step,
    pub x: f64,
    pub y: f64,
    /// m/s
    pub speed: f64,
    /// radians in `[0, 2π)`
    pub heading: f64,
}

impl TraceSample {
    pub fn at(step: Step, x: f64, y: f64) -> Self {
        TraceSample {
            step,
            x,
            y,
            speed: 0.0,
            heading: 0.0,
        }
    }

    pub fn velocity(&self) -> (f64, f64) {
        (
            self.speed * self.heading.cos(),
            self.speed * self.heading.sin(),
        )
    }

    pub fn distance_to(&self, other: &TraceSample) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub vehicle_id: String,
    pub samples: Vec<TraceSample>,
}

impl Trace {
    pub fn first_step(&self) -> Step {
        self.samples.first().map_or(0, |s| s.step)
    }

    pub fn last_step(&self) -> Step {
        self.samples.last().map_or(-1, |s| s.step)
    }

    /// Lifetime in steps, `last − first + 1`.
    pub fn lifetime_steps(&self) -> i64 {
        self.last_step() - self.first_step() + 1
    }

    pub fn sample_at(&self, step: Step) -> Option<&TraceSample> {
        let idx = step.checked_sub(self.first_step())?;
        if idx < 0 {
            return None;
        }
        self.samples.get(idx as usize)
    }

    pub fn bounds(&self) -> Option<Bounds> {
        Bounds::of(self.samples.iter())
    }

    fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Validation(format!(
                "trace {} has no samples",
                self.vehicle_id
            )));
        }
        for w in self.samples.windows(2) {
            if w[1].step != w[0].step + 1 {
                return Err(Error::Validation(format!(
                    "trace {} is not contiguous between steps {} and {}",
                    self.vehicle_id, w[0].step, w[1].step
                )));
            }
        }
        for s in &self.samples {
            if !(s.x.is_finite() && s.y.is_finite()) {
                return Err(Error::Validation(format!(
                    "trace {} has a non-finite position at step {}",
                    self.vehicle_id, s.step
                )));
            }
            if !(s.speed >= 0.0) {
                return Err(Error::Validation(format!(
                    "trace {} has negative speed at step {}",
                    self.vehicle_id, s.step
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn of<'a>(samples: impl IntoIterator<Item = &'a TraceSample>) -> Option<Bounds> {
        let mut it = samples.into_iter();
        let first = it.next()?;
        let mut b = Bounds {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for s in it {
            b.min_x = b.min_x.min(s.x);
            b.min_y = b.min_y.min(s.y);
            b.max_x = b.max_x.max(s.x);
            b.max_y = b.max_y.max(s.y);
        }
        Some(b)
    }

    pub fn area(&self) -> f64 {
        (self.max_x - self.min_x) * (self.max_y - self.min_y)
    }

    pub fn union(&self, other: &Bounds) -> Bounds {
        Bounds {
            min_x: self.min_x.min(other.min_x),
            min_y: self.min_y.min(other.min_y),
            max_x: self.max_x.max(other.max_x),
            max_y: self.max_y.max(other.max_y),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    traces: Vec<Trace>,
    step_duration_s: f64,
}

impl TraceSet {
    /// Builds a validated set. Traces are kept in the given order.
    pub fn new(traces: Vec<Trace>, step_duration_s: f64) -> Result<Self> {
        if !(step_duration_s > 0.0 && step_duration_s.is_finite()) {
            return Err(Error::Validation(format!(
                "step duration must be positive, got {step_duration_s}"
            )));
        }
        let mut seen = HashSet::with_capacity(traces.len());
        for t in &traces {
            if !seen.insert(t.vehicle_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate vehicle id {}",
                    t.vehicle_id
                )));
            }
            t.validate()?;
        }
        Ok(TraceSet {
            traces,
            step_duration_s,
        })
    }

    pub fn empty(step_duration_s: f64) -> Self {
        TraceSet {
            traces: Vec::new(),
            step_duration_s,
        }
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<Trace> {
        self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn step_duration_s(&self) -> f64 {
        self.step_duration_s
    }

    pub fn bounds(&self) -> Option<Bounds> {
        self.traces
            .iter()
            .filter_map(Trace::bounds)
            .reduce(|a, b| a.union(&b))
    }

    /// Inclusive step range covered by any trace.
    pub fn step_range(&self) -> Option<(Step, Step)> {
        let first = self.traces.iter().map(Trace::first_step).min()?;
        let last = self.traces.iter().map(Trace::last_step).max()?;
        Some((first, last))
    }

    pub fn get(&self, vehicle_id: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.vehicle_id == vehicle_id)
    }

    /// Keeps the traces for which `keep` is true.
    pub fn retain(mut self, mut keep: impl FnMut(&Trace) -> bool) -> Self {
        self.traces.retain(|t| keep(t));
        self
    }

    /// Crops every trace to `[from, to]` (inclusive) and drops traces whose
    /// remaining duration is below `min_duration_s`.
    pub fn window(&self, from: Step, to: Step, min_duration_s: f64) -> TraceSet {
        let dt = self.step_duration_s;
        let traces = self
            .traces
            .iter()
            .filter_map(|t| {
                let samples: Vec<_> = t
                    .samples
                    .iter()
                    .filter(|s| s.step >= from && s.step <= to)
                    .copied()
                    .collect();
                let keep = samples.len() >= 2
                    && (samples.len() - 1) as f64 * dt >= min_duration_s;
                keep.then(|| Trace {
                    vehicle_id: t.vehicle_id.clone(),
                    samples,
                })
            })
            .collect();
        TraceSet {
            traces,
            step_duration_s: dt,
        }
    }

    /// Two windows of `window_s` seconds taken from the start and the end of
    /// the set, each dropping traces shorter than `min_duration_s`.
    pub fn start_end_windows(&self, window_s: f64, min_duration_s: f64) -> (TraceSet, TraceSet) {
        let Some((first, last)) = self.step_range() else {
            return (self.clone(), self.clone());
        };
        let n = ((window_s / self.step_duration_s).round() as i64).max(1);
        let start = self.window(first, (first + n - 1).min(last), min_duration_s);
        let end = self.window((last - n + 1).max(first), last, min_duration_s);
        (start, end)
    }
}

pub(crate) fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}
