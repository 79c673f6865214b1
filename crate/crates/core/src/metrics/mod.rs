//! Scoring of adversary output: continuous tracking lengths, optimal
//! track-to-vehicle assignment, traceability and pseudonym statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::adversary::TrackRecord;
use crate::assignment::{auction, SparseBenefits};
use crate::error::{Error, Result};
use crate::mtt::{Pseudonym, TrackId};
use crate::schemes::{EventRecord, SchemeEvent};
use crate::trace::{Step, TraceSet};

/// Longest continuous tracking period `l(v, t)`, stored sparsely in steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMatrix {
    /// Row labels.
    pub vehicles: Vec<String>,
    /// Column labels.
    pub tracks: Vec<TrackId>,
    /// Per vehicle, `(track column, steps)` with positive lengths, sorted by
    /// column.
    pub rows: Vec<Vec<(usize, i64)>>,
    pub step_duration_s: f64,
}

impl SegmentMatrix {
    /// Builds a matrix from dense step counts; rows are vehicles `v0, v1, …`
    /// and columns tracks `0, 1, …`.
    pub fn from_dense(l: &[Vec<i64>], step_duration_s: f64) -> Self {
        let n_tracks = l.first().map_or(0, Vec::len);
        SegmentMatrix {
            vehicles: (0..l.len()).map(|i| format!("v{i}")).collect(),
            tracks: (0..n_tracks as TrackId).collect(),
            rows: l
                .iter()
                .map(|r| r.iter().enumerate().filter(|(_, &x)| x > 0).map(|(j, &x)| (j, x)).collect())
                .collect(),
            step_duration_s,
        }
    }

    pub fn steps(&self, v: usize, t: usize) -> i64 {
        self.rows[v]
            .binary_search_by_key(&t, |&(j, _)| j)
            .map_or(0, |i| self.rows[v][i].1)
    }

    pub fn seconds(&self, v: usize, t: usize) -> f64 {
        self.steps(v, t) as f64 * self.step_duration_s
    }

    pub fn to_dense(&self) -> Vec<Vec<i64>> {
        (0..self.vehicles.len())
            .map(|v| (0..self.tracks.len()).map(|t| self.steps(v, t)).collect())
            .collect()
    }
}

/// Longest run per (vehicle, track) during which the track's updates come
/// from that vehicle. Up to `gap_tolerance` coasting steps between two
/// updates of the same vehicle keep the run going; an update from anyone
/// else ends it. Run length spans first to last update inclusive.
pub fn segment_lengths(tracks: &[TrackRecord], traces: &TraceSet, gap_tolerance: i64) -> SegmentMatrix {
    let index: HashMap<&str, usize> = traces
        .traces()
        .iter()
        .enumerate()
        .map(|(i, t)| (t.vehicle_id.as_str(), i))
        .collect();
    let mut rows: Vec<BTreeMap<usize, i64>> = vec![BTreeMap::new(); traces.len()];
    for (col, rec) in tracks.iter().enumerate() {
        let mut run: Option<(usize, Step, Step)> = None;
        let close = |run: Option<(usize, Step, Step)>, rows: &mut [BTreeMap<usize, i64>]| {
            if let Some((v, a, b)) = run {
                let e = rows[v].entry(col).or_insert(0);
                *e = (*e).max(b - a + 1);
            }
        };
        for p in &rec.points {
            let v = p.vehicle.as_deref().and_then(|id| index.get(id).copied());
            run = match (run, v) {
                (Some((rv, a, b)), Some(v)) if rv == v && p.step - b - 1 <= gap_tolerance => {
                    Some((v, a, p.step))
                }
                (prev, v) => {
                    close(prev, &mut rows);
                    v.map(|v| (v, p.step, p.step))
                }
            };
        }
        close(run, &mut rows);
    }
    SegmentMatrix {
        vehicles: traces.traces().iter().map(|t| t.vehicle_id.clone()).collect(),
        tracks: tracks.iter().map(|r| r.track_id).collect(),
        rows: rows.into_iter().map(|r| r.into_iter().collect()).collect(),
        step_duration_s: traces.step_duration_s(),
    }
}

/// Optimal one-to-one assignment of tracks to vehicles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackAssignment {
    /// Assigned track column per vehicle.
    pub vehicle_track: Vec<Option<usize>>,
    /// `τ_v` in steps; zero when unassigned.
    pub tau_steps: Vec<i64>,
    pub total_steps: i64,
}

/// Maximizes `Σ τ_v` with the auction algorithm, tracks bidding for vehicles.
pub fn assign_tracks(m: &SegmentMatrix) -> TrackAssignment {
    let mut b = SparseBenefits::new(m.tracks.len(), m.vehicles.len());
    for (v, row) in m.rows.iter().enumerate() {
        for &(t, l) in row {
            b.push(t, v, l);
        }
    }
    let a = auction(&b);
    let mut vehicle_track = vec![None; m.vehicles.len()];
    let mut tau_steps = vec![0; m.vehicles.len()];
    for (t, item) in a.bidder_item.iter().enumerate() {
        if let Some(v) = *item {
            let l = m.steps(v, t);
            if l > 0 {
                vehicle_track[v] = Some(t);
                tau_steps[v] = l;
            }
        }
    }
    let total_steps = tau_steps.iter().sum();
    TrackAssignment { vehicle_track, tau_steps, total_steps }
}

/// [`assign_tracks`] where equal-total optima are resolved towards more
/// significantly tracked vehicles, so that `Π` does not depend on row or
/// column order.
pub fn assign_tracks_for(m: &SegmentMatrix, traces: &TraceSet) -> TrackAssignment {
    assert_eq!(m.vehicles.len(), traces.len(), "matrix rows must follow the trace order");
    let scale = m.vehicles.len() as i64 + 1;
    let mut b = SparseBenefits::new(m.tracks.len(), m.vehicles.len());
    for (v, (row, t)) in m.rows.iter().zip(traces.traces()).enumerate() {
        for &(c, l) in row {
            b.push(c, v, l * scale + significantly_tracked(l, t.lifetime_steps()) as i64);
        }
    }
    let a = auction(&b);
    let mut vehicle_track = vec![None; m.vehicles.len()];
    let mut tau_steps = vec![0; m.vehicles.len()];
    for (c, item) in a.bidder_item.iter().enumerate() {
        if let Some(v) = *item {
            let l = m.steps(v, c);
            if l > 0 {
                vehicle_track[v] = Some(c);
                tau_steps[v] = l;
            }
        }
    }
    let total_steps = tau_steps.iter().sum();
    TrackAssignment { vehicle_track, tau_steps, total_steps }
}

/// `τ / L ≥ 0.9`, evaluated exactly on step counts.
pub fn significantly_tracked(tau_steps: i64, lifetime_steps: i64) -> bool {
    10 * tau_steps >= 9 * lifetime_steps
}

fn check_rows(asgn: &TrackAssignment, traces: &TraceSet) {
    assert_eq!(
        asgn.tau_steps.len(),
        traces.len(),
        "assignment rows must follow the trace order"
    );
}

/// Percentage of all traces whose assigned track covers at least 90 % of
/// their lifetime.
pub fn traceability(asgn: &TrackAssignment, traces: &TraceSet) -> f64 {
    check_rows(asgn, traces);
    if traces.is_empty() {
        return 0.0;
    }
    let hits = traces
        .traces()
        .iter()
        .zip(&asgn.tau_steps)
        .filter(|(t, &tau)| significantly_tracked(tau, t.lifetime_steps()))
        .count();
    100.0 * hits as f64 / traces.len() as f64
}

/// Like [`traceability`] but vehicles whose last pseudonym equals their
/// first one never count as tracked. The denominator stays the total
/// number of traces.
pub fn normalized_traceability(
    asgn: &TrackAssignment,
    traces: &TraceSet,
    histories: &BTreeMap<String, PseudonymHistory>,
) -> f64 {
    check_rows(asgn, traces);
    if traces.is_empty() {
        return 0.0;
    }
    let hits = traces
        .traces()
        .iter()
        .zip(&asgn.tau_steps)
        .filter(|(t, &tau)| {
            significantly_tracked(tau, t.lifetime_steps())
                && histories.get(&t.vehicle_id).is_some_and(PseudonymHistory::changed)
        })
        .count();
    100.0 * hits as f64 / traces.len() as f64
}

/// Pseudonym usage of one vehicle, recovered from the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudonymHistory {
    pub first: Pseudonym,
    pub last: Pseudonym,
    pub changes: u32,
    pub change_steps: Vec<Step>,
    /// Silence lengths in steps preceding each change.
    pub silences: Vec<u32>,
    pub confusions: u32,
}

impl PseudonymHistory {
    pub fn changed(&self) -> bool {
        self.first != self.last
    }
}

pub fn pseudonym_histories(events: &[EventRecord]) -> BTreeMap<String, PseudonymHistory> {
    let mut out: BTreeMap<String, PseudonymHistory> = BTreeMap::new();
    for e in events {
        match e.event {
            SchemeEvent::Enter { pseudonym } => {
                out.entry(e.vehicle.clone()).or_insert(PseudonymHistory {
                    first: pseudonym,
                    last: pseudonym,
                    changes: 0,
                    change_steps: Vec::new(),
                    silences: Vec::new(),
                    confusions: 0,
                });
            }
            SchemeEvent::Change { old, new, silence_steps, confusion } => {
                let h = out.entry(e.vehicle.clone()).or_insert(PseudonymHistory {
                    first: old,
                    last: old,
                    changes: 0,
                    change_steps: Vec::new(),
                    silences: Vec::new(),
                    confusions: 0,
                });
                h.last = new;
                h.changes += 1;
                h.change_steps.push(e.step);
                h.silences.push(silence_steps);
                h.confusions += confusion as u32;
            }
            SchemeEvent::EnterSilence { .. } => {}
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudonymStats {
    /// Vehicles the statistics are taken over.
    pub concerned: usize,
    pub avg_lifetime_s: f64,
    pub changes_per_vehicle: f64,
    /// Set when no vehicle qualified; the averages are then zero.
    pub empty: bool,
}

/// Statistics over the given vehicles, or over every vehicle that changed
/// at least once when `concerned` is absent. The average pseudonym
/// lifetime is total trace time divided by pseudonyms used.
pub fn pseudonym_stats(
    histories: &BTreeMap<String, PseudonymHistory>,
    traces: &TraceSet,
    concerned: Option<&BTreeSet<String>>,
) -> PseudonymStats {
    let dt = traces.step_duration_s();
    let (mut n, mut time, mut pseudonyms, mut changes) = (0usize, 0.0, 0u64, 0u64);
    for t in traces.traces() {
        let h = histories.get(&t.vehicle_id);
        let c = h.map_or(0, |h| h.changes);
        let include = match concerned {
            Some(set) => set.contains(&t.vehicle_id),
            None => c > 0,
        };
        if include {
            n += 1;
            time += t.lifetime_steps() as f64 * dt;
            pseudonyms += c as u64 + 1;
            changes += c as u64;
        }
    }
    if n == 0 {
        return PseudonymStats { concerned: 0, avg_lifetime_s: 0.0, changes_per_vehicle: 0.0, empty: true };
    }
    PseudonymStats {
        concerned: n,
        avg_lifetime_s: time / pseudonyms as f64,
        changes_per_vehicle: changes as f64 / n as f64,
        empty: false,
    }
}

/// Per-vehicle line of a traceability report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleScore {
    pub vehicle: String,
    pub tau_s: f64,
    pub lifetime_s: f64,
    pub tracked: bool,
    pub tracked_norm: bool,
    pub track: Option<TrackId>,
    pub first_pseudonym: Option<Pseudonym>,
    pub last_pseudonym: Option<Pseudonym>,
    pub changes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceabilityReport {
    pub pi: f64,
    pub pi_norm: f64,
    pub n_vehicles: usize,
    pub vehicles: Vec<VehicleScore>,
}

impl TraceabilityReport {
    pub fn build(
        m: &SegmentMatrix,
        asgn: &TrackAssignment,
        traces: &TraceSet,
        histories: &BTreeMap<String, PseudonymHistory>,
    ) -> Self {
        check_rows(asgn, traces);
        let dt = traces.step_duration_s();
        let vehicles: Vec<VehicleScore> = traces
            .traces()
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let h = histories.get(&t.vehicle_id);
                let tau = asgn.tau_steps[i];
                let tracked = significantly_tracked(tau, t.lifetime_steps());
                VehicleScore {
                    vehicle: t.vehicle_id.clone(),
                    tau_s: tau as f64 * dt,
                    lifetime_s: t.lifetime_steps() as f64 * dt,
                    tracked,
                    tracked_norm: tracked && h.is_some_and(PseudonymHistory::changed),
                    track: asgn.vehicle_track[i].map(|c| m.tracks[c]),
                    first_pseudonym: h.map(|h| h.first),
                    last_pseudonym: h.map(|h| h.last),
                    changes: h.map_or(0, |h| h.changes),
                }
            })
            .collect();
        let mut r = TraceabilityReport { pi: 0.0, pi_norm: 0.0, n_vehicles: 0, vehicles };
        let (pi, pi_norm, n) = r.subset(|_| true);
        r.pi = pi;
        r.pi_norm = pi_norm;
        r.n_vehicles = n;
        r
    }

    /// `(Π, Π_n, N)` over the vehicles selected by `keep`.
    pub fn subset(&self, mut keep: impl FnMut(&VehicleScore) -> bool) -> (f64, f64, usize) {
        let (mut n, mut hit, mut hit_n) = (0usize, 0usize, 0usize);
        for v in self.vehicles.iter().filter(|v| keep(v)) {
            n += 1;
            hit += v.tracked as usize;
            hit_n += v.tracked_norm as usize;
        }
        if n == 0 {
            return (0.0, 0.0, 0);
        }
        (100.0 * hit as f64 / n as f64, 100.0 * hit_n as f64 / n as f64, n)
    }

    /// One row per vehicle.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "vehicle",
            "tau_s",
            "lifetime_s",
            "lambda",
            "lambda_norm",
            "track",
            "first_pseudonym",
            "last_pseudonym",
            "changes",
        ])
        .map_err(csv_err)?;
        let opt = |p: Option<Pseudonym>| p.map(|p| p.to_string()).unwrap_or_default();
        for v in &self.vehicles {
            w.write_record([
                v.vehicle.clone(),
                v.tau_s.to_string(),
                v.lifetime_s.to_string(),
                (v.tracked as u8).to_string(),
                (v.tracked_norm as u8).to_string(),
                v.track.map(|t| t.to_string()).unwrap_or_default(),
                opt(v.first_pseudonym),
                opt(v.last_pseudonym),
                v.changes.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv output: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::TrackPoint;
    use crate::mtt::MatchKind;
    use crate::trace::{Trace, TraceSample};

    fn traces(ids: &[(&str, Step, Step)]) -> TraceSet {
        TraceSet::new(
            ids.iter()
                .map(|&(id, a, b)| Trace {
                    vehicle_id: id.into(),
                    samples: (a..=b).map(|k| TraceSample::at(k, k as f64, 0.0)).collect(),
                })
                .collect(),
            1.0,
        )
        .unwrap()
    }

    fn track(id: TrackId, pts: &[(Step, &str)]) -> TrackRecord {
        TrackRecord {
            track_id: id,
            points: pts
                .iter()
                .map(|&(s, v)| TrackPoint {
                    step: s,
                    pseudonym: Pseudonym(0),
                    kind: MatchKind::Pseudonym,
                    vehicle: Some(v.into()),
                })
                .collect(),
            deleted_at: None,
        }
    }

    #[test]
    fn coasting_gap_within_tolerance() {
        let ts = traces(&[("v", 0, 30)]);
        let pts: Vec<(Step, &str)> = (1..=5).chain(8..=10).map(|k| (k, "v")).collect();
        let m = segment_lengths(&[track(0, &pts)], &ts, 14);
        assert_eq!(m.seconds(0, 0), 10.0);
        let m = segment_lengths(&[track(0, &pts)], &ts, 1);
        assert_eq!(m.seconds(0, 0), 5.0);
    }

    #[test]
    fn foreign_update_breaks_run() {
        let ts = traces(&[("v", 0, 30), ("w", 0, 30)]);
        let pts: Vec<(Step, &str)> =
            (1..=5).map(|k| (k, "v")).chain([(6, "w")]).chain((7..=20).map(|k| (k, "v"))).collect();
        let m = segment_lengths(&[track(0, &pts)], &ts, 14);
        assert_eq!(m.seconds(0, 0), 14.0);
        assert_eq!(m.seconds(1, 0), 1.0);
        let other = segment_lengths(&[track(0, &[(1, "w")])], &ts, 14);
        assert_eq!(other.seconds(0, 0), 0.0);
    }

    #[test]
    fn assignment_examples() {
        let a = assign_tracks(&SegmentMatrix::from_dense(&[vec![10, 3], vec![4, 8]], 1.0));
        assert_eq!(a.vehicle_track, vec![Some(0), Some(1)]);
        assert_eq!(a.total_steps, 18);
        let a = assign_tracks(&SegmentMatrix::from_dense(&[vec![10, 9]], 1.0));
        assert_eq!(a.vehicle_track, vec![Some(0)]);
        let a = assign_tracks(&SegmentMatrix::from_dense(&[vec![0, 0], vec![0, 0]], 1.0));
        assert_eq!(a.tau_steps, vec![0, 0]);
        assert_eq!(a.vehicle_track, vec![None, None]);
    }

    #[test]
    fn threshold_is_inclusive() {
        assert!(significantly_tracked(90, 100));
        assert!(!significantly_tracked(89, 100));
        assert!(significantly_tracked(9, 10));
    }

    #[test]
    fn pi_over_three() {
        let ts = traces(&[("a", 1, 20), ("b", 1, 20), ("c", 1, 20)]);
        let asgn = TrackAssignment {
            vehicle_track: vec![Some(0), Some(1), Some(2)],
            tau_steps: vec![19, 10, 20],
            total_steps: 49,
        };
        let pi = traceability(&asgn, &ts);
        assert!((pi - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn stats_arithmetic() {
        let ts = traces(&[("v", 0, 179), ("w", 0, 50)]);
        let ev = |step, v: &str, e| EventRecord { step, vehicle: v.into(), event: e };
        let events = vec![
            ev(0, "v", SchemeEvent::Enter { pseudonym: Pseudonym(1) }),
            ev(0, "w", SchemeEvent::Enter { pseudonym: Pseudonym(9) }),
            ev(60, "v", SchemeEvent::Change { old: Pseudonym(1), new: Pseudonym(2), silence_steps: 0, confusion: false }),
            ev(120, "v", SchemeEvent::Change { old: Pseudonym(2), new: Pseudonym(3), silence_steps: 0, confusion: true }),
        ];
        let h = pseudonym_histories(&events);
        assert_eq!(h["v"].first, Pseudonym(1));
        assert_eq!(h["v"].last, Pseudonym(3));
        assert!(!h["w"].changed());
        let s = pseudonym_stats(&h, &ts, None);
        assert_eq!(s.concerned, 1);
        assert_eq!(s.avg_lifetime_s, 60.0);
        assert_eq!(s.changes_per_vehicle, 2.0);
        let none = pseudonym_stats(&BTreeMap::new(), &ts, None);
        assert!(none.empty);
    }
}
