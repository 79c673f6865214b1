//! Adversaries: a global passive eavesdropper that tracks every beacon, and
//! compromised vehicles that provoke pseudonym changes in their vicinity.

mod laa;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mtt::{Beacon, MatchKind, Pseudonym, TrackId, Tracker, TrackerConfig};
use crate::trace::Step;

pub use laa::{find_victims, laa_apply, LaaAssignment, LaaConfig};

/// One beacon attributed to a track.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub step: Step,
    pub pseudonym: Pseudonym,
    pub kind: MatchKind,
    /// Emitting vehicle, filled in after the run for scoring only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<String>,
}

/// Complete history of one adversary track.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: TrackId,
    pub points: Vec<TrackPoint>,
    /// Step at which the tracker dropped the track, if it did.
    pub deleted_at: Option<Step>,
}

impl TrackRecord {
    /// Maximal step intervals during which the track was active, i.e. less
    /// than `time_to_live` steps since its last update.
    pub fn activity_intervals(&self, time_to_live: u32) -> Vec<(Step, Step)> {
        let ttl = time_to_live.max(1) as Step;
        let mut out: Vec<(Step, Step)> = Vec::new();
        for p in &self.points {
            let (a, b) = (p.step, p.step + ttl - 1);
            match out.last_mut() {
                Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        if let (Some(end), Some(last)) = (self.deleted_at, out.last_mut()) {
            last.1 = last.1.min(end);
        }
        out
    }
}

/// Streaming global passive adversary. It only ever sees beacons.
#[derive(Debug, Clone)]
pub struct Gpa {
    tracker: Tracker,
    records: BTreeMap<TrackId, TrackRecord>,
    last_step: Option<Step>,
}

impl Gpa {
    pub fn new(cfg: TrackerConfig) -> Self {
        Gpa { tracker: Tracker::new(cfg), records: BTreeMap::new(), last_step: None }
    }

    /// Consumes all beacons broadcast at `step`. Skipped steps are idled
    /// through so the track lifecycle keeps running.
    pub fn observe(&mut self, step: Step, beacons: &[Beacon]) -> Result<()> {
        if let Some(prev) = self.last_step {
            if step <= prev {
                return Err(Error::Validation(format!(
                    "beacon stream not ordered: step {step} after {prev}"
                )));
            }
            for s in prev + 1..step {
                self.apply(s, &[])?;
            }
        }
        self.apply(step, beacons)?;
        self.last_step = Some(step);
        Ok(())
    }

    fn apply(&mut self, step: Step, beacons: &[Beacon]) -> Result<()> {
        let out = self.tracker.step(step, beacons)?;
        for u in out.updates {
            let rec = self.records.entry(u.track_id).or_insert_with(|| TrackRecord {
                track_id: u.track_id,
                points: Vec::new(),
                deleted_at: None,
            });
            rec.points.push(TrackPoint { step, pseudonym: u.pseudonym, kind: u.kind, vehicle: None });
        }
        for id in out.deleted {
            if let Some(r) = self.records.get_mut(&id) {
                r.deleted_at = Some(step);
            }
        }
        Ok(())
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    /// Track histories ordered by track id.
    pub fn finish(self) -> Vec<TrackRecord> {
        self.records.into_values().collect()
    }
}

/// Runs the adversary over a beacon stream grouped by step.
pub fn gpa_run<'a, I>(stream: I, cfg: TrackerConfig) -> Result<Vec<TrackRecord>>
where
    I: IntoIterator<Item = (Step, &'a [Beacon])>,
{
    cfg.validate()?;
    let mut gpa = Gpa::new(cfg);
    for (step, beacons) in stream {
        gpa.observe(step, beacons)?;
    }
    Ok(gpa.finish())
}

/// Fills in the emitting vehicle of every track point.
pub fn label_tracks<F>(records: &mut [TrackRecord], mut owner: F)
where
    F: FnMut(Pseudonym) -> Option<String>,
{
    for r in records {
        for p in &mut r.points {
            p.vehicle = owner(p.pseudonym);
        }
    }
}

/// One track per line.
pub fn write_tracks_jsonl<W: Write>(records: &[TrackRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<tracks>", e))?;
    }
    Ok(())
}

pub fn read_tracks_jsonl<R: BufRead>(input: R) -> Result<Vec<TrackRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<tracks>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: "<tracks>".into(),
            line: i as u64 + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(p: u64, step: Step, x: f64) -> Beacon {
        Beacon { pseudonym: Pseudonym(p), step, x, y: 0.0, speed: 10.0, heading: 0.0 }
    }

    #[test]
    fn single_vehicle_one_track() {
        let beacons: Vec<Vec<Beacon>> = (0..20).map(|k| vec![b(1, k, 10.0 * k as f64)]).collect();
        let recs =
            gpa_run(beacons.iter().enumerate().map(|(k, v)| (k as Step, v.as_slice())), TrackerConfig::default())
                .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].points.len(), 20);
        assert_eq!(recs[0].activity_intervals(1), vec![(0, 19)]);
    }

    #[test]
    fn zero_silence_change_links() {
        let beacons: Vec<Vec<Beacon>> =
            (0..20).map(|k| vec![b(if k < 10 { 1 } else { 2 }, k, 10.0 * k as f64)]).collect();
        let recs =
            gpa_run(beacons.iter().enumerate().map(|(k, v)| (k as Step, v.as_slice())), TrackerConfig::default())
                .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].points[10].kind, MatchKind::Associated);
        assert_eq!(recs[0].points[10].pseudonym, Pseudonym(2));
    }

    #[test]
    fn skipped_steps_are_idled() {
        let s0 = [b(1, 0, 0.0)];
        let s30 = [b(1, 30, 300.0)];
        let cfg = TrackerConfig { max_silence: 5, ..Default::default() };
        let recs = gpa_run([(0, &s0[..]), (30, &s30[..])], cfg).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].deleted_at, Some(6));
        assert!(recs[0].activity_intervals(1).iter().all(|&(a, e)| a <= e));
    }

    #[test]
    fn unordered_stream_rejected() {
        let s = [b(1, 3, 0.0)];
        let s2 = [b(1, 2, 0.0)];
        assert!(gpa_run([(3, &s[..]), (2, &s2[..])], TrackerConfig::default()).is_err());
    }

    #[test]
    fn jsonl_roundtrip() {
        let recs = vec![TrackRecord {
            track_id: 3,
            points: vec![TrackPoint { step: 1, pseudonym: Pseudonym(5), kind: MatchKind::NewTrack, vehicle: Some("v".into()) }],
            deleted_at: None,
        }];
        let mut buf = Vec::new();
        write_tracks_jsonl(&recs, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&c| c == b'\n').count(), 1);
        assert_eq!(read_tracks_jsonl(&buf[..]).unwrap(), recs);
    }
}
