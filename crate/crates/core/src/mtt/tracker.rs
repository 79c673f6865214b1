use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{associate, Beacon, KalmanModel, KalmanTrack, Pseudonym, TrackId, TrackStatus};
use crate::error::{Error, Result};
use crate::trace::Step;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Steps without update after which a track turns inactive.
    pub time_to_live: u32,
    /// Further steps an inactive track is kept before deletion.
    pub max_silence: u32,
    /// χ² bound on `d²` for association.
    pub gate_threshold: f64,
    pub process_noise_accel: f64,
    pub meas_noise_pos: f64,
    pub meas_noise_vel: f64,
    pub step_duration_s: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let m = KalmanModel::default();
        TrackerConfig {
            time_to_live: 1,
            max_silence: 13,
            // χ²(4) 0.99 quantile
            gate_threshold: 13.28,
            process_noise_accel: m.process_noise_accel,
            meas_noise_pos: m.meas_noise_pos,
            meas_noise_vel: m.meas_noise_vel,
            step_duration_s: 1.0,
        }
    }
}

impl TrackerConfig {
    pub fn model(&self) -> KalmanModel {
        KalmanModel {
            process_noise_accel: self.process_noise_accel,
            meas_noise_pos: self.meas_noise_pos,
            meas_noise_vel: self.meas_noise_vel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gate_threshold", self.gate_threshold),
            ("process_noise_accel", self.process_noise_accel),
            ("meas_noise_pos", self.meas_noise_pos),
            ("meas_noise_vel", self.meas_noise_vel),
            ("step_duration_s", self.step_duration_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tracker: {name} must be positive")));
            }
        }
        if self.time_to_live == 0 {
            return Err(Error::Config("tracker: time_to_live must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    /// Same pseudonym as the track's last beacon.
    Pseudonym,
    /// New pseudonym linked to an inactive track through gating.
    Associated,
    /// Nothing to link to; a track was started.
    NewTrack,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackUpdate {
    pub track_id: TrackId,
    pub beacon_index: usize,
    pub pseudonym: Pseudonym,
    pub kind: MatchKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutcome {
    /// One entry per beacon, in beacon order.
    pub updates: Vec<TrackUpdate>,
    pub deleted: Vec<TrackId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSnapshot {
    pub id: TrackId,
    pub pseudonym: Pseudonym,
    pub state: [f64; 4],
    pub status: TrackStatus,
    pub last_update_step: Step,
}

/// Tracker state evolved one step at a time.
///
/// Per step `k`: tracks are predicted to `k`; beacons whose pseudonym is
/// already tracked update that track; the remaining beacons are associated
/// against tracks idle for at least `time_to_live` steps only; leftovers start
/// new tracks. Afterwards a track idle for `time_to_live` steps is marked
/// inactive and one idle for `time_to_live + max_silence` steps is deleted.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    model: KalmanModel,
    tracks: Vec<KalmanTrack>,
    by_pseudonym: HashMap<Pseudonym, usize>,
    next_id: TrackId,
    current_step: Option<Step>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Tracker {
            model: cfg.model(),
            cfg,
            tracks: Vec::new(),
            by_pseudonym: HashMap::new(),
            next_id: 0,
            current_step: None,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn model(&self) -> &KalmanModel {
        &self.model
    }

    /// Live tracks in creation order, predicted to the last processed step.
    pub fn tracks(&self) -> &[KalmanTrack] {
        &self.tracks
    }

    pub fn current_step(&self) -> Option<Step> {
        self.current_step
    }

    pub fn track_for(&self, p: Pseudonym) -> Option<&KalmanTrack> {
        self.by_pseudonym.get(&p).map(|&i| &self.tracks[i])
    }

    pub fn snapshot(&self) -> Vec<TrackSnapshot> {
        self.tracks
            .iter()
            .map(|t| TrackSnapshot {
                id: t.id,
                pseudonym: t.pseudonym,
                state: [t.state[0], t.state[1], t.state[2], t.state[3]],
                status: t.status,
                last_update_step: t.last_update_step,
            })
            .collect()
    }

    /// Processes all beacons broadcast at `step`.
    ///
    /// Steps must not go backwards. Beacons carrying a step other than `step`
    /// are rejected.
    pub fn step(&mut self, step: Step, beacons: &[Beacon]) -> Result<StepOutcome> {
        if let Some(prev) = self.current_step {
            if step < prev {
                return Err(Error::Validation(format!(
                    "tracker stepped backwards from {prev} to {step}"
                )));
            }
        }
        if let Some(b) = beacons.iter().find(|b| b.step != step) {
            return Err(Error::Validation(format!(
                "beacon for step {} passed at step {step}",
                b.step
            )));
        }
        self.current_step = Some(step);
        let dt = self.cfg.step_duration_s;
        for t in &mut self.tracks {
            *t = self.model.predict_to(t, step, dt);
        }

        let mut outcome = StepOutcome::default();
        let mut unmatched = Vec::new();
        let mut updated = vec![false; self.tracks.len()];
        for (bi, b) in beacons.iter().enumerate() {
            match self.by_pseudonym.get(&b.pseudonym) {
                Some(&ti) if !updated[ti] => {
                    self.tracks[ti] = self.model.update(&self.tracks[ti], b)?;
                    updated[ti] = true;
                    outcome.updates.push(TrackUpdate {
                        track_id: self.tracks[ti].id,
                        beacon_index: bi,
                        pseudonym: b.pseudonym,
                        kind: MatchKind::Pseudonym,
                    });
                }
                _ => unmatched.push(bi),
            }
        }

        if !unmatched.is_empty() {
            let ttl = self.cfg.time_to_live as i64;
            let candidates: Vec<usize> = (0..self.tracks.len())
                .filter(|&i| !updated[i] && self.tracks[i].idle(step) >= ttl)
                .collect();
            let cand_tracks: Vec<KalmanTrack> =
                candidates.iter().map(|&i| self.tracks[i].clone()).collect();
            let cand_beacons: Vec<Beacon> = unmatched.iter().map(|&bi| beacons[bi]).collect();
            let assoc = associate(&self.model, &cand_tracks, &cand_beacons, self.cfg.gate_threshold);

            for &(track_id, local_b) in &assoc.pairs {
                let ti = candidates[cand_tracks.iter().position(|t| t.id == track_id).unwrap()];
                let bi = unmatched[local_b];
                let b = &beacons[bi];
                let old = self.tracks[ti].pseudonym;
                self.tracks[ti] = self.model.update(&self.tracks[ti], b)?;
                updated[ti] = true;
                if self.by_pseudonym.get(&old) == Some(&ti) {
                    self.by_pseudonym.remove(&old);
                }
                self.by_pseudonym.insert(b.pseudonym, ti);
                outcome.updates.push(TrackUpdate {
                    track_id,
                    beacon_index: bi,
                    pseudonym: b.pseudonym,
                    kind: MatchKind::Associated,
                });
            }
            for &local_b in &assoc.unmatched {
                let bi = unmatched[local_b];
                let b = &beacons[bi];
                let id = self.next_id;
                self.next_id += 1;
                let ti = self.tracks.len();
                self.tracks.push(self.model.initiate(id, b));
                updated.push(true);
                // a duplicate pseudonym within one step keeps the first mapping
                self.by_pseudonym.entry(b.pseudonym).or_insert(ti);
                outcome.updates.push(TrackUpdate {
                    track_id: id,
                    beacon_index: bi,
                    pseudonym: b.pseudonym,
                    kind: MatchKind::NewTrack,
                });
            }
        }
        outcome.updates.sort_by_key(|u| u.beacon_index);

        self.apply_lifecycle(step, &mut outcome.deleted);
        Ok(outcome)
    }

    /// Advances to `step` with no beacons.
    pub fn idle_to(&mut self, step: Step) -> Result<StepOutcome> {
        self.step(step, &[])
    }

    fn apply_lifecycle(&mut self, step: Step, deleted: &mut Vec<TrackId>) {
        let ttl = self.cfg.time_to_live as i64;
        let horizon = ttl + self.cfg.max_silence as i64;
        let before = self.tracks.len();
        self.tracks.retain(|t| {
            let keep = t.idle(step) < horizon;
            if !keep {
                deleted.push(t.id);
            }
            keep
        });
        for t in &mut self.tracks {
            t.status = if t.idle(step) >= ttl {
                TrackStatus::Inactive
            } else {
                TrackStatus::Active
            };
        }
        if self.tracks.len() != before || self.by_pseudonym.len() > self.tracks.len() {
            self.by_pseudonym.clear();
            for (i, t) in self.tracks.iter().enumerate() {
                self.by_pseudonym.insert(t.pseudonym, i);
            }
        }
    }
}
