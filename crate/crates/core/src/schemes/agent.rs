use crate::error::Result;
use crate::mtt::{Beacon, KalmanModel, KalmanTrack, Pseudonym, Tracker, TrackerConfig};
use crate::rng::SimRng;
use crate::trace::{Step, TraceSample};

use super::{
    initial_age, pseudonym_id, CadsParams, DensityEstimator, LaaCycle, PrivacyPreference,
    SchemeConfig, SchemeEvent, SchemeParams,
};

use rand::Rng;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Beacon,
    Silent,
    /// Switch to a fresh pseudonym and beacon with it.
    ChangePseudonym,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    pub action: Action,
    pub beacon: Option<Beacon>,
    pub events: Vec<SchemeEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Active,
    Silent,
}

/// Scheme state of one vehicle, including its view of the neighbors.
#[derive(Debug, Clone)]
pub struct VehicleSchemeState {
    slot: u32,
    scheme: SchemeConfig,
    pref: PrivacyPreference,
    params: SchemeParams,
    dt: f64,
    mode: Mode,
    seq: u32,
    pseudonym: Pseudonym,
    age_s: f64,
    silence_steps: u32,
    silence_target_s: f64,
    effective_min_pseudonym_time_s: f64,
    distance_since_change_m: f64,
    last_pos: Option<(f64, f64)>,
    first_step: Option<Step>,
    tracker: Tracker,
    model: KalmanModel,
    own_track: Option<KalmanTrack>,
    density: DensityEstimator,
    laa: Option<LaaCycle>,
    rng: SimRng,
}

impl VehicleSchemeState {
    /// Fresh vehicle `slot`. The initial pseudonym age is drawn here.
    pub fn new(
        slot: u32,
        scheme: &SchemeConfig,
        pref: PrivacyPreference,
        tracker_cfg: TrackerConfig,
        mut rng: SimRng,
    ) -> Self {
        let params = match scheme {
            SchemeConfig::Caps(p) => *p,
            SchemeConfig::Cads(c) => c.base.with_overlay(c.table.get(pref, super::Density::Sparse)),
            _ => SchemeParams::default(),
        };
        let min_pt = match scheme {
            SchemeConfig::None => 1.0,
            SchemeConfig::Periodic(p) => p.period_s,
            SchemeConfig::Rsp(p) => p.pseudonym_time_s,
            SchemeConfig::Csp(p) => p.period_s,
            SchemeConfig::Caps(p) => p.min_pseudonym_time_s,
            SchemeConfig::Cads(c) => c.base.min_pseudonym_time_s,
        };
        let age_s = initial_age(&mut rng, min_pt);
        let window = match scheme {
            SchemeConfig::Cads(c) => c.density_window,
            _ => None,
        };
        VehicleSchemeState {
            slot,
            scheme: *scheme,
            pref,
            params,
            dt: tracker_cfg.step_duration_s,
            mode: Mode::Active,
            seq: 0,
            pseudonym: pseudonym_id(slot, 0),
            age_s,
            silence_steps: 0,
            silence_target_s: 0.0,
            effective_min_pseudonym_time_s: params.min_pseudonym_time_s,
            distance_since_change_m: 0.0,
            last_pos: None,
            first_step: None,
            model: tracker_cfg.model(),
            tracker: Tracker::new(tracker_cfg),
            own_track: None,
            density: DensityEstimator::new(window),
            laa: None,
            rng,
        }
    }

    /// Replaces the scheme by a fixed duty cycle with an unlimited pool.
    pub fn set_laa(&mut self, cycle: LaaCycle) {
        self.laa = Some(cycle);
    }

    pub fn is_compromised(&self) -> bool {
        self.laa.is_some()
    }

    pub fn slot(&self) -> u32 {
        self.slot
    }

    pub fn preference(&self) -> PrivacyPreference {
        self.pref
    }

    pub fn pseudonym(&self) -> Pseudonym {
        self.pseudonym
    }

    pub fn pseudonym_age_s(&self) -> f64 {
        self.age_s
    }

    pub fn is_silent(&self) -> bool {
        self.mode == Mode::Silent
    }

    /// Pseudonyms consumed so far.
    pub fn pseudonym_pool_used(&self) -> u32 {
        self.seq + 1
    }

    pub fn effective_min_pseudonym_time_s(&self) -> f64 {
        self.effective_min_pseudonym_time_s
    }

    /// Parameters currently bound (CAPS/CADS).
    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn neighbor_tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn neighbor_count_mean(&self) -> Option<f64> {
        self.density.mean()
    }

    /// One step: `own` is the vehicle's sample at step `k`, `received` the
    /// beacons broadcast by others at `k − 1` within range. `global_step`
    /// drives the synchronized scheme.
    pub fn step(
        &mut self,
        own: &TraceSample,
        received: &[Beacon],
        global_step: Step,
    ) -> Result<StepDecision> {
        let k = own.step;
        self.tracker.step(k - 1, received)?;
        self.density.observe(received.len() as u32);

        let mut events = Vec::new();
        if self.first_step.is_none() {
            self.first_step = Some(k);
            events.push(SchemeEvent::Enter { pseudonym: self.pseudonym });
        }
        if let Some((x, y)) = self.last_pos {
            self.distance_since_change_m += (own.x - x).hypot(own.y - y);
        }
        self.last_pos = Some((own.x, own.y));

        let action = if let Some(cycle) = self.laa {
            self.laa_step(k, cycle, &mut events)
        } else {
            match self.scheme {
                SchemeConfig::None => Action::Beacon,
                SchemeConfig::Periodic(p) => {
                    if self.age_s + EPS >= p.period_s
                        && self.distance_since_change_m + EPS >= p.min_distance_m
                    {
                        self.change(0, false, &mut events);
                        Action::ChangePseudonym
                    } else {
                        Action::Beacon
                    }
                }
                SchemeConfig::Rsp(p) => self.rsp_step(&p, &mut events),
                SchemeConfig::Csp(p) => self.csp_step(p.period_s, p.silence_s, global_step, &mut events),
                SchemeConfig::Caps(_) => self.caps_step(own, &mut events)?,
                SchemeConfig::Cads(c) => self.cads_step(own, &c, &mut events)?,
            }
        };

        let beacon = match action {
            Action::Silent => {
                self.silence_steps += 1;
                None
            }
            Action::Beacon | Action::ChangePseudonym => {
                let b = Beacon {
                    pseudonym: self.pseudonym,
                    step: k,
                    x: own.x,
                    y: own.y,
                    speed: own.speed,
                    heading: own.heading,
                };
                self.own_track = Some(match &self.own_track {
                    Some(t) => {
                        let p = self.model.predict_to(t, k, self.dt);
                        self.model.update(&p, &b)?
                    }
                    None => self.model.initiate(0, &b),
                });
                Some(b)
            }
        };
        self.age_s += self.dt;
        Ok(StepDecision { action, beacon, events })
    }

    fn enter_silence(&mut self, events: &mut Vec<SchemeEvent>) {
        self.mode = Mode::Silent;
        self.silence_steps = 0;
        events.push(SchemeEvent::EnterSilence { pseudonym: self.pseudonym });
    }

    fn change(&mut self, silence_steps: u32, confusion: bool, events: &mut Vec<SchemeEvent>) {
        let old = self.pseudonym;
        self.seq += 1;
        self.pseudonym = pseudonym_id(self.slot, self.seq);
        self.mode = Mode::Active;
        self.silence_steps = 0;
        self.age_s = 0.0;
        self.distance_since_change_m = 0.0;
        events.push(SchemeEvent::Change { old, new: self.pseudonym, silence_steps, confusion });
    }

    fn silence_elapsed_s(&self) -> f64 {
        self.silence_steps as f64 * self.dt
    }

    fn laa_step(&mut self, k: Step, cycle: LaaCycle, events: &mut Vec<SchemeEvent>) -> Action {
        let period = (cycle.active_steps + cycle.silent_steps).max(1) as Step;
        let since = k - self.first_step.unwrap_or(k);
        let phase = since.rem_euclid(period);
        if phase == 0 && since > 0 {
            let s = self.silence_steps;
            self.change(s, false, events);
            Action::ChangePseudonym
        } else if phase < cycle.active_steps as Step {
            Action::Beacon
        } else {
            if self.mode == Mode::Active {
                self.enter_silence(events);
            }
            Action::Silent
        }
    }

    fn rsp_step(&mut self, p: &super::RspParams, events: &mut Vec<SchemeEvent>) -> Action {
        match self.mode {
            Mode::Active if self.age_s + EPS < p.pseudonym_time_s => Action::Beacon,
            Mode::Active => {
                self.enter_silence(events);
                self.silence_target_s = self.rng.random_range(p.silence_min_s..=p.silence_max_s);
                Action::Silent
            }
            Mode::Silent if self.silence_elapsed_s() + EPS >= self.silence_target_s => {
                let s = self.silence_steps;
                self.change(s, false, events);
                Action::ChangePseudonym
            }
            Mode::Silent => Action::Silent,
        }
    }

    fn csp_step(
        &mut self,
        period_s: f64,
        silence_s: f64,
        global_step: Step,
        events: &mut Vec<SchemeEvent>,
    ) -> Action {
        let period = ((period_s / self.dt).round() as Step).max(1);
        let silence = ((silence_s / self.dt).round() as Step).max(1);
        let in_window = global_step > 0 && global_step.rem_euclid(period) < silence;
        match (self.mode, in_window) {
            (Mode::Active, true) => {
                self.enter_silence(events);
                Action::Silent
            }
            (Mode::Silent, true) => Action::Silent,
            (Mode::Silent, false) => {
                let s = self.silence_steps;
                self.change(s, false, events);
                Action::ChangePseudonym
            }
            (Mode::Active, false) => Action::Beacon,
        }
    }

    /// Neighbor tracks, predicted to step `k`, that missed enough beacons and
    /// lie within the neighborhood radius.
    fn silent_neighbors(&self, own: &TraceSample) -> Vec<KalmanTrack> {
        let k = own.step;
        let missed = self.params.missed_beacon_threshold as i64;
        let r2 = self.params.neighborhood_radius_m * self.params.neighborhood_radius_m;
        self.tracker
            .tracks()
            .iter()
            .filter(|t| (k - 1) - t.last_update_step >= missed)
            .map(|t| self.model.predict_to(t, k, self.dt))
            .filter(|t| {
                let (x, y) = t.position();
                (x - own.x).powi(2) + (y - own.y).powi(2) <= r2
            })
            .collect()
    }

    fn count_silent_neighbors(&self, own: &TraceSample) -> usize {
        let k = own.step;
        let missed = self.params.missed_beacon_threshold as i64;
        let r2 = self.params.neighborhood_radius_m * self.params.neighborhood_radius_m;
        let lead = self.dt;
        self.tracker
            .tracks()
            .iter()
            .filter(|t| (k - 1) - t.last_update_step >= missed)
            .filter(|t| {
                let (x, y) = t.position();
                let (vx, vy) = t.velocity();
                let steps = (k - t.state_step) as f64;
                let px = x + vx * lead * steps;
                let py = y + vy * lead * steps;
                (px - own.x).powi(2) + (py - own.y).powi(2) <= r2
            })
            .count()
    }

    fn caps_step(&mut self, own: &TraceSample, events: &mut Vec<SchemeEvent>) -> Result<Action> {
        match self.mode {
            Mode::Active => {
                if self.age_s + EPS < self.effective_min_pseudonym_time_s {
                    return Ok(Action::Beacon);
                }
                let threshold = self.params.silent_neighbor_threshold.max(1) as usize;
                if self.count_silent_neighbors(own) >= threshold
                    || self.age_s + EPS >= self.params.max_pseudonym_time_s
                {
                    self.enter_silence(events);
                    Ok(Action::Silent)
                } else {
                    Ok(Action::Beacon)
                }
            }
            Mode::Silent => {
                let elapsed = self.silence_elapsed_s();
                if elapsed + EPS < self.params.min_silence_s {
                    return Ok(Action::Silent);
                }
                let confusion = self.exit_conditions_hold(own)?;
                if confusion || elapsed + EPS >= self.params.max_silence_s {
                    let s = self.silence_steps;
                    self.change(s, confusion, events);
                    if confusion {
                        self.effective_min_pseudonym_time_s = (self.effective_min_pseudonym_time_s
                            + self.params.pseudonym_time_increment_s)
                            .min(self.params.max_pseudonym_time_s.max(self.params.min_pseudonym_time_s));
                    }
                    Ok(Action::ChangePseudonym)
                } else {
                    Ok(Action::Silent)
                }
            }
        }
    }

    fn exit_conditions_hold(&self, own: &TraceSample) -> Result<bool> {
        let Some(track) = &self.own_track else {
            return Ok(true);
        };
        let probe = Beacon {
            pseudonym: self.pseudonym,
            step: own.step,
            x: own.x,
            y: own.y,
            speed: own.speed,
            heading: own.heading,
        };
        let own_pred = self.model.predict_to(track, own.step, self.dt);
        let d2_own = self.model.gate_distance(&own_pred, &probe)?.d2;
        let mut d2_n = Vec::new();
        for t in self.silent_neighbors(own) {
            d2_n.push(self.model.gate_distance(&t, &probe)?.d2);
        }
        Ok(super::exit_silence_check(d2_own, &d2_n, self.params.max_gate))
    }

    fn cads_step(
        &mut self,
        own: &TraceSample,
        c: &CadsParams,
        events: &mut Vec<SchemeEvent>,
    ) -> Result<Action> {
        if self.mode == Mode::Active {
            let density = self.density.classify(c.density_threshold);
            self.params = c.base.with_overlay(c.table.get(self.pref, density));
        }
        self.caps_step(own, events)
    }
}
