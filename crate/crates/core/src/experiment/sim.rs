use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::adversary::{find_victims, label_tracks, laa_apply, Gpa, TrackRecord};
use crate::error::Result;
use crate::metrics::{
    assign_tracks_for, pseudonym_histories, pseudonym_stats, segment_lengths, PseudonymStats,
    TraceabilityReport,
};
use crate::mtt::Beacon;
use crate::qos::{self, track_error, ErrorReservoir, ErrorSamples, FrameError, QosReport};
use crate::rng::{self, derive_seed, SimRng};
use crate::schemes::{pseudonym_slot, EventRecord, PrivacyPreference, VehicleSchemeState};
use crate::trace::{normalize_angle, TraceSample, TraceSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub preference: PrivacyPreference,
    pub vehicles: usize,
    pub pi: f64,
    pub pi_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaaResult {
    pub compromised: usize,
    pub victims: usize,
    /// Pseudonym statistics over the victims.
    pub victim_stats: PseudonymStats,
}

/// Realized change schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStats {
    pub beacons: u64,
    pub changes: u64,
    pub confusion_changes: u64,
    /// Median length of the silences preceding changes.
    pub median_silence_s: Option<f64>,
    /// Median time between two consecutive changes of a vehicle.
    pub median_pseudonym_time_s: Option<f64>,
    pub adversary_tracks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileStats {
    /// Per vehicle per step, decision plus neighbor tracking.
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub samples: usize,
    pub mean_neighbors: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scheme: String,
    pub repetition: u32,
    pub seed: u64,
    pub vehicles: usize,
    pub pi: f64,
    pub pi_norm: f64,
    /// Traceability per preference group present in the mix.
    pub groups: Vec<GroupResult>,
    /// Pooled over all vehicles; absent when no vehicle ever had a neighbor.
    pub qos: Option<QosReport>,
    pub error_samples_seen: u64,
    /// Over vehicles that changed at least once.
    pub pseudonyms: PseudonymStats,
    pub laa: Option<LaaResult>,
    pub schedule: ScheduleStats,
    /// Timing; kept out of the serialized result so results stay
    /// reproducible.
    #[serde(skip)]
    pub profile: Option<ProfileStats>,
}

/// A run's result plus the logs it was computed from.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub report: TraceabilityReport,
    pub events: Vec<EventRecord>,
    pub tracks: Vec<TrackRecord>,
    pub errors: ErrorSamples,
}

/// Seed of repetition `r`.
pub fn repetition_seed(seed: u64, r: u32) -> u64 {
    derive_seed(seed, rng::DOMAIN_REPETITION, r as u64)
}

/// Preference per vehicle: exact quotas, randomly placed.
pub fn assign_preferences(cfg: &ExperimentConfig, n: usize, seed: u64) -> Vec<PrivacyPreference> {
    let q = cfg.preferences.quotas(n);
    let mut prefs: Vec<PrivacyPreference> = PrivacyPreference::ALL
        .iter()
        .zip(q)
        .flat_map(|(&p, c)| std::iter::repeat_n(p, c))
        .collect();
    prefs.shuffle(&mut rng::stream(seed, rng::DOMAIN_PREFERENCE, 0));
    prefs
}

/// Uniform grid over beacon positions for range queries.
pub struct BeaconGrid<'a> {
    cell: f64,
    beacons: &'a [(usize, Beacon)],
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> BeaconGrid<'a> {
    pub fn new(beacons: &'a [(usize, Beacon)], range: f64) -> Self {
        let cell = range.max(1.0);
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, (_, b)) in beacons.iter().enumerate() {
            cells.entry(Self::key(cell, b.x, b.y)).or_default().push(i);
        }
        BeaconGrid { cell, beacons, cells }
    }

    fn key(cell: f64, x: f64, y: f64) -> (i64, i64) {
        ((x / cell).floor() as i64, (y / cell).floor() as i64)
    }

    /// Beacons of vehicles other than `observer` within `range` of `(x, y)`,
    /// in emission order.
    pub fn visible(&self, observer: usize, x: f64, y: f64, range: f64) -> Vec<Beacon> {
        let (cx, cy) = Self::key(self.cell, x, y);
        let reach = (range / self.cell).ceil() as i64;
        let mut idx = Vec::new();
        for gx in cx - reach..=cx + reach {
            for gy in cy - reach..=cy + reach {
                if let Some(v) = self.cells.get(&(gx, gy)) {
                    idx.extend(v.iter().copied().filter(|&i| {
                        let (o, b) = &self.beacons[i];
                        *o != observer && (b.x - x).powi(2) + (b.y - y).powi(2) <= range * range
                    }));
                }
            }
        }
        idx.sort_unstable();
        idx.into_iter().map(|i| self.beacons[i].1).collect()
    }
}

struct VehicleOutcome {
    beacon: Option<Beacon>,
    events: Vec<crate::schemes::SchemeEvent>,
    errors: Vec<FrameError>,
    nanos: Option<u128>,
    neighbors: usize,
}

fn noisy(sample: &TraceSample, cfg: &ExperimentConfig, rng: &mut SimRng) -> TraceSample {
    let n = cfg.beacon_noise;
    if n.is_zero() {
        return *sample;
    }
    let g = |std: f64, rng: &mut SimRng| {
        if std > 0.0 {
            Normal::new(0.0, std).expect("valid std").sample(rng)
        } else {
            0.0
        }
    };
    TraceSample {
        step: sample.step,
        x: sample.x + g(n.position_m, rng),
        y: sample.y + g(n.position_m, rng),
        speed: (sample.speed + g(n.speed_mps, rng)).max(0.0),
        heading: normalize_angle(sample.heading + g(n.heading_rad, rng)),
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Runs repetition `repetition` of `cfg` on prepared traces.
pub fn simulate(cfg: &ExperimentConfig, traces: &TraceSet, repetition: u32) -> Result<RunOutput> {
    let seed = repetition_seed(cfg.seed, repetition);
    let dt = traces.step_duration_s();
    let tracker_cfg = cfg.tracker_config(dt);
    let range = cfg.scheme.comm_range_m();
    let n = traces.len();

    let prefs = assign_preferences(cfg, n, seed);
    let laa = match &cfg.laa {
        Some(l) if l.fraction_compromised > 0.0 => Some(laa_apply(traces, l, seed)?),
        _ => None,
    };
    let mut agents: Vec<VehicleSchemeState> = traces
        .traces()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut a = VehicleSchemeState::new(
                i as u32,
                &cfg.scheme,
                prefs[i],
                tracker_cfg,
                rng::stream(seed, rng::DOMAIN_VEHICLE, i as u64),
            );
            if let Some(l) = &laa {
                if l.compromised.contains(&t.vehicle_id) {
                    a.set_laa(l.cycle);
                }
            }
            a
        })
        .collect();
    let mut noise_rngs: Vec<SimRng> =
        (0..n).map(|i| rng::stream(seed, rng::DOMAIN_BEACON_NOISE, i as u64)).collect();

    let mut gpa = Gpa::new(tracker_cfg);
    let mut reservoir =
        ErrorReservoir::new(cfg.error_pool_capacity, rng::stream(seed, rng::DOMAIN_RESERVOIR, 0));
    let mut events = Vec::new();
    let mut timings = Vec::new();
    let mut neighbor_sum = 0u64;
    let mut beacons_sent = 0u64;
    let mut prev: Vec<(usize, Beacon)> = Vec::new();

    let Some((first, last)) = traces.step_range() else {
        return finish(cfg, traces, repetition, seed, &prefs, laa.as_ref().map(|l| &l.compromised), gpa, reservoir, events, timings, 0, 0);
    };
    for k in first..=last {
        let grid = BeaconGrid::new(&prev, range);
        let work = |i: usize, agent: &mut VehicleSchemeState, nrng: &mut SimRng| -> Option<Result<VehicleOutcome>> {
            let t = &traces.traces()[i];
            let truth = t.sample_at(k)?;
            let received = grid.visible(i, truth.x, truth.y, range);
            let reported = noisy(truth, cfg, nrng);
            let start = cfg.profile.then(Instant::now);
            let decision = match agent.step(&reported, &received, k) {
                Ok(d) => d,
                Err(e) => return Some(Err(e)),
            };
            let nanos = start.map(|s| s.elapsed().as_nanos());
            let observer = t.sample_at(k - 1).unwrap_or(truth);
            let errors = agent
                .neighbor_tracker()
                .tracks()
                .iter()
                .filter_map(|tr| {
                    let owner = &traces.traces()[pseudonym_slot(tr.pseudonym)?];
                    let truth = owner.sample_at(k - 1)?;
                    let near = (truth.x - observer.x).powi(2) + (truth.y - observer.y).powi(2) <= range * range;
                    near.then(|| track_error(tr, truth))
                })
                .collect();
            Some(Ok(VehicleOutcome {
                beacon: decision.beacon,
                events: decision.events,
                errors,
                nanos,
                neighbors: received.len(),
            }))
        };
        let outcomes: Vec<(usize, Result<VehicleOutcome>)> = if cfg.profile {
            agents
                .iter_mut()
                .zip(noise_rngs.iter_mut())
                .enumerate()
                .filter_map(|(i, (a, r))| work(i, a, r).map(|o| (i, o)))
                .collect()
        } else {
            agents
                .par_iter_mut()
                .zip(noise_rngs.par_iter_mut())
                .enumerate()
                .filter_map(|(i, (a, r))| work(i, a, r).map(|o| (i, o)))
                .collect()
        };

        let mut emitted = Vec::new();
        for (i, o) in outcomes {
            let o = o?;
            let id = &traces.traces()[i].vehicle_id;
            for e in o.events {
                events.push(EventRecord { step: k, vehicle: id.clone(), event: e });
            }
            if let Some(b) = o.beacon {
                emitted.push((i, b));
            }
            for e in o.errors {
                reservoir.offer(e);
            }
            if let Some(ns) = o.nanos {
                timings.push(ns as f64 / 1e6);
                neighbor_sum += o.neighbors as u64;
            }
        }
        let step_beacons: Vec<Beacon> = emitted.iter().map(|(_, b)| *b).collect();
        beacons_sent += step_beacons.len() as u64;
        gpa.observe(k, &step_beacons)?;
        prev = emitted;
    }
    finish(
        cfg,
        traces,
        repetition,
        seed,
        &prefs,
        laa.as_ref().map(|l| &l.compromised),
        gpa,
        reservoir,
        events,
        timings,
        neighbor_sum,
        beacons_sent,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cfg: &ExperimentConfig,
    traces: &TraceSet,
    repetition: u32,
    seed: u64,
    prefs: &[PrivacyPreference],
    compromised: Option<&BTreeSet<String>>,
    gpa: Gpa,
    reservoir: ErrorReservoir,
    events: Vec<EventRecord>,
    mut timings: Vec<f64>,
    neighbor_sum: u64,
    beacons: u64,
) -> Result<RunOutput> {
    let tracker_cfg = *gpa.tracker().config();
    let mut tracks = gpa.finish();
    label_tracks(&mut tracks, |p| {
        pseudonym_slot(p).and_then(|s| traces.traces().get(s)).map(|t| t.vehicle_id.clone())
    });
    let tolerance = tracker_cfg.time_to_live as i64 + tracker_cfg.max_silence as i64;
    let m = segment_lengths(&tracks, traces, tolerance);
    let asgn = assign_tracks_for(&m, traces);
    let histories = pseudonym_histories(&events);
    let report = TraceabilityReport::build(&m, &asgn, traces, &histories);

    let groups = PrivacyPreference::ALL
        .iter()
        .filter(|&&p| cfg.preferences.weight(p) > 0.0)
        .map(|&p| {
            let mut i = 0;
            let (pi, pi_norm, vehicles) = report.subset(|_| {
                let keep = prefs[i] == p;
                i += 1;
                keep
            });
            GroupResult { preference: p, vehicles, pi, pi_norm }
        })
        .collect();

    let seen = reservoir.seen();
    let errors = reservoir.into_samples();
    let qos: Option<QosReport> = if errors.is_empty() {
        log::warn!("no neighbor estimates collected; QoS not evaluated");
        None
    } else {
        Some(qos::evaluate(&errors, &cfg.fcw, cfg.monte_carlo, derive_seed(seed, rng::DOMAIN_MONTE_CARLO, 0))?)
    };

    let laa = compromised.map(|c| {
        let l = cfg.laa.as_ref().expect("laa configured");
        let victims = find_victims(traces, c, &events, l);
        LaaResult {
            compromised: c.len(),
            victims: victims.len(),
            victim_stats: pseudonym_stats(&histories, traces, Some(&victims)),
        }
    });
    let honest: BTreeSet<String> = traces
        .traces()
        .iter()
        .filter(|t| compromised.is_none_or(|c| !c.contains(&t.vehicle_id)))
        .filter(|t| histories.get(&t.vehicle_id).is_some_and(|h| h.changes > 0))
        .map(|t| t.vehicle_id.clone())
        .collect();
    let pseudonyms = pseudonym_stats(&histories, traces, Some(&honest));

    let dt = traces.step_duration_s();
    let mut silences: Vec<f64> = Vec::new();
    let mut periods: Vec<f64> = Vec::new();
    let (mut changes, mut confusions) = (0u64, 0u64);
    for h in histories.values() {
        changes += h.changes as u64;
        confusions += h.confusions as u64;
        silences.extend(h.silences.iter().filter(|&&s| s > 0).map(|&s| s as f64 * dt));
        periods.extend(h.change_steps.windows(2).map(|w| (w[1] - w[0]) as f64 * dt));
    }
    let schedule = ScheduleStats {
        beacons,
        changes,
        confusion_changes: confusions,
        median_silence_s: median(&mut silences),
        median_pseudonym_time_s: median(&mut periods),
        adversary_tracks: tracks.len(),
    };

    let profile = (!timings.is_empty()).then(|| {
        let samples = timings.len();
        let mean_ms = timings.iter().sum::<f64>() / samples as f64;
        timings.sort_by(f64::total_cmp);
        let p95_ms = timings[((samples as f64 * 0.95).ceil() as usize).clamp(1, samples) - 1];
        ProfileStats { mean_ms, p95_ms, samples, mean_neighbors: neighbor_sum as f64 / samples as f64 }
    });

    let result = RunResult {
        scheme: cfg.scheme.name().into(),
        repetition,
        seed,
        vehicles: traces.len(),
        pi: report.pi,
        pi_norm: report.pi_norm,
        groups,
        qos,
        error_samples_seen: seen,
        pseudonyms,
        laa,
        schedule,
        profile,
    };
    Ok(RunOutput { result, report, events, tracks, errors })
}
