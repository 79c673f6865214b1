#![allow(dead_code)]

use vanet_privacy::adversary::{TrackPoint, TrackRecord};
use vanet_privacy::mtt::{Beacon, MatchKind, Pseudonym};
use vanet_privacy::schemes::{EventRecord, SchemeEvent};
use vanet_privacy::trace::{Step, Trace, TraceSample, TraceSet};

/// Traces `v0, v1, …` moving along x, with the given lifetimes in steps.
pub fn lifetime_set(lifetimes: &[i64]) -> TraceSet {
    let traces = lifetimes
        .iter()
        .enumerate()
        .map(|(i, &l)| Trace {
            vehicle_id: format!("v{i}"),
            samples: (0..l).map(|k| TraceSample::at(k, k as f64, 10.0 * i as f64)).collect(),
        })
        .collect();
    TraceSet::new(traces, 1.0).unwrap()
}

pub fn line(id: &str, steps: std::ops::Range<Step>) -> Trace {
    Trace {
        vehicle_id: id.into(),
        samples: steps.map(|k| TraceSample { step: k, x: 10.0 * k as f64, y: 0.0, speed: 10.0, heading: 0.0 }).collect(),
    }
}

fn track(id: u64, updates: &[(&str, std::ops::RangeInclusive<Step>)]) -> TrackRecord {
    let mut points: Vec<TrackPoint> = updates
        .iter()
        .flat_map(|(v, r)| {
            r.clone().map(move |k| TrackPoint {
                step: k,
                pseudonym: Pseudonym(k as u64),
                kind: MatchKind::Pseudonym,
                vehicle: Some(v.to_string()),
            })
        })
        .collect();
    points.sort_by_key(|p| p.step);
    TrackRecord { track_id: id, points, deleted_at: None }
}

fn enter(v: &str, p: u64) -> EventRecord {
    EventRecord { step: 0, vehicle: v.into(), event: SchemeEvent::Enter { pseudonym: Pseudonym(p) } }
}

fn change(v: &str, step: Step, old: u64, new: u64) -> EventRecord {
    EventRecord {
        step,
        vehicle: v.into(),
        event: SchemeEvent::Change { old: Pseudonym(old), new: Pseudonym(new), silence_steps: 0, confusion: false },
    }
}

/// Five traces, six tracks:
/// a (L 20) followed end to end by T0 across a change;
/// b (L 20) split over T1 (10 steps) and T2 (8 steps), T2 left unassigned;
/// c (L 10) on T3 for 5 steps before a foreign update by d breaks the run;
/// d (L 10) on T4 throughout, never changes pseudonym;
/// e (L 30) on T5 for 27 steps with a 2-step coasting gap, exactly 90 %.
pub fn scenario_five_six() -> (TraceSet, Vec<TrackRecord>, Vec<EventRecord>) {
    let traces = TraceSet::new(
        vec![line("a", 0..20), line("b", 0..20), line("c", 0..10), line("d", 0..10), line("e", 0..30)],
        1.0,
    )
    .unwrap();
    let tracks = vec![
        track(0, &[("a", 0..=19)]),
        track(1, &[("b", 0..=9)]),
        track(2, &[("b", 12..=19)]),
        track(3, &[("c", 0..=4), ("d", 5..=5), ("c", 6..=9)]),
        track(4, &[("d", 0..=4), ("d", 6..=9)]),
        track(5, &[("e", 0..=10), ("e", 13..=26)]),
    ];
    let events = vec![
        enter("a", 1),
        enter("b", 2),
        enter("c", 3),
        enter("d", 4),
        enter("e", 5),
        change("a", 10, 1, 11),
        change("b", 10, 2, 12),
        change("c", 5, 3, 13),
        change("e", 11, 5, 15),
    ];
    (traces, tracks, events)
}

pub fn beacon(p: u64, step: Step, x: f64, y: f64, speed: f64, heading: f64) -> Beacon {
    Beacon { pseudonym: Pseudonym(p), step, x, y, speed, heading }
}

pub mod lifecycle {
    use vanet_privacy::mtt::{MatchKind, TrackStatus, Tracker, TrackerConfig};

    use super::beacon;

    fn tracker(ttl: u32, max_silence: u32) -> Tracker {
        Tracker::new(TrackerConfig { time_to_live: ttl, max_silence, ..TrackerConfig::default() })
    }

    fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
        if ok {
            Ok(())
        } else {
            Err(msg.into())
        }
    }

    /// Two vehicles 200 m apart; one stops beaconing after step 3.
    /// Inactive once idle for `ttl` steps, deleted once idle `ttl + max_silence`.
    pub fn inactive_then_deleted() -> Result<(), String> {
        let (ttl, ms) = (2, 3);
        let mut t = tracker(ttl, ms);
        let err = |e: vanet_privacy::Error| e.to_string();
        for k in 0..=3 {
            t.step(k, &[beacon(1, k, 10.0 * k as f64, 0.0, 10.0, 0.0), beacon(2, k, 10.0 * k as f64, 200.0, 10.0, 0.0)])
                .map_err(err)?;
        }
        let status = |t: &Tracker| t.track_for(vanet_privacy::mtt::Pseudonym(1)).map(|x| x.status);
        for k in 4..=10 {
            let out = t.step(k, &[beacon(2, k, 10.0 * k as f64, 200.0, 10.0, 0.0)]).map_err(err)?;
            let idle = k - 3;
            let deleted = out.deleted.contains(&0);
            if idle < (ttl + ms) as i64 {
                ensure(!deleted, format!("deleted early at idle {idle}"))?;
                let want = if idle >= ttl as i64 { TrackStatus::Inactive } else { TrackStatus::Active };
                ensure(status(&t) == Some(want), format!("idle {idle}: status {:?}, want {want:?}", status(&t)))?;
            } else if idle == (ttl + ms) as i64 {
                ensure(deleted && status(&t).is_none(), format!("not deleted at idle {idle}"))?;
            }
        }
        ensure(t.track_for(vanet_privacy::mtt::Pseudonym(2)).map(|x| x.status) == Some(TrackStatus::Active), "other track disturbed")
    }

    /// A known pseudonym continues its track wherever it appears.
    pub fn pseudonym_match_bypasses_gate() -> Result<(), String> {
        let mut t = tracker(1, 5);
        let err = |e: vanet_privacy::Error| e.to_string();
        for k in 0..3 {
            t.step(k, &[beacon(1, k, 10.0 * k as f64, 0.0, 10.0, 0.0), beacon(2, k, 0.0, 50.0, 0.0, 0.0)])
                .map_err(err)?;
        }
        // pseudonym 1 jumps 800 m, far outside any gate, right next to track 2
        let out = t.step(3, &[beacon(1, 3, 0.0, 851.0, 10.0, 0.0)]).map_err(err)?;
        let u = out.updates[0];
        ensure(u.kind == MatchKind::Pseudonym && u.track_id == 0, format!("jump handled as {u:?}"))?;
        ensure(t.tracks().len() == 2, "a track was created for a known pseudonym")
    }

    /// A new pseudonym can only join a track that has gone inactive.
    pub fn reassociation_only_with_inactive() -> Result<(), String> {
        let err = |e: vanet_privacy::Error| e.to_string();
        // ttl 3: the old track is still active one step after the change
        let mut t = tracker(3, 10);
        for k in 0..5 {
            t.step(k, &[beacon(1, k, 10.0 * k as f64, 0.0, 10.0, 0.0)]).map_err(err)?;
        }
        let out = t.step(5, &[beacon(7, 5, 50.0, 0.0, 10.0, 0.0)]).map_err(err)?;
        ensure(out.updates[0].kind == MatchKind::NewTrack, format!("active track taken: {:?}", out.updates[0]))?;

        // after ttl silent steps the same change links
        let mut t = tracker(3, 10);
        for k in 0..5 {
            t.step(k, &[beacon(1, k, 10.0 * k as f64, 0.0, 10.0, 0.0)]).map_err(err)?;
        }
        for k in 5..7 {
            t.idle_to(k).map_err(err)?;
        }
        let out = t.step(7, &[beacon(7, 7, 70.0, 0.0, 10.0, 0.0)]).map_err(err)?;
        let u = out.updates[0];
        ensure(u.kind == MatchKind::Associated && u.track_id == 0, format!("silent change not linked: {u:?}"))?;

        // an active neighbour in gate range is never a candidate
        let mut t = tracker(2, 10);
        for k in 0..5 {
            t.step(k, &[beacon(1, k, 10.0 * k as f64, 0.0, 10.0, 0.0), beacon(2, k, 10.0 * k as f64, 1.0, 10.0, 0.0)])
                .map_err(err)?;
        }
        let out = t
            .step(5, &[beacon(1, 5, 50.0, 0.0, 10.0, 0.0), beacon(9, 5, 50.0, 1.0, 10.0, 0.0)])
            .map_err(err)?;
        ensure(out.updates[1].kind == MatchKind::NewTrack, format!("new pseudonym joined an active track: {:?}", out.updates[1]))
    }
}

/// A quick synthetic experiment: 40 vehicles on a 3×3 grid for 240 s.
pub fn small_config(scheme: vanet_privacy::schemes::SchemeConfig) -> vanet_privacy::experiment::ExperimentConfig {
    use vanet_privacy::experiment::{ExperimentConfig, TraceSource};
    use vanet_privacy::trace::SynthConfig;
    let mut cfg = ExperimentConfig {
        name: "small".into(),
        traces: TraceSource::Synthetic(SynthConfig {
            vehicles: 40,
            blocks_x: 3,
            blocks_y: 3,
            block_length_m: 150.0,
            duration_s: 240.0,
            entry_window_s: 60.0,
            ..SynthConfig::default()
        }),
        scheme,
        seed: 9,
        ..ExperimentConfig::default()
    };
    cfg.monte_carlo.draws = 5_000;
    cfg
}

pub mod oracle {
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};
    use vanet_privacy::qos::FcwScenario;

    /// Lane probabilities with exact estimates: `(P(|n| ≤ w), P(|2w − n| ≤ w))`.
    pub fn lane(s: &FcwScenario) -> (f64, f64) {
        let n = Normal::new(0.0, s.sv_pos_noise_std).unwrap();
        let w = s.lane_half_width_m;
        let off = s.ov2_offset_m - w;
        (n.cdf(w) - n.cdf(-w), n.cdf(off + w) - n.cdf(off - w))
    }

    /// `P(|TTC − T| ≤ tol)` with exact estimates of the vehicle ahead, by
    /// midpoint integration over both sensor noises.
    pub fn p_ttc(s: &FcwScenario, delta_s: f64, tol: f64) -> f64 {
        let n1 = Normal::new(0.0, s.sv_pos_noise_std).unwrap();
        let sd2 = s.sv_speed_noise_factor * (s.ov1_speed + delta_s);
        let n2 = Normal::new(0.0, sd2).unwrap();
        let gap = s.true_ttc_s * delta_s;
        let cells = 1500;
        let (r1, r2) = (9.0 * s.sv_pos_noise_std, 9.0 * sd2);
        let (h1, h2) = (2.0 * r1 / cells as f64, 2.0 * r2 / cells as f64);
        let mut p = 0.0;
        for j in 0..cells {
            let b = -r2 + (j as f64 + 0.5) * h2;
            let closing = delta_s + b;
            if closing <= 0.0 {
                continue;
            }
            let wb = n2.pdf(b) * h2;
            for i in 0..cells {
                let a = -r1 + (i as f64 + 0.5) * h1;
                let ttc = (gap - a) / closing;
                if (ttc - s.true_ttc_s).abs() <= tol {
                    p += n1.pdf(a) * h1 * wb;
                }
            }
        }
        p
    }
}
