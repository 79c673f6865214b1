use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, DOMAIN_LAA};
use crate::schemes::{EventRecord, LaaCycle, SchemeEvent};
use crate::trace::{Step, TraceSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaaConfig {
    pub fraction_compromised: f64,
    /// Beaconing time per pseudonym of a compromised vehicle.
    pub active_period_s: f64,
    /// Silence following each active period. Zero gives the plain
    /// change-every-`active_period_s` reading.
    pub silent_period_s: f64,
    pub victim_radius_m: f64,
    pub victim_min_exposure_s: f64,
    /// Require the exposure to be one uninterrupted stretch.
    pub consecutive_exposure: bool,
}

impl Default for LaaConfig {
    fn default() -> Self {
        LaaConfig {
            fraction_compromised: 0.10,
            active_period_s: 5.0,
            silent_period_s: 3.0,
            victim_radius_m: 50.0,
            victim_min_exposure_s: 15.0,
            consecutive_exposure: false,
        }
    }
}

impl LaaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction_compromised) {
            return Err(Error::Config("laa: fraction_compromised must lie in [0, 1]".into()));
        }
        if !(self.active_period_s > 0.0 && self.active_period_s.is_finite()) {
            return Err(Error::Config("laa: active_period_s must be positive".into()));
        }
        for (name, v) in [
            ("silent_period_s", self.silent_period_s),
            ("victim_radius_m", self.victim_radius_m),
            ("victim_min_exposure_s", self.victim_min_exposure_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("laa: {name} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn cycle(&self, step_duration_s: f64) -> LaaCycle {
        LaaCycle {
            active_steps: ((self.active_period_s / step_duration_s).round() as u32).max(1),
            silent_steps: (self.silent_period_s / step_duration_s).round() as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaaAssignment {
    pub compromised: BTreeSet<String>,
    pub cycle: LaaCycle,
}

/// Picks `⌊fraction · N⌋` compromised vehicles uniformly at random.
pub fn laa_apply(traces: &TraceSet, cfg: &LaaConfig, seed: u64) -> Result<LaaAssignment> {
    cfg.validate()?;
    let n = traces.len();
    let m = ((cfg.fraction_compromised * n as f64) + 1e-9).floor() as usize;
    let cycle = cfg.cycle(traces.step_duration_s());
    if m == 0 {
        if cfg.fraction_compromised > 0.0 {
            log::warn!(
                "laa: fraction {} of {n} vehicles rounds to zero compromised",
                cfg.fraction_compromised
            );
        }
        return Ok(LaaAssignment { compromised: BTreeSet::new(), cycle });
    }
    let mut rng = rng::stream(seed, DOMAIN_LAA, 0);
    let compromised = sample(&mut rng, n, m)
        .into_iter()
        .map(|i| traces.traces()[i].vehicle_id.clone())
        .collect();
    Ok(LaaAssignment { compromised, cycle })
}

/// Non-compromised vehicles that spent at least the minimum exposure within
/// the victim radius of a compromised vehicle and changed pseudonym at least
/// once.
pub fn find_victims(
    traces: &TraceSet,
    compromised: &BTreeSet<String>,
    events: &[EventRecord],
    cfg: &LaaConfig,
) -> BTreeSet<String> {
    if compromised.is_empty() {
        return BTreeSet::new();
    }
    let mut changed: HashMap<&str, u32> = HashMap::new();
    for e in events {
        if matches!(e.event, SchemeEvent::Change { .. }) {
            *changed.entry(e.vehicle.as_str()).or_default() += 1;
        }
    }
    let mut attackers: BTreeMap<Step, Vec<(f64, f64)>> = BTreeMap::new();
    for t in traces.traces().iter().filter(|t| compromised.contains(&t.vehicle_id)) {
        for s in &t.samples {
            attackers.entry(s.step).or_default().push((s.x, s.y));
        }
    }
    let dt = traces.step_duration_s();
    let r2 = cfg.victim_radius_m * cfg.victim_radius_m;
    let mut out = BTreeSet::new();
    for t in traces.traces() {
        if compromised.contains(&t.vehicle_id) || !changed.contains_key(t.vehicle_id.as_str()) {
            continue;
        }
        let (mut total, mut run, mut best_run) = (0u64, 0u64, 0u64);
        for s in &t.samples {
            let near = attackers.get(&s.step).is_some_and(|ps| {
                ps.iter().any(|&(x, y)| (x - s.x).powi(2) + (y - s.y).powi(2) <= r2)
            });
            if near {
                total += 1;
                run += 1;
                best_run = best_run.max(run);
            } else {
                run = 0;
            }
        }
        let steps = if cfg.consecutive_exposure { best_run } else { total };
        if steps as f64 * dt + 1e-9 >= cfg.victim_min_exposure_s {
            out.insert(t.vehicle_id.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtt::Pseudonym;
    use crate::trace::{Trace, TraceSample};

    fn line(id: &str, y: f64, steps: std::ops::Range<Step>) -> Trace {
        Trace {
            vehicle_id: id.into(),
            samples: steps.map(|k| TraceSample { step: k, x: k as f64, y, speed: 1.0, heading: 0.0 }).collect(),
        }
    }

    fn change(v: &str, step: Step) -> EventRecord {
        EventRecord {
            step,
            vehicle: v.into(),
            event: SchemeEvent::Change { old: Pseudonym(0), new: Pseudonym(1), silence_steps: 0, confusion: false },
        }
    }

    #[test]
    fn compromised_count() {
        let traces: Vec<Trace> = (0..3967).map(|i| line(&format!("v{i}"), 0.0, 0..2)).collect();
        let set = TraceSet::new(traces, 1.0).unwrap();
        let cfg = LaaConfig { fraction_compromised: 0.03, ..Default::default() };
        let a = laa_apply(&set, &cfg, 1).unwrap();
        assert_eq!(a.compromised.len(), 119);
        assert_eq!(a, laa_apply(&set, &cfg, 1).unwrap());
        assert_eq!(a.cycle, LaaCycle { active_steps: 5, silent_steps: 3 });
        let none = laa_apply(&set, &LaaConfig { fraction_compromised: 0.0, ..cfg }, 1).unwrap();
        assert!(none.compromised.is_empty());
        let tiny = laa_apply(&set, &LaaConfig { fraction_compromised: 1e-5, ..cfg }, 1).unwrap();
        assert!(tiny.compromised.is_empty());
    }

    #[test]
    fn victim_rules() {
        let set = TraceSet::new(
            vec![
                line("bad", 0.0, 0..30),
                line("near20", 40.0, 0..20),
                line("near10", 40.0, 0..10),
                line("quiet", 40.0, 0..20),
                line("far", 80.0, 0..30),
            ],
            1.0,
        )
        .unwrap();
        let bad: BTreeSet<String> = ["bad".to_string()].into();
        let events = vec![change("near20", 5), change("near20", 12), change("near10", 3), change("far", 3)];
        let v = find_victims(&set, &bad, &events, &LaaConfig::default());
        assert_eq!(v, ["near20".to_string()].into());
    }

    #[test]
    fn consecutive_mode() {
        let mut t = line("v", 40.0, 0..30);
        for s in &mut t.samples[14..16] {
            s.y = 500.0;
        }
        let set = TraceSet::new(vec![line("bad", 0.0, 0..30), t], 1.0).unwrap();
        let bad: BTreeSet<String> = ["bad".to_string()].into();
        let ev = vec![change("v", 2)];
        let cum = LaaConfig::default();
        assert_eq!(find_victims(&set, &bad, &ev, &cum).len(), 1);
        let strict = LaaConfig { consecutive_exposure: true, ..cum };
        assert!(find_victims(&set, &bad, &ev, &strict).is_empty());
    }
}
