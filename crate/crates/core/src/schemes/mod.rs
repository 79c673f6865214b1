//! Pseudonym-change schemes: per-vehicle state machines deciding whether to
//! beacon, stay silent or switch to a fresh pseudonym.

mod agent;

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mtt::Pseudonym;
use crate::trace::Step;

pub use agent::{Action, StepDecision, VehicleSchemeState};

/// Tunables shared by the context-aware schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeParams {
    pub min_pseudonym_time_s: f64,
    pub max_pseudonym_time_s: f64,
    pub min_silence_s: f64,
    pub max_silence_s: f64,
    pub neighborhood_radius_m: f64,
    /// Silent neighbors needed before a vehicle follows them into silence.
    pub silent_neighbor_threshold: u32,
    pub pseudonym_time_increment_s: f64,
    /// Largest gate the adversary is assumed to use.
    pub max_gate: f64,
    pub comm_range_m: f64,
    /// Consecutive missed beacons after which a neighbor counts as silent.
    pub missed_beacon_threshold: u32,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            min_pseudonym_time_s: 60.0,
            max_pseudonym_time_s: 300.0,
            min_silence_s: 3.0,
            max_silence_s: 11.0,
            neighborhood_radius_m: 50.0,
            silent_neighbor_threshold: 1,
            pseudonym_time_increment_s: 0.0,
            max_gate: 13.28,
            comm_range_m: 300.0,
            missed_beacon_threshold: 2,
        }
    }
}

impl SchemeParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("min_pseudonym_time_s", self.min_pseudonym_time_s),
            ("max_pseudonym_time_s", self.max_pseudonym_time_s),
            ("min_silence_s", self.min_silence_s),
            ("max_silence_s", self.max_silence_s),
            ("neighborhood_radius_m", self.neighborhood_radius_m),
            ("pseudonym_time_increment_s", self.pseudonym_time_increment_s),
            ("max_gate", self.max_gate),
            ("comm_range_m", self.comm_range_m),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("scheme: {name} must be finite and >= 0")));
            }
        }
        if self.min_pseudonym_time_s > self.max_pseudonym_time_s {
            return Err(Error::Config(
                "scheme: min_pseudonym_time_s exceeds max_pseudonym_time_s".into(),
            ));
        }
        if self.min_silence_s > self.max_silence_s {
            return Err(Error::Config("scheme: min_silence_s exceeds max_silence_s".into()));
        }
        if self.neighborhood_radius_m > self.comm_range_m {
            return Err(Error::Config(
                "scheme: neighborhood_radius_m exceeds comm_range_m".into(),
            ));
        }
        if self.silent_neighbor_threshold == 0 {
            return Err(Error::Config("scheme: silent_neighbor_threshold must be >= 1".into()));
        }
        if self.missed_beacon_threshold == 0 {
            return Err(Error::Config("scheme: missed_beacon_threshold must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_overlay(mut self, o: &CadsOverlay) -> SchemeParams {
        self.max_pseudonym_time_s = o.max_pseudonym_time_s;
        self.max_silence_s = o.max_silence_s;
        self.pseudonym_time_increment_s = o.pseudonym_time_increment_s;
        self.neighborhood_radius_m = o.neighborhood_radius_m;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RspParams {
    pub pseudonym_time_s: f64,
    pub silence_min_s: f64,
    pub silence_max_s: f64,
}

impl Default for RspParams {
    fn default() -> Self {
        RspParams { pseudonym_time_s: 120.0, silence_min_s: 3.0, silence_max_s: 13.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CspParams {
    pub period_s: f64,
    pub silence_s: f64,
}

impl Default for CspParams {
    fn default() -> Self {
        CspParams { period_s: 300.0, silence_s: 8.0 }
    }
}

/// Silence-free periodic change, as in the ETSI (300 s) and SAE (120 s or
/// 1 km, whichever comes last) policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodicParams {
    pub period_s: f64,
    pub min_distance_m: f64,
}

impl Default for PeriodicParams {
    fn default() -> Self {
        PeriodicParams { period_s: 300.0, min_distance_m: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyPreference {
    Low,
    Normal,
    High,
}

impl PrivacyPreference {
    pub const ALL: [PrivacyPreference; 3] =
        [PrivacyPreference::Low, PrivacyPreference::Normal, PrivacyPreference::High];

    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyPreference::Low => "low",
            PrivacyPreference::Normal => "normal",
            PrivacyPreference::High => "high",
        }
    }
}

impl fmt::Display for PrivacyPreference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    Sparse,
    Dense,
}

impl Density {
    pub const ALL: [Density; 2] = [Density::Sparse, Density::Dense];

    pub fn as_str(self) -> &'static str {
        match self {
            Density::Sparse => "sparse",
            Density::Dense => "dense",
        }
    }
}

/// The CADS-specific part of [`SchemeParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CadsOverlay {
    pub max_pseudonym_time_s: f64,
    pub max_silence_s: f64,
    pub pseudonym_time_increment_s: f64,
    pub neighborhood_radius_m: f64,
}

impl CadsOverlay {
    pub const fn new(max_pt: f64, max_silence: f64, increment: f64, radius: f64) -> Self {
        CadsOverlay {
            max_pseudonym_time_s: max_pt,
            max_silence_s: max_silence,
            pseudonym_time_increment_s: increment,
            neighborhood_radius_m: radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityPair {
    pub sparse: CadsOverlay,
    pub dense: CadsOverlay,
}

/// Parameter overlay per privacy preference and traffic density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CadsTable {
    pub low: DensityPair,
    pub normal: DensityPair,
    pub high: DensityPair,
}

impl Default for CadsTable {
    fn default() -> Self {
        CadsTable {
            low: DensityPair {
                sparse: CadsOverlay::new(240.0, 11.0, 60.0, 50.0),
                dense: CadsOverlay::new(240.0, 11.0, 60.0, 50.0),
            },
            normal: DensityPair {
                sparse: CadsOverlay::new(300.0, 11.0, 60.0, 100.0),
                dense: CadsOverlay::new(180.0, 13.0, 60.0, 50.0),
            },
            high: DensityPair {
                sparse: CadsOverlay::new(180.0, 11.0, 0.0, 100.0),
                dense: CadsOverlay::new(180.0, 11.0, 0.0, 100.0),
            },
        }
    }
}

impl CadsTable {
    /// Table whose every entry equals the given static parameters.
    pub fn uniform(p: &SchemeParams) -> Self {
        let o = CadsOverlay::new(
            p.max_pseudonym_time_s,
            p.max_silence_s,
            p.pseudonym_time_increment_s,
            p.neighborhood_radius_m,
        );
        let pair = DensityPair { sparse: o, dense: o };
        CadsTable { low: pair, normal: pair, high: pair }
    }

    pub fn get(&self, pref: PrivacyPreference, density: Density) -> &CadsOverlay {
        let pair = match pref {
            PrivacyPreference::Low => &self.low,
            PrivacyPreference::Normal => &self.normal,
            PrivacyPreference::High => &self.high,
        };
        match density {
            Density::Sparse => &pair.sparse,
            Density::Dense => &pair.dense,
        }
    }

    pub fn get_mut(&mut self, pref: PrivacyPreference, density: Density) -> &mut CadsOverlay {
        let pair = match pref {
            PrivacyPreference::Low => &mut self.low,
            PrivacyPreference::Normal => &mut self.normal,
            PrivacyPreference::High => &mut self.high,
        };
        match density {
            Density::Sparse => &mut pair.sparse,
            Density::Dense => &mut pair.dense,
        }
    }

    fn entries(&self) -> impl Iterator<Item = &CadsOverlay> {
        [&self.low, &self.normal, &self.high].into_iter().flat_map(|p| [&p.sparse, &p.dense])
    }

    pub fn max_silence_s(&self) -> f64 {
        self.entries().map(|o| o.max_silence_s).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CadsParams {
    /// Fields not covered by the table.
    pub base: SchemeParams,
    pub table: CadsTable,
    /// Mean neighbor count from which traffic counts as dense.
    pub density_threshold: f64,
    /// Sliding window for the neighbor-count mean; cumulative when absent.
    pub density_window: Option<usize>,
}

impl Default for CadsParams {
    fn default() -> Self {
        CadsParams {
            base: SchemeParams::default(),
            table: CadsTable::default(),
            density_threshold: 30.0,
            density_window: None,
        }
    }
}

/// Scheme selection together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeConfig {
    /// Always beacon under a single pseudonym.
    None,
    Periodic(PeriodicParams),
    Rsp(RspParams),
    Csp(CspParams),
    Caps(SchemeParams),
    Cads(CadsParams),
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig::Caps(SchemeParams::default())
    }
}

impl SchemeConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeConfig::None => "none",
            SchemeConfig::Periodic(_) => "periodic",
            SchemeConfig::Rsp(_) => "rsp",
            SchemeConfig::Csp(_) => "csp",
            SchemeConfig::Caps(_) => "caps",
            SchemeConfig::Cads(_) => "cads",
        }
    }

    /// Longest silence the scheme can produce, in seconds.
    pub fn max_silence_s(&self) -> f64 {
        match self {
            SchemeConfig::None | SchemeConfig::Periodic(_) => 0.0,
            SchemeConfig::Rsp(p) => p.silence_max_s,
            SchemeConfig::Csp(p) => p.silence_s,
            SchemeConfig::Caps(p) => p.max_silence_s,
            SchemeConfig::Cads(p) => p.table.max_silence_s().max(p.base.max_silence_s),
        }
    }

    /// Communication range used for neighbor observation.
    pub fn comm_range_m(&self) -> f64 {
        match self {
            SchemeConfig::Caps(p) => p.comm_range_m,
            SchemeConfig::Cads(p) => p.base.comm_range_m,
            _ => SchemeParams::default().comm_range_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("scheme: {name} must be positive")))
            }
        };
        match self {
            SchemeConfig::None => Ok(()),
            SchemeConfig::Periodic(p) => {
                pos("period_s", p.period_s)?;
                if !(p.min_distance_m >= 0.0 && p.min_distance_m.is_finite()) {
                    return Err(Error::Config("scheme: min_distance_m must be >= 0".into()));
                }
                Ok(())
            }
            SchemeConfig::Rsp(p) => {
                pos("pseudonym_time_s", p.pseudonym_time_s)?;
                pos("silence_min_s", p.silence_min_s)?;
                pos("silence_max_s", p.silence_max_s)?;
                if p.silence_min_s > p.silence_max_s {
                    return Err(Error::Config("scheme: silence_min_s exceeds silence_max_s".into()));
                }
                Ok(())
            }
            SchemeConfig::Csp(p) => {
                pos("period_s", p.period_s)?;
                pos("silence_s", p.silence_s)?;
                if p.silence_s >= p.period_s {
                    return Err(Error::Config("scheme: silence_s must be below period_s".into()));
                }
                Ok(())
            }
            SchemeConfig::Caps(p) => p.validate(),
            SchemeConfig::Cads(p) => {
                p.base.validate()?;
                for pref in PrivacyPreference::ALL {
                    for d in Density::ALL {
                        p.base.with_overlay(p.table.get(pref, d)).validate().map_err(|e| {
                            Error::Config(format!("cads table {pref}/{}: {e}", d.as_str()))
                        })?;
                    }
                }
                pos("density_threshold", p.density_threshold)?;
                if p.density_window == Some(0) {
                    return Err(Error::Config("scheme: density_window must be >= 1".into()));
                }
                Ok(())
            }
        }
    }
}

/// Duty cycle forced on vehicles controlled by a local active adversary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaaCycle {
    pub active_steps: u32,
    pub silent_steps: u32,
}

/// Entry in the scheme event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SchemeEvent {
    /// First step of the vehicle, with its initial pseudonym.
    Enter { pseudonym: Pseudonym },
    EnterSilence { pseudonym: Pseudonym },
    /// Switch to `new`, after `silence_steps` silent steps. `confusion` marks
    /// an exit triggered by the gating conditions.
    Change { old: Pseudonym, new: Pseudonym, silence_steps: u32, confusion: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub step: Step,
    pub vehicle: String,
    #[serde(flatten)]
    pub event: SchemeEvent,
}

/// Pseudonym number `seq` of vehicle `slot`. Ids grow with `seq` and never
/// collide across vehicles.
pub fn pseudonym_id(slot: u32, seq: u32) -> Pseudonym {
    Pseudonym(((slot as u64) << 32) | seq as u64)
}

/// Slot of the vehicle that owns a pseudonym issued by [`pseudonym_id`].
pub fn pseudonym_slot(p: Pseudonym) -> Option<usize> {
    usize::try_from(p.0 >> 32).ok()
}

/// Age already elapsed on the pseudonym a vehicle enters the network with,
/// uniform on `[1, min_pseudonym_time_s]`.
pub fn initial_age<R: Rng + ?Sized>(rng: &mut R, min_pseudonym_time_s: f64) -> f64 {
    if min_pseudonym_time_s <= 1.0 {
        return min_pseudonym_time_s.max(0.0);
    }
    rng.random_range(1.0..=min_pseudonym_time_s)
}

/// Gating conditions for leaving silence.
pub fn exit_silence_check(d2_own: f64, d2_neighbors: &[f64], max_gate: f64) -> bool {
    let nearer_neighbor = d2_neighbors.iter().any(|&d| d2_own > d);
    nearer_neighbor || d2_own > max_gate
}

/// Overlay of the default table.
pub fn cads_select_params(pref: PrivacyPreference, density: Density) -> CadsOverlay {
    *CadsTable::default().get(pref, density)
}

/// Classifies a neighbor-count history by its mean. An empty history is
/// sparse.
pub fn estimate_density(history: &[u32], threshold: f64) -> Density {
    if history.is_empty() {
        return Density::Sparse;
    }
    let sum: u64 = history.iter().map(|&c| c as u64).sum();
    classify(sum, history.len() as u64, threshold)
}

fn classify(sum: u64, n: u64, threshold: f64) -> Density {
    if n == 0 || (sum as f64) < threshold * n as f64 {
        Density::Sparse
    } else {
        Density::Dense
    }
}

/// Running mean of neighbor counts.
#[derive(Debug, Clone, Default)]
pub struct DensityEstimator {
    sum: u64,
    n: u64,
    window: Option<(usize, VecDeque<u32>)>,
}

impl DensityEstimator {
    pub fn new(window: Option<usize>) -> Self {
        DensityEstimator { sum: 0, n: 0, window: window.map(|w| (w, VecDeque::with_capacity(w))) }
    }

    pub fn observe(&mut self, count: u32) {
        self.sum += count as u64;
        self.n += 1;
        if let Some((w, buf)) = &mut self.window {
            buf.push_back(count);
            if buf.len() > *w {
                let old = buf.pop_front().unwrap_or(0);
                self.sum -= old as u64;
                self.n -= 1;
            }
        }
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum as f64 / self.n as f64)
    }

    pub fn classify(&self, threshold: f64) -> Density {
        classify(self.sum, self.n, threshold)
    }
}
