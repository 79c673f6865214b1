use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::LaaConfig;
use crate::error::{Error, Result};
use crate::mtt::TrackerConfig;
use crate::qos::{FcwScenario, McConfig};
use crate::schemes::{PrivacyPreference, SchemeConfig};
use crate::trace::{
    derive_kinematics, filter_traces, generate_synthetic, load_traces, FilterConfig, SynthConfig,
    TraceSet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSource {
    /// CSV rows `time,id,x,y`. Relative paths resolve against the config
    /// file's directory.
    File {
        path: PathBuf,
        #[serde(default = "one")]
        step_duration_s: f64,
    },
    Synthetic(SynthConfig),
}

fn one() -> f64 {
    1.0
}

impl Default for TraceSource {
    fn default() -> Self {
        TraceSource::Synthetic(SynthConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPart {
    Start,
    End,
}

/// Restricts a run to a window cut from the start or end of the traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub part: WindowPart,
    #[serde(default = "six_minutes")]
    pub window_s: f64,
    #[serde(default = "one_minute")]
    pub min_duration_s: f64,
}

fn six_minutes() -> f64 {
    360.0
}

fn one_minute() -> f64 {
    60.0
}

/// Share of vehicles per privacy preference, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreferenceMix {
    pub low: f64,
    pub normal: f64,
    pub high: f64,
}

impl Default for PreferenceMix {
    fn default() -> Self {
        PreferenceMix { low: 0.0, normal: 100.0, high: 0.0 }
    }
}

impl PreferenceMix {
    pub fn only(p: PrivacyPreference) -> Self {
        let mut m = PreferenceMix { low: 0.0, normal: 0.0, high: 0.0 };
        *m.weight_mut(p) = 100.0;
        m
    }

    pub fn weight(&self, p: PrivacyPreference) -> f64 {
        match p {
            PrivacyPreference::Low => self.low,
            PrivacyPreference::Normal => self.normal,
            PrivacyPreference::High => self.high,
        }
    }

    fn weight_mut(&mut self, p: PrivacyPreference) -> &mut f64 {
        match p {
            PrivacyPreference::Low => &mut self.low,
            PrivacyPreference::Normal => &mut self.normal,
            PrivacyPreference::High => &mut self.high,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.low, self.normal, self.high];
        if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Config("preferences: weights must be >= 0".into()));
        }
        if (w.iter().sum::<f64>() - 100.0).abs() > 1e-6 {
            return Err(Error::Config("preferences: weights must sum to 100".into()));
        }
        Ok(())
    }

    /// Vehicles per preference for a population of `n`, by largest
    /// remainder.
    pub fn quotas(&self, n: usize) -> [usize; 3] {
        let exact: Vec<f64> = PrivacyPreference::ALL.iter().map(|&p| self.weight(p) * n as f64 / 100.0).collect();
        let mut q: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut rest = n - q.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            if self.weight(PrivacyPreference::ALL[i]) > 0.0 {
                q[i] += 1;
                rest -= 1;
            }
        }
        [q[0], q[1], q[2]]
    }
}

/// Tracker settings shared by the adversary and the vehicles' neighbor
/// tracking. `max_silence` defaults to the longest silence the evaluated
/// scheme (and compromised vehicles) can produce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub time_to_live: u32,
    pub max_silence: Option<u32>,
    pub gate_threshold: f64,
    pub process_noise_accel: f64,
    pub meas_noise_pos: f64,
    pub meas_noise_vel: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        let t = TrackerConfig::default();
        TrackingConfig {
            time_to_live: t.time_to_live,
            max_silence: None,
            gate_threshold: t.gate_threshold,
            process_noise_accel: t.process_noise_accel,
            meas_noise_pos: t.meas_noise_pos,
            meas_noise_vel: t.meas_noise_vel,
        }
    }
}

/// Gaussian noise added to broadcast beacons (standard deviations).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeaconNoise {
    pub position_m: f64,
    pub speed_mps: f64,
    pub heading_rad: f64,
}

impl BeaconNoise {
    pub fn is_zero(&self) -> bool {
        self.position_m == 0.0 && self.speed_mps == 0.0 && self.heading_rad == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub traces: TraceSource,
    pub filter: FilterConfig,
    pub window: Option<WindowSpec>,
    pub scheme: SchemeConfig,
    pub preferences: PreferenceMix,
    pub tracking: TrackingConfig,
    pub laa: Option<LaaConfig>,
    pub fcw: FcwScenario,
    pub monte_carlo: McConfig,
    pub beacon_noise: BeaconNoise,
    /// Bound on pooled estimation errors kept for the Monte Carlo.
    pub error_pool_capacity: usize,
    pub seed: u64,
    pub repetitions: u32,
    /// Time the per-vehicle work; forces single-threaded vehicle updates.
    pub profile: bool,
    /// Also write the pooled errors as CSV.
    pub dump_errors: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "run".into(),
            traces: TraceSource::default(),
            filter: FilterConfig::default(),
            window: None,
            scheme: SchemeConfig::default(),
            preferences: PreferenceMix::default(),
            tracking: TrackingConfig::default(),
            laa: None,
            fcw: FcwScenario::default(),
            monte_carlo: McConfig::default(),
            beacon_noise: BeaconNoise::default(),
            error_pool_capacity: 200_000,
            seed: 1,
            repetitions: 1,
            profile: false,
            dump_errors: false,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses JSON or TOML, chosen by file extension (`.toml` or anything
    /// else for JSON). Relative trace paths are resolved against the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let mut cfg = if is_toml { Self::from_toml(&text)? } else { Self::from_json(&text)? };
        if let TraceSource::File { path: p, .. } = &mut cfg.traces {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Checks everything up front; the first problem found is reported.
    pub fn validate(&self) -> Result<()> {
        match &self.traces {
            TraceSource::File { step_duration_s, .. } => {
                if !(*step_duration_s > 0.0 && step_duration_s.is_finite()) {
                    return Err(Error::Config("traces: step_duration_s must be positive".into()));
                }
            }
            TraceSource::Synthetic(s) => s.validate()?,
        }
        if let Some(w) = &self.window {
            if !(w.window_s > 0.0 && w.min_duration_s >= 0.0) {
                return Err(Error::Config("window: window_s must be positive".into()));
            }
        }
        self.scheme.validate()?;
        self.preferences.validate()?;
        if let Some(l) = &self.laa {
            l.validate()?;
        }
        self.fcw.validate()?;
        if self.monte_carlo.draws == 0 || self.monte_carlo.shards == 0 {
            return Err(Error::Config("monte_carlo: draws and shards must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.error_pool_capacity == 0 {
            return Err(Error::Config("error_pool_capacity must be positive".into()));
        }
        let n = self.beacon_noise;
        if [n.position_m, n.speed_mps, n.heading_rad].iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("beacon_noise: deviations must be >= 0".into()));
        }
        self.tracker_config(1.0).validate()
    }

    pub fn step_duration_s(&self) -> f64 {
        match &self.traces {
            TraceSource::File { step_duration_s, .. } => *step_duration_s,
            TraceSource::Synthetic(s) => s.step_duration_s,
        }
    }

    /// Tracker configuration for a trace set with step `dt`.
    pub fn tracker_config(&self, dt: f64) -> TrackerConfig {
        let t = &self.tracking;
        let max_silence = t.max_silence.unwrap_or_else(|| {
            let laa = self.laa.as_ref().map_or(0.0, |l| l.silent_period_s);
            let s = self.scheme.max_silence_s().max(laa);
            (s / dt - 1e-9).ceil().max(0.0) as u32
        });
        TrackerConfig {
            time_to_live: t.time_to_live,
            max_silence,
            gate_threshold: t.gate_threshold,
            process_noise_accel: t.process_noise_accel,
            meas_noise_pos: t.meas_noise_pos,
            meas_noise_vel: t.meas_noise_vel,
            step_duration_s: dt,
        }
    }

    /// Canonical JSON of the parsed configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Loads or generates the traces, derives kinematics, filters and cuts
    /// the configured window.
    pub fn build_traces(&self) -> Result<TraceSet> {
        let set = match &self.traces {
            TraceSource::File { path, step_duration_s } => {
                let raw = load_traces(path, *step_duration_s)?;
                let raw = raw.retain(|t| t.samples.len() >= 2);
                derive_kinematics(raw)?
            }
            TraceSource::Synthetic(s) => generate_synthetic(s, self.seed)?,
        };
        let set = filter_traces(set, self.filter.min_area_m2, self.filter.min_duration_s);
        Ok(match &self.window {
            None => set,
            Some(w) => {
                let (start, end) = set.start_end_windows(w.window_s, w.min_duration_s);
                match w.part {
                    WindowPart::Start => start,
                    WindowPart::End => end,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn json_and_toml_agree() {
        let j = ExperimentConfig::from_json(
            r#"{"name":"x","scheme":{"kind":"rsp"},"seed":5,"preferences":{"normal":25,"high":75}}"#,
        )
        .unwrap();
        let t = ExperimentConfig::from_toml(
            "name = \"x\"\nseed = 5\n[scheme]\nkind = \"rsp\"\n[preferences]\nnormal = 25.0\nhigh = 75.0\n",
        )
        .unwrap();
        assert_eq!(j, t);
        assert_eq!(j.sha256(), t.sha256());
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"bogus":1}"#).is_err());
        let mut c = ExperimentConfig::default();
        c.preferences = PreferenceMix { low: 10.0, normal: 10.0, high: 10.0 };
        assert!(c.validate().unwrap_err().is_config_error());
        let c = ExperimentConfig { repetitions: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn quotas_sum() {
        let m = PreferenceMix { low: 0.0, normal: 25.0, high: 75.0 };
        assert_eq!(m.quotas(200), [0, 50, 150]);
        assert_eq!(m.quotas(3).iter().sum::<usize>(), 3);
        let m = PreferenceMix { low: 33.3, normal: 33.3, high: 33.4 };
        assert_eq!(m.quotas(10).iter().sum::<usize>(), 10);
    }

    #[test]
    fn max_silence_follows_scheme() {
        let c = ExperimentConfig::default();
        assert_eq!(c.tracker_config(1.0).max_silence, 11);
        let c = ExperimentConfig { scheme: SchemeConfig::None, ..Default::default() };
        assert_eq!(c.tracker_config(1.0).max_silence, 0);
        let c = ExperimentConfig {
            scheme: SchemeConfig::None,
            laa: Some(LaaConfig::default()),
            ..Default::default()
        };
        assert_eq!(c.tracker_config(1.0).max_silence, 3);
    }
}
