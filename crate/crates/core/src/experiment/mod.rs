//! End-to-end runs: configuration, the seeded simulation loop, sweeps,
//! parameter selection and output files.

mod config;
mod output;
mod sim;
mod sweep;

pub use config::{
    BeaconNoise, ExperimentConfig, PreferenceMix, TraceSource, TrackingConfig, WindowPart, WindowSpec,
};
pub use output::{write_experiment, Manifest};
pub use sim::{
    assign_preferences, repetition_seed, simulate, BeaconGrid, GroupResult, LaaResult, ProfileStats,
    RunOutput, RunResult, ScheduleStats,
};
pub use sweep::{
    apply_override, grid_cells, select_cads_params, sweep, CadsSelection, SelectedCell, SweepConfig,
    SweepRow, SweepTable,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::schemes::PrivacyPreference;

/// Means over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub repetitions: usize,
    pub pi: f64,
    pub pi_norm: f64,
    /// Over repetitions that produced a QoS value.
    pub qos: Option<f64>,
    pub changes_per_vehicle: f64,
    pub groups: Vec<GroupSummary>,
    pub victim_changes_per_vehicle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub preference: PrivacyPreference,
    pub pi: f64,
    pub pi_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub config_sha256: String,
    pub runs: Vec<RunResult>,
    pub summary: Summary,
}

fn mean(it: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = it.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl Summary {
    pub fn of(runs: &[RunResult]) -> Summary {
        let groups = PrivacyPreference::ALL
            .iter()
            .filter_map(|&p| {
                let g: Vec<&GroupResult> =
                    runs.iter().flat_map(|r| r.groups.iter().filter(move |g| g.preference == p)).collect();
                Some(GroupSummary {
                    preference: p,
                    pi: mean(g.iter().map(|g| g.pi))?,
                    pi_norm: mean(g.iter().map(|g| g.pi_norm))?,
                })
            })
            .collect();
        Summary {
            repetitions: runs.len(),
            pi: mean(runs.iter().map(|r| r.pi)).unwrap_or(0.0),
            pi_norm: mean(runs.iter().map(|r| r.pi_norm)).unwrap_or(0.0),
            qos: mean(runs.iter().filter_map(|r| r.qos.as_ref().map(|q| q.qos))),
            changes_per_vehicle: mean(runs.iter().map(|r| r.pseudonyms.changes_per_vehicle)).unwrap_or(0.0),
            groups,
            victim_changes_per_vehicle: mean(
                runs.iter()
                    .filter_map(|r| r.laa.as_ref())
                    .filter(|l| !l.victim_stats.empty)
                    .map(|l| l.victim_stats.changes_per_vehicle),
            ),
        }
    }

    pub fn group(&self, p: PrivacyPreference) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.preference == p)
    }
}

/// Validates, builds the traces once and runs every repetition.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    Ok(run_experiment_full(cfg)?.0)
}

/// Like [`run_experiment`], also returning each repetition's logs.
pub fn run_experiment_full(cfg: &ExperimentConfig) -> Result<(ExperimentResult, Vec<RunOutput>)> {
    cfg.validate()?;
    let traces = cfg.build_traces()?;
    log::info!("{}: {} traces, scheme {}", cfg.name, traces.len(), cfg.scheme.name());
    let outputs = (0..cfg.repetitions).map(|r| simulate(cfg, &traces, r)).collect::<Result<Vec<_>>>()?;
    let runs: Vec<RunResult> = outputs.iter().map(|o| o.result.clone()).collect();
    let result = ExperimentResult {
        name: cfg.name.clone(),
        config_sha256: cfg.sha256(),
        summary: Summary::of(&runs),
        runs,
    };
    Ok((result, outputs))
}

/// Per vehicle-step timing of a single-threaded run of the first
/// repetition.
pub fn profile_step_time(cfg: &ExperimentConfig) -> Result<ProfileStats> {
    let cfg = ExperimentConfig { profile: true, repetitions: 1, ..cfg.clone() };
    cfg.validate()?;
    let traces = cfg.build_traces()?;
    simulate(&cfg, &traces, 0)?
        .result
        .profile
        .ok_or_else(|| crate::Error::Config("profiling needs at least one vehicle-step".into()))
}
