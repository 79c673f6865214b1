use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ExperimentConfig;
use super::sim::{simulate, GroupResult};
use crate::error::{Error, Result};
use crate::schemes::{CadsOverlay, CadsTable, Density, PrivacyPreference};
use crate::trace::TraceSet;

/// A base configuration and the values to try per parameter.
///
/// Keys without a dot name scheme parameters; for CADS they are written to
/// the base parameters and, for table fields, to every table entry. Dotted
/// keys are paths into the whole configuration, e.g.
/// `laa.fraction_compromised`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub grid: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub overrides: BTreeMap<String, f64>,
    pub repetition: u32,
    pub seed: u64,
    pub pi: f64,
    pub pi_norm: f64,
    pub qos: Option<f64>,
    pub changes_per_vehicle: f64,
    pub groups: Vec<GroupResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub keys: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// Cartesian product of the grid in key order, last key varying fastest.
pub fn grid_cells(grid: &BTreeMap<String, Vec<f64>>) -> Vec<BTreeMap<String, f64>> {
    let mut cells = vec![BTreeMap::new()];
    for (k, vs) in grid {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                vs.iter().map(move |&v| {
                    let mut c = c.clone();
                    c.insert(k.clone(), v);
                    c
                })
            })
            .collect();
    }
    cells
}

fn number_like(old: &Value, v: f64) -> Result<Value> {
    if old.is_u64() || old.is_i64() {
        if v.fract() != 0.0 {
            return Err(Error::Config(format!("override {v} must be an integer here")));
        }
        return Ok(Value::from(v as i64));
    }
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .ok_or_else(|| Error::Config(format!("override {v} is not finite")))
}

fn set_existing(obj: &mut Value, key: &str, v: f64) -> Result<bool> {
    match obj.get_mut(key) {
        Some(slot) if slot.is_number() || slot.is_null() => {
            *slot = if slot.is_null() { number_like(&Value::from(0.0), v)? } else { number_like(slot, v)? };
            Ok(true)
        }
        Some(_) => Err(Error::Config(format!("override {key} does not name a number"))),
        None => Ok(false),
    }
}

const OVERLAY_FIELDS: [&str; 4] =
    ["max_pseudonym_time_s", "max_silence_s", "pseudonym_time_increment_s", "neighborhood_radius_m"];

/// Returns a copy of `cfg` with one parameter replaced.
pub fn apply_override(cfg: &ExperimentConfig, key: &str, v: f64) -> Result<ExperimentConfig> {
    let mut doc = serde_json::to_value(cfg)?;
    let found = if key.contains('.') {
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().expect("non-empty");
        let mut node = &mut doc;
        for p in parts {
            node = node.get_mut(p).ok_or_else(|| Error::Config(format!("unknown override path {key}")))?;
        }
        set_existing(node, last, v)?
    } else {
        let scheme = doc.get_mut("scheme").expect("scheme present");
        if scheme["kind"] == "cads" {
            let mut hit = set_existing(&mut scheme["base"], key, v)?;
            if OVERLAY_FIELDS.contains(&key) {
                for p in ["low", "normal", "high"] {
                    for d in ["sparse", "dense"] {
                        hit |= set_existing(&mut scheme["table"][p][d], key, v)?;
                    }
                }
            }
            hit || set_existing(scheme, key, v)?
        } else {
            key != "kind" && set_existing(scheme, key, v)?
        }
    };
    if !found {
        return Err(Error::Config(format!("override {key} does not apply to scheme {}", cfg.scheme.name())));
    }
    let out: ExperimentConfig = serde_json::from_value(doc).map_err(|e| Error::Config(format!("override {key}: {e}")))?;
    out.validate()?;
    Ok(out)
}

fn trace_key(cfg: &ExperimentConfig) -> Result<String> {
    Ok(serde_json::to_string(&(&cfg.traces, &cfg.filter, &cfg.window, cfg.seed))?)
}

/// Runs every cell of the grid for every repetition of the base config.
pub fn sweep(sc: &SweepConfig) -> Result<SweepTable> {
    if sc.grid.is_empty() || sc.grid.values().any(|v| v.is_empty()) {
        return Err(Error::Config("sweep grid must have at least one value per key".into()));
    }
    sc.base.validate()?;
    let cells = grid_cells(&sc.grid);
    let configs = cells
        .iter()
        .map(|c| c.iter().try_fold(sc.base.clone(), |cfg, (k, &v)| apply_override(&cfg, k, v)))
        .collect::<Result<Vec<_>>>()?;

    let mut trace_sets: BTreeMap<String, TraceSet> = BTreeMap::new();
    let mut trace_of = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let key = trace_key(cfg)?;
        if !trace_sets.contains_key(&key) {
            trace_sets.insert(key.clone(), cfg.build_traces()?);
        }
        trace_of.push(key);
    }

    let jobs: Vec<(usize, u32)> =
        (0..configs.len()).flat_map(|c| (0..configs[c].repetitions).map(move |r| (c, r))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(c, r)| {
            let out = simulate(&configs[c], &trace_sets[&trace_of[c]], r)?;
            let res = out.result;
            Ok(SweepRow {
                cell: c,
                overrides: cells[c].clone(),
                repetition: r,
                seed: res.seed,
                pi: res.pi,
                pi_norm: res.pi_norm,
                qos: res.qos.map(|q| q.qos),
                changes_per_vehicle: res.pseudonyms.changes_per_vehicle,
                groups: res.groups,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { keys: sc.grid.keys().cloned().collect(), rows })
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Validation(format!("csv output: {e}"));
        let mut header: Vec<String> = vec!["cell".into()];
        header.extend(self.keys.iter().cloned());
        header.extend(["repetition", "seed", "pi", "pi_norm", "qos", "changes_per_vehicle"].map(String::from));
        w.write_record(&header).map_err(err)?;
        for r in &self.rows {
            let mut rec = vec![r.cell.to_string()];
            rec.extend(self.keys.iter().map(|k| r.overrides.get(k).map_or(String::new(), |v| v.to_string())));
            rec.push(r.repetition.to_string());
            rec.push(r.seed.to_string());
            rec.push(r.pi.to_string());
            rec.push(r.pi_norm.to_string());
            rec.push(r.qos.map_or(String::new(), |q| q.to_string()));
            rec.push(r.changes_per_vehicle.to_string());
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))
    }

    /// Mean Π and QoS per cell over its repetitions. Cells without any QoS
    /// value are left out.
    pub fn cell_means(&self) -> Vec<SelectedCell> {
        let mut by_cell: BTreeMap<usize, Vec<&SweepRow>> = BTreeMap::new();
        for r in &self.rows {
            by_cell.entry(r.cell).or_default().push(r);
        }
        by_cell
            .into_iter()
            .filter_map(|(cell, rows)| {
                let q: Vec<f64> = rows.iter().filter_map(|r| r.qos).collect();
                if q.is_empty() {
                    return None;
                }
                Some(SelectedCell {
                    cell,
                    overrides: rows[0].overrides.clone(),
                    pi: rows.iter().map(|r| r.pi).sum::<f64>() / rows.len() as f64,
                    qos: q.iter().sum::<f64>() / q.len() as f64,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedCell {
    pub cell: usize,
    pub overrides: BTreeMap<String, f64>,
    pub pi: f64,
    pub qos: f64,
}

/// Chosen cell per privacy preference; `None` when no cell qualifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadsSelection {
    pub low: Option<SelectedCell>,
    pub normal: Option<SelectedCell>,
    pub high: Option<SelectedCell>,
}

fn by_pi(a: &&SelectedCell, b: &&SelectedCell) -> std::cmp::Ordering {
    a.pi.total_cmp(&b.pi).then(a.cell.cmp(&b.cell))
}

/// Picks parameters per preference from a sweep over one sub-dataset.
///
/// Cells with mean QoS below `qos_floor` are dropped. High takes the lowest
/// remaining QoS, low the highest QoS among cells with Π at most
/// `low_trace_cap`, normal the median-QoS cell. Ties go to the lower Π.
pub fn select_cads_params(table: &SweepTable, qos_floor: f64, low_trace_cap: f64) -> CadsSelection {
    let mut feasible: Vec<SelectedCell> = table.cell_means().into_iter().filter(|c| c.qos >= qos_floor).collect();
    feasible.sort_by(|a, b| a.qos.total_cmp(&b.qos).then(a.pi.total_cmp(&b.pi)).then(a.cell.cmp(&b.cell)));
    let pick_at = |q: f64| feasible.iter().filter(|c| c.qos == q).min_by(by_pi).cloned();

    let high = feasible.first().and_then(|c| pick_at(c.qos));
    let low = feasible
        .iter()
        .filter(|c| c.pi <= low_trace_cap)
        .max_by(|a, b| a.qos.total_cmp(&b.qos).then(b.pi.total_cmp(&a.pi)).then(b.cell.cmp(&a.cell)))
        .cloned();
    let normal = if feasible.is_empty() {
        None
    } else {
        let n = feasible.len();
        let mid: Vec<&SelectedCell> =
            if n % 2 == 1 { vec![&feasible[n / 2]] } else { vec![&feasible[n / 2 - 1], &feasible[n / 2]] };
        let lo = mid.iter().map(|c| c.qos).fold(f64::INFINITY, f64::min);
        let hi = mid.iter().map(|c| c.qos).fold(f64::NEG_INFINITY, f64::max);
        feasible.iter().filter(|c| c.qos >= lo && c.qos <= hi).min_by(by_pi).cloned()
    };
    CadsSelection { low, normal, high }
}

impl CadsSelection {
    pub fn get(&self, p: PrivacyPreference) -> Option<&SelectedCell> {
        match p {
            PrivacyPreference::Low => self.low.as_ref(),
            PrivacyPreference::Normal => self.normal.as_ref(),
            PrivacyPreference::High => self.high.as_ref(),
        }
    }

    /// Writes the selected values into the `density` column of `table`.
    /// Preferences without a selection keep their entries; override keys
    /// that are not table fields are ignored.
    pub fn apply(&self, table: &mut CadsTable, density: Density) -> Result<()> {
        for p in PrivacyPreference::ALL {
            let Some(sel) = self.get(p) else {
                log::warn!("no {} parameters selected for {}; keeping fallback", p.as_str(), density.as_str());
                continue;
            };
            let entry = table.get_mut(p, density);
            let mut doc = serde_json::to_value(*entry)?;
            for (k, &v) in &sel.overrides {
                set_existing(&mut doc, k, v)?;
            }
            *entry = serde_json::from_value::<CadsOverlay>(doc)?;
        }
        Ok(())
    }
}
