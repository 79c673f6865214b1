use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{normalize_angle, Step, Trace, TraceSample, TraceSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Columns {
    time: usize,
    id: usize,
    x: usize,
    y: usize,
    speed: Option<usize>,
    heading_deg: Option<usize>,
}

const POSITIONAL: Columns = Columns {
    time: 0,
    id: 1,
    x: 2,
    y: 3,
    speed: None,
    heading_deg: None,
};

/// Loads `time,id,x,y` rows (header optional) and groups them into one trace
/// per vehicle, snapping times to the `step_duration_s` grid.
///
/// A header row may also name optional `speed` (m/s) and `heading` (degrees)
/// columns. Traces come back sorted by vehicle id.
pub fn load_traces(path: impl AsRef<Path>, step_duration_s: f64) -> Result<TraceSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse(file, path.to_path_buf(), step_duration_s)
}

pub fn load_traces_from_reader(reader: impl Read, step_duration_s: f64) -> Result<TraceSet> {
    parse(reader, PathBuf::from("<input>"), step_duration_s)
}

fn parse(reader: impl Read, path: PathBuf, step_duration_s: f64) -> Result<TraceSet> {
    if !(step_duration_s > 0.0) {
        return Err(Error::Validation(format!(
            "step duration must be positive, got {step_duration_s}"
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);

    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.clone(),
        line,
        msg,
    };

    let mut cols = POSITIONAL;
    let mut grouped: BTreeMap<String, BTreeMap<Step, TraceSample>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            cols = header_columns(&rec).map_err(|m| parse_err(line, m))?;
            continue;
        }

        let field = |idx: usize, name: &str| {
            rec.get(idx)
                .ok_or_else(|| parse_err(line, format!("missing column `{name}`")))
        };
        let num = |idx: usize, name: &str| -> Result<f64> {
            let raw = field(idx, name)?;
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(line, format!("column `{name}`: `{raw}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column `{name}` is not finite")));
            }
            Ok(v)
        };

        let time = num(cols.time, "time")?;
        let id = field(cols.id, "id")?.to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty vehicle id".into()));
        }
        let step = (time / step_duration_s).round() as Step;
        let mut sample = TraceSample::at(step, num(cols.x, "x")?, num(cols.y, "y")?);
        if let Some(c) = cols.speed {
            sample.speed = num(c, "speed")?;
            if sample.speed < 0.0 {
                return Err(parse_err(line, "negative speed".into()));
            }
        }
        if let Some(c) = cols.heading_deg {
            sample.heading = normalize_angle(num(c, "heading")?.to_radians());
        }

        let per_vehicle = grouped.entry(id.clone()).or_default();
        if per_vehicle.insert(step, sample).is_some() {
            return Err(Error::Validation(format!(
                "duplicate sample for vehicle {id} at step {step} (line {line})"
            )));
        }
    }

    let traces = grouped
        .into_iter()
        .map(|(vehicle_id, samples)| Trace {
            vehicle_id,
            samples: samples.into_values().collect(),
        })
        .collect();
    TraceSet::new(traces, step_duration_s)
}

fn header_columns(rec: &csv::StringRecord) -> std::result::Result<Columns, String> {
    let find = |names: &[&str]| {
        rec.iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    };
    let need = |names: &[&str]| find(names).ok_or_else(|| format!("header lacks `{}`", names[0]));
    Ok(Columns {
        time: need(&["time", "t", "timestep"])?,
        id: need(&["id", "vehicle", "vehicle_id"])?,
        x: need(&["x"])?,
        y: need(&["y"])?,
        speed: find(&["speed"]),
        heading_deg: find(&["heading", "angle"]),
    })
}

/// Writes the `time,id,x,y` schema read by [`load_traces`]. With
/// `with_kinematics`, `speed` and `heading` (degrees) columns are appended.
pub fn write_traces(set: &TraceSet, mut out: impl Write, with_kinematics: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(&mut out);
    let to_io = |e: csv::Error| Error::io("<output>", e.into());
    if with_kinematics {
        w.write_record(["time", "id", "x", "y", "speed", "heading"])
            .map_err(to_io)?;
    } else {
        w.write_record(["time", "id", "x", "y"]).map_err(to_io)?;
    }
    let dt = set.step_duration_s();
    let mut rows: Vec<(&TraceSample, &str)> = set
        .traces()
        .iter()
        .flat_map(|t| t.samples.iter().map(move |s| (s, t.vehicle_id.as_str())))
        .collect();
    rows.sort_by(|a, b| a.0.step.cmp(&b.0.step).then_with(|| a.1.cmp(b.1)));
    for (s, id) in rows {
        let time = format!("{}", s.step as f64 * dt);
        let (x, y) = (format!("{}", s.x), format!("{}", s.y));
        if with_kinematics {
            let (v, h) = (format!("{}", s.speed), format!("{}", s.heading.to_degrees()));
            w.write_record([time.as_str(), id, &x, &y, &v, &h])
        } else {
            w.write_record([time.as_str(), id, &x, &y])
        }
        .map_err(to_io)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}
