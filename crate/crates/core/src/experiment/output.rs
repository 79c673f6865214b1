use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::sim::RunOutput;
use super::ExperimentResult;
use crate::adversary::write_tracks_jsonl;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub repetitions: u32,
    pub scheme: String,
    /// Paths relative to the run directory.
    pub files: Vec<String>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes the configuration, result, per-repetition logs and a manifest to
/// `dir/<name>/`, returning that directory.
pub fn write_experiment(
    cfg: &ExperimentConfig,
    result: &ExperimentResult,
    outputs: &[RunOutput],
    dir: &Path,
) -> Result<PathBuf> {
    let root = dir.join(&cfg.name);
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let mut files = Vec::new();
    let mut emit = |rel: String, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        f(&root.join(&rel))?;
        files.push(rel);
        Ok(())
    };
    emit("config.json".into(), &|p| write_json(p, cfg))?;
    emit("result.json".into(), &|p| write_json(p, result))?;
    for o in outputs {
        let rep = format!("rep-{}", o.result.repetition);
        let rd = root.join(&rep);
        fs::create_dir_all(&rd).map_err(|e| Error::io(&rd, e))?;
        emit(format!("{rep}/events.jsonl"), &|p| {
            let mut w = create(p)?;
            for e in &o.events {
                serde_json::to_writer(&mut w, e)?;
                w.write_all(b"\n").map_err(|e| Error::io(p, e))?;
            }
            w.flush().map_err(|e| Error::io(p, e))
        })?;
        emit(format!("{rep}/tracks.jsonl"), &|p| write_tracks_jsonl(&o.tracks, create(p)?))?;
        emit(format!("{rep}/traceability.csv"), &|p| o.report.write_csv(create(p)?))?;
        if cfg.dump_errors {
            emit(format!("{rep}/errors.csv"), &|p| o.errors.write_csv(create(p)?))?;
        }
        if let Some(prof) = &o.result.profile {
            emit(format!("{rep}/profile.json"), &|p| write_json(p, prof))?;
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: result.config_sha256.clone(),
        seed: cfg.seed,
        repetitions: cfg.repetitions,
        scheme: cfg.scheme.name().into(),
        files,
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(root)
}
