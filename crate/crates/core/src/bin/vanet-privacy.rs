use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vanet_privacy::experiment::{
    profile_step_time, run_experiment_full, select_cads_params, sweep, write_experiment, ExperimentConfig,
    ExperimentResult, SweepConfig, SweepTable,
};
use vanet_privacy::schemes::{CadsTable, Density};
use vanet_privacy::trace::{generate_synthetic, write_traces, SynthConfig};
use vanet_privacy::{Error, Result};

#[derive(Parser)]
#[command(name = "vanet-privacy", version, about = "Pseudonym-change privacy experiments for vehicular beacons")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic Manhattan-grid traces as CSV.
    Gen {
        /// Synthetic trace config (JSON); defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        vehicles: Option<u32>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write speed and heading columns.
        #[arg(long)]
        kinematics: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config's `output_dir`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repetitions: Option<u32>,
        /// Only measure per vehicle-step time on a single thread.
        #[arg(long)]
        profile: bool,
    },
    /// Run a parameter grid.
    Sweep {
        config: PathBuf,
        #[arg(short, long, default_value = "runs")]
        out: PathBuf,
    },
    /// Choose per-preference CADS parameters from a sweep result.
    SelectParams {
        /// `sweep.json` written by `sweep`.
        sweep: PathBuf,
        #[arg(long, default_value_t = 85.0)]
        qos_floor: f64,
        #[arg(long, default_value_t = 75.0)]
        trace_cap: f64,
        /// Table column the selection is written to.
        #[arg(long, value_enum, default_value_t = DensityArg::Sparse)]
        density: DensityArg,
        /// Table providing the entries that are not selected (JSON).
        #[arg(long)]
        base_table: Option<PathBuf>,
    },
    /// Render a `result.json` or `sweep.json` for plotting.
    Report {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DensityArg {
    Sparse,
    Dense,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out).map_err(|e| Error::Io { path: "<stdout>".into(), source: e })
}

fn out_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io { path: p.into(), source: e })?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let io_err = |e| Error::Io { path: path.into(), source: e };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    f(&mut w)?;
    w.flush().map_err(io_err)
}

fn report_result(r: &ExperimentResult, out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Validation(format!("csv output: {e}"));
    w.write_record([
        "repetition", "seed", "scheme", "vehicles", "pi", "pi_norm", "qos", "changes_per_vehicle",
        "avg_lifetime_s", "median_silence_s", "median_pseudonym_time_s", "pi_low", "pi_normal", "pi_high",
    ])
    .map_err(err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for run in &r.runs {
        let group = |p: vanet_privacy::schemes::PrivacyPreference| {
            opt(run.groups.iter().find(|g| g.preference == p).map(|g| g.pi))
        };
        use vanet_privacy::schemes::PrivacyPreference as P;
        w.write_record([
            run.repetition.to_string(),
            run.seed.to_string(),
            run.scheme.clone(),
            run.vehicles.to_string(),
            run.pi.to_string(),
            run.pi_norm.to_string(),
            opt(run.qos.as_ref().map(|q| q.qos)),
            run.pseudonyms.changes_per_vehicle.to_string(),
            run.pseudonyms.avg_lifetime_s.to_string(),
            opt(run.schedule.median_silence_s),
            opt(run.schedule.median_pseudonym_time_s),
            group(P::Low),
            group(P::Normal),
            group(P::High),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Io { path: "<output>".into(), source: e })
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen { config, vehicles, duration, seed, kinematics, out } => {
            let mut sc: SynthConfig = match config {
                Some(p) => read_json(&p)?,
                None => SynthConfig::default(),
            };
            if let Some(v) = vehicles {
                sc.vehicles = v;
            }
            if let Some(d) = duration {
                sc.duration_s = d;
            }
            let set = generate_synthetic(&sc, seed)?;
            let mut w = out_writer(out.as_deref())?;
            write_traces(&set, &mut w, kinematics)?;
            w.flush().map_err(|e| Error::Io { path: "<output>".into(), source: e })
        }
        Cmd::Run { config, out, seed, repetitions, profile } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = repetitions {
                cfg.repetitions = r;
            }
            if profile {
                return print_json(&profile_step_time(&cfg)?);
            }
            let (result, outputs) = run_experiment_full(&cfg)?;
            let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| "runs".into());
            let root = write_experiment(&cfg, &result, &outputs, &dir)?;
            log::info!("wrote {}", root.display());
            print_json(&result.summary)
        }
        Cmd::Sweep { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let mut sc: SweepConfig = if config.extension().is_some_and(|e| e == "toml") {
                toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
            } else {
                serde_json::from_str(&text)?
            };
            if let vanet_privacy::experiment::TraceSource::File { path, .. } = &mut sc.base.traces {
                if path.is_relative() {
                    *path = config.parent().unwrap_or(Path::new(".")).join(&*path);
                }
            }
            let table = sweep(&sc)?;
            let root = out.join(&sc.base.name);
            std::fs::create_dir_all(&root).map_err(|e| Error::Io { path: root.clone(), source: e })?;
            write_file(&root.join("sweep_config.json"), |w| Ok(serde_json::to_writer_pretty(w, &sc)?))?;
            write_file(&root.join("sweep.json"), |w| Ok(serde_json::to_writer_pretty(w, &table)?))?;
            write_file(&root.join("sweep.csv"), |w| table.write_csv(w))?;
            eprintln!("{} rows written to {}", table.rows.len(), root.display());
            Ok(())
        }
        Cmd::SelectParams { sweep, qos_floor, trace_cap, density, base_table } => {
            let table: SweepTable = read_json(&sweep)?;
            let sel = select_cads_params(&table, qos_floor, trace_cap);
            let mut cads: CadsTable = match base_table {
                Some(p) => read_json(&p)?,
                None => CadsTable::default(),
            };
            let d = match density {
                DensityArg::Sparse => Density::Sparse,
                DensityArg::Dense => Density::Dense,
            };
            sel.apply(&mut cads, d)?;
            print_json(&serde_json::json!({ "selection": sel, "table": cads }))
        }
        Cmd::Report { input, format } => {
            let v: serde_json::Value = read_json(&input)?;
            let mut out = io::stdout().lock();
            if v.get("runs").is_some() {
                let r: ExperimentResult = serde_json::from_value(v)?;
                match format {
                    Format::Csv => report_result(&r, &mut out),
                    Format::Json => print_json(&r.summary),
                }
            } else if v.get("rows").is_some() {
                let t: SweepTable = serde_json::from_value(v)?;
                match format {
                    Format::Csv => t.write_csv(&mut out),
                    Format::Json => print_json(&t.cell_means()),
                }
            } else {
                Err(Error::Config(format!("{}: neither a result nor a sweep file", input.display())))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
