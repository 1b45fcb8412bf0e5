//! Command-line definitions and dispatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use gridrisk_core::config;
use gridrisk_core::matpower::{self, MaintainableSet};
use gridrisk_core::network::Network;
use gridrisk_core::optimizer::{Algorithm, OptimizerConfig};
use gridrisk_core::procedure::adaptive_loop;
use gridrisk_core::risk::RiskMatrices;
use gridrisk_core::sampling::{self, SampleSet, Simulator};

use crate::api::{self, ServiceState};
use crate::query::{self, OptimizeRequest, RiskRequest, SensitivityRequest, DEFAULT_BETA, DEFAULT_EPS_BAR};
use crate::workspace::{Loaded, SamplesEntry, Workspace, SAMPLES_FILE};
use crate::AppError;

#[derive(Parser, Debug)]
#[command(name = "gridrisk", version, about = "Maintenance planning against cascading-outage risk")]
pub struct Cli {
    /// Workspace directory.
    #[arg(long, global = true, default_value = ".")]
    pub workspace: PathBuf,

    /// Print tables instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Import a MATPOWER case (`ieee57`, `ieee300` or a .m path) or a network JSON file.
    Import {
        source: String,
        /// Which branches are open to maintenance: transformers, lines, all or none.
        #[arg(long, default_value = "transformers", value_parser = parse_serde::<MaintainableSet>)]
        maintainable: MaintainableSet,
    },
    /// Generate samples, or extend the existing set to `n`.
    Simulate {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        seed: u64,
        /// Discard existing samples first.
        #[arg(long)]
        force: bool,
    },
    /// Risk of a maintenance strategy with its credibility.
    Risk {
        #[arg(long, default_value_t = 0.0)]
        y0: f64,
        /// Comma-separated branch ids.
        #[arg(long, default_value = "")]
        maintain: String,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        #[arg(long, default_value_t = DEFAULT_EPS_BAR)]
        eps: f64,
    },
    /// Risk with each maintainable component maintained alone, ranked.
    Sensitivity {
        #[arg(long, default_value_t = 0.0)]
        y0: f64,
        /// Also write the ranking as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Choose a strategy of at most `mmax` components.
    Optimize {
        #[arg(long, value_parser = parse_serde::<Algorithm>)]
        alg: Algorithm,
        #[arg(long)]
        mmax: usize,
        /// Shortlist size for `--alg one`; defaults to `mmax`.
        #[arg(long)]
        mk: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_EPS_BAR)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        #[arg(long, default_value_t = 0.0)]
        y0: f64,
        /// Grow the sample set until the winner's error bound is met.
        #[arg(long)]
        adaptive: bool,
        #[arg(long, default_value_t = OptimizerConfig::default().n0)]
        n0: u64,
        #[arg(long, default_value_t = OptimizerConfig::default().max_rounds)]
        max_rounds: u32,
        /// Master seed when `--adaptive` starts without samples.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Factor matrix export.
    Matrices {
        #[command(subcommand)]
        action: MatricesAction,
    },
    /// Serve the read-only HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Subcommand, Debug)]
pub enum MatricesAction {
    Export {
        #[arg(long, value_enum, default_value_t = ExportFormat::Blob)]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
        /// Loss threshold for the `c` column of the CSV.
        #[arg(long, default_value_t = 0.0)]
        y0: f64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Blob,
    Csv,
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.into())).map_err(|e| e.to_string())
}

/// A command's result, serialized once so every consumer sees the same bytes.
pub struct Output(pub String);

impl Output {
    fn of<T: Serialize>(v: &T) -> Result<Self, AppError> {
        Ok(Output(serde_json::to_string(v)?))
    }

    pub fn render(&self, pretty: bool) -> String {
        if !pretty {
            return self.0.clone();
        }
        match serde_json::from_str::<Value>(&self.0) {
            Ok(v) => table(&v),
            Err(_) => self.0.clone(),
        }
    }
}

pub fn run(cli: &Cli) -> Result<Output, AppError> {
    let ws = Workspace::new(&cli.workspace);
    match &cli.command {
        Command::Import { source, maintainable } => import(&ws, source, *maintainable),
        Command::Simulate { n, seed, force } => simulate(&ws, *n, *seed, *force),
        Command::Risk { y0, maintain, beta, eps } => {
            let req = RiskRequest { maintained: query::parse_ids(maintain)?, y0: *y0, beta: *beta, eps_bar: *eps };
            let (_, factors) = factors(&ws)?;
            Output::of(&query::risk(&factors, &req)?)
        }
        Command::Sensitivity { y0, csv } => {
            let req = SensitivityRequest { y0: *y0 };
            query::check_y0(req.y0)?;
            let (_, factors) = factors(&ws)?;
            let report = query::sensitivity(&factors, &req);
            if let Some(path) = csv {
                let mut out = std::io::BufWriter::new(fs::File::create(path)?);
                report.write_csv(&mut out)?;
                out.flush()?;
            }
            Output::of(&report)
        }
        Command::Optimize { alg, mmax, mk, eps, beta, y0, adaptive, n0, max_rounds, seed } => {
            let req = OptimizeRequest { alg: *alg, m_max: *mmax, m_k: *mk, y0: *y0, beta: *beta, eps_bar: *eps };
            if *adaptive {
                let cfg = OptimizerConfig { n0: *n0, max_rounds: *max_rounds, ..req.config() };
                optimize_adaptive(&ws, &cfg, *alg, *seed)
            } else {
                let (_, factors) = factors(&ws)?;
                Output::of(&query::optimize(&factors, &req)?)
            }
        }
        Command::Matrices { action: MatricesAction::Export { format, out, y0 } } => {
            query::check_y0(*y0)?;
            let (n, factors) = factors(&ws)?;
            let mut file = std::io::BufWriter::new(fs::File::create(out)?);
            match format {
                ExportFormat::Blob => factors.write_blob(&mut file)?,
                ExportFormat::Csv => RiskMatrices::new(factors.clone(), *y0).write_csv(&mut file)?,
            }
            file.flush()?;
            Output::of(&serde_json::json!({
                "format": if *format == ExportFormat::Blob { "blob" } else { "csv" },
                "out": out,
                "n": n,
                "components": factors.k(),
            }))
        }
        Command::Serve { port } => {
            let state = ServiceState::load(&ws)?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(api::serve(state, *port))?;
            Output::of(&serde_json::json!({ "stopped": true }))
        }
    }
}

fn factors(ws: &Workspace) -> Result<(usize, std::sync::Arc<gridrisk_core::risk::SurvivalFactors>), AppError> {
    let loaded = ws.load()?;
    let set = ws.samples(&loaded)?.ok_or(AppError::NoSamples)?;
    Ok((set.len(), ws.factors(&loaded, &set, true)?))
}

fn import(ws: &Workspace, source: &str, maintainable: MaintainableSet) -> Result<Output, AppError> {
    let network = match source {
        "ieee57" => matpower::parse_matpower_with(matpower::IEEE57, maintainable)?,
        "ieee300" => matpower::parse_matpower_with(matpower::IEEE300, maintainable)?,
        path => {
            let text = fs::read_to_string(path)
                .map_err(|e| AppError::Usage(format!("cannot read {path}: {e}")))?;
            if Path::new(path).extension().is_some_and(|e| e == "json") {
                Network::from_json(&text)?
            } else {
                matpower::parse_matpower_with(&text, maintainable)?
            }
        }
    };
    ws.write_network(&network)?;
    let mut summary = serde_json::to_value(query::network_summary(&network))?;
    summary["network_hash"] = Value::String(config::network_hash(&network));
    summary["maintainable"] = serde_json::json!(network.maintainable_ids());
    Output::of(&summary)
}

#[derive(Serialize)]
struct SimulateReport {
    master_seed: u64,
    count: u64,
    added: u64,
    truncated: usize,
    samples_with_loss: usize,
    elapsed_ms: u128,
}

fn simulate(ws: &Workspace, n: u64, seed: u64, force: bool) -> Result<Output, AppError> {
    let loaded = ws.load()?;
    let path = ws.path(SAMPLES_FILE);
    let sim = Simulator::new(&loaded.network, &loaded.model, &loaded.config)?;
    let start = Instant::now();
    let existing = if force || !ws.has_samples() { None } else { ws.samples(&loaded)? };
    let (set, added) = match existing {
        Some(mut set) => {
            if set.header.master_seed != seed {
                return Err(AppError::Stale(format!(
                    "workspace holds samples for seed {}; rerun with --force to replace them",
                    set.header.master_seed
                )));
            }
            let on_disk = set.len();
            if (on_disk as u64) < n {
                sim.extend(&mut set, n)?;
                sampling::append_jsonl(&path, &set, on_disk)?;
            } else {
                log::info!("{on_disk} samples for seed {seed} already present");
            }
            let added = (set.len() - on_disk) as u64;
            (set, added)
        }
        None => {
            let set = sim.generate(n, seed)?;
            sampling::write_jsonl(&path, &set)?;
            (set, n)
        }
    };
    record_samples(ws, &loaded, &set)?;
    Output::of(&SimulateReport {
        master_seed: seed,
        count: set.len() as u64,
        added,
        truncated: set.truncated(),
        samples_with_loss: set.samples.iter().filter(|s| s.shed > 0.0).count(),
        elapsed_ms: start.elapsed().as_millis(),
    })
}

fn record_samples(ws: &Workspace, loaded: &Loaded, set: &SampleSet) -> Result<(), AppError> {
    let mut m = ws.manifest()?;
    m.network_hash = Some(loaded.network_hash.clone());
    m.config_hash = Some(loaded.config_hash.clone());
    m.samples = Some(SamplesEntry {
        master_seed: set.header.master_seed,
        count: set.len() as u64,
        network_hash: set.header.network_hash.clone(),
        model_hash: set.header.model_hash.clone(),
    });
    ws.save_manifest(&m)
}

fn optimize_adaptive(ws: &Workspace, cfg: &OptimizerConfig, alg: Algorithm, seed: u64) -> Result<Output, AppError> {
    let loaded = ws.load()?;
    let path = ws.path(SAMPLES_FILE);
    let sim = Simulator::new(&loaded.network, &loaded.model, &loaded.config)?;
    let (mut set, mut on_disk) = match ws.samples(&loaded)? {
        Some(set) => {
            let len = set.len();
            (set, Some(len))
        }
        None => (sim.generate(0, seed)?, None),
    };
    let result = adaptive_loop(
        &mut set,
        |s, t| sim.extend(s, t),
        &loaded.model,
        &loaded.config.maintenance,
        &loaded.network.maintainable_ids(),
        cfg,
        alg,
    )?;
    match on_disk.take() {
        Some(len) if len < set.len() => sampling::append_jsonl(&path, &set, len)?,
        Some(_) => {}
        None => sampling::write_jsonl(&path, &set)?,
    }
    record_samples(ws, &loaded, &set)?;
    Output::of(&result)
}

/// Renders a JSON value as aligned key/value lines, with arrays of objects
/// as column tables.
pub fn table(v: &Value) -> String {
    let mut out = String::new();
    match v {
        Value::Object(map) => {
            let width = map.keys().map(|k| k.len()).max().unwrap_or(0);
            for (k, val) in map {
                match val {
                    Value::Array(rows) if rows.iter().any(Value::is_object) => {
                        out.push_str(&format!("{k}:\n"));
                        out.push_str(&rows_table(rows));
                    }
                    Value::Object(_) => {
                        out.push_str(&format!("{k}:\n"));
                        for line in table(val).lines() {
                            out.push_str(&format!("  {line}\n"));
                        }
                    }
                    _ => out.push_str(&format!("{k:<width$}  {}\n", scalar(val))),
                }
            }
        }
        Value::Array(rows) => out.push_str(&rows_table(rows)),
        other => out.push_str(&format!("{}\n", scalar(other))),
    }
    out
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(scalar).collect::<Vec<_>>().join(", "),
        other => other.to_string(),
    }
}

fn rows_table(rows: &[Value]) -> String {
    let mut cols: Vec<String> = Vec::new();
    for r in rows {
        if let Value::Object(m) = r {
            for k in m.keys() {
                if !cols.contains(k) {
                    cols.push(k.clone());
                }
            }
        }
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| cols.iter().map(|c| r.get(c).map(scalar).unwrap_or_default()).collect())
        .collect();
    let widths: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| cells.iter().map(|r| r[i].len()).chain([c.len()]).max().unwrap_or(0))
        .collect();
    let line = |items: &[String]| {
        let padded: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        format!("  {}\n", padded.join("  "))
    };
    let mut out = line(&cols);
    for r in &cells {
        out.push_str(&line(r));
    }
    out
}
