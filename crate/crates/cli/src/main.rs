mod bench;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};

use odcube_core::ingest::{load_neighborhoods, load_trips, ColumnMap, RejectPolicy};
use odcube_core::script::{run_script, QueryScript};
use odcube_core::DatasetSnapshot;
use odcube_service::{AppState, ServiceConfig};

use scenario::ScenarioKind;

#[derive(Parser)]
#[command(name = "odcube", version, about = "Spatio-temporal queries over origin-destination trips")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a trip CSV into a snapshot file.
    Ingest {
        csv: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the ingest report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "drop")]
        reject: Reject,
    },
    /// Replay a query script and write its exports.
    Query {
        snapshot: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        export: PathBuf,
    },
    /// Measure per-operation latency.
    Bench {
        snapshot: PathBuf,
        /// Workload JSON file, or "default".
        #[arg(long, default_value = "default")]
        workload: String,
        #[arg(long, default_value_t = 50)]
        repeat: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP and WebSocket API over a snapshot.
    Serve {
        snapshot: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// GeoJSON FeatureCollection of named regions.
        #[arg(long)]
        neighborhoods: Option<PathBuf>,
        #[arg(long, default_value = "name")]
        name_key: String,
    },
    /// Generate a synthetic dataset, with a replay script for planted scenarios.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "uniform")]
        scenario: ScenarioKind,
        /// Trip count (background trips for planted scenarios).
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Reject {
    Drop,
    Fail,
}

/// Exit 2 for bad input (schema, config, malformed values), 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    use odcube_core::Error as E;
    match e.chain().find_map(|c| c.downcast_ref::<E>()) {
        Some(E::Schema(_) | E::Config(_) | E::Domain(_) | E::Parse(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Ingest { csv, map, out, report, reject } => ingest(&csv, &map, &out, report.as_deref(), reject),
        Command::Query { snapshot, script, export } => query(&snapshot, &script, &export),
        Command::Bench { snapshot, workload, repeat, warmup, out } => {
            let s = load_snapshot(&snapshot)?;
            let w = if workload == "default" {
                bench::Workload::default()
            } else {
                let text = std::fs::read_to_string(&workload).with_context(|| format!("reading workload {workload}"))?;
                bench::Workload::from_json(&text)?
            };
            let report = bench::run(&s, &w, repeat, warmup)?;
            emit_json(&report, out.as_deref())
        }
        Command::Serve { snapshot, port, host, neighborhoods, name_key } => serve(&snapshot, &host, port, neighborhoods, &name_key),
        Command::Synth { out, scenario, n, seed } => {
            let s = scenario::build(scenario, n, seed)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (name, bytes) in scenario::render(&s)? {
                std::fs::write(out.join(name), bytes).with_context(|| format!("writing {name}"))?;
            }
            println!("{}", serde_json::json!({ "trips": s.records.len(), "out": out }));
            Ok(())
        }
    }
}

fn load_snapshot(path: &Path) -> anyhow::Result<DatasetSnapshot> {
    DatasetSnapshot::load(path).with_context(|| format!("loading snapshot {}", path.display()))
}

fn emit_json<T: serde::Serialize>(v: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn ingest(csv: &Path, map: &Path, out: &Path, report: Option<&Path>, reject: Reject) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(map).with_context(|| format!("reading column map {}", map.display()))?;
    let map = ColumnMap::from_json(&text)?;
    let policy = match reject {
        Reject::Drop => RejectPolicy::Drop,
        Reject::Fail => RejectPolicy::Fail,
    };
    let (snapshot, rep) = load_trips(csv, &map, policy).with_context(|| format!("ingesting {}", csv.display()))?;
    snapshot.save(out).with_context(|| format!("writing snapshot {}", out.display()))?;
    emit_json(&rep, report)
}

fn query(snapshot: &Path, script: &Path, export: &Path) -> anyhow::Result<()> {
    let s = Arc::new(load_snapshot(snapshot)?);
    let script = QueryScript::load(script).with_context(|| format!("loading script {}", script.display()))?;
    let output = run_script(s, &script)?;
    for w in &output.warnings {
        log::warn!("{w}");
    }
    for (rel, bytes) in &output.files {
        let path = export.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let files: Vec<&String> = output.files.keys().collect();
    println!("{}", serde_json::json!({ "files": files, "warnings": output.warnings }));
    Ok(())
}

fn serve(snapshot: &Path, host: &str, port: u16, neighborhoods: Option<PathBuf>, name_key: &str) -> anyhow::Result<()> {
    let s = load_snapshot(snapshot)?;
    let mut config = ServiceConfig { data_dir: std::env::var_os("ODCUBE_DATA_DIR").map(PathBuf::from), ..ServiceConfig::default() };
    if let Some(p) = neighborhoods {
        let (set, warnings) = load_neighborhoods(&p, name_key).with_context(|| format!("loading {}", p.display()))?;
        for w in warnings {
            log::warn!("{w}");
        }
        config.neighborhoods = Arc::new(set);
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let state = AppState::start(config);
        state.add_dataset(s, None).await;
        let listener = tokio::net::TcpListener::bind((host, port)).await.with_context(|| format!("binding {host}:{port}"))?;
        // scripts and tests read the bound address from this line
        println!("listening on http://{}", listener.local_addr()?);
        odcube_service::serve(listener, state, shutdown_signal()).await?;
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}
