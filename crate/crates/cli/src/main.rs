//! `raystab`: runs scenario files and writes hashed result directories.

mod catalog;
mod output;
mod scenario;
mod tasks;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use log::{error, info};

use output::{sha256_hex, write_run, Manifest, ScenarioRef};
use scenario::parse_scenario;

const SCHEMA: &str = include_str!("../docs/schema.md");

/// Overrides the output directory of every run.
const OUT_ENV: &str = "RAYSTAB_OUT";
const DEFAULT_OUT: &str = "raystab-out";

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_ABORT: u8 = 2;
const EXIT_VERDICT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "raystab",
    version,
    about = "Ray-level stability analysis of 3D Euler flows"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        scenario: PathBuf,
        /// Output directory (default: `output.dir`, relative to the scenario file).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the internal pool.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        workers: Option<u64>,
    },
    /// List the field catalog.
    Catalog {
        /// Print a JSON document instead of text.
        #[arg(long)]
        machine: bool,
    },
    /// Print the scenario and output schema.
    Schema,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp_millis()
        .init();
    let code = match cli.command {
        Command::Run {
            scenario,
            out,
            workers,
        } => run(&scenario, out, workers.map(|w| w as usize)),
        Command::Catalog { machine } => {
            let entries = catalog::catalog();
            if machine {
                match serde_json::to_string_pretty(&entries) {
                    Ok(s) => println!("{s}"),
                    Err(e) => {
                        error!("{e}");
                        return ExitCode::from(EXIT_ABORT);
                    }
                }
            } else {
                print!("{}", catalog::render_text(&entries));
            }
            EXIT_OK
        }
        Command::Schema => {
            print!("{SCHEMA}");
            EXIT_OK
        }
    };
    ExitCode::from(code)
}

fn field_name(sc: &scenario::Scenario) -> &'static str {
    sc.field.as_ref().map_or("none", |f| f.kind().name())
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn resolve_out(cli_out: Option<PathBuf>, scenario_dir: Option<String>, file: &Path) -> PathBuf {
    if let Some(o) = cli_out {
        return o;
    }
    if let Some(o) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(o);
    }
    match scenario_dir {
        Some(d) => {
            let d = PathBuf::from(d);
            if d.is_absolute() {
                d
            } else {
                file.parent().unwrap_or(Path::new(".")).join(d)
            }
        }
        None => PathBuf::from(DEFAULT_OUT),
    }
}

fn run(file: &Path, out: Option<PathBuf>, workers: Option<usize>) -> u8 {
    let started = now();
    let text = match std::fs::read(file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", file.display());
            return EXIT_CONFIG;
        }
    };
    let scenario_hash = sha256_hex(&text);
    let parsed = std::str::from_utf8(&text)
        .map_err(|e| format!("scenario is not UTF-8: {e}"))
        .and_then(|t| parse_scenario(t).map_err(|e| e.to_string()));
    let sc = match parsed {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", file.display());
            return EXIT_CONFIG;
        }
    };
    let out_dir = resolve_out(out, sc.output.dir.clone(), file);
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_ABORT;
        }
    };
    info!(
        "task {} on {} with {} workers",
        sc.task.name(),
        field_name(&sc),
        pool.current_num_threads()
    );
    let clock = Instant::now();
    let result = pool.install(|| tasks::run_task(&sc));
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: task {} aborted: {e}", sc.task.name());
            return EXIT_ABORT;
        }
    };
    info!("task finished in {:.1} s", clock.elapsed().as_secs_f64());
    let verdict = match outcome.verdict {
        Some(true) => "pass",
        Some(false) => "fail",
        None => "none",
    };
    let written = write_run(&out_dir, &outcome.artifacts, |artifacts| Manifest {
        tool: "raystab",
        version: env!("CARGO_PKG_VERSION"),
        task: sc.task.name().into(),
        field: field_name(&sc).into(),
        scenario: ScenarioRef {
            file: file.display().to_string(),
            sha256: scenario_hash,
        },
        rng_seeds: sc.rng_seeds.clone(),
        workers,
        started,
        finished: now(),
        verdict,
        artifacts,
    });
    match written {
        Ok(m) => {
            info!(
                "wrote {} files and the manifest to {}",
                m.artifacts.len(),
                out_dir.display()
            );
            if outcome.verdict == Some(false) {
                eprintln!("verdict: fail");
                EXIT_VERDICT
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: writing {}: {e}", out_dir.display());
            EXIT_ABORT
        }
    }
}
