use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use smartap::eventlog::{read_log, EventLog};
use smartap::scenario::Scenario;
use smartap::system::{Pacing, System, SystemOptions, Transport};
use smartap_core::replay::{replay_check, ReplayReport};

const EXIT_INVARIANT: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "smartap", version, about = "Desk-scale SDWN controller with smart AP selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a scenario and run agents, selection loop and API.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Stop after this many simulated seconds (default: run until killed).
        #[arg(long)]
        duration: Option<f64>,
        /// Override the scenario's radio seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Serve the management API here, e.g. 127.0.0.1:8080.
        #[arg(long, env = "SMARTAP_API_ADDR")]
        api_addr: Option<SocketAddr>,
        /// Write the NDJSON event log here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Do not pace iterations to wall-clock time.
        #[arg(long)]
        fast: bool,
        /// Connect agents over loopback TCP instead of socket pairs.
        #[arg(long)]
        tcp: bool,
    },
    /// Re-check the invariants over a recorded event log.
    ReplayCheck { log: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { scenario, duration, seed, api_addr, log, fast, tcp } => {
            run(scenario, duration, seed, api_addr, log, fast, tcp)
        }
        Command::ReplayCheck { log } => replay(log),
    }
}

fn run(
    path: PathBuf,
    duration: Option<f64>,
    seed: Option<u64>,
    api_addr: Option<SocketAddr>,
    log_path: Option<PathBuf>,
    fast: bool,
    tcp: bool,
) -> ExitCode {
    let mut scenario = match Scenario::load(&path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Some(seed) = seed {
        scenario = scenario.with_seed(seed);
    }
    if let Some(d) = duration.filter(|d| !d.is_finite() || *d < 0.0) {
        eprintln!("error: --duration {d} must be a non-negative number of seconds");
        return ExitCode::from(EXIT_USAGE);
    }
    let log = match &log_path {
        Some(p) => match EventLog::to_file(p, false) {
            Ok(l) => l,
            Err(e) => {
                eprintln!("error: cannot create log {}: {e}", p.display());
                return ExitCode::from(EXIT_USAGE);
            }
        },
        None if duration.is_some() => EventLog::in_memory(),
        None => EventLog::discard(),
    };
    let opts = SystemOptions {
        transport: if tcp { Transport::Tcp } else { Transport::InProcess },
        api_addr,
        log: Arc::new(log),
        ..SystemOptions::default()
    };
    let mut system = match System::start(&scenario, opts) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(addr) = system.api_addr() {
        println!("api: http://{addr}");
    }
    let pacing = if fast { Pacing::Fast } else { Pacing::Realtime };
    let summaries = system.run_for(duration.unwrap_or(f64::INFINITY), pacing);
    let handoffs: usize =
        summaries.iter().map(|s| s.handoffs.iter().filter(|h| h.outcome.is_committed()).count()).sum();
    let mut events = system.log().events();
    system.shutdown();
    if let Some(p) = &log_path {
        match read_log(p) {
            Ok(e) => events = e,
            Err(e) => {
                eprintln!("error: cannot re-read log {}: {e}", p.display());
                return ExitCode::FAILURE;
            }
        }
    }

    let report = replay_check(&events);
    println!("iterations: {}  committed handoffs: {handoffs}", summaries.len());
    print_report(&report);
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVARIANT)
    }
}

fn replay(path: PathBuf) -> ExitCode {
    let events = match read_log(&path) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let report = replay_check(&events);
    print_report(&report);
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVARIANT)
    }
}

fn print_report(r: &ReplayReport) {
    for w in &r.warnings {
        println!("warning: {w}");
    }
    println!(
        "events: {}  iterations: {}  handoffs committed: {}  failed: {}  max iteration: {:.1} ms",
        r.events, r.iterations, r.handoffs_committed, r.handoffs_failed, r.max_wall_ms
    );
    for v in &r.violations {
        println!("VIOLATION {} (event {}): {}", v.invariant, v.line, v.detail);
    }
    if r.passed() {
        println!("replay-check: pass");
    } else {
        let names: Vec<_> = r.violated().iter().map(|i| i.name()).collect();
        println!("replay-check: FAIL ({})", names.join(", "));
    }
}
