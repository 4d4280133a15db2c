//! `oneatom`: command-line experiments for the one-atom laser models.
//!
//! Exit status: 0 on success, 2 on configuration errors, 3 when a solver
//! failed (for sweeps: at least one flagged row was written).

mod config;
mod error;
mod experiments;
mod output;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Flags;
use error::CliError;
use experiments::Report;

#[derive(Parser)]
#[command(name = "oneatom", version, about = "One-atom laser experiments: steady states, spectra and photon statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean-field |α|²/n0f versus I3, upward and downward sweeps.
    ScScan(Flags),
    /// Quantum steady-state statistics versus I3.
    QScan(Flags),
    /// Photon-flux ratio R versus I3.
    RatioScan(Flags),
    /// Steady-state statistics versus the cavity-length factor f.
    ScalingSweep(Flags),
    /// Intracavity photon number versus pump detuning Δ3.
    RabiScan(Flags),
    /// Optical spectrum from the regression theorem, optionally heterodyne.
    Spectrum(Flags),
    /// Intensity correlation g²(τ) by regression or quantum trajectories.
    G2(Flags),
    /// Zeeman-model input/output curve n̄ versus pump strength x.
    ZeemanIo(Flags),
}

impl Command {
    fn parts(&self) -> (&'static str, &Flags, fn(&config::RunConfig) -> Result<Report, CliError>) {
        match self {
            Command::ScScan(f) => ("sc-scan", f, experiments::sc_scan_exp),
            Command::QScan(f) => ("q-scan", f, experiments::q_scan_exp),
            Command::RatioScan(f) => ("ratio-scan", f, experiments::ratio_scan_exp),
            Command::ScalingSweep(f) => ("scaling-sweep", f, experiments::scaling_sweep_exp),
            Command::RabiScan(f) => ("rabi-scan", f, experiments::rabi_scan_exp),
            Command::Spectrum(f) => ("spectrum", f, experiments::spectrum_exp),
            Command::G2(f) => ("g2", f, experiments::g2_exp),
            Command::ZeemanIo(f) => ("zeeman-io", f, experiments::zeeman_io_exp),
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let (name, flags, experiment) = cli.command.parts();
    let cfg = flags.resolve(name)?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::config("threads", "must be at least 1"));
        }
        // ignore a pool that was already initialized
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let report = experiment(&cfg)?;
    let prefix = cfg.output.clone().unwrap_or_else(|| PathBuf::from(name));
    if let Some(dir) = prefix.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut written = Vec::new();
    for t in &report.tables {
        let path = t.path(&prefix);
        std::fs::write(&path, t.to_csv())?;
        written.push((path, t));
    }
    let config_json = serde_json::to_value(&cfg).unwrap_or_default();
    let meta = output::metadata(name, &config_json, &report.params, &report.summary, &written);
    let json_path = output::json_path(&prefix);
    std::fs::write(&json_path, serde_json::to_string_pretty(&meta).unwrap_or_default() + "\n")?;
    for (p, t) in &written {
        eprintln!("wrote {} ({} rows, {} failed)", p.display(), t.rows.len(), t.failed);
    }
    eprintln!("wrote {}", json_path.display());
    let failed: usize = report.tables.iter().map(|t| t.failed).sum();
    if failed > 0 {
        return Err(CliError::Solver(format!("{failed} point(s) failed; see the status column")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oneatom: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
