use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lela_core::check::run_suite;
use lela_core::config::SimulationConfig;
use lela_core::driver::{epsilon_sweep, initdata, run};
use lela_core::{par, Result};
use log::warn;

/// Free-boundary compressible elastodynamics simulator.
///
/// Set LELA_THREADS to cap the number of worker threads.
#[derive(Parser)]
#[command(name = "lela", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write manifest.json, series.csv and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.directory` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Incompressible-limit sweep: one constructed-data run per epsilon.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, finite, non-decreasing, at least three values.
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_epsilon)]
        epsilons: Vec<f64>,
        /// Matched comparison times, evenly spaced in (0, t_final].
        #[arg(long, default_value_t = 5)]
        samples: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Construct compatible initial data and export it.
    Initdata {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a built-in property suite (geometry, mollifier, elliptic, hyperbolic, evolve, all).
    Check {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Print results as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn parse_epsilon(s: &str) -> std::result::Result<f64, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|e| format!("'{s}': {e}")),
    }
}

fn load(path: &Path, output: Option<PathBuf>) -> Result<SimulationConfig> {
    let mut cfg = SimulationConfig::load(path)?;
    if let Some(dir) = output {
        cfg.output.directory = dir;
    }
    Ok(cfg)
}

fn configure_threads() {
    let Ok(raw) = std::env::var("LELA_THREADS") else { return };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if !par::configure_threads(n) {
                warn!("LELA_THREADS={n} ignored (sequential build or pool already started)");
            }
        }
        _ => warn!("ignoring LELA_THREADS={raw:?}: expected a positive integer"),
    }
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, output } => {
            let cfg = load(&config, output)?;
            let out = run(&cfg)?;
            println!("run complete: {} steps to t = {}", out.steps, out.final_state.t);
            println!("  output            {}", out.directory.display());
            println!("  energy drift      {:.3e}", out.energy_drift());
            println!("  max |e'(h) dh/dt| {:.3e}", out.max_eprime_dth);
            if out.taylor_warnings > 0 {
                println!("  taylor warnings   {}", out.taylor_warnings);
            }
            Ok(true)
        }
        Command::Sweep { config, epsilons, samples, output } => {
            let cfg = load(&config, output)?;
            let sweep = epsilon_sweep(&cfg, &epsilons, samples)?;
            println!("{:>10} {:>10} {:>11} {:>11} {:>11}", "eps_a", "eps_b", "|dv|", "|dF|", "|dh|");
            for r in &sweep.cauchy {
                println!("{:>10.3e} {:>10.3e} {:>11.4e} {:>11.4e} {:>11.4e}", r.epsilon_a, r.epsilon_b, r.v, r.f, r.h);
            }
            println!();
            println!("{:>10} {:>14} {:>14} {:>8}", "eps", "max|e'dh/dt|", "|div v|(T)", "steps");
            for m in &sweep.members {
                println!("{:>10.3e} {:>14.4e} {:>14.4e} {:>8}", m.epsilon, m.max_eprime_dth, m.div_v_final, m.steps);
            }
            println!("results in {}", cfg.output.directory.display());
            Ok(true)
        }
        Command::Initdata { config, output } => {
            let cfg = load(&config, output)?;
            let data = initdata(&cfg)?;
            let res = data.residuals();
            println!("compatible data at epsilon = {:e}, order {}", data.epsilon, data.order);
            println!("  iterations {} (converged: {})", data.iterations, data.converged);
            println!("  contraction ratios {:?}", data.ratios());
            println!("  plate residuals {res:?}");
            println!("  written to {}", cfg.output.directory.display());
            Ok(true)
        }
        Command::Check { suite, json } => {
            let results = run_suite(&suite)?;
            let passed = results.iter().all(|r| r.passed);
            if json {
                println!("{}", serde_json::to_string_pretty(&results)?);
            } else {
                for r in &results {
                    let tag = if r.passed { "ok  " } else { "FAIL" };
                    println!("{tag} {:<11} {:<28} {:.3e} (threshold {:.1e})", r.suite, r.name, r.value, r.threshold);
                }
                println!("{} of {} checks passed", results.iter().filter(|r| r.passed).count(), results.len());
            }
            Ok(passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
