use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use daflow::harness::{
    bench_timing, run_attitude_mc, run_toy, write_attitude_csv, write_timing_csv, write_toy_csv, RunMethod,
    Scenario, ScenarioConfig,
};
use daflow::{Error, Result};

#[derive(Parser)]
#[command(name = "daflow", version, about = "Differential-algebra particle flow filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Truncation order override.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<RunMethod>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Range-measurement example: DA flow map against per-particle ODE flow.
    Toy(RunArgs),
    /// Attitude Monte Carlo campaign.
    Attitude(RunArgs),
    /// Per-step timing of both filters over a grid of ensemble sizes.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Particles per state dimension.
        #[arg(long, value_delimiter = ',', default_value = "50,100,250")]
        particles: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a configuration file and exit.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(args: &RunArgs, scenario: Scenario) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if cfg.scenario != scenario {
        return Err(Error::Config(format!("{} holds a {:?} scenario", args.config.display(), cfg.scenario)));
    }
    if let Some(k) = args.order {
        cfg.order = k;
    }
    if let Some(m) = args.method {
        cfg.method = m;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Toy(args) => {
            let cfg = load(&args, Scenario::ToyRange)?;
            let res = run_toy(&cfg)?;
            create(&args.out)?;
            write_toy_csv(&res, &args.out)?;
            if let Some(d) = res.rms_discrepancy {
                println!("order {} rms discrepancy DA vs ODE: {d:.3e}", res.order);
            }
            for (k, d) in &res.sweep {
                println!("  sweep order {k}: {d:.3e}");
            }
        }
        Command::Attitude(args) => {
            let cfg = load(&args, Scenario::Attitude)?;
            let clock = Instant::now();
            let summary = run_attitude_mc(&cfg)?;
            create(&args.out)?;
            write_attitude_csv(&summary, &args.out)?;
            for (name, m) in [("da", &summary.da), ("ode", &summary.ode)] {
                let Some(m) = m else { continue };
                println!(
                    "{name}: mean xi_q {:.4e} xi_omega {:.4e} xi_bias {:.4e}, final xi_bias {:.4e}, 3-sigma coverage {:.3}, diverged {}",
                    m.mean_xi_q(),
                    m.mean_xi_omega(),
                    m.mean_xi_bias(),
                    m.xi_bias.last().copied().unwrap_or(f64::NAN),
                    m.coverage,
                    m.diverged.len()
                );
            }
            println!("wall clock {:.1} s", clock.elapsed().as_secs_f64());
        }
        Command::Bench { config, particles, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            if cfg.scenario != Scenario::Attitude {
                return Err(Error::Config("bench needs an attitude scenario".into()));
            }
            let table = bench_timing(&cfg, &particles)?;
            create(&out)?;
            write_timing_csv(&table, &out)?;
            for r in &table.rows {
                println!("{:>3} N_p {:>5}: {:.4e} s/step", r.method, r.n_particles, r.step);
            }
            for (m, s) in &table.slopes {
                println!("{m} log-log slope {s:.3}");
            }
        }
        Command::Validate { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            println!("{}: ok ({:?}, {} particles)", config.display(), cfg.scenario, cfg.n_particles());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("daflow: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
