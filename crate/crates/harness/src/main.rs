use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rvio_core::estimator::Mode;
use rvio_harness::output::{summary, write_comparison, write_run, write_sensors};
use rvio_harness::report::{render, run_observability, write_observability};
use rvio_harness::sweep::{spike_trials, sweep, write_sweep};
use rvio_harness::{compare_modes, run_scenario, HarnessError, ScenarioConfig};
use rvio_sim::rig::RangeSpike;

/// Exit code of a run whose filter diverged.
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rvio",
    about = "Simulated range-aided VIO experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Vio,
    RangeVio,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Vio => Mode::Vio,
            ModeArg::RangeVio => Mode::RangeVio,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and run one filter.
    Run(Common),
    /// Run VIO and range-VIO on the same streams.
    Compare(Common),
    /// Observability report of the configured trajectory.
    Observability {
        #[command(flatten)]
        common: Common,
        /// Overrides the features picked per facet stamp.
        #[arg(long)]
        per_stamp: Option<usize>,
    },
    /// Compare over a range of seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Number of seeds, starting at the configured seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Inject one range spike and compare against the spike-free run.
    Spike {
        #[command(flatten)]
        common: Common,
        /// Seconds into the run.
        #[arg(long, default_value_t = 20.0)]
        stamp: f64,
        /// Meters added to the measured range.
        #[arg(long, default_value_t = 7.0)]
        magnitude: f64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
}

fn load(c: &Common) -> Result<ScenarioConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = c.mode {
        cfg.mode = m.into();
    }
    if c.out.is_some() {
        cfg.output = c.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<u8, HarnessError> {
    match cmd {
        Command::Run(c) => {
            let cfg = load(&c)?;
            let (out, scene, streams) = run_scenario(&cfg)?;
            if let Some(dir) = &cfg.output {
                write_run(dir, &cfg, &out)?;
                write_sensors(dir, &scene, &streams)?;
            }
            print!("{}", summary(&cfg, &out));
            Ok(if out.failure.is_some() {
                EXIT_DIVERGED
            } else {
                0
            })
        }
        Command::Compare(c) => {
            let cfg = load(&c)?;
            let (cmp, scene, streams) = compare_modes(&cfg)?;
            if let Some(dir) = &cfg.output {
                write_comparison(dir, &cfg, &cmp)?;
                write_sensors(dir, &scene, &streams)?;
            }
            let (a, b) = (&cmp.vio.metrics, &cmp.range_vio.metrics);
            println!("streams sha256: {}", cmp.checksum);
            println!("distance: {:.3} m", b.distance);
            println!(
                "VIO max position error: {:.4} m ({:.3}%)",
                a.max_position_error, a.max_position_error_pct
            );
            println!(
                "range-VIO max position error: {:.4} m ({:.3}%)",
                b.max_position_error, b.max_position_error_pct
            );
            let diverged = cmp.vio.failure.is_some() || cmp.range_vio.failure.is_some();
            Ok(if diverged { EXIT_DIVERGED } else { 0 })
        }
        Command::Observability { common, per_stamp } => {
            let mut cfg = load(&common)?;
            if let Some(n) = per_stamp {
                cfg.observability.features_per_stamp = n;
            }
            let out = run_observability(&cfg)?;
            if let Some(dir) = &cfg.output {
                write_observability(dir, &cfg, &out)?;
            }
            print!("{}", render(&cfg, &out));
            Ok(0)
        }
        Command::Sweep { common, seeds } => {
            let cfg = load(&common)?;
            let list: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
            let s = sweep(&cfg, &list)?;
            if let Some(dir) = &cfg.output {
                write_sweep(dir, &s)?;
            }
            for r in &s.rows {
                println!(
                    "seed {:>4}: VIO {:.4} m, range-VIO {:.4} m ({:.3}%)",
                    r.seed, r.vio_max_error, r.range_vio_max_error, r.range_vio_max_pct
                );
            }
            println!(
                "median: VIO {:.4} m, range-VIO {:.4} m ({:.3}%), ratio {:.3}",
                s.median_vio_max_error,
                s.median_range_vio_max_error,
                s.median_range_vio_max_pct,
                s.ratio
            );
            let diverged = s
                .rows
                .iter()
                .any(|r| r.vio_diverged || r.range_vio_diverged);
            Ok(if diverged { EXIT_DIVERGED } else { 0 })
        }
        Command::Spike {
            common,
            stamp,
            magnitude,
            seeds,
        } => {
            let cfg = load(&common)?;
            let list: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
            let trials = spike_trials(&cfg, RangeSpike { stamp, magnitude }, &list)?;
            for t in &trials {
                println!(
                    "seed {:>4}: {:?} at t={:.3} (|r|/sqrt(S) = {:.2}), post-spike RMS difference {:.3e} m",
                    t.seed, t.status, t.stamp, t.normalized_innovation, t.rms_difference
                );
            }
            Ok(if trials.iter().any(|t| t.diverged) {
                EXIT_DIVERGED
            } else {
                0
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
