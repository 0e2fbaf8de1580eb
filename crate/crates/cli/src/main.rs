use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ris_slam::config::{load_value, preset_value, Config, Sweep};
use ris_slam::profile::ProfileStrategy;
use ris_slam::scenario::{
    initial_beampattern, initial_bounds, run_monte_carlo, write_beampattern_csv, write_bounds_csv, write_metrics_csv,
    write_runlog_csv,
};

/// RIS-aided radio SLAM simulator.
#[derive(Debug, Parser)]
#[command(name = "ris-slam", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo closed-loop SLAM; writes metrics.csv and runlog/<run>.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Position, heading and speed error bounds at the initial state; writes <strategy>/bounds.csv.
    Crlb {
        #[command(flatten)]
        common: Common,
        /// Sweep `key=start:stop:count` (linear) or `keylog=start:stop:count` (log).
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Beampattern gain of the first-step plan; writes <strategy>/beampattern.csv.
    Beampattern {
        #[command(flatten)]
        common: Common,
        /// Grid size `AZxEL`.
        #[arg(long, default_value = "41x41")]
        grid: String,
    },
    /// Prints the resolved configuration.
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML or JSON configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: `desk` (default) or `paper`.
    #[arg(long)]
    preset: Option<String>,
    /// Dotted override `key=value`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, env = "RIS_SLAM_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Restrict to these strategies (repeatable).
    #[arg(long)]
    strategy: Vec<ProfileStrategy>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn all_overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(r) = self.runs {
            o.push(format!("runs={r}"));
        }
        if !self.strategy.is_empty() {
            let list: Vec<String> = self.strategy.iter().map(|s| format!("\"{}\"", s.as_str())).collect();
            o.push(format!("strategies=[{}]", list.join(",")));
        }
        o
    }

    fn resolve(&self, extra: &[String]) -> ris_slam::Result<Config> {
        let mut o = self.all_overrides();
        o.extend_from_slice(extra);
        let base = match (&self.config, &self.preset) {
            (Some(p), _) => load_value(p)?,
            (None, Some(name)) => preset_value(name)?,
            (None, None) => preset_value("desk")?,
        };
        Config::from_value(base, &o)
    }
}

fn parse_grid(s: &str) -> ris_slam::Result<(usize, usize)> {
    let err = || ris_slam::Error::config("grid", format!("expected AZxEL, got `{s}`"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(err)?;
    let a: usize = a.trim().parse().map_err(|_| err())?;
    let b: usize = b.trim().parse().map_err(|_| err())?;
    if a == 0 || b == 0 {
        return Err(err());
    }
    Ok((a, b))
}

fn strategy_path(out: &Path, strategy: ProfileStrategy, file: &str) -> PathBuf {
    out.join(strategy.as_str()).join(file)
}

/// Exit code 1 for diverged runs; errors propagate.
fn execute(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::ValidateConfig { common } => {
            let cfg = common.resolve(&[])?;
            print!("{}", cfg.to_toml_string()?);
            Ok(0)
        }
        Command::Run { common, jobs } => {
            let cfg = common.resolve(&[])?;
            if jobs == Some(0) {
                return Err(ris_slam::Error::config("jobs", "must be at least 1").into());
            }
            let mc = run_monte_carlo(&cfg, jobs)?;
            write_metrics_csv(&common.out.join("metrics.csv"), &mc.summary).context("writing metrics.csv")?;
            for (r, recs) in mc.runs.iter().enumerate() {
                write_runlog_csv(&common.out.join("runlog").join(format!("{r}.csv")), recs)
                    .context("writing run log")?;
            }
            let diverged = mc.diverged();
            if diverged.is_empty() {
                Ok(0)
            } else {
                eprintln!("{} of {} runs diverged:", diverged.len(), mc.runs.len() * cfg.strategies.len());
                for (s, r) in diverged {
                    eprintln!("  strategy {} run {r}", s.as_str());
                }
                Ok(1)
            }
        }
        Command::Crlb { common, sweep } => {
            let base = common.resolve(&[])?;
            let points: Vec<(f64, Config)> = match sweep {
                Some(s) => {
                    let sw = Sweep::parse(&s)?;
                    sw.values
                        .iter()
                        .map(|v| Ok((*v, common.resolve(&[sw.override_for(*v)])?)))
                        .collect::<ris_slam::Result<_>>()?
                }
                None => vec![(base.ue.prior_sigma, base.clone())],
            };
            for strategy in &base.strategies {
                let rows = points
                    .iter()
                    .map(|(v, cfg)| {
                        let (p, h, s) = initial_bounds(cfg, *strategy)?;
                        Ok((*v, p, h, s))
                    })
                    .collect::<ris_slam::Result<Vec<_>>>()?;
                write_bounds_csv(&strategy_path(&common.out, *strategy, "bounds.csv"), &rows)?;
            }
            Ok(0)
        }
        Command::Beampattern { common, grid } => {
            let (n_az, n_el) = parse_grid(&grid)?;
            let cfg = common.resolve(&[])?;
            for strategy in &cfg.strategies {
                let rows = initial_beampattern(&cfg, *strategy, n_az, n_el)?;
                write_beampattern_csv(&strategy_path(&common.out, *strategy, "beampattern.csv"), &rows)?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<ris_slam::Error>(), Some(ris_slam::Error::Config { .. })));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}
