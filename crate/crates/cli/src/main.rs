//! `neurofield`: solve waves, simulate every level of the model and run the
//! certification experiments.
//!
//! Exit codes: 0 pass, 1 fail or inconclusive, 2 config error, 3 runtime error.

mod plot;
mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neurofield::config::{Config, OutputFormat};
use neurofield::diffusion::{simulate_activity, simulate_voltage};
use neurofield::ensemble::Execution;
use neurofield::error::Error;
use neurofield::harness::{self, ExperimentKind, Report};
use neurofield::jumpchain::{self, ChainSettings, ChainState};
use neurofield::model::{GainFunction, Network};
use neurofield::rng;
use neurofield::spde::CoupledSystem;
use neurofield::table::Table;
use neurofield::wave::solve_profile;
use neurofield::{meanfield, Result};

const THREADS_ENV: &str = "NEUROFIELD_THREADS";

#[derive(Parser)]
#[command(name = "neurofield", version, about = "Finite-size fluctuations of neural fields")]
struct Cli {
    /// TOML config file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set chain.replicas=200`. Repeated keys: last wins.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory; defaults to `<output.directory>/<command>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run replicas on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Traveling-wave profile and speed for the configured model.
    SolveWave,
    /// One jump-chain path per population size in `chain.sizes`, with the mean-field path.
    SimulateMc {
        #[arg(long, default_value_t = 0)]
        replica: u64,
    },
    /// Activity and voltage diffusions on shared increments.
    SimulateSde {
        #[arg(long, default_value_t = 0)]
        replica: u64,
    },
    /// One coupled continuum/network realization around the forward wave.
    SimulateSpde {
        #[arg(long, default_value_t = 0)]
        replica: u64,
        /// Number of evenly spaced field snapshots.
        #[arg(long, default_value_t = 5)]
        snapshots: usize,
    },
    /// Law of large numbers: sup error of the jump chain against the mean field over N.
    RunLln,
    /// Central limit: variance and normality of the rescaled martingale.
    RunClt,
    /// Continuum limit of the network SPDE around the forward wave, over the levels m.
    RunContinuum,
    /// Correlated-noise covariance, sampler consistency and condition (i).
    NoiseChecks,
    /// Wave, dispersion and Ito-consistency checks.
    RunChecks,
    /// Render plots for an output directory and print its summary.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::SolveWave => "solve-wave",
            Self::SimulateMc { .. } => "simulate-mc",
            Self::SimulateSde { .. } => "simulate-sde",
            Self::SimulateSpde { .. } => "simulate-spde",
            Self::RunLln => "run-lln",
            Self::RunClt => "run-clt",
            Self::RunContinuum => "run-continuum",
            Self::NoiseChecks => "noise-checks",
            Self::RunChecks => "run-checks",
            Self::Report { .. } => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Done,
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    fn of(report: &Report) -> Self {
        if report.inconclusive {
            Self::Inconclusive
        } else if report.passed() {
            Self::Pass
        } else {
            Self::Fail
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Done => "done",
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Inconclusive => "inconclusive",
        }
    }

    fn code(self) -> ExitCode {
        match self {
            Self::Done | Self::Pass => ExitCode::SUCCESS,
            Self::Fail | Self::Inconclusive => ExitCode::from(1),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Report { input } = &cli.command {
        return match render::report(input) {
            Ok(status) => status.code(),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(3)
            }
        };
    }
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let threads = match configure_threads() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let dir = cli.out.clone().unwrap_or_else(|| Path::new(&config.output.directory).join(cli.command.name()));
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return ExitCode::from(3);
    }

    let outcome = execute(&cli.command, &config, exec, &dir);
    let (label, error) = match &outcome {
        Ok(s) => (s.label(), None),
        Err(e) => ("error", Some(e.to_string())),
    };
    if let Err(e) = write_manifest(&dir, cli.command.name(), &config, exec, threads, label, error.as_deref()) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(3);
    }
    match outcome {
        Ok(status) => {
            println!("{}: {} ({})", cli.command.name(), status.label(), dir.display());
            status.code()
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    match &cli.config {
        Some(path) => Config::load(path, &cli.overrides),
        None => Config::from_toml_str("", &cli.overrides),
    }
}

/// Sizes the global worker pool from the environment; returns the thread count used.
fn configure_threads() -> Result<usize> {
    let requested = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(|| Error::Config {
            key: THREADS_ENV.into(),
            message: format!("expected a positive integer, got `{v}`"),
        })?),
        Err(_) => None,
    };
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = requested {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        }
        Ok(rayon::current_num_threads())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        Ok(1)
    }
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: &Config,
    exec: Execution,
    threads: usize,
    status: &str,
    error: Option<&str>,
) -> std::io::Result<()> {
    let mut m = toml::Table::new();
    m.insert("command".into(), command.into());
    m.insert("status".into(), status.into());
    m.insert("config_hash".into(), config.hash().into());
    m.insert("seed".into(), (config.harness.seed as i64).into());
    m.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    m.insert("parallel".into(), (exec == Execution::Parallel && Execution::is_parallel_available()).into());
    m.insert("threads".into(), (threads as i64).into());
    if let Some(e) = error {
        m.insert("error".into(), e.into());
    }
    std::fs::write(dir.join("manifest.toml"), toml::to_string(&m).expect("plain table"))?;
    std::fs::write(dir.join("config.toml"), config.to_toml())
}

fn execute(command: &Command, config: &Config, exec: Execution, dir: &Path) -> Result<Status> {
    let report = |kind: ExperimentKind| -> Result<Status> {
        let r = harness::run(kind, config, exec)?;
        finish(r, config, dir)
    };
    match command {
        Command::SolveWave => solve_wave(config, dir),
        Command::SimulateMc { replica } => simulate_mc(config, exec, dir, *replica),
        Command::SimulateSde { replica } => simulate_sde(config, dir, *replica),
        Command::SimulateSpde { replica, snapshots } => simulate_spde(config, dir, *replica, *snapshots),
        Command::RunLln => report(ExperimentKind::Lln),
        Command::RunClt => report(ExperimentKind::Clt),
        Command::RunContinuum => report(ExperimentKind::Continuum),
        Command::NoiseChecks => report(ExperimentKind::NoiseChecks),
        Command::RunChecks => {
            let mut combined = harness::run_wave(config, exec)?;
            combined.merge("dispersion", harness::dispersion_checks(config, exec)?);
            combined.merge("ito", harness::ito_check(config, exec)?);
            finish(combined, config, dir)
        }
        Command::Report { .. } => unreachable!("handled before config loading"),
    }
}

fn finish(report: Report, config: &Config, dir: &Path) -> Result<Status> {
    report.write(dir)?;
    if plots_wanted(config) {
        render::render_dir(dir)?;
    }
    print!("{}", report.summary());
    Ok(Status::of(&report))
}

fn plots_wanted(config: &Config) -> bool {
    config.output.formats.contains(&OutputFormat::Svg)
}

fn solve_wave(config: &Config, dir: &Path) -> Result<Status> {
    let profile = solve_profile(&config.gain()?, &config.kernel()?, &config.wave)?;
    profile.save(&dir.join("profile.csv"))?;
    println!("c = {:.12}, residual = {:e}", profile.speed(), profile.residual_norm());
    if plots_wanted(config) {
        render::render_dir(dir)?;
    }
    Ok(Status::Done)
}

fn simulate_mc(config: &Config, exec: Execution, dir: &Path, replica: u64) -> Result<Status> {
    let c = &config.chain;
    let f = config.gain()?;
    let net = Network::ring(&config.kernel()?, c.populations)?;
    let settings = ChainSettings { horizon: c.horizon, output_points: c.output_points, policy: c.policy, rates: c.rates };
    let runs: Vec<_> = neurofield::ensemble::try_map_replicas(exec, c.sizes.len(), |i| {
        let n = c.sizes[i];
        let initial = ChainState::from_activities(&c.initial, n)?;
        let seed = config.harness.seed.wrapping_add(i as u64);
        let path = jumpchain::simulate(&initial, &net, &f, &settings, &mut rng::stream(seed, replica))?;
        Ok((n, path))
    })?;
    for (n, path) in &runs {
        path.to_table().with_meta("N", n).save(&dir.join(format!("path_N{n}.csv")))?;
    }
    let mf = meanfield::integrate(&c.initial, &net, &f, c.horizon, 1e-3, c.output_points)?;
    mf.to_table().save(&dir.join("meanfield.csv"))?;
    if plots_wanted(config) {
        render::render_dir(dir)?;
    }
    Ok(Status::Done)
}

fn simulate_sde(config: &Config, dir: &Path, replica: u64) -> Result<Status> {
    let s = &config.sde;
    let f = config.gain()?;
    let net = Network::from_rows(vec![vec![1.0]])?;
    let seed = config.harness.seed;
    let a = simulate_activity(&[s.initial], &net, &f, s.population_size, s.horizon, s.dt, s.output_points, &mut rng::stream(seed, replica))?;
    let u0 = f.inverse(s.initial)?;
    let u = simulate_voltage(&[u0], &net, &f, s.population_size, s.horizon, s.dt, s.output_points, &mut rng::stream(seed, replica))?;
    let mut t = Table::new(["time", "activity", "voltage", "inverse_activity"])
        .with_meta("N", s.population_size)
        .with_meta("dt", a.dt)
        .with_meta("clamped", a.flagged);
    for i in 0..a.times.len() {
        t.push(vec![a.times[i], a.states[i][0], u.states[i][0], f.inverse(a.states[i][0])?]);
    }
    t.save(&dir.join("sde.csv"))?;
    if plots_wanted(config) {
        render::render_dir(dir)?;
    }
    Ok(Status::Done)
}

fn simulate_spde(config: &Config, dir: &Path, replica: u64, snapshots: usize) -> Result<Status> {
    let f = GainFunction::new(config.model.gain.gamma, config.harness.continuum.kappa)?;
    let kernel = config.kernel()?;
    let profile = solve_profile(&f, &kernel, &config.wave)?;
    let system = CoupledSystem::build(config.spde.clone(), &config.noise, &profile, &f, &kernel)?;
    let path = system.simulate(&mut rng::stream(config.harness.seed, replica), true, true)?;

    let mut header = vec!["time".to_string(), "deviation".to_string()];
    header.extend(config.spde.levels.iter().map(|m| format!("m{m}")));
    let mut errors = Table::new(header).with_meta("delta", system.delta()).with_meta("c", profile.speed());
    for i in 0..path.times.len() {
        let mut row = vec![path.times[i], path.deviation[i]];
        row.extend(path.distances.iter().map(|d| d[i]));
        errors.push(row);
    }
    errors.save(&dir.join("errors.csv"))?;

    let centres = system.continuum.grid().centres();
    let last = path.times.len() - 1;
    let count = snapshots.clamp(1, path.times.len());
    for s in 0..count {
        let i = if count == 1 { last } else { s * last / (count - 1) };
        let t = path.times[i];
        let wave = system.continuum.wave(t);
        let mut table = Table::new(["x", "u", "v"]).with_meta("t", t);
        for (k, &x) in centres.iter().enumerate() {
            table.push(vec![x, path.snapshots[i][k], path.snapshots[i][k] - wave[k]]);
        }
        table.save(&dir.join(format!("snapshot_{s}.csv")))?;
    }
    if plots_wanted(config) {
        render::render_dir(dir)?;
    }
    Ok(Status::Done)
}
