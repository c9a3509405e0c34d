//! `rabi-dpt`: quench dynamics, Loschmidt rates and semiclassics of the quantum Rabi model.
//!
//! Exit status is 0 on success, 1 on a numerical failure and 2 on a usage error.

mod config;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rabi_dpt::quench::InitialStateSource;
use rabi_dpt::semiclassics::Sampling;
use rabi_dpt::spectra::SpectrumCache;
use rabi_dpt::Branch;

use config::{Mode, RunConfig};

#[derive(Debug)]
pub struct CliError {
    pub usage: bool,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { usage: true, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError { usage: false, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::numeric(format!("{}: {e}", path.display()))
    }
}

impl From<rabi_dpt::Error> for CliError {
    fn from(e: rabi_dpt::Error) -> Self {
        CliError { usage: e.is_usage(), message: e.to_string() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "rabi-dpt", version, about = "Dynamical phase transitions in the quantum Rabi model")]
struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Spectrum cache directory (default: $RABI_DPT_CACHE, else no cache).
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write a gnuplot script for the main CSV.
    #[arg(long, global = true)]
    gnuplot_script: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dynamical critical line g2c(g1).
    PhaseDiagram(PhaseArgs),
    /// Long-time averaged order parameters after quenches g1 -> g2.
    Quench(QuenchArgs),
    /// Loschmidt rate function and its kinks.
    Rate(RateArgs),
    /// Long-time averaged σx against η.
    Scaling(ScalingArgs),
    /// Mean-field trajectories, sections and ensemble averages.
    Semiclassical(SemiArgs),
    /// Inspect or clear the spectrum cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand, Debug)]
enum CacheAction {
    List,
    Stat,
    Purge {
        /// Only entries older than this, e.g. `7d` or `12h`.
        #[arg(long, value_parser = humantime::parse_duration)]
        older_than: Option<Duration>,
    },
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    omega0: Option<f64>,
    #[arg(long)]
    cutoff: Option<usize>,
    /// `plus` or `minus`.
    #[arg(long)]
    branch: Option<Branch>,
    /// `analytic` or `numeric-doublet`.
    #[arg(long)]
    initial_state: Option<InitialStateSource>,
}

#[derive(Args, Debug, Default)]
struct WindowArgs {
    /// Averaging window start, in units of 1/ω₀.
    #[arg(long)]
    window_start: Option<f64>,
    #[arg(long)]
    window_end: Option<f64>,
    #[arg(long)]
    window_samples: Option<usize>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct PhaseArgs {
    #[arg(long)]
    g1_min: Option<f64>,
    #[arg(long)]
    g1_max: Option<f64>,
    /// Number of intervals; the table has steps + 1 rows.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct QuenchArgs {
    #[arg(long)]
    g1: Option<f64>,
    #[arg(long)]
    g2: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    g2_list: Option<Vec<f64>>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// Also write the expectation values at every window sample.
    #[arg(long)]
    series: bool,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct RateArgs {
    #[arg(long)]
    g1: Option<f64>,
    #[arg(long)]
    g2: Option<f64>,
    #[command(flatten)]
    model: ModelArgs,
    /// Final time in units of 1/ω₀.
    #[arg(long, alias = "t-max")]
    tmax: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Fixed threshold on the slope jump instead of the adaptive one.
    #[arg(long)]
    kink_threshold: Option<f64>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct ScalingArgs {
    #[arg(long)]
    g1: Option<f64>,
    #[arg(long)]
    g2: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    eta_list: Option<Vec<f64>>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct SemiArgs {
    #[arg(long)]
    g1: Option<f64>,
    #[arg(long)]
    g2: Option<f64>,
    /// Ensemble averages for each of these couplings.
    #[arg(long, value_delimiter = ',')]
    g2_list: Option<Vec<f64>>,
    /// Sets the ensemble widths.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    branch: Option<Branch>,
    #[arg(long, alias = "t-max")]
    tmax: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Stroboscopic section points.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    t_final: Option<f64>,
    /// Write every n-th trajectory sample.
    #[arg(long)]
    stride: Option<usize>,
    /// Ensemble size; enables ensemble averaging.
    #[arg(long)]
    samples: Option<usize>,
    /// `wigner-gaussian` or `single-trajectory`.
    #[arg(long)]
    sampling: Option<Sampling>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variance_scale: Option<f64>,
    #[command(flatten)]
    window: WindowArgs,
}

impl ModelArgs {
    fn apply(self, c: &mut RunConfig) {
        c.eta = self.eta;
        c.omega0 = self.omega0;
        c.cutoff = self.cutoff;
        c.branch = self.branch;
        c.initial_state = self.initial_state;
    }
}

impl WindowArgs {
    /// Window keys only override the file when given; partial windows are
    /// completed from the file or the defaults at resolution time.
    fn into_parts(self) -> [Option<f64>; 3] {
        [self.window_start, self.window_end, self.window_samples.map(|n| n as f64)]
    }
}

/// Flags as a partial config, plus the window parts kept aside.
fn flag_config(cmd: Command) -> (Mode, RunConfig, [Option<f64>; 3]) {
    let mut c = RunConfig::default();
    let mut window = [None; 3];
    let mode = match cmd {
        Command::PhaseDiagram(a) => {
            c.g1_min = a.g1_min;
            c.g1_max = a.g1_max;
            c.steps = a.steps;
            Mode::PhaseDiagram
        }
        Command::Quench(a) => {
            c.g1 = a.g1;
            c.g2 = a.g2;
            c.g2_list = a.g2_list;
            c.series = a.series.then_some(true);
            a.model.apply(&mut c);
            window = a.window.into_parts();
            Mode::Quench
        }
        Command::Rate(a) => {
            c.g1 = a.g1;
            c.g2 = a.g2;
            c.t_max = a.tmax;
            c.dt = a.dt;
            c.kink_threshold = a.kink_threshold;
            a.model.apply(&mut c);
            Mode::Rate
        }
        Command::Scaling(a) => {
            c.g1 = a.g1;
            c.g2 = a.g2;
            c.eta_list = a.eta_list;
            a.model.apply(&mut c);
            window = a.window.into_parts();
            Mode::Scaling
        }
        Command::Semiclassical(a) => {
            c.g1 = a.g1;
            c.g2 = a.g2;
            c.g2_list = a.g2_list;
            c.eta = a.eta;
            c.branch = a.branch;
            c.t_max = a.tmax;
            c.dt = a.dt;
            c.points = a.points;
            c.t_final = a.t_final;
            c.stride = a.stride;
            c.n_samples = a.samples;
            c.sampling = a.sampling;
            c.seed = a.seed;
            c.variance_scale = a.variance_scale;
            window = a.window.into_parts();
            Mode::Semiclassical
        }
        Command::Cache { .. } => unreachable!("cache commands carry no run config"),
    };
    (mode, c, window)
}

fn cache_from(dir: Option<PathBuf>) -> Option<SpectrumCache> {
    dir.map(SpectrumCache::new).or_else(SpectrumCache::from_env)
}

fn cache_admin(action: CacheAction, dir: Option<PathBuf>) -> Result<(), CliError> {
    let cache = cache_from(dir).ok_or_else(|| {
        CliError::usage(format!("no cache directory: pass --cache-dir or set {}", rabi_dpt::spectra::CACHE_ENV))
    })?;
    std::fs::create_dir_all(cache.dir()).map_err(|e| CliError::io(cache.dir(), e))?;
    match action {
        CacheAction::List => {
            for e in cache.list()? {
                match e.params {
                    Some(p) => println!(
                        "{}\teta={} omega0={} g={} cutoff={}\t{} bytes\t{}",
                        e.path.display(),
                        p.eta,
                        p.omega0,
                        p.g,
                        p.cutoff,
                        e.size,
                        humantime::format_rfc3339_seconds(std::time::UNIX_EPOCH + Duration::from_secs(e.modified))
                    ),
                    None => println!("{}\t(unreadable header)\t{} bytes", e.path.display(), e.size),
                }
            }
        }
        CacheAction::Stat => {
            println!("{}", serde_json::to_string_pretty(&cache.stat()?).expect("stats serialize"));
        }
        CacheAction::Purge { older_than } => {
            let n = cache.purge(older_than)?;
            println!("removed {n} entries");
        }
    }
    Ok(())
}

fn real_main() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            e.print().ok();
            return if usage { Err(CliError::usage(String::new())) } else { Ok(()) };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    }))
    .init();

    if let Command::Cache { action } = cli.command {
        return cache_admin(action, cli.cache_dir);
    }

    let file = match &cli.config {
        Some(path) => config::load(path)?,
        None => RunConfig::default(),
    };
    let (mode, mut flags, window_parts) = flag_config(cli.command);
    if let Some(m) = file.mode {
        if m != mode {
            return Err(CliError::usage(format!(
                "config is for mode `{}` but `{}` was requested",
                m.as_str(),
                mode.as_str()
            )));
        }
    }
    flags.mode = Some(mode);
    flags.output_dir = cli.out;
    flags.cache_dir = cli.cache_dir;
    flags.threads = cli.threads;
    flags.gnuplot_script = cli.gnuplot_script.then_some(true);
    let mut config = file.overlay(flags);
    if window_parts.iter().any(Option::is_some) {
        let mut w = config.window();
        if let Some(v) = window_parts[0] {
            w.t_start = v;
        }
        if let Some(v) = window_parts[1] {
            w.t_end = v;
        }
        if let Some(v) = window_parts[2] {
            w.n_samples = v as usize;
        }
        config.window = Some(w);
    }

    if let Some(n) = config.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::numeric(format!("thread pool: {e}")))?;
    }
    run::run(mode, config)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(if e.usage { 2 } else { 1 })
        }
    }
}
