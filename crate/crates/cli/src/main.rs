//! `harvest`: simulate traffic, fit linear readouts on crossing counts, and
//! evaluate them. Every subcommand writes plain CSV/JSON into `--out`.

mod commands;
mod config;
mod report;
mod table;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use harvest_core::Error;

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self::Core(Error::Data(msg.into()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Core(e) => match e {
                Error::InvalidParameter(_) | Error::Causality { .. } | Error::Dimension(_) => 2,
                Error::Numerical(_) => 4,
                _ => 3,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => f.write_str(m),
            Self::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Core(Error::Io(e))
    }
}

#[derive(Parser, Debug)]
#[command(name = "harvest", version, about = "Forecast traffic counts with linear readouts on observed series")]
struct Cli {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (network draw, subsampling)
    #[arg(long, global = true, env = "CH_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a signalised lattice and write network, events and trajectory
    Simulate(SimArgs),
    /// Fit a readout on an event log and report train/test NRMSE
    Fit {
        #[command(flatten)]
        task: TaskArgs,
        /// Number of ranked features to report (0 = all)
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Apply a stored model to an event log
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Refit the readout online over a grid of (r1, r2)
    Online {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, value_delimiter = ',')]
        r1: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        r2: Option<Vec<f64>>,
    },
    /// Remove series from a readout, with and without refitting
    Ablate {
        #[command(flatten)]
        task: TaskArgs,
        /// Use this model's weights as the baseline instead of fitting one
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        remove: Option<Vec<String>>,
        /// Remove the k highest-ranked series
        #[arg(long)]
        remove_top: Option<usize>,
    },
    /// Test NRMSE over a (tau, interval) grid
    Sweep {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        intervals: Option<Vec<f64>>,
    },
    /// Power spectra of a predictions file, or of the binned target series
    Spectrum {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Delay-embed actual and predicted series of a predictions file
    Embed {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        lag: Option<usize>,
    },
    /// Wasserstein distance between two attractor clouds
    Wd {
        /// Embed both columns of this predictions file and compare them
        #[arg(long, conflicts_with_all = ["a", "b"])]
        predictions: Option<PathBuf>,
        #[arg(long, requires = "b")]
        a: Option<PathBuf>,
        #[arg(long, requires = "a")]
        b: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        lag: Option<usize>,
        #[arg(long)]
        max_points: Option<usize>,
    },
    /// Render SVG views of the CSV artifacts in a directory
    Report {
        /// Artifact directory (defaults to --out)
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seconds_per_step: Option<f64>,
    /// Initial vehicles on every link
    #[arg(long)]
    load: Option<f64>,
    #[arg(long)]
    min_period: Option<f64>,
    #[arg(long)]
    max_period: Option<f64>,
    /// Draw each node's period from this list instead of [min, max]
    #[arg(long, value_delimiter = ',')]
    periods: Option<Vec<f64>>,
    /// Open boundary instead of a torus
    #[arg(long)]
    open: bool,
}

#[derive(Args, Debug)]
struct TaskArgs {
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    tau: Option<usize>,
    /// Bin width in seconds
    #[arg(long)]
    interval: Option<f64>,
    #[arg(long)]
    p: Option<usize>,
    /// Training fraction
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Series left out of the features (comma separated; "" for none)
    #[arg(long, value_delimiter = ',')]
    exclude: Option<Vec<String>>,
    #[arg(long)]
    no_intercept: bool,
    #[arg(long)]
    ar_order: Option<usize>,
}

macro_rules! set {
    ($cfg:ident . $field:ident, $value:expr) => {
        if let Some(v) = $value {
            $cfg.$field = v;
        }
    };
}

impl SimArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set!(cfg.rows, self.rows);
        set!(cfg.cols, self.cols);
        set!(cfg.steps, self.steps);
        set!(cfg.seconds_per_step, self.seconds_per_step);
        set!(cfg.load, self.load);
        set!(cfg.min_period, self.min_period);
        set!(cfg.max_period, self.max_period);
        set!(cfg.periods, self.periods);
        cfg.open |= self.open;
    }
}

impl TaskArgs {
    fn apply(self, cfg: &mut RunConfig) {
        if self.events.is_some() {
            cfg.events = self.events;
        }
        set!(cfg.target, self.target);
        set!(cfg.tau, self.tau);
        set!(cfg.interval_s, self.interval);
        set!(cfg.p, self.p);
        set!(cfg.r, self.r);
        set!(cfg.beta, self.beta);
        if let Some(ex) = self.exclude {
            cfg.exclude = ex.into_iter().filter(|s| !s.is_empty()).collect();
        }
        if self.no_intercept {
            cfg.fit_intercept = false;
        }
        set!(cfg.ar_order, self.ar_order);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    set!(cfg.out, cli.out);
    set!(cfg.seed, cli.seed);
    match cli.command {
        Command::Simulate(args) => {
            args.apply(&mut cfg);
            commands::simulate(&cfg)
        }
        Command::Fit { task, top_k } => {
            task.apply(&mut cfg);
            set!(cfg.top_k, top_k);
            commands::fit(&cfg)
        }
        Command::Predict { model, events } => {
            if model.is_some() {
                cfg.model = model;
            }
            if events.is_some() {
                cfg.events = events;
            }
            commands::predict(&cfg)
        }
        Command::Online { task, r1, r2 } => {
            task.apply(&mut cfg);
            set!(cfg.r1, r1);
            set!(cfg.r2, r2);
            commands::online(&cfg)
        }
        Command::Ablate {
            task,
            model,
            remove,
            remove_top,
        } => {
            task.apply(&mut cfg);
            if model.is_some() {
                cfg.model = model;
            }
            set!(cfg.remove, remove);
            if remove_top.is_some() {
                cfg.remove_top = remove_top;
            }
            commands::ablate(&cfg)
        }
        Command::Sweep { task, taus, intervals } => {
            task.apply(&mut cfg);
            set!(cfg.taus, taus);
            set!(cfg.intervals, intervals);
            commands::sweep(&cfg)
        }
        Command::Spectrum { task, predictions } => {
            task.apply(&mut cfg);
            if predictions.is_some() {
                cfg.predictions = predictions;
            }
            commands::spectrum(&cfg)
        }
        Command::Embed { predictions, dim, lag } => {
            if predictions.is_some() {
                cfg.predictions = predictions;
            }
            set!(cfg.dim, dim);
            set!(cfg.lag, lag);
            commands::embed(&cfg)
        }
        Command::Wd {
            predictions,
            a,
            b,
            dim,
            lag,
            max_points,
        } => {
            if predictions.is_some() {
                cfg.predictions = predictions;
            }
            set!(cfg.dim, dim);
            set!(cfg.lag, lag);
            set!(cfg.max_points, max_points);
            commands::wd(&cfg, a.zip(b))
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(|| cfg.out.clone());
            commands::report(&dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
