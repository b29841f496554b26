use std::path::{Path, PathBuf};

use harvest_core::pipeline::TaskConfig;
use harvest_core::trafficnet::{LatticeConfig, SignalTemplate};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Flat run record. Loaded from `--config`, then overridden by flags and `CH_SEED`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub events: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,

    pub target: String,
    pub tau: usize,
    pub interval_s: f64,
    pub p: usize,
    pub r: f64,
    pub beta: f64,
    pub exclude: Vec<String>,
    pub fit_intercept: bool,
    pub ar_order: usize,
    pub top_k: usize,

    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub remove: Vec<String>,
    pub remove_top: Option<usize>,
    pub taus: Vec<usize>,
    pub intervals: Vec<f64>,

    pub dim: usize,
    pub lag: usize,
    pub max_points: usize,

    pub rows: usize,
    pub cols: usize,
    pub steps: usize,
    pub seconds_per_step: f64,
    pub load: f64,
    pub min_period: f64,
    pub max_period: f64,
    pub periods: Vec<f64>,
    pub open: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let task = TaskConfig::default();
        let signals = SignalTemplate::default();
        Self {
            events: None,
            model: None,
            predictions: None,
            out: PathBuf::from("out"),
            seed: 42,
            target: task.target,
            tau: task.tau,
            interval_s: 18.0,
            p: task.p,
            r: task.r,
            beta: task.beta,
            exclude: task.exclude,
            fit_intercept: task.fit_intercept,
            ar_order: task.p,
            top_k: 20,
            r1: vec![0.5, 0.6, 0.7, 0.8],
            r2: vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.95],
            remove: Vec::new(),
            remove_top: None,
            taus: (7..=12).collect(),
            intervals: vec![6.0, 12.0, 18.0, 24.0, 30.0],
            dim: 3,
            lag: 1,
            max_points: harvest_core::evalkit::DEFAULT_MAX_POINTS,
            rows: 4,
            cols: 4,
            steps: 4000,
            seconds_per_step: 1.0,
            load: 10.0,
            min_period: signals.min_period,
            max_period: signals.max_period,
            periods: Vec::new(),
            open: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn task(&self) -> TaskConfig {
        TaskConfig {
            target: self.target.clone(),
            tau: self.tau,
            p: self.p,
            r: self.r,
            exclude: self.exclude.clone(),
            beta: self.beta,
            fit_intercept: self.fit_intercept,
        }
    }

    /// Task parameters that every data command checks before reading input.
    pub fn validate_task(&self) -> Result<TaskConfig, CliError> {
        let task = self.task();
        task.validate()?;
        if !(self.interval_s.is_finite() && self.interval_s > 0.0) {
            return Err(CliError::usage(format!("interval must be positive, got {}", self.interval_s)));
        }
        Ok(task)
    }

    pub fn lattice(&self) -> LatticeConfig {
        LatticeConfig {
            rows: self.rows,
            cols: self.cols,
            torus: !self.open,
            signals: SignalTemplate {
                min_period: self.min_period,
                max_period: self.max_period,
                period_choices: self.periods.clone(),
                ..SignalTemplate::default()
            },
            seed: self.seed,
        }
    }
}

/// An input path that must exist before any work starts.
pub fn existing<'a>(path: Option<&'a Path>, what: &str) -> Result<&'a Path, CliError> {
    let path = path.ok_or_else(|| CliError::usage(format!("no {what} file given")))?;
    if !path.is_file() {
        return Err(CliError::usage(format!("{what} file {} does not exist", path.display())));
    }
    Ok(path)
}
