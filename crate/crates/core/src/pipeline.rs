//! End-to-end task preparation and evaluation shared by the CLI, sweeps and tests.
//!
//! Normalisation statistics always come from the first `floor(r · T)` bins, so
//! nothing from the test segment leaks into the scaling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{fit_ar, ArModel};
use crate::evalkit::nrmse;
use crate::harvest::{
    ablate, fit_ridge, online_fit_predict, remove_series, AblationMode, AblationSpec,
    HarvestModel, OnlineRun, DEFAULT_BETA,
};
use crate::ingest::{
    bin_counts, check_causality, check_ratio, make_task, multiplex, normalize, BinOptions,
    EventLog, FeatureMatrix, NormStats, SeriesMatrix, Task,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub target: String,
    pub tau: usize,
    pub p: usize,
    pub r: f64,
    pub exclude: Vec<String>,
    pub beta: f64,
    pub fit_intercept: bool,
}

impl Default for TaskConfig {
    /// Target `5e`, τ = 7, p = 6, r = 0.8, intersection 5's other approaches excluded.
    fn default() -> Self {
        Self {
            target: "5e".into(),
            tau: 7,
            p: 6,
            r: 0.8,
            exclude: vec!["5n".into(), "5s".into(), "5w".into()],
            beta: DEFAULT_BETA,
            fit_intercept: true,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        check_causality(self.tau, self.p)?;
        check_ratio("train ratio r", self.r)?;
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be ≥ 0, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PreparedTask {
    pub config: TaskConfig,
    pub norm_stats: NormStats,
    pub normalized: SeriesMatrix,
    pub features: FeatureMatrix,
    pub task: Task,
}

impl PreparedTask {
    /// Normalised target series over every bin.
    pub fn target_series(&self) -> Vec<f64> {
        self.normalized
            .series(&self.config.target)
            .expect("target checked by make_task")
    }
}

pub fn prepare(series: &SeriesMatrix, cfg: &TaskConfig) -> Result<PreparedTask> {
    cfg.validate()?;
    let norm_rows = ((cfg.r * series.n_times() as f64).floor() as usize).max(1);
    let stats = NormStats::fit_prefix(series, norm_rows.min(series.n_times()))?;
    let (normalized, norm_stats) = normalize(series, Some(&stats))?;
    let features = multiplex(&normalized, cfg.p)?;
    let task = make_task(&features, &cfg.target, cfg.tau, &cfg.exclude, cfg.r)?;
    Ok(PreparedTask {
        config: cfg.clone(),
        norm_stats,
        normalized,
        features,
        task,
    })
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: HarvestModel,
    pub train_pred: Vec<f64>,
    pub test_pred: Vec<f64>,
    pub nrmse_train: f64,
    pub nrmse_test: f64,
}

pub fn fit_prepared(prep: &PreparedTask) -> Result<FitOutcome> {
    let cfg = &prep.config;
    let task = &prep.task;
    let readout = fit_ridge(task.x_train(), task.y_train(), cfg.beta, cfg.fit_intercept)?;
    let model = HarvestModel {
        weights: readout.weights,
        intercept: readout.intercept,
        beta: readout.beta,
        fit_intercept: readout.fit_intercept,
        tau: cfg.tau,
        interval_s: prep.normalized.interval_s,
        p: cfg.p,
        feature_labels: task.feature_labels.clone(),
        norm_stats: prep.norm_stats.clone(),
        target_name: cfg.target.clone(),
    };
    let train_pred = model.predict(task.x_train())?;
    let test_pred = model.predict(task.x_test())?;
    Ok(FitOutcome {
        nrmse_train: nrmse(task.y_train(), &train_pred)?,
        nrmse_test: nrmse(task.y_test(), &test_pred)?,
        model,
        train_pred,
        test_pred,
    })
}

pub fn fit_and_evaluate(series: &SeriesMatrix, cfg: &TaskConfig) -> Result<(PreparedTask, FitOutcome)> {
    let prep = prepare(series, cfg)?;
    let fit = fit_prepared(&prep)?;
    Ok((prep, fit))
}

#[derive(Debug, Clone)]
pub struct ArOutcome {
    pub model: ArModel,
    pub test_pred: Vec<f64>,
    pub nrmse_test: f64,
}

/// AR(`order`) baseline on the same target rows and split as the harvest task.
pub fn ar_baseline(prep: &PreparedTask, order: usize) -> Result<ArOutcome> {
    let y = prep.target_series();
    let task = &prep.task;
    let (n_train, n_rows, tau) = (task.n_train, task.n_rows(), task.tau);
    if n_train + 1 < order {
        return Err(Error::Data(format!(
            "training split of {n_train} rows is too short for AR({order})"
        )));
    }
    let model = fit_ar(&y[..n_train + tau], order, tau)?;
    let test_pred = model.predict(&y[n_train + 1 - order..n_rows])?;
    Ok(ArOutcome {
        nrmse_test: nrmse(task.y_test(), &test_pred)?,
        model,
        test_pred,
    })
}

/// Predictions of a stored model on fresh events, in normalised units.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    /// Bin index of the predicted target value.
    pub target_times: Vec<usize>,
    /// `None` when the events do not contain the target series.
    pub actual: Option<Vec<f64>>,
    pub predicted: Vec<f64>,
}

pub fn predict_events(model: &HarvestModel, log: &EventLog, bin: &BinOptions) -> Result<PredictionTable> {
    let mut names: Vec<String> = model.series().into_iter().map(str::to_owned).collect();
    let has_target = log.records.iter().any(|r| r.series == model.target_name);
    if has_target {
        names.push(model.target_name.clone());
    }
    let opts = BinOptions {
        names: Some(names),
        ..bin.clone()
    };
    let series = bin_counts(log, model.interval_s, &opts)?;
    let (normalized, _) = normalize(&series, Some(&model.norm_stats))?;
    let features = multiplex(&normalized, model.p)?;
    let total = normalized.n_times();
    let rows = if has_target {
        total.saturating_sub(model.tau)
    } else {
        features.n_rows()
    };
    if rows == 0 {
        return Err(Error::Data(format!(
            "{total} bins are too few for horizon {}",
            model.tau
        )));
    }
    let predicted = model.predict_labeled(&features.values[..rows], &features.labels)?;
    let actual = has_target.then(|| {
        let y = normalized.series(&model.target_name).expect("target binned");
        y[model.tau..model.tau + rows].to_vec()
    });
    Ok(PredictionTable {
        target_times: (0..rows).map(|t| t + model.tau).collect(),
        actual,
        predicted,
    })
}

#[derive(Debug, Clone)]
pub struct OnlineOutcome {
    pub run: OnlineRun,
    pub actual: Vec<f64>,
    pub nrmse: f64,
}

/// Online refitting on a task prepared with `r = r1`.
pub fn online(series: &SeriesMatrix, cfg: &TaskConfig, r1: f64, r2: f64) -> Result<OnlineOutcome> {
    let prep = prepare(series, &TaskConfig { r: r1, ..cfg.clone() })?;
    let task = &prep.task;
    let run = online_fit_predict(&task.x, &task.y, r1, r2, cfg.beta, cfg.fit_intercept)?;
    let actual = task.y[run.start()..].to_vec();
    Ok(OnlineOutcome {
        nrmse: nrmse(&actual, &run.predictions)?,
        actual,
        run,
    })
}

/// One `(r1, r2)` cell of an online grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineCell {
    pub r1: f64,
    pub r2: f64,
    pub delta: Option<usize>,
    pub rounds: usize,
    pub nrmse: Option<f64>,
    /// `ok`, or the reason the cell was skipped.
    pub status: String,
}

/// Evaluates every `r1 ≤ r2` pair; invalid cells are kept with their reason.
pub fn online_grid(series: &SeriesMatrix, cfg: &TaskConfig, r1s: &[f64], r2s: &[f64]) -> Result<Vec<OnlineCell>> {
    if r1s.is_empty() || r2s.is_empty() {
        return Err(Error::InvalidParameter("online grid ranges must be non-empty".into()));
    }
    let pairs: Vec<(f64, f64)> = r1s
        .iter()
        .flat_map(|&a| r2s.iter().map(move |&b| (a, b)))
        .filter(|(a, b)| a <= b)
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no grid cell satisfies r1 ≤ r2".into()));
    }
    let cells: Vec<OnlineCell> = pairs
        .par_iter()
        .map(|&(r1, r2)| match online(series, cfg, r1, r2) {
            Ok(o) => OnlineCell {
                r1,
                r2,
                delta: Some(o.run.schedule.delta),
                rounds: o.run.schedule.rounds.len(),
                nrmse: Some(o.nrmse),
                status: "ok".into(),
            },
            Err(e) => OnlineCell {
                r1,
                r2,
                delta: None,
                rounds: 0,
                nrmse: None,
                status: e.to_string(),
            },
        })
        .collect();
    if cells.iter().all(|c| c.nrmse.is_none()) {
        return Err(Error::InvalidParameter(format!(
            "every online cell is invalid (first: {})",
            cells[0].status
        )));
    }
    Ok(cells)
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub mode: AblationMode,
    pub model: HarvestModel,
    pub test_pred: Vec<f64>,
    pub nrmse_test: f64,
    /// Ridge objective on the reduced training features.
    pub train_objective: f64,
}

/// Removes `removed` from a fitted model in both modes and scores each.
pub fn ablation_study(
    prep: &PreparedTask,
    base: &HarvestModel,
    removed: &[String],
) -> Result<Vec<AblationOutcome>> {
    let task = &prep.task;
    let x_train = crate::harvest::select_columns(task.x_train(), &task.feature_labels, &base.feature_labels)?;
    let (reduced_train, _) = remove_series(&x_train, &base.feature_labels, removed);
    [AblationMode::Fixed, AblationMode::Relearn]
        .into_iter()
        .map(|mode| {
            let spec = AblationSpec {
                removed_series: removed.to_vec(),
                mode,
            };
            let model = ablate(base, &x_train, task.y_train(), &spec)?;
            let test_pred = model.predict_labeled(task.x_test(), &task.feature_labels)?;
            Ok(AblationOutcome {
                mode,
                nrmse_test: nrmse(task.y_test(), &test_pred)?,
                train_objective: model.readout().objective(&reduced_train, task.y_train())?,
                model,
                test_pred,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EventLog;
    use crate::trafficnet::{build_lattice, SignalTemplate, TrafficState};

    fn simulated_series(steps: usize) -> (SeriesMatrix, EventLog) {
        let net = build_lattice(3, 3, &SignalTemplate::default(), 21).unwrap();
        let sim = net
            .simulate(&TrafficState::uniform(&net, 4.0), steps, 1.0)
            .unwrap();
        let log = EventLog::from(&sim.log);
        let m = bin_counts(&log, 1.0, &BinOptions::default()).unwrap();
        (m, log)
    }

    #[test]
    fn normalisation_uses_training_prefix_only() {
        let (m, _) = simulated_series(400);
        let cfg = TaskConfig {
            p: 2,
            ..TaskConfig::default()
        };
        let prep = prepare(&m, &cfg).unwrap();
        let prefix = NormStats::fit_prefix(&m, 320).unwrap();
        assert_eq!(prep.norm_stats, prefix);
        assert_eq!(prep.task.n_train, (0.8 * (400 - 7) as f64).floor() as usize);
    }

    #[test]
    fn ar_baseline_aligns_with_task_rows() {
        let (m, _) = simulated_series(400);
        let prep = prepare(&m, &TaskConfig::default()).unwrap();
        let ar = ar_baseline(&prep, 6).unwrap();
        assert_eq!(ar.test_pred.len(), prep.task.y_test().len());
        // recompute one prediction by hand
        let y = prep.target_series();
        let t = prep.task.n_train + 5;
        let manual = ar.model.intercept
            + ar.model.coefficients.iter().enumerate().map(|(k, c)| c * y[t - 5 + k]).sum::<f64>();
        assert!((manual - ar.test_pred[5]).abs() < 1e-12);
    }

    #[test]
    fn stored_model_reproduces_training_predictions() {
        let (m, log) = simulated_series(400);
        let (prep, fit) = fit_and_evaluate(&m, &TaskConfig::default()).unwrap();
        let table = predict_events(&fit.model, &log, &BinOptions::default()).unwrap();
        let n = prep.task.n_train;
        assert_eq!(&table.predicted[..n], fit.train_pred.as_slice());
        assert_eq!(table.actual.as_ref().unwrap().as_slice(), prep.task.y.as_slice());
        let again = nrmse(&table.actual.unwrap()[..n], &table.predicted[..n]).unwrap();
        assert!((again - fit.nrmse_train).abs() <= 1e-12);
    }

    #[test]
    fn predict_without_target_series() {
        let (m, log) = simulated_series(300);
        let (_, fit) = fit_and_evaluate(&m, &TaskConfig::default()).unwrap();
        let stripped = EventLog::new(log.records.into_iter().filter(|r| r.series != "5e").collect());
        let table = predict_events(&fit.model, &stripped, &BinOptions::default()).unwrap();
        assert!(table.actual.is_none());
        assert!(!table.predicted.is_empty());
        let no_feature = EventLog::new(
            stripped.records.into_iter().filter(|r| r.series != "1n").collect(),
        );
        assert!(matches!(
            predict_events(&fit.model, &no_feature, &BinOptions::default()),
            Err(Error::MissingSeries(_))
        ));
    }

    #[test]
    fn online_diagonal_equals_one_shot() {
        let (m, _) = simulated_series(500);
        let cfg = TaskConfig::default();
        for r in [0.5, 0.7, 0.8] {
            let on = online(&m, &cfg, r, r).unwrap();
            let (_, fit) = fit_and_evaluate(&m, &TaskConfig { r, ..cfg.clone() }).unwrap();
            assert_eq!(on.run.predictions.len(), fit.test_pred.len());
            for (a, b) in on.run.predictions.iter().zip(&fit.test_pred) {
                assert!((a - b).abs() <= 1e-12);
            }
            assert!((on.nrmse - fit.nrmse_test).abs() <= 1e-12);
        }
    }

    #[test]
    fn online_grid_keeps_invalid_cells() {
        let (m, _) = simulated_series(500);
        let cfg = TaskConfig::default();
        let cells = online_grid(&m, &cfg, &[0.5, 0.9], &[0.5, 0.8, 1.0]).unwrap();
        // (0.9, 0.5) and (0.9, 0.8) are dropped, r2 = 1 cannot advance
        assert_eq!(cells.len(), 4);
        let diag = cells.iter().find(|c| c.r1 == 0.5 && c.r2 == 0.5).unwrap();
        let single = online(&m, &cfg, 0.5, 0.5).unwrap();
        assert_eq!(diag.nrmse, Some(single.nrmse));
        assert_eq!(diag.rounds, 1);
        assert!(cells.iter().filter(|c| c.r2 == 1.0).all(|c| c.nrmse.is_none()));
        assert!(online_grid(&m, &cfg, &[0.5], &[1.0]).is_err());
        assert!(online_grid(&m, &cfg, &[0.9], &[0.5]).is_err());
    }

    #[test]
    fn sweep_cells_equal_single_runs() {
        let (_, log) = simulated_series(600);
        let cfg = TaskConfig {
            p: 1,
            ..TaskConfig::default()
        };
        let taus = [1, 3, 5];
        let intervals = [1.0, 2.0, 3.0];
        let res = crate::evalkit::sweep(&log, &cfg, &taus, &intervals, &BinOptions::default()).unwrap();
        for (ti, &tau) in taus.iter().enumerate() {
            for (ii, &iv) in intervals.iter().enumerate() {
                let cell = res.cell(ti, ii);
                let single = bin_counts(&log, iv, &BinOptions::default())
                    .and_then(|m| fit_and_evaluate(&m, &TaskConfig { tau, ..cfg.clone() }));
                match single {
                    Ok((_, fit)) => assert_eq!(cell.nrmse, Some(fit.nrmse_test)),
                    Err(_) => assert!(cell.nrmse.is_none()),
                }
            }
        }
        // tau = 1 with p = 1 violates causality and is recorded, not fatal
        assert!(res.cell(0, 0).nrmse.is_none());
        assert!(res.cell(0, 0).status.contains("causality"));
    }

    #[test]
    fn sweep_fails_when_every_cell_fails() {
        let (_, log) = simulated_series(200);
        let cfg = TaskConfig::default();
        assert!(crate::evalkit::sweep(&log, &cfg, &[2, 3], &[1.0], &BinOptions::default()).is_err());
    }

    #[test]
    fn ablation_modes_on_simulated_task() {
        let (m, _) = simulated_series(600);
        let (prep, fit) = fit_and_evaluate(&m, &TaskConfig::default()).unwrap();
        let removed = crate::evalkit::top_series(&fit.model, 3);
        let out = ablation_study(&prep, &fit.model, &removed).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[1].train_objective <= out[0].train_objective);
        let none = ablation_study(&prep, &fit.model, &[]).unwrap();
        for o in none {
            assert!((o.nrmse_test - fit.nrmse_test).abs() < 1e-12);
        }
    }
}
