use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use harvest_core::evalkit::{self, delay_embed, power_spectrum, rank_features, wasserstein, AttractorCloud};
use harvest_core::harvest::{HarvestModel, ModelFile, ModelKind};
use harvest_core::ingest::{bin_counts, parse_events, BinOptions, EventLog, SeriesMatrix};
use harvest_core::pipeline::{self, TaskConfig};
use harvest_core::trafficnet::TrafficState;
use harvest_core::{Error, FORMAT_VERSION};
use serde_json::json;

use crate::config::{existing, RunConfig};
use crate::report;
use crate::table::{opt, read_pairs, write_key_values, write_rows};
use crate::CliError;

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.out)?;
    Ok(&cfg.out)
}

fn write_meta(cfg: &RunConfig, command: &str, outputs: &[&str]) -> Result<(), CliError> {
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "format_version": FORMAT_VERSION,
        "seed": cfg.seed,
        "config": cfg,
        "outputs": outputs,
    });
    let text = serde_json::to_string_pretty(&meta).map_err(Error::from)?;
    fs::write(cfg.out.join(format!("{command}.meta.json")), text + "\n")?;
    Ok(())
}

fn load_events(cfg: &RunConfig) -> Result<EventLog, CliError> {
    let path = existing(cfg.events.as_deref(), "events")?;
    Ok(parse_events(File::open(path)?)?)
}

fn binned(cfg: &RunConfig, log: &EventLog) -> Result<SeriesMatrix, CliError> {
    Ok(bin_counts(log, cfg.interval_s, &BinOptions::default())?)
}

fn load_model(path: &Path) -> Result<HarvestModel, CliError> {
    let text = fs::read_to_string(path)?;
    match ModelFile::from_json(&text)?.model {
        ModelKind::Harvest(m) => Ok(m),
        ModelKind::Ar(_) => Err(CliError::usage(format!(
            "{} holds an AR model; a harvesting readout is required",
            path.display()
        ))),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.steps == 0 {
        return Err(CliError::usage("steps must be at least 1"));
    }
    if !(cfg.load.is_finite() && cfg.load >= 0.0) {
        return Err(CliError::usage(format!("initial load must be ≥ 0, got {}", cfg.load)));
    }
    let net = cfg.lattice().build()?;
    let sim = net.simulate(&TrafficState::uniform(&net, cfg.load), cfg.steps, cfg.seconds_per_step)?;
    let dir = out_dir(cfg)?;
    fs::write(dir.join("network.json"), net.to_json()? + "\n")?;
    sim.log.write_csv(BufWriter::new(File::create(dir.join("events.csv"))?))?;
    sim.write_trajectory_csv(&net, BufWriter::new(File::create(dir.join("trajectory.csv"))?))?;
    write_meta(cfg, "simulate", &["network.json", "events.csv", "trajectory.csv"])?;
    println!(
        "simulated {}×{} lattice ({} links) for {} steps: {} crossing records",
        cfg.rows,
        cfg.cols,
        net.n_links(),
        cfg.steps,
        sim.log.records.len()
    );
    Ok(())
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let task_cfg = cfg.validate_task()?;
    let log = load_events(cfg)?;
    let series = binned(cfg, &log)?;
    let (prep, fit) = pipeline::fit_and_evaluate(&series, &task_cfg)?;
    let ar = pipeline::ar_baseline(&prep, cfg.ar_order).ok();
    let task = &prep.task;
    let dir = out_dir(cfg)?;

    let file = ModelFile::new(ModelKind::Harvest(fit.model.clone()));
    fs::write(dir.join("model.json"), file.to_json()? + "\n")?;
    write_key_values(
        &dir.join("fit_report.csv"),
        &[
            ("target", cfg.target.clone()),
            ("tau", cfg.tau.to_string()),
            ("interval_s", cfg.interval_s.to_string()),
            ("p", cfg.p.to_string()),
            ("r", cfg.r.to_string()),
            ("beta", cfg.beta.to_string()),
            ("fit_intercept", cfg.fit_intercept.to_string()),
            ("exclude", cfg.exclude.join(";")),
            ("n_bins", series.n_times().to_string()),
            ("n_features", task.feature_labels.len().to_string()),
            ("n_train", task.n_train.to_string()),
            ("n_test", task.y_test().len().to_string()),
            ("nrmse_train", fit.nrmse_train.to_string()),
            ("nrmse_test", fit.nrmse_test.to_string()),
            ("ar_order", cfg.ar_order.to_string()),
            ("nrmse_ar", opt(ar.as_ref().map(|a| a.nrmse_test))),
        ],
    )?;
    let k = if cfg.top_k == 0 { usize::MAX } else { cfg.top_k };
    write_rows(
        &dir.join("ranking.csv"),
        &["rank", "series", "lag", "weight"],
        rank_features(&fit.model, k)
            .into_iter()
            .enumerate()
            .map(|(i, f)| vec![(i + 1).to_string(), f.series, f.lag.to_string(), f.weight.to_string()]),
    )?;
    let predicted = fit.train_pred.iter().chain(&fit.test_pred);
    write_rows(
        &dir.join("fit_predictions.csv"),
        &["t", "actual", "predicted", "split"],
        task.y.iter().zip(predicted).enumerate().map(|(i, (a, p))| {
            let split = if i < task.n_train { "train" } else { "test" };
            vec![task.target_time(i).to_string(), a.to_string(), p.to_string(), split.into()]
        }),
    )?;
    write_meta(cfg, "fit", &["model.json", "fit_report.csv", "ranking.csv", "fit_predictions.csv"])?;
    println!(
        "{}: NRMSE train {:.4}, test {:.4}{}",
        cfg.target,
        fit.nrmse_train,
        fit.nrmse_test,
        ar.map(|a| format!(", AR({}) {:.4}", cfg.ar_order, a.nrmse_test))
            .unwrap_or_default()
    );
    Ok(())
}

pub fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load_model(existing(cfg.model.as_deref(), "model")?)?;
    let log = load_events(cfg)?;
    let table = pipeline::predict_events(&model, &log, &BinOptions::default())?;
    let dir = out_dir(cfg)?;
    write_rows(
        &dir.join("predictions.csv"),
        &["t", "actual", "predicted"],
        table.predicted.iter().enumerate().map(|(i, p)| {
            let actual = table.actual.as_ref().map(|a| a[i]);
            vec![table.target_times[i].to_string(), opt(actual), p.to_string()]
        }),
    )?;
    let score = match &table.actual {
        Some(a) => Some(evalkit::nrmse(a, &table.predicted)?),
        None => None,
    };
    write_key_values(
        &dir.join("predict_report.csv"),
        &[
            ("target", model.target_name.clone()),
            ("n_rows", table.predicted.len().to_string()),
            ("nrmse", opt(score)),
        ],
    )?;
    write_meta(cfg, "predict", &["predictions.csv", "predict_report.csv"])?;
    match score {
        Some(s) => println!("{} rows predicted, NRMSE {s:.4}", table.predicted.len()),
        None => println!("{} rows predicted (target absent, no score)", table.predicted.len()),
    }
    Ok(())
}

pub fn online(cfg: &RunConfig) -> Result<(), CliError> {
    let task_cfg = cfg.validate_task()?;
    for &r in cfg.r1.iter().chain(&cfg.r2) {
        if !(r > 0.0 && r <= 1.0) {
            return Err(CliError::usage(format!("online ratios must lie in (0, 1], got {r}")));
        }
    }
    let log = load_events(cfg)?;
    let series = binned(cfg, &log)?;
    let cells = pipeline::online_grid(&series, &task_cfg, &cfg.r1, &cfg.r2)?;
    let dir = out_dir(cfg)?;
    write_rows(
        &dir.join("online_grid.csv"),
        &["r1", "r2", "delta", "rounds", "nrmse", "status"],
        cells.iter().map(|c| {
            vec![
                c.r1.to_string(),
                c.r2.to_string(),
                c.delta.map(|d| d.to_string()).unwrap_or_default(),
                c.rounds.to_string(),
                opt(c.nrmse),
                c.status.clone(),
            ]
        }),
    )?;

    // detailed output for the finest valid update at the first r1 that has one
    let chosen = cfg
        .r1
        .iter()
        .find_map(|&r1| {
            cells
                .iter()
                .filter(|c| c.r1 == r1 && c.nrmse.is_some())
                .max_by(|a, b| a.r2.total_cmp(&b.r2))
        })
        .expect("online_grid returns at least one valid cell");
    let run = pipeline::online(&series, &task_cfg, chosen.r1, chosen.r2)?;
    let start = run.run.start();
    let mut rows = Vec::new();
    for (k, round) in run.run.schedule.rounds.iter().enumerate() {
        for i in round.predict_start..round.predict_end {
            rows.push(vec![
                (i + cfg.tau).to_string(),
                run.actual[i - start].to_string(),
                run.run.predictions[i - start].to_string(),
                k.to_string(),
            ]);
        }
    }
    write_rows(&dir.join("online_predictions.csv"), &["t", "actual", "predicted", "round"], rows)?;
    write_rows(
        &dir.join("online_schedule.csv"),
        &["round", "train_end", "predict_start", "predict_end"],
        run.run.schedule.rounds.iter().enumerate().map(|(k, r)| {
            vec![
                k.to_string(),
                r.train_end.to_string(),
                r.predict_start.to_string(),
                r.predict_end.to_string(),
            ]
        }),
    )?;
    write_meta(cfg, "online", &["online_grid.csv", "online_predictions.csv", "online_schedule.csv"])?;
    let valid = cells.iter().filter(|c| c.nrmse.is_some()).count();
    println!(
        "{valid}/{} grid cells valid; r1 = {}, r2 = {}: NRMSE {:.4} over {} rounds",
        cells.len(),
        chosen.r1,
        chosen.r2,
        run.nrmse,
        run.run.schedule.rounds.len()
    );
    Ok(())
}

pub fn ablate(cfg: &RunConfig) -> Result<(), CliError> {
    let stored = match &cfg.model {
        Some(_) => Some(load_model(existing(cfg.model.as_deref(), "model")?)?),
        None => None,
    };
    // a stored model fixes the task it was trained for
    let task_cfg = match &stored {
        Some(m) => TaskConfig {
            target: m.target_name.clone(),
            tau: m.tau,
            p: m.p,
            beta: m.beta,
            fit_intercept: m.fit_intercept,
            ..cfg.task()
        },
        None => cfg.task(),
    };
    task_cfg.validate()?;
    let interval_s = stored.as_ref().map_or(cfg.interval_s, |m| m.interval_s);
    let log = load_events(cfg)?;
    let series = bin_counts(&log, interval_s, &BinOptions::default())?;
    let prep = pipeline::prepare(&series, &task_cfg)?;
    let base = match stored {
        Some(m) => m,
        None => pipeline::fit_prepared(&prep)?.model,
    };
    let removed: Vec<String> = match cfg.remove_top {
        Some(k) if cfg.remove.is_empty() => evalkit::top_series(&base, k),
        Some(_) => return Err(CliError::usage("give either --remove or --remove-top, not both")),
        None => cfg.remove.clone(),
    };
    let task = &prep.task;
    let base_pred = base.predict_labeled(task.x_test(), &task.feature_labels)?;
    let base_nrmse = evalkit::nrmse(task.y_test(), &base_pred)?;
    let x_train = harvest_core::harvest::select_columns(task.x_train(), &task.feature_labels, &base.feature_labels)?;
    let base_objective = base.readout().objective(&x_train, task.y_train())?;
    let outcomes = pipeline::ablation_study(&prep, &base, &removed)?;

    let dir = out_dir(cfg)?;
    let joined = removed.join(";");
    let mut report_rows = vec![vec![
        "baseline".to_string(),
        String::new(),
        base.feature_labels.len().to_string(),
        base_nrmse.to_string(),
        base_objective.to_string(),
    ]];
    for o in &outcomes {
        let mode = serde_json::to_value(o.mode).map_err(Error::from)?;
        report_rows.push(vec![
            mode.as_str().unwrap_or_default().to_string(),
            joined.clone(),
            o.model.feature_labels.len().to_string(),
            o.nrmse_test.to_string(),
            o.train_objective.to_string(),
        ]);
    }
    write_rows(
        &dir.join("ablation_report.csv"),
        &["mode", "removed", "n_features", "nrmse_test", "train_objective"],
        report_rows,
    )?;
    write_rows(
        &dir.join("ablation_predictions.csv"),
        &["t", "actual", "baseline", "fixed", "relearn"],
        (0..base_pred.len()).map(|i| {
            let row = task.n_train + i;
            vec![
                task.target_time(row).to_string(),
                task.y[row].to_string(),
                base_pred[i].to_string(),
                outcomes[0].test_pred[i].to_string(),
                outcomes[1].test_pred[i].to_string(),
            ]
        }),
    )?;
    write_meta(cfg, "ablate", &["ablation_report.csv", "ablation_predictions.csv"])?;
    println!(
        "removed [{}]: NRMSE baseline {:.4}, fixed {:.4}, relearn {:.4}",
        removed.join(", "),
        base_nrmse,
        outcomes[0].nrmse_test,
        outcomes[1].nrmse_test
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let task_cfg = cfg.task();
    if cfg.taus.is_empty() || cfg.intervals.is_empty() {
        return Err(CliError::usage("sweep needs at least one tau and one interval"));
    }
    for &tau in &cfg.taus {
        TaskConfig { tau, ..task_cfg.clone() }.validate()?;
    }
    if let Some(bad) = cfg.intervals.iter().find(|i| !(i.is_finite() && **i > 0.0)) {
        return Err(CliError::usage(format!("intervals must be positive, got {bad}")));
    }
    let log = load_events(cfg)?;
    let result = evalkit::sweep(&log, &task_cfg, &cfg.taus, &cfg.intervals, &BinOptions::default())?;
    let dir = out_dir(cfg)?;
    result.write_csv(BufWriter::new(File::create(dir.join("sweep.csv"))?))?;
    write_meta(cfg, "sweep", &["sweep.csv"])?;
    let best = result
        .cells
        .iter()
        .filter_map(|c| c.nrmse.map(|v| (v, c)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("sweep returns at least one scored cell");
    println!(
        "{} cells; best NRMSE {:.4} at tau = {}, interval = {} s",
        result.cells.len(),
        best.0,
        best.1.tau,
        best.1.interval_s
    );
    Ok(())
}

pub fn spectrum(cfg: &RunConfig) -> Result<(), CliError> {
    let mut outputs: Vec<(String, Vec<f64>)> = Vec::new();
    if let Some(path) = &cfg.predictions {
        let (actual, predicted) = read_pairs(existing(Some(path), "predictions")?)?;
        outputs.push(("spectrum_actual.csv".into(), actual));
        outputs.push(("spectrum_predicted.csv".into(), predicted));
    } else {
        if !(cfg.interval_s.is_finite() && cfg.interval_s > 0.0) {
            return Err(CliError::usage(format!("interval must be positive, got {}", cfg.interval_s)));
        }
        let log = load_events(cfg)?;
        let series = binned(cfg, &log)?;
        let y = series
            .series(&cfg.target)
            .ok_or_else(|| Error::MissingSeries(vec![cfg.target.clone()]))?;
        outputs.push(("spectrum_target.csv".into(), y));
    }
    let dir = out_dir(cfg)?;
    for (name, y) in &outputs {
        power_spectrum(y)?.write_csv(BufWriter::new(File::create(dir.join(name))?))?;
    }
    let names: Vec<&str> = outputs.iter().map(|(n, _)| n.as_str()).collect();
    write_meta(cfg, "spectrum", &names)?;
    println!("wrote {}", names.join(", "));
    Ok(())
}

fn embed_pairs(cfg: &RunConfig) -> Result<(AttractorCloud, AttractorCloud), CliError> {
    let path = existing(cfg.predictions.as_deref(), "predictions")?;
    let (actual, predicted) = read_pairs(path)?;
    Ok((
        delay_embed(&actual, cfg.dim, cfg.lag)?,
        delay_embed(&predicted, cfg.dim, cfg.lag)?,
    ))
}

pub fn embed(cfg: &RunConfig) -> Result<(), CliError> {
    let (a, b) = embed_pairs(cfg)?;
    let dir = out_dir(cfg)?;
    a.write_csv(BufWriter::new(File::create(dir.join("attractor_actual.csv"))?))?;
    b.write_csv(BufWriter::new(File::create(dir.join("attractor_predicted.csv"))?))?;
    write_meta(cfg, "embed", &["attractor_actual.csv", "attractor_predicted.csv"])?;
    println!("embedded {} points in dimension {} (lag {})", a.len(), cfg.dim, cfg.lag);
    Ok(())
}

pub fn wd(cfg: &RunConfig, files: Option<(PathBuf, PathBuf)>) -> Result<(), CliError> {
    if cfg.max_points == 0 {
        return Err(CliError::usage("max_points must be positive"));
    }
    let (a, b) = match files {
        Some((pa, pb)) => {
            let read = |p: PathBuf| -> Result<AttractorCloud, CliError> {
                let p = existing(Some(&p), "attractor")?;
                Ok(AttractorCloud::read_csv(File::open(p)?)?)
            };
            (read(pa)?, read(pb)?)
        }
        None => embed_pairs(cfg)?,
    };
    let d = wasserstein(&a, &b, cfg.max_points, cfg.seed)?;
    let dir = out_dir(cfg)?;
    write_key_values(
        &dir.join("wd.csv"),
        &[
            ("wd", d.to_string()),
            ("n_a", a.len().to_string()),
            ("n_b", b.len().to_string()),
            ("max_points", cfg.max_points.to_string()),
            ("seed", cfg.seed.to_string()),
        ],
    )?;
    write_meta(cfg, "wd", &["wd.csv"])?;
    println!("{d}");
    Ok(())
}

pub fn report(dir: &Path) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", dir.display())));
    }
    let written = report::render_dir(dir)?;
    if written.is_empty() {
        return Err(CliError::data(format!("no artifacts to report in {}", dir.display())));
    }
    println!("wrote {}", written.join(", "));
    Ok(())
}
