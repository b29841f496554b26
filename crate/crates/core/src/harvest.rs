//! Linear readout fitted on observed series.
//!
//! The readout solves the ridge problem
//!
//! ```text
//! min_w ‖y − X w‖² + β ‖w‖²
//! ```
//!
//! with `X` the `T × F` matrix of feature rows, i.e. the `F × F` regularised
//! normal equations `(XᵀX + βI) w = Xᵀy`. It is evaluated through the thin SVD
//! `X = U Σ Vᵀ` as `w = V diag(σ / (σ² + β)) Uᵀ y`, which stays accurate when
//! `XᵀX` is nearly singular. Singular values below `1e-10 · σ_max` are treated
//! as zero, so `β = 0` gives the minimum-norm least-squares solution and small
//! `β` approach it continuously.
//!
//! An intercept is an appended constant-one feature and is penalised like
//! every other weight.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ingest::{FeatureLabel, NormStats};
use crate::{Error, Result, FORMAT_VERSION};

/// Relative singular-value cutoff of the pseudo-inverse.
pub const PINV_RCOND: f64 = 1e-10;

pub const DEFAULT_BETA: f64 = 1e-3;

/// Fitted weights without any alignment metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub beta: f64,
    pub fit_intercept: bool,
}

fn check_rows(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Data("ridge fit needs at least two rows".into()));
    }
    let f = x[0].len();
    if f == 0 {
        return Err(Error::Dimension("feature rows are empty".into()));
    }
    if x.iter().any(|r| r.len() != f) {
        return Err(Error::Dimension("feature rows have different lengths".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in ridge inputs".into()));
    }
    Ok(f)
}

fn design_matrix(x: &[Vec<f64>], f: usize, fit_intercept: bool) -> DMatrix<f64> {
    let cols = f + usize::from(fit_intercept);
    DMatrix::from_fn(x.len(), cols, |i, j| if j < f { x[i][j] } else { 1.0 })
}

/// Least-squares state compressed to at most `cols` rows: `X = QR` keeps the
/// singular values and right vectors of `X`, and `Qᵀy` carries the target.
#[derive(Debug, Clone)]
struct Reduced {
    core: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl Reduced {
    fn new(design: DMatrix<f64>, target: DVector<f64>) -> Self {
        let cols = design.ncols();
        if design.nrows() <= cols {
            return Self { core: design, rhs: target };
        }
        let qr = design.qr();
        let mut qty = target;
        qr.q_tr_mul(&mut qty);
        Self {
            core: qr.r(),
            rhs: qty.rows(0, cols).into_owned(),
        }
    }

    /// Same reduction as refactoring every row seen so far.
    fn append(self, design: DMatrix<f64>, target: DVector<f64>) -> Self {
        let (a, b) = (self.core.nrows(), design.nrows());
        let stacked = DMatrix::from_fn(a + b, design.ncols(), |i, j| {
            if i < a {
                self.core[(i, j)]
            } else {
                design[(i - a, j)]
            }
        });
        let rhs = DVector::from_fn(a + b, |i, _| if i < a { self.rhs[i] } else { target[i - a] });
        Self::new(stacked, rhs)
    }

    fn solve(&self, beta: f64, fit_intercept: bool) -> Result<Readout> {
        let svd = self.core.clone().svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::Numerical("SVD did not converge".into())),
        };
        let sigma = svd.singular_values;
        let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
        let uty = u.transpose() * &self.rhs;
        let mut coeff = DVector::zeros(sigma.len());
        for k in 0..sigma.len() {
            let s = sigma[k];
            let filter = if s <= PINV_RCOND * sigma_max {
                0.0
            } else if beta > 0.0 {
                s / (s * s + beta)
            } else {
                1.0 / s
            };
            coeff[k] = filter * uty[k];
        }
        let w = v_t.transpose() * coeff;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("ridge solution is not finite".into()));
        }
        let mut weights: Vec<f64> = w.iter().cloned().collect();
        let intercept = if fit_intercept {
            weights.pop().expect("intercept column present")
        } else {
            0.0
        };
        Ok(Readout {
            weights,
            intercept,
            beta,
            fit_intercept,
        })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be ≥ 0, got {beta}")));
    }
    Ok(())
}

/// Ridge (or, for `beta = 0`, minimum-norm least-squares) readout.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], beta: f64, fit_intercept: bool) -> Result<Readout> {
    check_beta(beta)?;
    let f = check_rows(x, y)?;
    let reduced = Reduced::new(design_matrix(x, f, fit_intercept), DVector::from_column_slice(y));
    reduced.solve(beta, fit_intercept)
}

impl Readout {
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter()
            .map(|row| {
                if row.len() != self.weights.len() {
                    return Err(Error::Dimension(format!(
                        "row has {} features, model has {}",
                        row.len(),
                        self.weights.len()
                    )));
                }
                Ok(row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.intercept)
            })
            .collect()
    }

    /// The ridge loss this readout minimises on `(x, y)`.
    pub fn objective(&self, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
        let pred = self.predict(x)?;
        let rss: f64 = pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum();
        let mut penalty: f64 = self.weights.iter().map(|w| w * w).sum();
        if self.fit_intercept {
            penalty += self.intercept * self.intercept;
        }
        Ok(rss + self.beta * penalty)
    }
}

/// A readout together with everything needed to rebuild its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub beta: f64,
    pub fit_intercept: bool,
    pub tau: usize,
    pub interval_s: f64,
    pub p: usize,
    pub feature_labels: Vec<FeatureLabel>,
    pub norm_stats: NormStats,
    pub target_name: String,
}

impl HarvestModel {
    pub fn readout(&self) -> Readout {
        Readout {
            weights: self.weights.clone(),
            intercept: self.intercept,
            beta: self.beta,
            fit_intercept: self.fit_intercept,
        }
    }

    pub fn with_readout(&self, readout: Readout, labels: Vec<FeatureLabel>) -> Result<Self> {
        if readout.weights.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} feature labels",
                readout.weights.len(),
                labels.len()
            )));
        }
        Ok(Self {
            weights: readout.weights,
            intercept: readout.intercept,
            beta: readout.beta,
            fit_intercept: readout.fit_intercept,
            feature_labels: labels,
            ..self.clone()
        })
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.readout().predict(x)
    }

    /// Predicts from rows whose columns are named by `labels`, picking out
    /// the model's own features.
    pub fn predict_labeled(&self, x: &[Vec<f64>], labels: &[FeatureLabel]) -> Result<Vec<f64>> {
        let picked = select_columns(x, labels, &self.feature_labels)?;
        self.predict(&picked)
    }

    pub fn series(&self) -> BTreeSet<&str> {
        self.feature_labels.iter().map(|l| l.series.as_str()).collect()
    }
}

/// Columns of `x` (labelled `labels`) reordered to `wanted`.
pub fn select_columns(
    x: &[Vec<f64>],
    labels: &[FeatureLabel],
    wanted: &[FeatureLabel],
) -> Result<Vec<Vec<f64>>> {
    let mut idx = Vec::with_capacity(wanted.len());
    let mut missing = BTreeSet::new();
    for w in wanted {
        match labels.iter().position(|l| l == w) {
            Some(k) => idx.push(k),
            None => {
                missing.insert(w.series.clone());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingSeries(missing.into_iter().collect()));
    }
    Ok(x.iter().map(|row| idx.iter().map(|&k| row[k]).collect()).collect())
}

/// One refit of the online schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRound {
    /// Rows `0..train_end` were used for fitting.
    pub train_end: usize,
    pub predict_start: usize,
    pub predict_end: usize,
    pub readout: Readout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSchedule {
    pub r1: f64,
    pub r2: f64,
    pub delta: usize,
    pub rounds: Vec<OnlineRound>,
}

/// Number of rows predicted by each refit, `round((1/r2 − 1) · r1 · T)`, at least 1.
pub fn online_delta(r1: f64, r2: f64, total: usize) -> Result<usize> {
    if !(r1 > 0.0 && r1 <= r2 && r2 <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "online ratios must satisfy 0 < r1 ≤ r2 ≤ 1, got r1 = {r1}, r2 = {r2}"
        )));
    }
    let raw = (1.0 / r2 - 1.0) * r1 * total as f64;
    if raw <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "r2 = {r2} gives an empty prediction window; the schedule cannot advance"
        )));
    }
    // absorb representation error so that exact halves round up
    Ok(((raw + 1e-9).round() as usize).max(1))
}

/// Prediction over rows `floor(r1·T)..T` with periodic refits on all rows seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRun {
    pub predictions: Vec<f64>,
    pub schedule: OnlineSchedule,
}

impl OnlineRun {
    pub fn start(&self) -> usize {
        self.schedule.rounds[0].predict_start
    }
}

pub fn online_fit_predict(
    x: &[Vec<f64>],
    y: &[f64],
    r1: f64,
    r2: f64,
    beta: f64,
    fit_intercept: bool,
) -> Result<OnlineRun> {
    let total = y.len();
    if x.len() != total {
        return Err(Error::Dimension(format!("{} rows for {} targets", x.len(), total)));
    }
    let delta = online_delta(r1, r2, total)?;
    let first = (r1 * total as f64).floor() as usize;
    if first < 2 || first >= total {
        return Err(Error::Data(format!(
            "r1 = {r1} on {total} rows leaves no training or prediction rows"
        )));
    }
    // floor(r1·T) + round((1 − r1)·T) can fall one row short of T; the
    // diagonal is the one-shot split, so it gets a single round
    let delta = if r1 == r2 { total - first } else { delta };
    check_beta(beta)?;
    let f = check_rows(x, y)?;
    let block = |a: usize, b: usize| {
        (
            design_matrix(&x[a..b], f, fit_intercept),
            DVector::from_column_slice(&y[a..b]),
        )
    };
    let (d0, t0) = block(0, first);
    // each refit folds only the newly revealed rows into the reduced system
    let mut reduced = Reduced::new(d0, t0);
    let mut seen = first;
    let mut rounds = Vec::new();
    let mut predictions = Vec::with_capacity(total - first);
    let mut start = first;
    while start < total {
        let end = (start + delta).min(total);
        if start > seen {
            let (d, t) = block(seen, start);
            reduced = reduced.append(d, t);
            seen = start;
        }
        let readout = reduced.solve(beta, fit_intercept)?;
        predictions.extend(readout.predict(&x[start..end])?);
        rounds.push(OnlineRound {
            train_end: start,
            predict_start: start,
            predict_end: end,
            readout,
        });
        start = end;
    }
    Ok(OnlineRun {
        predictions,
        schedule: OnlineSchedule {
            r1,
            r2,
            delta,
            rounds,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMode {
    /// Delete the removed series' weights from the trained readout.
    Fixed,
    /// Refit the readout without the removed series.
    Relearn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub removed_series: Vec<String>,
    pub mode: AblationMode,
}

/// Drops every column belonging to `removed` series.
pub fn remove_series(
    x: &[Vec<f64>],
    labels: &[FeatureLabel],
    removed: &[String],
) -> (Vec<Vec<f64>>, Vec<FeatureLabel>) {
    let keep: Vec<usize> = (0..labels.len())
        .filter(|&k| !removed.contains(&labels[k].series))
        .collect();
    (
        x.iter().map(|row| keep.iter().map(|&k| row[k]).collect()).collect(),
        keep.iter().map(|&k| labels[k].clone()).collect(),
    )
}

/// Removes sensor series from `model`.
///
/// `x_train`/`y_train` must be the rows (in the model's column order) the model
/// was fitted on; they are only used by [`AblationMode::Relearn`].
pub fn ablate(
    model: &HarvestModel,
    x_train: &[Vec<f64>],
    y_train: &[f64],
    spec: &AblationSpec,
) -> Result<HarvestModel> {
    let present = model.series();
    let missing: Vec<String> = spec
        .removed_series
        .iter()
        .filter(|s| !present.contains(s.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSeries(missing));
    }
    let keep: Vec<usize> = (0..model.feature_labels.len())
        .filter(|&k| !spec.removed_series.contains(&model.feature_labels[k].series))
        .collect();
    if keep.is_empty() {
        return Err(Error::Data("ablation would remove every feature".into()));
    }
    let labels: Vec<FeatureLabel> = keep.iter().map(|&k| model.feature_labels[k].clone()).collect();
    let readout = match spec.mode {
        AblationMode::Fixed => Readout {
            weights: keep.iter().map(|&k| model.weights[k]).collect(),
            ..model.readout()
        },
        AblationMode::Relearn => {
            let (x, _) = remove_series(x_train, &model.feature_labels, &spec.removed_series);
            fit_ridge(&x, y_train, model.beta, model.fit_intercept)?
        }
    };
    model.with_readout(readout, labels)
}

/// Persisted model container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelKind {
    Harvest(HarvestModel),
    Ar(crate::baseline::ArModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub model: ModelKind,
}

impl ModelFile {
    pub fn new(model: ModelKind) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        if let ModelKind::Harvest(m) = &file.model {
            if m.weights.len() != m.feature_labels.len() {
                return Err(Error::Dimension("model weights and labels disagree".into()));
            }
        }
        Ok(file)
    }
}
