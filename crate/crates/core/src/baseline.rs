//! Autoregressive baseline: the target predicted from its own past.
//!
//! The model is fitted in direct form, regressing `y(t + τ)` on the last `p`
//! values `y(t − p + 1), …, y(t)` plus a constant, so it answers the same
//! question as the harvesting readout and the two errors are comparable.

use serde::{Deserialize, Serialize};

use crate::harvest::fit_ridge;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub p: usize,
    /// Coefficients of `y(t − p + 1), …, y(t)`, oldest first.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub tau: usize,
}

fn lagged_rows(y: &[f64], p: usize, tau: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    (p - 1..y.len() - tau)
        .map(|t| (y[t + 1 - p..=t].to_vec(), y[t + tau]))
        .unzip()
}

/// Least-squares AR fit; rank-deficient designs get the minimum-norm coefficients.
pub fn fit_ar(y_train: &[f64], p: usize, tau: usize) -> Result<ArModel> {
    if p == 0 || tau == 0 {
        return Err(Error::InvalidParameter(format!(
            "AR order and horizon must be positive (p = {p}, tau = {tau})"
        )));
    }
    if y_train.len() < p + tau + 1 {
        return Err(Error::Data(format!(
            "AR({p}) with horizon {tau} needs at least {} training values, got {}",
            p + tau + 1,
            y_train.len()
        )));
    }
    if y_train.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in AR training series".into()));
    }
    let (rows, targets) = lagged_rows(y_train, p, tau);
    let n = rows.len() as f64;
    let x_mean: Vec<f64> = (0..p).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let y_mean = targets.iter().sum::<f64>() / n;
    let centred: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&x_mean).map(|(v, m)| v - m).collect())
        .collect();
    let centred_y: Vec<f64> = targets.iter().map(|v| v - y_mean).collect();
    // a flat window leaves only rounding residue after centring
    let scale = y_train.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let spread = centred.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let coefficients = if spread <= 1e-12 * scale {
        vec![0.0; p]
    } else {
        fit_ridge(&centred, &centred_y, 0.0, false)?.weights
    };
    let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
    Ok(ArModel {
        p,
        coefficients,
        intercept,
        tau,
    })
}

impl ArModel {
    fn apply(&self, window: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(window)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Slides the direct predictor over `history`: element `i` of the result
    /// predicts `history[i + p − 1 + τ]`. Predictions are never fed back.
    pub fn predict(&self, history: &[f64]) -> Result<Vec<f64>> {
        if history.len() < self.p {
            return Err(Error::Data(format!(
                "AR({}) prediction needs at least {} history values, got {}",
                self.p,
                self.p,
                history.len()
            )));
        }
        Ok(history.windows(self.p).map(|w| self.apply(w)).collect())
    }
}

pub fn predict_ar(model: &ArModel, history: &[f64]) -> Result<Vec<f64>> {
    model.predict(history)
}
