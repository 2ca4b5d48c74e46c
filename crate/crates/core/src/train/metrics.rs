use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Held-out error and agreement. `pc` is `None` when either vector has
/// zero variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub pc: Option<f64>,
}

pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "metrics need equal non-empty vectors, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let d = p - t;
        abs += d.abs();
        sq += d * d;
    }
    Ok(Metrics {
        n: pred.len(),
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        pc: pearson(pred, truth),
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    // sqrt(a·a) == |a| exactly, so pc(x, x) is exactly 1.
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Fold-averaged metrics. `pc` averages only folds where it is defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub pc: Option<f64>,
    pub pc_defined_folds: usize,
}

pub fn mean_metrics(folds: &[Metrics]) -> MeanMetrics {
    let k = folds.len() as f64;
    let pcs: Vec<f64> = folds.iter().filter_map(|m| m.pc).collect();
    MeanMetrics {
        mae: folds.iter().map(|m| m.mae).sum::<f64>() / k,
        rmse: folds.iter().map(|m| m.rmse).sum::<f64>() / k,
        pc: (!pcs.is_empty()).then(|| pcs.iter().sum::<f64>() / pcs.len() as f64),
        pc_defined_folds: pcs.len(),
    }
}
