use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Pearson correlation; `NaN` when either side is constant.
    pub pearson: f64,
    pub rmse: f64,
    pub mae: f64,
}

pub fn metrics<T: Real>(pred: &[T], truth: &[T]) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::dim("predictions", truth.len(), pred.len()));
    }
    if pred.len() < 2 {
        return Err(Error::Config("metrics need at least two observations".into()));
    }
    let n = pred.len() as f64;
    let (mut sp, mut st) = (0.0, 0.0);
    let (mut sse, mut sae) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (p, t) = (p.widen(), t.widen());
        sp += p;
        st += t;
        sse += (p - t) * (p - t);
        sae += (p - t).abs();
    }
    let (mp, mt) = (sp / n, st / n);
    let (mut cov, mut vp, mut vt) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dp, dt) = (p.widen() - mp, t.widen() - mt);
        cov += dp * dt;
        vp += dp * dp;
        vt += dt * dt;
    }
    let pearson = if vp == 0.0 || vt == 0.0 {
        log::warn!("Pearson correlation undefined for constant input");
        f64::NAN
    } else {
        cov / (vp * vt).sqrt()
    };
    Ok(Metrics {
        pearson,
        rmse: (sse / n).sqrt(),
        mae: sae / n,
    })
}

/// Mean and sample standard deviation (denominator `n − 1`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
