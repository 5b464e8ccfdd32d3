//! Per-level sample counts from level costs and pilot variances.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cost and (optionally) pilot variance of every level, coarsest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCost {
    /// `C_l`: nonzeros of `X_l`.
    pub nnz: Vec<usize>,
    /// `s²_l`: pilot sample variance.
    pub variances: Option<Vec<f64>>,
}

impl LevelCost {
    pub fn new(nnz: Vec<usize>) -> Self {
        Self {
            nnz,
            variances: None,
        }
    }

    pub fn with_variances(mut self, variances: Vec<f64>) -> Self {
        self.variances = Some(variances);
        self
    }

    fn check(&self) -> Result<()> {
        if self.nnz.is_empty() {
            return Err(Error::Config("no levels to allocate".into()));
        }
        if self.nnz.contains(&0) {
            return Err(Error::Config(format!("level costs must be positive: {:?}", self.nnz)));
        }
        Ok(())
    }
}

/// `H_l = ⌊(1/C_l) / Σ_k (1/C_k) · H⌋`, evaluated in exact rational arithmetic.
pub fn allocate_cost(costs: &LevelCost, h_total: usize) -> Result<Vec<usize>> {
    costs.check()?;
    let inv: Vec<BigRational> = costs
        .nnz
        .iter()
        .map(|&c| BigRational::new(BigInt::from(1), BigInt::from(c)))
        .collect();
    let sum: BigRational = inv.iter().sum();
    let h = BigRational::from_integer(BigInt::from(h_total));
    Ok(inv
        .iter()
        .map(|w| {
            (w / &sum * &h)
                .floor()
                .to_integer()
                .to_usize()
                .expect("allocation never exceeds the total")
        })
        .collect())
}

/// Floor that treats values within rounding distance of an integer as that
/// integer, so exact ratios like `0.8 · 100` give 80 rather than 79.
fn stable_floor(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// `H_l = ⌊√(s²_l/C_l) / Σ_k √(s²_k/C_k) · H⌋`.
pub fn allocate_variance(costs: &LevelCost, h_total: usize) -> Result<Vec<usize>> {
    costs.check()?;
    let s2 = costs
        .variances
        .as_ref()
        .ok_or_else(|| Error::Config("variance allocation needs pilot variances".into()))?;
    if s2.len() != costs.nnz.len() {
        return Err(Error::dim("pilot variances", costs.nnz.len(), s2.len()));
    }
    if s2.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Config(format!("invalid pilot variances {s2:?}")));
    }
    let ratios: Vec<f64> = s2
        .iter()
        .zip(&costs.nnz)
        .map(|(&v, &c)| (v / c as f64).sqrt())
        .collect();
    let sum: f64 = ratios.iter().sum();
    if sum == 0.0 {
        return Err(Error::Config("pilot variance is zero on every level".into()));
    }
    Ok(ratios
        .iter()
        .map(|r| stable_floor(r / sum * h_total as f64))
        .collect())
}
