//! Per-level variance of predicted observations and of coupled differences.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gibbs::MixedModelSpec;
use crate::hierarchy::LevelHierarchy;
use crate::multilevel::{coupled_samples, sample_variance, Coupling};
use crate::rng::RandomStream;
use crate::scalar::Real;
use crate::solvers::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct LevelVarianceConfig {
    /// Kept coupled draws per level.
    pub samples: usize,
    pub burnin: usize,
    /// Observation (row) indices to probe.
    pub probes: Vec<usize>,
    pub couplings: Vec<Coupling>,
    pub solver: SolverConfig,
    pub preconditioned: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelVarianceRow {
    pub coupling: Coupling,
    pub level: usize,
    pub probe: usize,
    /// `V[y_l]`
    pub variance: f64,
    /// `V[y_l − y_{l−1}]`; `NaN` on level 0.
    pub difference_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelVarianceReport {
    pub rows: Vec<LevelVarianceRow>,
}

impl LevelVarianceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("coupling,level,probe,variance,difference_variance\n");
        for r in &self.rows {
            let c = match r.coupling {
                Coupling::Solves => "solves",
                Coupling::Projection => "projection",
            };
            let _ = writeln!(s, "{c},{},{},{},{}", r.level, r.probe, r.variance, r.difference_variance);
        }
        s
    }

    pub fn rows_for(&self, coupling: Coupling, level: usize) -> impl Iterator<Item = &LevelVarianceRow> {
        self.rows
            .iter()
            .filter(move |r| r.coupling == coupling && r.level == level)
    }
}

fn column_variance(samples: &[Vec<f64>], j: usize) -> f64 {
    let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
    sample_variance(&col)
}

/// Runs a coupled chain on every level for each configured coupling and
/// reports the sample variances at the probed observations.
pub fn level_variance_report<T: Real>(
    hierarchy: &LevelHierarchy<T>,
    y: &[T],
    spec: &MixedModelSpec,
    config: &LevelVarianceConfig,
) -> Result<LevelVarianceReport> {
    let root = RandomStream::new(config.seed);
    let jobs: Vec<(usize, Coupling)> = config
        .couplings
        .iter()
        .enumerate()
        .flat_map(|(ci, &c)| (0..hierarchy.n_levels()).map(move |l| (ci * 1000 + l, c)))
        .collect();
    let blocks: Vec<Vec<LevelVarianceRow>> = jobs
        .par_iter()
        .map(|&(key, coupling)| {
            let level = key % 1000;
            let s = coupled_samples(
                hierarchy,
                y,
                spec,
                level,
                coupling,
                config.samples,
                config.burnin,
                &config.solver,
                &mut root.split(key as u64),
                &config.probes,
                config.preconditioned,
            )?;
            Ok(config
                .probes
                .iter()
                .enumerate()
                .map(|(j, &probe)| LevelVarianceRow {
                    coupling,
                    level,
                    probe,
                    variance: column_variance(&s.fine, j),
                    difference_variance: if s.difference.is_empty() {
                        f64::NAN
                    } else {
                        column_variance(&s.difference, j)
                    },
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(LevelVarianceReport {
        rows: blocks.into_iter().flatten().collect(),
    })
}
