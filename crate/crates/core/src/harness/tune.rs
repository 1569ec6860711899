//! Coarse grid search for the per-sample `(alpha, lambda)` of a regime.
//!
//! Each candidate runs the config's sweep with PCA and the oracle GR-PCA arm
//! and is scored by the mean held-out selectivity of the oracle arm. An
//! optional cap rejects candidates whose global R² falls more than
//! `max_r2_loss` below PCA's on any topology. Run it on seeds that are not
//! used for evaluation.

use serde::{Deserialize, Serialize};

use super::{run_experiment, Arm, ExperimentConfig, SweepResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySearch {
    /// Per-sample `(alpha, lambda)` pairs, tried in order.
    pub grid: Vec<(f64, f64)>,
    pub max_r2_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyCandidate {
    pub alpha: f64,
    pub lambda: f64,
    /// Mean oracle selectivity over usable rows.
    pub selectivity: f64,
    /// Largest per-topology gap `pca R² − oracle R²`.
    pub r2_loss: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyChoice {
    pub alpha: f64,
    pub lambda: f64,
    pub candidates: Vec<PenaltyCandidate>,
}

fn mean_of(result: &SweepResult, method: &str, f: fn(&crate::metrics::MetricsReport) -> f64) -> f64 {
    let v: Vec<f64> = result
        .rows
        .iter()
        .filter(|r| r.method == method && !r.failed())
        .map(f)
        .collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn worst_r2_loss(result: &SweepResult) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for a in result.overall.iter().filter(|a| a.method == Arm::GrpcaOracle.label()) {
        if let Some(p) = result.overall_for(Arm::Pca.label(), &a.regime, &a.topology) {
            worst = worst.max(p.r2_global.mean - a.r2_global.mean);
        }
    }
    worst
}

/// Evaluates every grid point and returns the admissible one with the
/// highest oracle selectivity (earliest wins ties).
pub fn select_penalties(cfg: &ExperimentConfig, search: &PenaltySearch) -> Result<PenaltyChoice> {
    if search.grid.is_empty() {
        return Err(Error::InvalidParameter("penalty grid is empty".into()));
    }
    let mut candidates = Vec::with_capacity(search.grid.len());
    for &(alpha, lambda) in &search.grid {
        if !(alpha >= 0.0 && lambda >= 0.0 && alpha.is_finite() && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad grid point ({alpha}, {lambda})")));
        }
        let mut run = cfg.clone();
        run.methods = vec![Arm::Pca, Arm::GrpcaOracle];
        run.model.alpha = alpha;
        run.model.lambda = lambda;
        let result = run_experiment(&run)?;
        let selectivity = mean_of(&result, Arm::GrpcaOracle.label(), |r| r.selectivity);
        let r2_loss = worst_r2_loss(&result);
        let admissible = selectivity.is_finite() && search.max_r2_loss.map_or(true, |cap| r2_loss <= cap);
        log::info!("alpha {alpha} lambda {lambda}: selectivity {selectivity:.4}, r2 loss {r2_loss:.4}");
        candidates.push(PenaltyCandidate {
            alpha,
            lambda,
            selectivity,
            r2_loss,
            admissible,
        });
    }
    let best = candidates
        .iter()
        .filter(|c| c.admissible)
        .fold(None::<&PenaltyCandidate>, |best, c| match best {
            Some(b) if b.selectivity >= c.selectivity => Some(b),
            _ => Some(c),
        })
        .ok_or_else(|| Error::InvalidParameter("no grid point satisfies the R2 cap".into()))?;
    Ok(PenaltyChoice {
        alpha: best.alpha,
        lambda: best.lambda,
        candidates: candidates.clone(),
    })
}
