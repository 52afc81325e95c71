//! Aggregation and results persistence.
//!
//! Outputs per run: one per-step CSV per policy combination with columns
//! `replication,t,arm,reward,regret,cum_regret,propensity`, plus one
//! `summary.json` holding the per-combination aggregates.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::runner::{ComboResult, ExperimentResult};

/// Per-combination aggregate row of `summary.json`. Fields that do not
/// apply to the environment (normalized regret for synthetic runs,
/// detection for dataset runs) are `null`.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub policy: String,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub mean_cum_regret: f64,
    pub sd_cum_regret: f64,
    pub mean_norm_regret: Option<f64>,
    pub pct_optimal_found: Option<f64>,
    pub mean_found_step: Option<f64>,
}

/// Collapses each combination's replications into one summary row.
pub fn summarize<F: Scalar>(result: &ExperimentResult<F>) -> Result<Vec<SummaryRow>> {
    if result.combos.is_empty() {
        return Err(Error::EmptyResults);
    }
    result
        .combos
        .iter()
        .map(|combo| summarize_combo(combo, result.detection))
        .collect()
}

fn summarize_combo<F: Scalar>(combo: &ComboResult<F>, detection: bool) -> Result<SummaryRow> {
    let reps = &combo.replications;
    if reps.is_empty() || reps.iter().any(|r| r.steps.is_empty()) {
        return Err(Error::EmptyResults);
    }
    let n = reps.len() as f64;
    let mean_cum = reps.iter().map(|r| r.cum_regret).sum::<f64>() / n;
    let sd_cum = if reps.len() > 1 {
        (reps
            .iter()
            .map(|r| (r.cum_regret - mean_cum).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    let mean_norm = if reps.iter().all(|r| r.norm_regret.is_some()) {
        Some(reps.iter().filter_map(|r| r.norm_regret).sum::<f64>() / n)
    } else {
        None
    };
    let (pct_found, mean_found_step) = if detection {
        let found: Vec<usize> = reps.iter().filter_map(|r| r.found_step).collect();
        let pct = 100.0 * found.len() as f64 / n;
        let mean_step = if found.is_empty() {
            None
        } else {
            Some(found.iter().sum::<usize>() as f64 / found.len() as f64)
        };
        (Some(pct), mean_step)
    } else {
        (None, None)
    };
    Ok(SummaryRow {
        policy: combo.combo.kind.label().to_string(),
        alpha: combo.combo.alpha.to_f64_lossy(),
        gamma: combo.combo.gamma.map(|g| g.to_f64_lossy()),
        mean_cum_regret: mean_cum,
        sd_cum_regret: sd_cum,
        mean_norm_regret: mean_norm,
        pct_optimal_found: pct_found,
        mean_found_step,
    })
}

/// Writes one per-step CSV per combination and `summary.json` into `dir`,
/// returning the summary rows. Identical inputs produce bit-identical
/// files.
pub fn write_outputs<F: Scalar>(
    result: &ExperimentResult<F>,
    dir: impl AsRef<Path>,
) -> Result<Vec<SummaryRow>> {
    let rows = summarize(result)?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for combo in &result.combos {
        let path = dir.join(format!("steps-{}.csv", combo.combo.label()));
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "replication,t,arm,reward,regret,cum_regret,propensity")?;
        for rep in &combo.replications {
            for s in &rep.steps {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    s.replication, s.t, s.arm, s.reward, s.regret, s.cum_regret, s.propensity
                )?;
            }
        }
        out.flush()?;
    }
    let summary = File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(summary), &rows)
        .map_err(|e| Error::Io(e.into()))?;
    Ok(rows)
}
