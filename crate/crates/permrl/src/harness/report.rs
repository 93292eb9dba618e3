//! CSV and JSON result files shared by the experiment drivers.
//!
//! Floats are written in shortest round-trip decimal form, so re-running a
//! seeded experiment reproduces every output byte for byte.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile;
use crate::trainer::StepRecord;

/// Per-step metrics file: `step,task_id,batch_score,is_weight,objective,grad_norm`.
pub fn write_step_csv(path: &Path, steps: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "task_id", "batch_score", "is_weight", "objective", "grad_norm"])?;
    for s in steps {
        w.write_record([
            s.step.to_string(),
            s.task_id.to_string(),
            s.batch_score.to_string(),
            s.is_weight.to_string(),
            s.objective.to_string(),
            s.grad_norm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub seed: u64,
    pub epoch: usize,
    pub condition: String,
    pub task_id: usize,
    pub train_reward: f64,
    pub test_reward: f64,
    pub annualized_return: f64,
}

/// Per-epoch file: `seed,epoch,condition,task_id,train_reward,test_reward,annualized_return`.
pub fn write_epoch_csv(path: &Path, rows: &[EpochRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seed",
        "epoch",
        "condition",
        "task_id",
        "train_reward",
        "test_reward",
        "annualized_return",
    ])?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.epoch.to_string(),
            r.condition.clone(),
            r.task_id.to_string(),
            r.train_reward.to_string(),
            r.test_reward.to_string(),
            r.annualized_return.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SummaryEntry {
    pub mean: f64,
    pub iqr_low: f64,
    pub iqr_high: f64,
    pub n_seeds: usize,
}

/// Mean and interquartile range across seeds.
pub fn summarize(values: &[f64]) -> Result<SummaryEntry> {
    if values.is_empty() {
        return Err(Error::InsufficientData("summary of empty value set".into()));
    }
    Ok(SummaryEntry {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        iqr_low: quantile(values, 0.25),
        iqr_high: quantile(values, 0.75),
        n_seeds: values.len(),
    })
}

pub fn write_summary_json(path: &Path, summary: &BTreeMap<String, SummaryEntry>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, summary)
        .map_err(|e| Error::Ingestion(format!("summary write failed: {e}")))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}
