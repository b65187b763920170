use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// EMA decay; stage 2 only.
    pub kappa: Option<f64>,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub wall_ms: u64,
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
}

/// Append-only record of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    steps: Vec<StepRecord>,
    epochs: Vec<EpochRecord>,
    pub notices: Vec<String>,
    pub config_hash: String,
}

impl TrainingLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a step; steps must increase strictly.
    pub fn push_step(&mut self, rec: StepRecord) -> Result<()> {
        if let Some(last) = self.steps.last() {
            if rec.step <= last.step {
                return Err(Error::InvalidArgument(format!(
                    "log step {} does not follow {}",
                    rec.step, last.step
                )));
            }
        }
        self.steps.push(rec);
        Ok(())
    }

    pub fn push_epoch(&mut self, rec: EpochRecord) {
        self.epochs.push(rec);
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn epochs(&self) -> &[EpochRecord] {
        &self.epochs
    }

    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// `step,epoch,lr,loss,kappa,grad_norm,wall_ms` followed by every extra
    /// key seen in the run, sorted. Missing values are left empty.
    pub fn to_csv(&self) -> String {
        let keys: std::collections::BTreeSet<&str> = self
            .steps
            .iter()
            .flat_map(|s| s.extra.keys().map(String::as_str))
            .collect();
        let mut out = String::from("step,epoch,lr,loss,kappa,grad_norm,wall_ms");
        for k in &keys {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for s in &self.steps {
            let kappa = s.kappa.map(|k| k.to_string()).unwrap_or_default();
            let _ = write!(
                out,
                "{},{},{},{},{},{},{}",
                s.step, s.epoch, s.lr, s.loss, kappa, s.grad_norm, s.wall_ms
            );
            for k in &keys {
                out.push(',');
                if let Some(v) = s.extra.get(*k) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> serde_json::Value {
        let losses = self.losses();
        serde_json::json!({
            "steps": self.steps.len(),
            "first_loss": losses.first(),
            "final_loss": losses.last(),
            "min_loss": losses.iter().copied().reduce(f64::min),
            "epochs": self.epochs,
            "notices": self.notices,
            "config_hash": self.config_hash,
            "tool_version": crate::VERSION,
        })
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&self.summary())?;
        std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64) -> StepRecord {
        StepRecord {
            step,
            epoch: 0,
            lr: 0.1,
            loss: 1.0 / (step + 1) as f64,
            kappa: None,
            grad_norm: 0.0,
            wall_ms: 0,
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn steps_must_increase() {
        let mut log = TrainingLog::new();
        log.push_step(rec(0)).unwrap();
        log.push_step(rec(1)).unwrap();
        assert!(log.push_step(rec(1)).is_err());
        assert_eq!(log.steps().len(), 2);
    }

    #[test]
    fn csv_includes_extra_columns() {
        let mut log = TrainingLog::new();
        let mut r = rec(0);
        r.extra.insert("probe_cos".into(), 0.5);
        log.push_step(r).unwrap();
        log.push_step(rec(1)).unwrap();
        let csv = log.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,epoch,lr,loss,kappa,grad_norm,wall_ms,probe_cos");
        assert!(lines[1].ends_with(",0.5"));
        assert!(lines[2].ends_with(','));
    }
}
