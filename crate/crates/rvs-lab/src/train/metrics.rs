//! Per-checkpoint training metrics and their CSV form.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One metric checkpoint. Rollout metrics are present only when a rollout
/// evaluator ran at this checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: usize,
    /// Inference-mode NLL on a fixed batch drawn from the training split.
    pub train_loss: f64,
    /// Inference-mode NLL on a fixed batch drawn from the validation split.
    pub val_loss: f64,
    pub eval_return: Option<f64>,
    pub eval_success: Option<f64>,
}

/// Checkpoint records in step order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    records: Vec<MetricsRecord>,
}

/// Fixed CSV schema; column order is part of the contract.
pub const METRICS_CSV_HEADER: &str = "step,train_loss,val_loss,eval_return,eval_success";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsLog {
    pub fn new() -> Self {
        MetricsLog::default()
    }

    /// Appends a record; steps must be strictly increasing.
    pub fn push(&mut self, record: MetricsRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.step <= last.step {
                return Err(Error::InvalidArgument(format!(
                    "metric steps must strictly increase: {} after {}",
                    record.step, last.step
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(METRICS_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step,
                r.train_loss,
                r.val_loss,
                fmt_opt(r.eval_return),
                fmt_opt(r.eval_success)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    /// Reads a CSV produced by [`write_csv`](MetricsLog::write_csv),
    /// re-validating the schema and step ordering.
    pub fn read_csv(path: &Path) -> Result<MetricsLog> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.display().to_string(),
            location: format!("line {line}"),
            message,
        };
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut log = MetricsLog::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != METRICS_CSV_HEADER {
                    return Err(parse_err(1, format!("bad header '{line}'")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(parse_err(i + 1, format!("expected 5 fields, got {}", fields.len())));
            }
            let num = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| parse_err(i + 1, format!("bad {what} '{s}': {e}")))
            };
            let opt = |s: &str, what: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s, what).map(Some)
                }
            };
            let record = MetricsRecord {
                step: fields[0]
                    .parse::<usize>()
                    .map_err(|e| parse_err(i + 1, format!("bad step '{}': {e}", fields[0])))?,
                train_loss: num(fields[1], "train_loss")?,
                val_loss: num(fields[2], "val_loss")?,
                eval_return: opt(fields[3], "eval_return")?,
                eval_success: opt(fields[4], "eval_success")?,
            };
            log.push(record)
                .map_err(|e| parse_err(i + 1, e.to_string()))?;
        }
        Ok(log)
    }
}
