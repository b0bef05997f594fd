//! Evaluation reports: per-rollout records, aggregate statistics, and a
//! CSV form that survives a round trip bit-exactly.

use serde::{Deserialize, Serialize};

use crate::data::normalized_score;
use crate::envs::ReferenceScores;
use crate::error::{Error, Result};

/// One evaluated episode, reduced to what the aggregate statistics and the
/// CSV need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub index: usize,
    /// Episode seed (reset + action sampling); enough to replay the episode.
    pub seed: u64,
    pub steps: usize,
    pub total_return: f64,
    pub success: bool,
}

/// Aggregates over a batch of rollouts plus the records they came from.
///
/// Every aggregate is a pure function of `records` (and the environment's
/// reference scores), so a report parsed back from its CSV can be
/// re-aggregated bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env_id: String,
    /// Human-readable protocol description (`EvalProtocol::describe`).
    pub protocol: String,
    /// "deterministic" or "stochastic" action sampling.
    pub mode: String,
    pub eval_seed: u64,
    /// Percentage of successful rollouts, in `[0, 100]`.
    pub success_rate: f64,
    pub mean_return: f64,
    /// Population standard deviation of returns (0 for a single rollout).
    pub std_return: f64,
    /// `100 * (mean - random_ref) / (expert_ref - random_ref)`.
    pub normalized_score: f64,
    pub records: Vec<RolloutRecord>,
}

/// (success_rate, mean_return, std_return) over the records.
pub fn aggregate(records: &[RolloutRecord]) -> Result<(f64, f64, f64)> {
    if records.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot aggregate zero rollouts".into(),
        ));
    }
    let n = records.len() as f64;
    let successes = records.iter().filter(|r| r.success).count() as f64;
    let mean = records.iter().map(|r| r.total_return).sum::<f64>() / n;
    let variance = records
        .iter()
        .map(|r| (r.total_return - mean) * (r.total_return - mean))
        .sum::<f64>()
        / n;
    Ok((100.0 * successes / n, mean, variance.sqrt()))
}

impl EvalReport {
    /// Builds a report by aggregating `records` against the environment's
    /// reference scores.
    pub fn from_records(
        env_id: &str,
        protocol: &str,
        mode: &str,
        eval_seed: u64,
        references: ReferenceScores,
        records: Vec<RolloutRecord>,
    ) -> Result<Self> {
        let (success_rate, mean_return, std_return) = aggregate(&records)?;
        let normalized = normalized_score(
            mean_return,
            references.random_return,
            references.expert_return,
        )?;
        Ok(EvalReport {
            env_id: env_id.to_string(),
            protocol: protocol.to_string(),
            mode: mode.to_string(),
            eval_seed,
            success_rate,
            mean_return,
            std_return,
            normalized_score: normalized,
            records,
        })
    }

    /// Renders the report as CSV: a `#`-prefixed summary block, a header
    /// row, then one row per rollout. Floats use the shortest representation
    /// that parses back to the same bits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# env: {}\n", self.env_id));
        out.push_str(&format!("# protocol: {}\n", self.protocol));
        out.push_str(&format!("# mode: {}\n", self.mode));
        out.push_str(&format!("# eval_seed: {}\n", self.eval_seed));
        out.push_str(&format!("# rollouts: {}\n", self.records.len()));
        out.push_str(&format!("# success_rate: {}\n", self.success_rate));
        out.push_str(&format!("# mean_return: {}\n", self.mean_return));
        out.push_str(&format!("# std_return: {}\n", self.std_return));
        out.push_str(&format!("# normalized_score: {}\n", self.normalized_score));
        out.push_str("rollout,seed,steps,return,success\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.index, r.seed, r.steps, r.total_return, r.success
            ));
        }
        out
    }

    /// Parses a report back from its CSV form. `origin` labels parse errors
    /// (a file path, usually).
    pub fn from_csv_str(text: &str, origin: &str) -> Result<Self> {
        let fail = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            location: format!("line {line}"),
            message,
        };
        let mut lines = text.lines().enumerate();

        let mut summary = Vec::new();
        for _ in 0..9 {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| fail(0, "truncated summary block".into()))?;
            let body = line.strip_prefix("# ").ok_or_else(|| {
                fail(idx + 1, format!("expected a '# key: value' line, got '{line}'"))
            })?;
            let (key, value) = body
                .split_once(": ")
                .ok_or_else(|| fail(idx + 1, format!("expected 'key: value', got '{body}'")))?;
            summary.push((idx + 1, key.to_string(), value.to_string()));
        }
        let field = |name: &str, at: usize| -> Result<(usize, String)> {
            let (line, key, value) = &summary[at];
            if key != name {
                return Err(fail(*line, format!("expected summary key '{name}', got '{key}'")));
            }
            Ok((*line, value.clone()))
        };
        let text_field = |name: &str, at: usize| field(name, at).map(|(_, v)| v);
        let num_field = |name: &str, at: usize| -> Result<f64> {
            let (line, value) = field(name, at)?;
            value
                .parse::<f64>()
                .map_err(|e| fail(line, format!("bad {name} '{value}': {e}")))
        };
        let env_id = text_field("env", 0)?;
        let protocol = text_field("protocol", 1)?;
        let mode = text_field("mode", 2)?;
        let eval_seed = {
            let (line, value) = field("eval_seed", 3)?;
            value
                .parse::<u64>()
                .map_err(|e| fail(line, format!("bad eval_seed '{value}': {e}")))?
        };
        let rollouts = {
            let (line, value) = field("rollouts", 4)?;
            value
                .parse::<usize>()
                .map_err(|e| fail(line, format!("bad rollouts '{value}': {e}")))?
        };
        let success_rate = num_field("success_rate", 5)?;
        let mean_return = num_field("mean_return", 6)?;
        let std_return = num_field("std_return", 7)?;
        let normalized = num_field("normalized_score", 8)?;

        let (idx, header) = lines
            .next()
            .ok_or_else(|| fail(10, "missing header row".into()))?;
        if header != "rollout,seed,steps,return,success" {
            return Err(fail(
                idx + 1,
                format!("expected 'rollout,seed,steps,return,success', got '{header}'"),
            ));
        }

        fn cell<T: std::str::FromStr>(
            origin: &str,
            line: usize,
            what: &str,
            raw: &str,
        ) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            raw.parse::<T>().map_err(|e| Error::Parse {
                path: origin.to_string(),
                location: format!("line {line}"),
                message: format!("bad {what} '{raw}': {e}"),
            })
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 5 {
                return Err(fail(idx + 1, format!("expected 5 cells, got {}", cells.len())));
            }
            records.push(RolloutRecord {
                index: cell(origin, idx + 1, "rollout", cells[0])?,
                seed: cell(origin, idx + 1, "seed", cells[1])?,
                steps: cell(origin, idx + 1, "steps", cells[2])?,
                total_return: cell(origin, idx + 1, "return", cells[3])?,
                success: cell(origin, idx + 1, "success", cells[4])?,
            });
        }
        if records.len() != rollouts {
            return Err(fail(
                10,
                format!("summary promises {rollouts} rollouts, found {}", records.len()),
            ));
        }
        Ok(EvalReport {
            env_id,
            protocol,
            mode,
            eval_seed,
            success_rate,
            mean_return,
            std_return,
            normalized_score: normalized,
            records,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(index: usize, total_return: f64, success: bool) -> RolloutRecord {
        RolloutRecord {
            index,
            seed: 1000 + index as u64,
            steps: 10 + index,
            total_return,
            success,
        }
    }

    fn unit_refs() -> ReferenceScores {
        ReferenceScores {
            random_return: 0.0,
            expert_return: 1.0,
        }
    }

    #[test]
    fn aggregates_match_hand_computed_values() {
        let records = vec![
            record(0, 1.0, true),
            record(1, 0.0, false),
            record(2, 1.0, true),
            record(3, 1.0, true),
        ];
        let report =
            EvalReport::from_records("four-rooms", "uniform-goals", "deterministic", 7, unit_refs(), records)
                .unwrap();
        assert_eq!(report.success_rate, 75.0);
        assert_eq!(report.mean_return, 0.75);
        // Population std of [1, 0, 1, 1]: sqrt(0.1875).
        assert_eq!(report.std_return, 0.1875f64.sqrt());
        assert_eq!(report.normalized_score, 75.0);
    }

    #[test]
    fn single_rollout_has_zero_std() {
        let report = EvalReport::from_records(
            "four-rooms",
            "uniform-goals",
            "deterministic",
            0,
            unit_refs(),
            vec![record(0, 0.5, false)],
        )
        .unwrap();
        assert_eq!(report.std_return, 0.0);
        assert_eq!(report.success_rate, 0.0);
    }

    #[test]
    fn zero_rollouts_is_an_error() {
        let err = EvalReport::from_records(
            "four-rooms",
            "uniform-goals",
            "deterministic",
            0,
            unit_refs(),
            Vec::new(),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("zero rollouts"), "{err}");
    }

    #[test]
    fn csv_round_trips_and_aggregates_recompute_bit_exactly() {
        // Returns chosen to have no short decimal form, so the round trip
        // genuinely exercises float formatting.
        let records = vec![
            record(0, 1.0 / 3.0, true),
            record(1, 2.0f64.sqrt(), true),
            record(2, -0.125, false),
            record(3, 1e-17, false),
        ];
        let report =
            EvalReport::from_records("point-reach", "return-target 40 (held)", "stochastic", 99, unit_refs(), records)
                .unwrap();
        let csv = report.to_csv();
        let parsed = EvalReport::from_csv_str(&csv, "test.csv").unwrap();
        assert_eq!(parsed, report);
        // Aggregation is a pure function of the parsed records.
        let (sr, mean, std) = aggregate(&parsed.records).unwrap();
        assert_eq!(sr, parsed.success_rate);
        assert_eq!(mean.to_bits(), parsed.mean_return.to_bits());
        assert_eq!(std.to_bits(), parsed.std_return.to_bits());
    }

    #[test]
    fn csv_layout_is_nine_summary_lines_then_header() {
        let report = EvalReport::from_records(
            "two-mode-line",
            "return-target 40 (held)",
            "deterministic",
            1,
            ReferenceScores {
                random_return: 28.0,
                expert_return: 50.0,
            },
            vec![record(0, 40.0, false), record(1, 39.0, false)],
        )
        .unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 9 + 1 + 2);
        for line in &lines[..9] {
            assert!(line.starts_with("# "), "{line}");
        }
        assert_eq!(lines[9], "rollout,seed,steps,return,success");
        assert!(lines[10].starts_with("0,1000,10,40,"), "{}", lines[10]);
    }

    #[test]
    fn malformed_csv_reports_the_offending_line() {
        let report = EvalReport::from_records(
            "four-rooms",
            "uniform-goals",
            "deterministic",
            0,
            unit_refs(),
            vec![record(0, 1.0, true)],
        )
        .unwrap();
        let csv = report.to_csv();

        let cases = [
            (csv.replacen("# mode", "mode", 1), "line 3"),
            (csv.replacen("rollout,seed", "episode,seed", 1), "line 10"),
            (csv.replacen("0,1000,10,1,true", "0,1000,ten,1,true", 1), "line 11"),
            (csv.replacen("# rollouts: 1", "# rollouts: 2", 1), "promises 2 rollouts"),
        ];
        for (broken, needle) in cases {
            let err = EvalReport::from_csv_str(&broken, "test.csv")
                .unwrap_err()
                .to_string();
            assert!(err.contains(needle), "wanted '{needle}' in '{err}'");
        }
    }
}
