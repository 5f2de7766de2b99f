//! Benchmark-level analytics: survivorship-corrected means, execution rate,
//! paired significance tests and reward-hacking ratio curves.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::two_sided_p;
use crate::toy_rl::EpochMetrics;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no records")]
    EmptyInput,
    #[error("record {0}: failed executions must score 0")]
    InvalidRecord(String),
    #[error("non-finite score")]
    NonFinite,
    #[error("paired inputs differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("a paired test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("sample {0} has no counterpart")]
    Unpaired(String),
    #[error("all paired differences equal {delta_mean}; the t statistic is undefined")]
    ZeroVariance { delta_mean: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub executed: bool,
    /// 0 when `executed` is false.
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_id: Option<String>,
}

impl EvalRecord {
    pub fn executed(sample_id: impl Into<String>, score: f64) -> Self {
        EvalRecord {
            sample_id: sample_id.into(),
            executed: true,
            score,
            judge_id: None,
        }
    }

    pub fn failed(sample_id: impl Into<String>) -> Self {
        EvalRecord {
            sample_id: sample_id.into(),
            executed: false,
            score: 0.0,
            judge_id: None,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if !self.score.is_finite() {
            return Err(EvalError::NonFinite);
        }
        if !self.executed && self.score != 0.0 {
            return Err(EvalError::InvalidRecord(self.sample_id.clone()));
        }
        Ok(())
    }
}

fn checked(records: &[EvalRecord]) -> Result<(), EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    records.iter().try_for_each(EvalRecord::validate)
}

pub fn execution_rate(records: &[EvalRecord]) -> Result<f64, EvalError> {
    checked(records)?;
    Ok(records.iter().filter(|r| r.executed).count() as f64 / records.len() as f64)
}

/// Mean over all records with failed executions contributing zero.
pub fn normalized_mean(records: &[EvalRecord]) -> Result<f64, EvalError> {
    checked(records)?;
    Ok(records.iter().map(|r| r.score).sum::<f64>() / records.len() as f64)
}

/// Mean over executed records only; `None` when nothing executed.
pub fn executed_mean(records: &[EvalRecord]) -> Result<Option<f64>, EvalError> {
    checked(records)?;
    let executed: Vec<f64> = records
        .iter()
        .filter(|r| r.executed)
        .map(|r| r.score)
        .collect();
    Ok((!executed.is_empty()).then(|| executed.iter().sum::<f64>() / executed.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedTTest {
    /// mean(a - b)
    pub delta_mean: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub df: usize,
    pub n: usize,
}

/// Two-sided paired t-test on `a[i] - b[i]` with the sample (n-1) standard
/// deviation.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewPairs(a.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        return Err(EvalError::ZeroVariance { delta_mean: mean });
    }
    let t = mean * (n as f64).sqrt() / sd;
    let df = n - 1;
    Ok(PairedTTest {
        delta_mean: mean,
        t_statistic: t,
        p_value: two_sided_p(t, df as f64),
        df,
        n,
    })
}

/// Pairs two record sets by sample id (order of `a`) and tests their scores.
pub fn paired_t_test_records(a: &[EvalRecord], b: &[EvalRecord]) -> Result<PairedTTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    checked(a)?;
    checked(b)?;
    let index: HashMap<&str, f64> = b.iter().map(|r| (r.sample_id.as_str(), r.score)).collect();
    let paired: Vec<f64> = a
        .iter()
        .map(|r| {
            index
                .get(r.sample_id.as_str())
                .copied()
                .ok_or_else(|| EvalError::Unpaired(r.sample_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let scores: Vec<f64> = a.iter().map(|r| r.score).collect();
    paired_t_test(&scores, &paired)
}

/// Per-epoch aggregate used for the ratio curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub epoch: usize,
    pub pass_rate: f64,
    pub mean_r_qa: f64,
    pub mean_r_vis: f64,
}

impl From<&EpochMetrics> for TracePoint {
    fn from(e: &EpochMetrics) -> Self {
        TracePoint {
            epoch: e.epoch,
            pass_rate: e.pass_rate,
            mean_r_qa: e.mean_r_qa,
            mean_r_vis: e.mean_r_vis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HackingPoint {
    pub epoch: usize,
    /// `None` marks an epoch with zero pass rate.
    pub consistency_per_pass: Option<f64>,
    pub visual_per_pass: Option<f64>,
}

/// Reward per executable sample, epoch by epoch.
pub fn reward_hacking_curves(trace: &[TracePoint]) -> Vec<HackingPoint> {
    trace
        .iter()
        .map(|p| {
            let ratio = |x: f64| (p.pass_rate > 0.0).then(|| x / p.pass_rate);
            HackingPoint {
                epoch: p.epoch,
                consistency_per_pass: ratio(p.mean_r_qa),
                visual_per_pass: ratio(p.mean_r_vis),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rate_and_mean_examples() {
        let r = [
            EvalRecord::executed("a", 80.0),
            EvalRecord::executed("b", 60.0),
            EvalRecord::failed("c"),
            EvalRecord::failed("d"),
            EvalRecord::executed("e", 100.0),
        ];
        assert_eq!(normalized_mean(&r).unwrap(), 48.0);
        assert_eq!(executed_mean(&r).unwrap(), Some(80.0));
        assert_eq!(execution_rate(&r).unwrap(), 0.6);
        assert_eq!(execution_rate(&r[..4]).unwrap(), 0.5);
        let fails = [EvalRecord::failed("x"), EvalRecord::failed("y")];
        assert_eq!(normalized_mean(&fails).unwrap(), 0.0);
        assert_eq!(execution_rate(&fails).unwrap(), 0.0);
        assert_eq!(executed_mean(&fails).unwrap(), None);
        assert_eq!(execution_rate(&[]), Err(EvalError::EmptyInput));
        let three_of_four = [
            EvalRecord::executed("a", 1.0),
            EvalRecord::executed("b", 1.0),
            EvalRecord::executed("c", 1.0),
            EvalRecord::failed("d"),
        ];
        assert_eq!(execution_rate(&three_of_four).unwrap(), 0.75);
    }

    #[test]
    fn failed_record_with_score_is_rejected() {
        let mut r = EvalRecord::failed("z");
        r.score = 3.0;
        assert_eq!(
            normalized_mean(&[r]),
            Err(EvalError::InvalidRecord("z".into()))
        );
    }

    #[test]
    fn t_test_fixture() {
        let t = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
        assert_eq!(t.delta_mean, 3.0);
        assert_abs_diff_eq!(t.t_statistic, 4.2426, epsilon = 1e-3);
        assert_abs_diff_eq!(t.p_value, 0.0132, epsilon = 1e-3);
        assert_eq!(t.df, 4);
        // Reference values from an independent statistics package.
        assert_abs_diff_eq!(t.p_value, 0.013235599563682695, epsilon = 1e-12);
        let u = paired_t_test(
            &[10.0, 12.0, 9.0, 11.0, 14.0, 8.0],
            &[9.0, 12.5, 7.0, 10.0, 11.0, 8.5],
        )
        .unwrap();
        assert_abs_diff_eq!(u.t_statistic, 1.777046633277277, epsilon = 1e-12);
        assert_abs_diff_eq!(u.p_value, 0.1357101726199509, epsilon = 1e-12);
    }

    #[test]
    fn t_test_degenerate_and_symmetric() {
        let a = [1.0, 5.0, 2.0];
        assert_eq!(
            paired_t_test(&a, &a),
            Err(EvalError::ZeroVariance { delta_mean: 0.0 })
        );
        let shifted: Vec<f64> = a.iter().map(|x| x + 2.0).collect();
        assert_eq!(
            paired_t_test(&shifted, &a),
            Err(EvalError::ZeroVariance { delta_mean: 2.0 })
        );
        let b = [0.5, 1.0, 4.0];
        let fwd = paired_t_test(&a, &b).unwrap();
        let rev = paired_t_test(&b, &a).unwrap();
        assert_eq!(fwd.t_statistic, -rev.t_statistic);
        assert_eq!(fwd.p_value, rev.p_value);
        assert!(matches!(
            paired_t_test(&[1.0], &[2.0]),
            Err(EvalError::TooFewPairs(1))
        ));
        assert!(matches!(
            paired_t_test(&[1.0, 2.0], &[2.0]),
            Err(EvalError::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn records_pair_by_id() {
        let a = [
            EvalRecord::executed("x", 3.0),
            EvalRecord::executed("y", 5.0),
            EvalRecord::failed("z"),
        ];
        let b = [
            EvalRecord::executed("z", 1.0),
            EvalRecord::executed("x", 1.0),
            EvalRecord::executed("y", 2.0),
        ];
        let by_id = paired_t_test_records(&a, &b).unwrap();
        let direct = paired_t_test(&[3.0, 5.0, 0.0], &[1.0, 2.0, 1.0]).unwrap();
        assert_eq!(by_id, direct);
        let c = [
            EvalRecord::executed("q", 1.0),
            EvalRecord::executed("x", 1.0),
            EvalRecord::executed("y", 2.0),
        ];
        assert_eq!(
            paired_t_test_records(&a, &c),
            Err(EvalError::Unpaired("z".into()))
        );
    }

    #[test]
    fn hacking_curve_examples() {
        let pts = [
            TracePoint {
                epoch: 1,
                pass_rate: 0.8,
                mean_r_qa: 0.6,
                mean_r_vis: 0.4,
            },
            TracePoint {
                epoch: 2,
                pass_rate: 0.0,
                mean_r_qa: 0.0,
                mean_r_vis: 0.0,
            },
        ];
        let c = reward_hacking_curves(&pts);
        assert_abs_diff_eq!(c[0].consistency_per_pass.unwrap(), 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(c[0].visual_per_pass.unwrap(), 0.5, epsilon = 1e-12);
        assert_eq!(c[1].consistency_per_pass, None);
        assert_eq!(c[1].visual_per_pass, None);
        let constant = reward_hacking_curves(&[pts[0]; 4]);
        assert!(constant
            .windows(2)
            .all(|w| w[0].consistency_per_pass == w[1].consistency_per_pass));
    }
}
