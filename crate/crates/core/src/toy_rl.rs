//! Desk-scale group-relative policy optimization over a categorical policy
//! of script templates.
//!
//! Each step samples `G` arms for one sample, renders and scores them
//! through the [`RewardEngine`], standardizes rewards within the group and
//! takes a score-function step on the logits:
//!
//! ```text
//! grad_j = (1/G) sum_i A_i (1[a_i = j] - pi_j)
//! theta  <- theta + lr * grad
//! theta  <- theta_ref + (theta - theta_ref) / (1 + lr * beta)
//! ```
//!
//! The last line is the proximal form of the KL pull toward the initial
//! logits; it is stable for any beta and reduces to the identity at beta=0.
//! Epoch metrics are exact expectations under the current policy, computed
//! from a per-(sample, arm) reward table.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ChartSample, RewardBreakdown};
use crate::reward::{kl_estimate, RewardEngine, RewardError};

pub const CODE_PLACEHOLDER: &str = "{code}";

#[derive(Debug, Error)]
pub enum ToyRlError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("sample {0} has no reference code")]
    MissingCode(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyPolicy {
    pub logits: Vec<f64>,
    pub templates: Vec<String>,
    pub rng_seed: u64,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Exact KL(p || q) for categorical distributions given as logits.
pub fn categorical_kl(p_logits: &[f64], q_logits: &[f64]) -> f64 {
    let lp = log_softmax(p_logits);
    let lq = log_softmax(q_logits);
    lp.iter()
        .zip(&lq)
        .map(|(a, b)| {
            if a.is_finite() {
                a.exp() * (a - b)
            } else {
                0.0
            }
        })
        .sum::<f64>()
        .max(0.0)
}

impl ToyPolicy {
    pub fn new(
        templates: Vec<String>,
        logits: Vec<f64>,
        rng_seed: u64,
    ) -> Result<Self, ToyRlError> {
        if templates.is_empty() {
            return Err(ToyRlError::InvalidPolicy(
                "at least one template required".into(),
            ));
        }
        if templates.len() != logits.len() {
            return Err(ToyRlError::InvalidPolicy(format!(
                "{} templates but {} logits",
                templates.len(),
                logits.len()
            )));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(ToyRlError::InvalidPolicy("logits must be finite".into()));
        }
        Ok(ToyPolicy {
            logits,
            templates,
            rng_seed,
        })
    }

    pub fn uniform(templates: Vec<String>, rng_seed: u64) -> Result<Self, ToyRlError> {
        let n = templates.len();
        Self::new(templates, vec![0.0; n], rng_seed)
    }

    pub fn arms(&self) -> usize {
        self.templates.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn instantiate(&self, arm: usize, reference_code: &str) -> String {
        self.templates[arm].replace(CODE_PLACEHOLDER, reference_code)
    }

    fn sample_arm(&self, probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (j, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        probs.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToyRlConfig {
    pub learning_rate: f64,
    /// Groups per epoch; samples are visited round-robin in dataset order.
    pub steps_per_epoch: usize,
}

impl Default for ToyRlConfig {
    fn default() -> Self {
        ToyRlConfig {
            learning_rate: 0.05,
            steps_per_epoch: 8,
        }
    }
}

/// Score-function gradient of the group objective w.r.t. the logits.
pub fn policy_gradient(probs: &[f64], arms: &[usize], advantages: &[f64]) -> Vec<f64> {
    let g = arms.len() as f64;
    let mut grad = vec![0.0; probs.len()];
    for (&a, &adv) in arms.iter().zip(advantages) {
        for (j, gj) in grad.iter_mut().enumerate() {
            let indicator = if j == a { 1.0 } else { 0.0 };
            *gj += adv * (indicator - probs[j]);
        }
    }
    grad.iter_mut().for_each(|x| *x /= g);
    grad
}

/// One update: gradient ascent followed by the proximal KL anchor.
pub fn apply_update(logits: &mut [f64], reference: &[f64], grad: &[f64], lr: f64, beta: f64) {
    let shrink = 1.0 / (1.0 + lr * beta);
    for ((l, r), g) in logits.iter_mut().zip(reference).zip(grad) {
        *l = r + (*l + lr * g - r) * shrink;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_reward: f64,
    pub pass_rate: f64,
    pub mean_r_qa: f64,
    pub mean_r_vis: f64,
    /// KL(pi || pi_init).
    pub kl: f64,
    /// `None` when the pass rate is zero.
    pub consistency_per_pass: Option<f64>,
    pub visual_per_pass: Option<f64>,
    pub probabilities: Vec<f64>,
    /// Mean reward over the rollouts actually sampled during the epoch.
    pub sampled_mean_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub sample_id: String,
    pub arms: Vec<usize>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub logits_before: Vec<f64>,
    pub logits_after: Vec<f64>,
    /// Sample-based KL estimate on the drawn arms after the update.
    pub kl_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingTrace {
    /// Metrics of the initial policy, before any update.
    pub initial: EpochMetrics,
    pub epochs: Vec<EpochMetrics>,
    pub steps: Vec<StepLog>,
    pub final_policy: ToyPolicy,
}

pub const TRACE_CSV_HEADER: &str =
    "epoch,mean_reward,pass_rate,mean_r_qa,mean_r_vis,kl,consistency_per_pass,visual_per_pass";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12}")).unwrap_or_else(|| "NA".into())
}

impl TrainingTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.12},{:.12},{:.12},{:.12},{:.12},{},{}",
                e.epoch,
                e.mean_reward,
                e.pass_rate,
                e.mean_r_qa,
                e.mean_r_vis,
                e.kl,
                opt(e.consistency_per_pass),
                opt(e.visual_per_pass)
            );
        }
        out
    }
}

/// Reward of every arm on every sample: `table[sample][arm]`.
pub fn reward_table(
    dataset: &[ChartSample],
    policy: &ToyPolicy,
    engine: &RewardEngine<'_>,
) -> Result<Vec<Vec<RewardBreakdown>>, ToyRlError> {
    dataset
        .iter()
        .map(|s| {
            let code = s
                .code
                .as_deref()
                .ok_or_else(|| ToyRlError::MissingCode(s.id.clone()))?;
            let codes: Vec<String> = (0..policy.arms())
                .map(|j| policy.instantiate(j, code))
                .collect();
            let group = engine.score_codes(s, &codes)?;
            Ok(group.rollouts.into_iter().map(|r| r.reward).collect())
        })
        .collect()
}

/// Exact on-policy expectations of the trace quantities.
pub fn expected_metrics(
    epoch: usize,
    logits: &[f64],
    reference: &[f64],
    table: &[Vec<RewardBreakdown>],
    sampled_mean_reward: Option<f64>,
) -> EpochMetrics {
    let probs = softmax(logits);
    let n = table.len() as f64;
    let (mut reward, mut pass, mut qa, mut vis) = (0.0, 0.0, 0.0, 0.0);
    for row in table {
        for (p, b) in probs.iter().zip(row) {
            reward += p * b.r_total;
            pass += p * if b.executed { 1.0 } else { 0.0 };
            qa += p * b.r_qa;
            vis += p * b.r_vis;
        }
    }
    let (reward, pass, qa, vis) = (reward / n, pass / n, qa / n, vis / n);
    let per_pass = |x: f64| if pass > 0.0 { Some(x / pass) } else { None };
    EpochMetrics {
        epoch,
        mean_reward: reward,
        pass_rate: pass,
        mean_r_qa: qa,
        mean_r_vis: vis,
        kl: categorical_kl(logits, reference),
        consistency_per_pass: per_pass(qa),
        visual_per_pass: per_pass(vis),
        probabilities: probs,
        sampled_mean_reward,
    }
}

pub fn run_toy_rl_loop(
    dataset: &[ChartSample],
    policy: &ToyPolicy,
    engine: &RewardEngine<'_>,
    config: &ToyRlConfig,
    epochs: usize,
) -> Result<TrainingTrace, ToyRlError> {
    if dataset.is_empty() {
        return Err(ToyRlError::EmptyDataset);
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(ToyRlError::InvalidConfig(
            "learning_rate must be finite and >= 0".into(),
        ));
    }
    if config.steps_per_epoch == 0 {
        return Err(ToyRlError::InvalidConfig(
            "steps_per_epoch must be >= 1".into(),
        ));
    }
    engine.config.validate()?;
    let table = reward_table(dataset, policy, engine)?;
    let any_exec = table.iter().flatten().any(|b| b.executed);
    let any_fail = table.iter().flatten().any(|b| !b.executed);
    if !(any_exec && any_fail) {
        return Err(ToyRlError::InvalidPolicy(
            "templates must include at least one executable and one broken arm".into(),
        ));
    }

    let reference = policy.logits.clone();
    let mut logits = policy.logits.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(policy.rng_seed);
    let lr = config.learning_rate;
    let beta = engine.config.kl_beta;
    let g = engine.config.group_size;

    let initial = expected_metrics(0, &logits, &reference, &table, None);
    let mut epochs_out = Vec::with_capacity(epochs);
    let mut steps = Vec::new();
    let mut cursor = 0usize;

    for epoch in 1..=epochs {
        let mut reward_sum = 0.0;
        let mut reward_count = 0usize;
        for step in 0..config.steps_per_epoch {
            let sample = &dataset[cursor % dataset.len()];
            cursor += 1;
            let code = sample
                .code
                .as_deref()
                .ok_or_else(|| ToyRlError::MissingCode(sample.id.clone()))?;
            let probs = softmax(&logits);
            let arms: Vec<usize> = (0..g)
                .map(|_| policy.sample_arm(&probs, &mut rng))
                .collect();
            let codes: Vec<String> = arms.iter().map(|&a| policy.instantiate(a, code)).collect();
            let group = engine.score_rollout_group(sample, &codes)?;
            let rewards = group.rewards();
            reward_sum += rewards.iter().sum::<f64>();
            reward_count += rewards.len();

            let before = logits.clone();
            let grad = policy_gradient(&probs, &arms, &group.advantages);
            apply_update(&mut logits, &reference, &grad, lr, beta);

            let lp_new = log_softmax(&logits);
            let lp_ref = log_softmax(&reference);
            let drawn_new: Vec<f64> = arms.iter().map(|&a| lp_new[a]).collect();
            let drawn_ref: Vec<f64> = arms.iter().map(|&a| lp_ref[a]).collect();
            steps.push(StepLog {
                epoch,
                step,
                sample_id: sample.id.clone(),
                arms,
                rewards,
                advantages: group.advantages,
                logits_before: before,
                logits_after: logits.clone(),
                kl_estimate: kl_estimate(&drawn_new, &drawn_ref)?,
            });
        }
        epochs_out.push(expected_metrics(
            epoch,
            &logits,
            &reference,
            &table,
            Some(reward_sum / reward_count as f64),
        ));
    }

    Ok(TrainingTrace {
        initial,
        epochs: epochs_out,
        steps,
        final_policy: ToyPolicy {
            logits,
            ..policy.clone()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn softmax_and_kl_basics() {
        let p = softmax(&[0.0, 4f64.ln()]);
        assert_abs_diff_eq!(p[0], 0.2, epsilon = 1e-12);
        assert_eq!(categorical_kl(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        // Shifting all logits leaves the distribution unchanged.
        assert_abs_diff_eq!(
            categorical_kl(&[1.0, 2.0], &[11.0, 12.0]),
            0.0,
            epsilon = 1e-12
        );
        let kl = categorical_kl(&[0.0, 0.0], &[0.0, 3f64.ln()]);
        let expected = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        assert_abs_diff_eq!(kl, expected, epsilon = 1e-12);
    }

    #[test]
    fn gradient_sums_to_zero() {
        let probs = softmax(&[0.3, -1.0, 2.0]);
        let grad = policy_gradient(&probs, &[0, 2, 2, 1], &[1.0, -0.5, 0.25, -0.75]);
        assert_abs_diff_eq!(grad.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_beta_update_is_plain_ascent() {
        let mut l = vec![0.0, 1.0];
        apply_update(&mut l, &[0.0, 1.0], &[0.5, -0.5], 0.1, 0.0);
        assert_eq!(l, vec![0.05, 0.95]);
    }

    #[test]
    fn policy_validation() {
        assert!(ToyPolicy::new(vec![], vec![], 0).is_err());
        assert!(ToyPolicy::new(vec!["a".into()], vec![f64::NAN], 0).is_err());
        assert!(ToyPolicy::new(vec!["a".into()], vec![0.0, 1.0], 0).is_err());
        let p = ToyPolicy::uniform(vec!["x {code} y".into()], 0).unwrap();
        assert_eq!(p.instantiate(0, "c"), "x c y");
    }
}
