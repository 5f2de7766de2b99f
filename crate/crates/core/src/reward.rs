//! Semantic and visual rewards, their composition, group-relative
//! advantages and the KL estimator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, embed, EmbeddingError, Encoder, FeatureVector};
use crate::inspector::{Inspector, InspectorError};
use crate::limiter::bounded_map;
use crate::matcher::judge;
use crate::model::{ChartSample, QASet, RewardBreakdown, Rollout, RolloutGroup};
use crate::sandbox::{batch_execute, extract_code_block, ExecutionLimits, Renderer, SandboxError};

/// Standard deviations below this are treated as zero.
pub const ZERO_STD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Inspector(#[from] InspectorError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("qa set is empty")]
    EmptyQaSet,
    #[error("sample {0} has no qa set")]
    MissingQaSet(String),
    #[error("expected a group of {expected} rollouts, got {got}")]
    GroupSize { expected: usize, got: usize },
    #[error("a group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("non-finite input value")]
    NonFinite,
    #[error("shape mismatch: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub lambda: f64,
    pub reward_floor_on_exec_failure: f64,
    pub kl_beta: f64,
    pub group_size: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            lambda: 1.0,
            reward_floor_on_exec_failure: 0.0,
            kl_beta: 0.02,
            group_size: 8,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.group_size < 2 {
            return Err(RewardError::InvalidConfig("group_size must be >= 2".into()));
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return Err(RewardError::InvalidConfig("kl_beta must be >= 0".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(RewardError::InvalidConfig("lambda must be >= 0".into()));
        }
        if !self.reward_floor_on_exec_failure.is_finite() {
            return Err(RewardError::InvalidConfig(
                "reward floor must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaScore {
    pub r_qa: f64,
    pub verdicts: Vec<bool>,
    pub replies: Vec<String>,
}

/// Fraction of verdicts that pass. Empty input is a pass rate of 0.
pub fn pass_rate(verdicts: &[bool]) -> f64 {
    if verdicts.is_empty() {
        return 0.0;
    }
    verdicts.iter().filter(|&&v| v).count() as f64 / verdicts.len() as f64
}

/// Asks the Inspector every question about the predicted image and scores
/// the replies against the gold answers.
pub fn compute_qa_reward(
    pred_image: &[u8],
    qa: &QASet,
    inspector: &Inspector,
) -> Result<QaScore, RewardError> {
    if qa.items.is_empty() {
        return Err(RewardError::EmptyQaSet);
    }
    let replies = inspector.answer_qa_set(pred_image, qa)?;
    let verdicts: Vec<bool> = replies
        .iter()
        .zip(&qa.items)
        .map(|(r, item)| judge(r, item))
        .collect();
    Ok(QaScore {
        r_qa: pass_rate(&verdicts),
        verdicts,
        replies,
    })
}

/// Raw cosine similarity between the two images' embeddings.
pub fn compute_visual_reward(
    src: &[u8],
    pred: &[u8],
    encoder: &dyn Encoder,
) -> Result<f64, RewardError> {
    let a = embed(src, encoder)?;
    let b = embed(pred, encoder)?;
    Ok(cosine_similarity(&a, &b)?)
}

pub fn compute_total_reward(r_qa: f64, r_vis: f64, config: &RewardConfig) -> f64 {
    r_qa + config.lambda * r_vis
}

/// Builds the breakdown for an executed rollout; the visual term is clipped
/// to [0, 1] before composition.
pub fn executed_breakdown(
    verdicts: Vec<bool>,
    r_vis_raw: f64,
    config: &RewardConfig,
) -> RewardBreakdown {
    let r_qa = pass_rate(&verdicts);
    let r_vis = r_vis_raw.clamp(0.0, 1.0);
    RewardBreakdown {
        executed: true,
        r_qa,
        r_vis,
        r_vis_raw,
        r_total: compute_total_reward(r_qa, r_vis, config),
        verdicts,
        lambda_used: config.lambda,
    }
}

/// Group-standardized advantages `(R_i - mean) / std` with the population
/// standard deviation. Zero-variance groups get all-zero advantages.
pub fn compute_advantages(rewards: &[f64]) -> Result<Vec<f64>, RewardError> {
    if rewards.len() < 2 {
        return Err(RewardError::GroupTooSmall(rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(RewardError::NonFinite);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < ZERO_STD {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Non-negative KL estimator: mean of `exp(r) - r - 1` with
/// `r = logp_ref - logp_new`.
pub fn kl_estimate(logp_new: &[f64], logp_ref: &[f64]) -> Result<f64, RewardError> {
    if logp_new.len() != logp_ref.len() {
        return Err(RewardError::ShapeMismatch(logp_new.len(), logp_ref.len()));
    }
    if logp_new.is_empty() {
        return Ok(0.0);
    }
    if logp_new.iter().chain(logp_ref).any(|v| !v.is_finite()) {
        return Err(RewardError::NonFinite);
    }
    let total: f64 = logp_new
        .iter()
        .zip(logp_ref)
        .map(|(new, reference)| {
            let r = reference - new;
            (r.exp_m1() - r).max(0.0)
        })
        .sum();
    Ok(total / logp_new.len() as f64)
}

/// Everything needed to turn candidate scripts into scored rollouts.
pub struct RewardEngine<'a> {
    pub renderer: &'a dyn Renderer,
    pub inspector: &'a Inspector,
    pub encoder: &'a dyn Encoder,
    pub config: RewardConfig,
    pub limits: ExecutionLimits,
    /// Upper bound on concurrent renders and on rollouts scored at once.
    pub parallelism: usize,
}

impl<'a> RewardEngine<'a> {
    pub fn new(
        renderer: &'a dyn Renderer,
        inspector: &'a Inspector,
        encoder: &'a dyn Encoder,
        config: RewardConfig,
    ) -> Self {
        RewardEngine {
            renderer,
            inspector,
            encoder,
            config,
            limits: ExecutionLimits::default(),
            parallelism: 1,
        }
    }

    pub fn with_limits(mut self, limits: ExecutionLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    /// Renders and scores each candidate (model output or bare script) and
    /// standardizes the rewards within the group.
    pub fn score_rollout_group<S: AsRef<str> + Sync>(
        &self,
        sample: &ChartSample,
        outputs: &[S],
    ) -> Result<RolloutGroup, RewardError> {
        self.config.validate()?;
        if outputs.len() != self.config.group_size {
            return Err(RewardError::GroupSize {
                expected: self.config.group_size,
                got: outputs.len(),
            });
        }
        self.score_codes(sample, outputs)
    }

    /// Like [`Self::score_rollout_group`] without the group-size check.
    pub fn score_codes<S: AsRef<str> + Sync>(
        &self,
        sample: &ChartSample,
        outputs: &[S],
    ) -> Result<RolloutGroup, RewardError> {
        let qa = sample
            .qa_set
            .as_ref()
            .ok_or_else(|| RewardError::MissingQaSet(sample.id.clone()))?;
        if qa.items.is_empty() {
            return Err(RewardError::EmptyQaSet);
        }
        let codes: Vec<String> = outputs
            .iter()
            .map(|o| extract_code_block(o.as_ref()))
            .collect();
        let outcomes = batch_execute(self.renderer, &codes, &self.limits, self.parallelism)?;

        let source: FeatureVector = embed(&sample.image, self.encoder)?;
        let rewards = bounded_map(
            &outcomes,
            self.parallelism,
            |_, outcome| -> Result<RewardBreakdown, RewardError> {
                let Some(image) = outcome.image.as_deref().filter(|_| outcome.is_success()) else {
                    return Ok(RewardBreakdown::execution_failure(
                        self.config.reward_floor_on_exec_failure,
                        self.config.lambda,
                    ));
                };
                let qa_score = compute_qa_reward(image, qa, self.inspector)?;
                let pred = embed(image, self.encoder)?;
                let r_vis_raw = cosine_similarity(&source, &pred)?;
                Ok(executed_breakdown(
                    qa_score.verdicts,
                    r_vis_raw,
                    &self.config,
                ))
            },
        );
        let rewards: Vec<RewardBreakdown> = rewards.into_iter().collect::<Result<_, _>>()?;

        let totals: Vec<f64> = rewards.iter().map(|r| r.r_total).collect();
        let advantages = if totals.len() >= 2 {
            compute_advantages(&totals)?
        } else {
            vec![0.0; totals.len()]
        };
        let rollouts = codes
            .into_iter()
            .zip(outcomes)
            .zip(rewards)
            .map(|((code, outcome), reward)| Rollout {
                code,
                outcome,
                reward,
            })
            .collect();
        Ok(RolloutGroup {
            sample_id: sample.id.clone(),
            rollouts,
            advantages,
        })
    }
}
