//! Dataset-construction filters and the manifest that records them.
//!
//! Every stage partitions its input: each item is kept, dropped with a
//! reason, or quarantined (Inspector transport fault). Quarantined items are
//! counted inside `dropped` so that `kept + dropped = input` always holds,
//! and are also reported separately so they are never mistaken for
//! data-quality rejections.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::embedding::{
    cosine_similarity, embed_all, representative_sample, EmbeddingError, Encoder,
};
use crate::inspector::{Inspector, InspectorError};
use crate::limiter::bounded_map;
use crate::matcher::judge;
use crate::model::{ChartSample, Provenance};
use crate::sandbox::{batch_execute, ExecutionLimits, RenderStatus, Renderer, SandboxError};

pub const DEFAULT_MAX_CAPTION_TOKENS: usize = 4096;
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.8;
pub const DEFAULT_MIN_ACCURACY: f64 = 0.9;

#[derive(Debug, Error)]
pub enum CurationError {
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DropReason {
    MissingCaption,
    CaptionTooLong {
        tokens: usize,
        max_tokens: usize,
    },
    MissingCode,
    ExecutionFailure {
        status: RenderStatus,
        diagnostic: String,
    },
    BelowSimilarity {
        score: f64,
        threshold: f64,
    },
    MissingQaSet,
    InvalidImage {
        detail: String,
    },
    ConsistencyBelowThreshold {
        correct: usize,
        required: usize,
        total: usize,
    },
    InspectorUnavailable {
        detail: String,
    },
    NotRepresentative,
}

impl DropReason {
    pub fn key(&self) -> &'static str {
        match self {
            DropReason::MissingCaption => "missing_caption",
            DropReason::CaptionTooLong { .. } => "caption_too_long",
            DropReason::MissingCode => "missing_code",
            DropReason::ExecutionFailure { .. } => "execution_failure",
            DropReason::BelowSimilarity { .. } => "below_similarity",
            DropReason::MissingQaSet => "missing_qa_set",
            DropReason::InvalidImage { .. } => "invalid_image",
            DropReason::ConsistencyBelowThreshold { .. } => "consistency_below_threshold",
            DropReason::InspectorUnavailable { .. } => "inspector_unavailable",
            DropReason::NotRepresentative => "not_representative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub id: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub input: usize,
    pub kept: usize,
    /// Includes quarantined items.
    pub dropped: usize,
    pub quarantined: usize,
    pub reasons: BTreeMap<String, usize>,
    /// Thresholds and other parameters exactly as applied.
    pub parameters: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    pub kept: Vec<ChartSample>,
    pub dropped: Vec<Rejected>,
    pub quarantined: Vec<Rejected>,
    pub report: StageReport,
}

impl StageResult {
    fn assemble(
        stage: &str,
        input: usize,
        parameters: BTreeMap<String, Value>,
        kept: Vec<ChartSample>,
        dropped: Vec<Rejected>,
        quarantined: Vec<Rejected>,
    ) -> Self {
        let mut reasons = BTreeMap::new();
        for r in dropped.iter().chain(&quarantined) {
            *reasons.entry(r.reason.key().to_string()).or_insert(0) += 1;
        }
        let report = StageReport {
            stage: stage.to_string(),
            input,
            kept: kept.len(),
            dropped: dropped.len() + quarantined.len(),
            quarantined: quarantined.len(),
            reasons,
            parameters,
        };
        debug_assert_eq!(report.kept + report.dropped, report.input);
        StageResult {
            kept,
            dropped,
            quarantined,
            report,
        }
    }

    pub fn kept_ids(&self) -> Vec<&str> {
        self.kept.iter().map(|s| s.id.as_str()).collect()
    }
}

fn params<const N: usize>(pairs: [(&str, Value); N]) -> BTreeMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub trait TokenCounter: Send + Sync {
    /// Recorded in manifests.
    fn id(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct WhitespaceTokenCounter;

impl TokenCounter for WhitespaceTokenCounter {
    fn id(&self) -> &str {
        "whitespace-v1"
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Drops samples whose caption exceeds `max_tokens`; samples without a
/// caption are dropped as `missing_caption`.
pub fn filter_caption_length(
    samples: Vec<ChartSample>,
    max_tokens: usize,
    counter: &dyn TokenCounter,
) -> StageResult {
    let input = samples.len();
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for s in samples {
        let reason = match s.caption.as_deref() {
            None => Some(DropReason::MissingCaption),
            Some(c) => {
                let tokens = counter.count(c);
                (tokens > max_tokens).then_some(DropReason::CaptionTooLong { tokens, max_tokens })
            }
        };
        match reason {
            Some(reason) => dropped.push(Rejected { id: s.id, reason }),
            None => kept.push(s),
        }
    }
    StageResult::assemble(
        "caption_length",
        input,
        params([
            ("max_tokens", json!(max_tokens)),
            ("token_counter", json!(counter.id())),
        ]),
        kept,
        dropped,
        Vec::new(),
    )
}

/// Shared rendering context for stages that execute code.
pub struct RenderContext<'a> {
    pub renderer: &'a dyn Renderer,
    pub limits: ExecutionLimits,
    pub parallelism: usize,
}

impl<'a> RenderContext<'a> {
    pub fn new(renderer: &'a dyn Renderer) -> Self {
        RenderContext {
            renderer,
            limits: ExecutionLimits::default(),
            parallelism: 1,
        }
    }
}

fn failure_reason(outcome: &crate::sandbox::RenderOutcome) -> DropReason {
    DropReason::ExecutionFailure {
        status: outcome.status,
        diagnostic: outcome.diagnostic.clone(),
    }
}

/// Renders each sample's code and keeps it iff the render's cosine
/// similarity to the sample's own (source) image strictly exceeds
/// `threshold`.
pub fn filter_by_render_similarity(
    samples: Vec<ChartSample>,
    threshold: f64,
    ctx: &RenderContext<'_>,
    encoder: &dyn Encoder,
) -> Result<StageResult, CurationError> {
    if !threshold.is_finite() {
        return Err(CurationError::InvalidArgument(
            "threshold must be finite".into(),
        ));
    }
    let input = samples.len();
    let (with_code, without): (Vec<_>, Vec<_>) =
        samples.into_iter().partition(|s| s.code.is_some());
    let mut dropped: Vec<Rejected> = without
        .into_iter()
        .map(|s| Rejected {
            id: s.id,
            reason: DropReason::MissingCode,
        })
        .collect();

    let codes: Vec<&str> = with_code
        .iter()
        .map(|s| s.code.as_deref().unwrap_or_default())
        .collect();
    let outcomes = batch_execute(ctx.renderer, &codes, &ctx.limits, ctx.parallelism)?;
    let scored = bounded_map(
        &with_code,
        ctx.parallelism,
        |i, s| -> Result<Option<f64>, CurationError> {
            let Some(render) = outcomes[i]
                .image
                .as_deref()
                .filter(|_| outcomes[i].is_success())
            else {
                return Ok(None);
            };
            let v = embed_all(&[s.image.as_slice(), render], encoder, 1)?;
            Ok(Some(cosine_similarity(&v[0], &v[1])?))
        },
    );

    let mut kept = Vec::new();
    for ((s, outcome), score) in with_code.into_iter().zip(&outcomes).zip(scored) {
        match score? {
            None => dropped.push(Rejected {
                id: s.id,
                reason: failure_reason(outcome),
            }),
            Some(score) if score > threshold => kept.push(s),
            Some(score) => dropped.push(Rejected {
                id: s.id,
                reason: DropReason::BelowSimilarity { score, threshold },
            }),
        }
    }
    Ok(StageResult::assemble(
        "render_similarity",
        input,
        params([
            ("threshold", json!(threshold)),
            ("comparison", json!("strictly_greater")),
            ("encoder_id", json!(encoder.id())),
        ]),
        kept,
        dropped,
        Vec::new(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeRecord {
    pub id: String,
    pub code: String,
    #[serde(default)]
    pub caption: Option<String>,
}

/// Builds rendered samples whose image is the render of their own code.
pub fn render_and_pair(
    records: Vec<CodeRecord>,
    ctx: &RenderContext<'_>,
) -> Result<StageResult, CurationError> {
    let input = records.len();
    let codes: Vec<&str> = records.iter().map(|r| r.code.as_str()).collect();
    let outcomes = batch_execute(ctx.renderer, &codes, &ctx.limits, ctx.parallelism)?;
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for (r, outcome) in records.into_iter().zip(outcomes) {
        match outcome.image.clone().filter(|_| outcome.is_success()) {
            Some(image) => {
                let mut s = ChartSample::new(r.id, image, Provenance::Rendered).with_code(r.code);
                s.caption = r.caption;
                kept.push(s);
            }
            None => dropped.push(Rejected {
                id: r.id,
                reason: failure_reason(&outcome),
            }),
        }
    }
    Ok(StageResult::assemble(
        "render_and_pair",
        input,
        params([
            ("wall_clock_secs", json!(ctx.limits.wall_clock_secs)),
            ("memory_bytes", json!(ctx.limits.memory_bytes)),
        ]),
        kept,
        dropped,
        Vec::new(),
    ))
}

/// Smallest correct count satisfying `correct / total >= min_acc`.
pub fn required_correct(min_acc: f64, total: usize) -> usize {
    // The epsilon absorbs representation error such as 0.9 * 10 = 9.000000000000002.
    ((min_acc * total as f64) - 1e-9).ceil().max(0.0) as usize
}

enum Verdict {
    Keep,
    Drop(DropReason),
    Quarantine(DropReason),
}

/// Asks the Inspector every question about the sample's own image; keeps
/// the sample iff enough answers match.
pub fn consistency_prefilter(
    samples: Vec<ChartSample>,
    inspector: &Inspector,
    min_acc: f64,
    parallelism: usize,
) -> Result<StageResult, CurationError> {
    if !(0.0..=1.0).contains(&min_acc) {
        return Err(CurationError::InvalidArgument(
            "min_acc must lie in [0, 1]".into(),
        ));
    }
    let input = samples.len();
    let verdicts = bounded_map(&samples, parallelism.max(1), |_, s| {
        let Some(qa) = s.qa_set.as_ref().filter(|q| !q.items.is_empty()) else {
            return Verdict::Drop(DropReason::MissingQaSet);
        };
        match inspector.answer_qa_set(&s.image, qa) {
            Ok(replies) => {
                let correct = replies
                    .iter()
                    .zip(&qa.items)
                    .filter(|(r, item)| judge(r, item))
                    .count();
                let required = required_correct(min_acc, qa.items.len());
                if correct >= required {
                    Verdict::Keep
                } else {
                    Verdict::Drop(DropReason::ConsistencyBelowThreshold {
                        correct,
                        required,
                        total: qa.items.len(),
                    })
                }
            }
            Err(e @ InspectorError::Unavailable { .. }) => {
                Verdict::Quarantine(DropReason::InspectorUnavailable {
                    detail: e.to_string(),
                })
            }
            Err(e) => Verdict::Drop(DropReason::InvalidImage {
                detail: e.to_string(),
            }),
        }
    });
    let (mut kept, mut dropped, mut quarantined) = (Vec::new(), Vec::new(), Vec::new());
    for (s, v) in samples.into_iter().zip(verdicts) {
        match v {
            Verdict::Keep => kept.push(s),
            Verdict::Drop(reason) => dropped.push(Rejected { id: s.id, reason }),
            Verdict::Quarantine(reason) => quarantined.push(Rejected { id: s.id, reason }),
        }
    }
    Ok(StageResult::assemble(
        "consistency_prefilter",
        input,
        params([
            ("min_acc", json!(min_acc)),
            ("rule", json!("correct >= ceil(min_acc * total)")),
            ("inspector_model", json!(inspector.config().model_id)),
        ]),
        kept,
        dropped,
        quarantined,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputShard {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationManifest {
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub timestamp_unix: u64,
    pub input_shards: Vec<InputShard>,
    pub stages: Vec<StageReport>,
}

impl CurationManifest {
    pub fn new(seed: u64, timestamp_unix: u64) -> Self {
        CurationManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp_unix,
            input_shards: Vec::new(),
            stages: Vec::new(),
        }
    }

    pub fn output_count(&self) -> Option<usize> {
        self.stages.last().map(|s| s.kept)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlDataset {
    pub samples: Vec<ChartSample>,
    pub manifest: CurationManifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlBuildConfig {
    pub target_k: usize,
    pub min_acc: f64,
    pub seed: u64,
    pub parallelism: usize,
}

/// Representative selection over the pool's embeddings followed by the
/// consistency prefilter. Output order follows pool order.
pub fn build_rl_dataset(
    pool: Vec<ChartSample>,
    config: &RlBuildConfig,
    encoder: &dyn Encoder,
    inspector: &Inspector,
    mut manifest: CurationManifest,
) -> Result<RlDataset, CurationError> {
    let RlBuildConfig {
        target_k,
        min_acc,
        seed,
        parallelism,
    } = *config;
    if target_k == 0 || target_k > pool.len() {
        return Err(CurationError::InvalidArgument(format!(
            "target_k must be in 1..={} (got {target_k})",
            pool.len()
        )));
    }
    manifest.seed = seed;
    let images: Vec<&[u8]> = pool.iter().map(|s| s.image.as_slice()).collect();
    let vectors = embed_all(&images, encoder, parallelism)?;
    let mut chosen = representative_sample(&vectors, target_k, seed)?;
    chosen.sort_unstable();

    let input = pool.len();
    let (mut selected, mut rest) = (Vec::new(), Vec::new());
    for (i, s) in pool.into_iter().enumerate() {
        if chosen.binary_search(&i).is_ok() {
            selected.push(s);
        } else {
            rest.push(Rejected {
                id: s.id,
                reason: DropReason::NotRepresentative,
            });
        }
    }
    let selection = StageResult::assemble(
        "representative_sample",
        input,
        params([
            ("target_k", json!(target_k)),
            ("seed", json!(seed)),
            ("encoder_id", json!(encoder.id())),
            (
                "kmeans_max_iterations",
                json!(crate::embedding::KMEANS_MAX_ITERATIONS),
            ),
        ]),
        selected,
        rest,
        Vec::new(),
    );
    manifest.stages.push(selection.report);

    let filtered = consistency_prefilter(selection.kept, inspector, min_acc, parallelism)?;
    manifest.stages.push(filtered.report);
    Ok(RlDataset {
        samples: filtered.kept,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::solid_png;

    fn captioned(id: &str, caption: Option<String>) -> ChartSample {
        let mut s = ChartSample::new(id, solid_png(1, 1, [0, 0, 0]), Provenance::SourceDataset);
        s.caption = caption;
        s
    }

    fn words(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    #[test]
    fn caption_boundary_is_strict() {
        let samples = vec![
            captioned("a", Some(words(4096))),
            captioned("b", Some(words(4097))),
            captioned("c", Some(String::new())),
            captioned("d", None),
        ];
        let r = filter_caption_length(samples, 4096, &WhitespaceTokenCounter);
        assert_eq!(r.kept_ids(), ["a", "c"]);
        assert_eq!(
            r.dropped[0].reason,
            DropReason::CaptionTooLong {
                tokens: 4097,
                max_tokens: 4096
            }
        );
        assert_eq!(r.dropped[1].reason, DropReason::MissingCaption);
        assert_eq!(r.report.kept + r.report.dropped, r.report.input);
        assert_eq!(r.report.parameters["token_counter"], json!("whitespace-v1"));
    }

    #[test]
    fn ceiling_rule() {
        assert_eq!(required_correct(0.9, 10), 9);
        assert_eq!(required_correct(0.9, 5), 5);
        assert_eq!(required_correct(0.9, 20), 18);
        assert_eq!(required_correct(1.0, 3), 3);
        assert_eq!(required_correct(0.0, 3), 0);
        assert_eq!(required_correct(0.7, 10), 7);
    }
}
