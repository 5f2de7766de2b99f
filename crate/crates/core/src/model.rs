//! Shared data model: chart samples, QA sets, reward breakdowns and rollout
//! groups, plus their validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::image_io;
use crate::sandbox::RenderOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SourceDataset,
    Rendered,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerType {
    Bool,
    Float,
    String,
}

impl fmt::Display for AnswerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnswerType::Bool => "bool",
            AnswerType::Float => "float",
            AnswerType::String => "string",
        })
    }
}

/// Typed gold answer. Serialized as a bare JSON bool, number or string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoldAnswer {
    Bool(bool),
    Float(f64),
    Text(String),
}

impl GoldAnswer {
    pub fn answer_type(&self) -> AnswerType {
        match self {
            GoldAnswer::Bool(_) => AnswerType::Bool,
            GoldAnswer::Float(_) => AnswerType::Float,
            GoldAnswer::Text(_) => AnswerType::String,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ChartType,
    Layout,
    TextPositive,
    TextNegative,
    DataAccuracy,
    Style,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::ChartType,
        Category::Layout,
        Category::TextPositive,
        Category::TextNegative,
        Category::DataAccuracy,
        Category::Style,
    ];

    /// Number of questions of this category in a schema-conformant set of 10.
    pub fn expected_count(self) -> usize {
        match self {
            Category::ChartType => 1,
            Category::Layout => 1,
            Category::TextPositive => 2,
            Category::TextNegative => 1,
            Category::DataAccuracy => 3,
            Category::Style => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::ChartType => "chart_type",
            Category::Layout => "layout",
            Category::TextPositive => "text_positive",
            Category::TextNegative => "text_negative",
            Category::DataAccuracy => "data_accuracy",
            Category::Style => "style",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One atomic verification question. `tolerance` is in absolute units of the
/// gold value and exists only for float answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub question: String,
    pub answer_type: AnswerType,
    pub gold_answer: GoldAnswer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub category: Category,
}

impl QAItem {
    pub fn boolean(question: impl Into<String>, gold: bool, category: Category) -> Self {
        QAItem {
            question: question.into(),
            answer_type: AnswerType::Bool,
            gold_answer: GoldAnswer::Bool(gold),
            tolerance: None,
            category,
        }
    }

    pub fn float(question: impl Into<String>, gold: f64, tolerance: f64) -> Self {
        QAItem {
            question: question.into(),
            answer_type: AnswerType::Float,
            gold_answer: GoldAnswer::Float(gold),
            tolerance: Some(tolerance),
            category: Category::DataAccuracy,
        }
    }

    pub fn text(question: impl Into<String>, gold: impl Into<String>, category: Category) -> Self {
        QAItem {
            question: question.into(),
            answer_type: AnswerType::String,
            gold_answer: GoldAnswer::Text(gold.into()),
            tolerance: None,
            category,
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.question.trim().is_empty() {
            out.push(Violation::new("question non-empty", "question is blank"));
        }
        if self.gold_answer.answer_type() != self.answer_type {
            out.push(Violation::new(
                "gold answer matches answer_type",
                format!(
                    "answer_type {} but gold is {}",
                    self.answer_type,
                    self.gold_answer.answer_type()
                ),
            ));
        }
        match (self.answer_type, self.tolerance) {
            (AnswerType::Float, None) => out.push(Violation::new(
                "float implies tolerance present",
                "float item without tolerance",
            )),
            (AnswerType::Float, Some(t)) if !(t.is_finite() && t >= 0.0) => out.push(
                Violation::new("tolerance non-negative", format!("tolerance {t}")),
            ),
            (AnswerType::Bool | AnswerType::String, Some(_)) => out.push(Violation::new(
                "non-float implies tolerance absent",
                format!("{} item carries a tolerance", self.answer_type),
            )),
            _ => {}
        }
        if let GoldAnswer::Float(v) = self.gold_answer {
            if !v.is_finite() {
                out.push(Violation::new("gold answer finite", format!("gold {v}")));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QASet {
    pub source_image_id: String,
    pub items: Vec<QAItem>,
}

impl QASet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.items.is_empty() {
            out.push(Violation::new("qa items non-empty", "qa set has no items"));
        }
        for (i, item) in self.items.iter().enumerate() {
            for mut v in item.violations() {
                v.detail = format!("item {i}: {}", v.detail);
                out.push(v);
            }
        }
        out
    }
}

/// The unit of curation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSample {
    pub id: String,
    /// PNG bytes.
    pub image: Vec<u8>,
    pub caption: Option<String>,
    pub code: Option<String>,
    pub qa_set: Option<QASet>,
    pub provenance: Provenance,
}

impl ChartSample {
    pub fn new(id: impl Into<String>, image: Vec<u8>, provenance: Provenance) -> Self {
        ChartSample {
            id: id.into(),
            image,
            caption: None,
            code: None,
            qa_set: None,
            provenance,
        }
    }

    pub fn with_caption(mut self, caption: impl Into<String>) -> Self {
        self.caption = Some(caption.into());
        self
    }

    pub fn with_code(mut self, code: impl Into<String>) -> Self {
        self.code = Some(code.into());
        self
    }

    pub fn with_qa(mut self, qa: QASet) -> Self {
        self.qa_set = Some(qa);
        self
    }
}

/// A violated invariant. `invariant` is a stable short name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

impl Violation {
    fn new(invariant: &'static str, detail: impl Into<String>) -> Self {
        Violation {
            invariant,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}

/// Checks every per-sample invariant. An empty report means the sample is
/// well formed. Id uniqueness is a shard-level property checked on load.
pub fn validate_sample(sample: &ChartSample) -> Vec<Violation> {
    let mut report = Vec::new();
    if sample.id.is_empty() {
        report.push(Violation::new("id non-empty", "sample id is empty"));
    }
    if let Err(e) = image_io::decode(&sample.image) {
        report.push(Violation::new("image decodes", e.to_string()));
    }
    if sample.provenance == Provenance::Rendered && sample.code.is_none() {
        report.push(Violation::new(
            "rendered implies code",
            "provenance=rendered but no code attached",
        ));
    }
    if let Some(qa) = &sample.qa_set {
        report.extend(qa.violations());
    }
    report
}

/// Result of checking a QA set against the 10-question category schema.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionReport {
    pub conformant: bool,
    pub counts: BTreeMap<Category, usize>,
    /// Categories whose count differs from the schema: (category, expected, found).
    pub mismatches: Vec<(Category, usize, usize)>,
    /// Indices of data_accuracy items whose tolerance is below 5% of |gold|.
    pub tolerance_violations: Vec<usize>,
}

/// Minimum data_accuracy tolerance as a fraction of |gold|.
pub const MIN_RELATIVE_TOLERANCE: f64 = 0.05;

pub fn validate_qa_distribution(qa: &QASet) -> DistributionReport {
    let mut counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
    for item in &qa.items {
        *counts.entry(item.category).or_default() += 1;
    }
    let mismatches: Vec<_> = Category::ALL
        .iter()
        .filter_map(|&c| {
            let found = counts[&c];
            (found != c.expected_count()).then_some((c, c.expected_count(), found))
        })
        .collect();

    let tolerance_violations: Vec<usize> = qa
        .items
        .iter()
        .enumerate()
        .filter(|(_, item)| item.category == Category::DataAccuracy)
        .filter(|(_, item)| match (&item.gold_answer, item.tolerance) {
            (GoldAnswer::Float(gold), Some(tol)) => tol < MIN_RELATIVE_TOLERANCE * gold.abs(),
            _ => true,
        })
        .map(|(i, _)| i)
        .collect();

    DistributionReport {
        conformant: !qa.items.is_empty()
            && mismatches.is_empty()
            && tolerance_violations.is_empty(),
        counts,
        mismatches,
        tolerance_violations,
    }
}

/// Per-rollout reward decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub executed: bool,
    pub r_qa: f64,
    /// Visual reward after clipping to [0, 1].
    pub r_vis: f64,
    /// Raw cosine similarity before clipping.
    pub r_vis_raw: f64,
    pub r_total: f64,
    pub verdicts: Vec<bool>,
    pub lambda_used: f64,
}

impl RewardBreakdown {
    pub fn execution_failure(floor: f64, lambda: f64) -> Self {
        RewardBreakdown {
            executed: false,
            r_qa: 0.0,
            r_vis: 0.0,
            r_vis_raw: 0.0,
            r_total: floor,
            verdicts: Vec::new(),
            lambda_used: lambda,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub code: String,
    pub outcome: RenderOutcome,
    pub reward: RewardBreakdown,
}

/// G scored rollouts for one sample with their group-standardized advantages.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub sample_id: String,
    pub rollouts: Vec<Rollout>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.reward.r_total).collect()
    }
}

#[cfg(test)]
pub(crate) use tests::schema_set;
