//! Answer normalization and tolerance matching.
//!
//! Inspector replies are free text. [`normalize_answer`] turns a reply into a
//! typed value without looking at the gold answer; [`match_answer`] then
//! compares it against the gold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnswerType, GoldAnswer, QAItem};

const AFFIRMATIVE: &[&str] = &["yes", "true", "correct"];
const NEGATIVE: &[&str] = &["no", "false", "incorrect"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum NormalizedAnswer {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl NormalizedAnswer {
    /// Canonical textual rendering; normalizing it again yields `self`.
    pub fn render(&self) -> String {
        match self {
            NormalizedAnswer::Bool(true) => "yes".to_string(),
            NormalizedAnswer::Bool(false) => "no".to_string(),
            NormalizedAnswer::Number(v) => format!("{v:?}"),
            NormalizedAnswer::Text(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("cannot read a {expected} answer from {raw:?}")]
    UnparseableAnswer { expected: AnswerType, raw: String },
    #[error("prediction of kind {pred} cannot be compared with a {gold} gold answer")]
    TypeMismatch {
        pred: &'static str,
        gold: AnswerType,
    },
}

pub fn normalize_answer(raw: &str, expected: AnswerType) -> Result<NormalizedAnswer, MatchError> {
    let unparseable = || MatchError::UnparseableAnswer {
        expected,
        raw: raw.to_string(),
    };
    match expected {
        AnswerType::Bool => parse_bool(raw)
            .map(NormalizedAnswer::Bool)
            .ok_or_else(unparseable),
        AnswerType::Float => first_number(raw)
            .map(NormalizedAnswer::Number)
            .ok_or_else(unparseable),
        AnswerType::String => Ok(NormalizedAnswer::Text(collapse_lower(raw))),
    }
}

/// The first word belonging to either lexicon decides.
fn parse_bool(raw: &str) -> Option<bool> {
    raw.trim()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .find_map(|w| {
            let w = w.to_lowercase();
            if AFFIRMATIVE.contains(&w.as_str()) {
                Some(true)
            } else if NEGATIVE.contains(&w.as_str()) {
                Some(false)
            } else {
                None
            }
        })
}

pub(crate) fn collapse_lower(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Extracts the first decimal or scientific-notation number. Thousands
/// separators (`1,234`) are folded in; currency and percent signs are ignored
/// because they are never part of the token.
pub fn first_number(raw: &str) -> Option<f64> {
    let chars: Vec<char> = raw.chars().collect();
    let n = chars.len();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        let starts_digit =
            c.is_ascii_digit() || (c == '.' && i + 1 < n && chars[i + 1].is_ascii_digit());
        if !starts_digit {
            i += 1;
            continue;
        }
        // A minus sign counts only when it is not glued to a preceding word
        // ("COVID-19" is not negative nineteen).
        let mut negative = false;
        if i > 0 && (chars[i - 1] == '-' || chars[i - 1] == '\u{2212}') {
            let glued = i >= 2 && chars[i - 2].is_alphanumeric();
            negative = !glued;
        }
        if let Some(v) = scan_number(&chars, i) {
            return Some(if negative { -v } else { v });
        }
        i += 1;
    }
    None
}

fn scan_number(chars: &[char], start: usize) -> Option<f64> {
    let n = chars.len();
    let mut text = String::new();
    let mut i = start;
    while i < n && chars[i].is_ascii_digit() {
        text.push(chars[i]);
        i += 1;
        // Thousands separator: a comma followed by exactly three digits.
        if i < n
            && chars[i] == ','
            && i + 3 < n + 1
            && chars[i + 1..]
                .iter()
                .take(3)
                .filter(|c| c.is_ascii_digit())
                .count()
                == 3
            && chars.get(i + 4).is_none_or(|c| !c.is_ascii_digit())
        {
            i += 1;
        }
    }
    if i < n && chars[i] == '.' && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()) {
        text.push('.');
        i += 1;
        while i < n && chars[i].is_ascii_digit() {
            text.push(chars[i]);
            i += 1;
        }
    }
    if i < n && (chars[i] == 'e' || chars[i] == 'E') {
        let mut j = i + 1;
        let mut exp = String::from("e");
        if j < n && (chars[j] == '+' || chars[j] == '-') {
            exp.push(chars[j]);
            j += 1;
        }
        let digits_start = j;
        while j < n && chars[j].is_ascii_digit() {
            exp.push(chars[j]);
            j += 1;
        }
        if j > digits_start {
            text.push_str(&exp);
        }
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Decides whether a normalized prediction matches the gold answer. The
/// float bound is inclusive: `|pred - gold| <= tolerance`.
pub fn match_answer(pred: &NormalizedAnswer, gold: &QAItem) -> Result<bool, MatchError> {
    match (pred, &gold.gold_answer) {
        (NormalizedAnswer::Bool(p), GoldAnswer::Bool(g)) => Ok(p == g),
        (NormalizedAnswer::Number(p), GoldAnswer::Float(g)) => {
            let tol = gold.tolerance.unwrap_or(0.0);
            Ok(within_tolerance(*p, *g, tol))
        }
        (NormalizedAnswer::Text(p), GoldAnswer::Text(g)) => Ok(*p == collapse_lower(g)),
        (pred, _) => Err(MatchError::TypeMismatch {
            pred: match pred {
                NormalizedAnswer::Bool(_) => "bool",
                NormalizedAnswer::Number(_) => "number",
                NormalizedAnswer::Text(_) => "text",
            },
            gold: gold.answer_type,
        }),
    }
}

/// Inclusive tolerance test with a few ulps of slack so that the boundary
/// does not depend on the sign of the error.
pub fn within_tolerance(pred: f64, gold: f64, tolerance: f64) -> bool {
    let scale = pred.abs().max(gold.abs()).max(tolerance);
    (pred - gold).abs() <= tolerance + 4.0 * f64::EPSILON * scale
}

/// Normalizes and matches in one go; anything unparseable is a failed verdict.
pub fn judge(raw: &str, gold: &QAItem) -> bool {
    normalize_answer(raw, gold.answer_type)
        .and_then(|pred| match_answer(&pred, gold))
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Category;
    use proptest::prelude::*;

    #[test]
    fn affirmative_sentence() {
        assert_eq!(
            normalize_answer("Yes, it is a stacked bar chart.", AnswerType::Bool).unwrap(),
            NormalizedAnswer::Bool(true)
        );
        assert_eq!(
            normalize_answer("  FALSE ", AnswerType::Bool).unwrap(),
            NormalizedAnswer::Bool(false)
        );
        assert_eq!(
            normalize_answer("The answer is: incorrect", AnswerType::Bool).unwrap(),
            NormalizedAnswer::Bool(false)
        );
    }

    #[test]
    fn maybe_is_unparseable() {
        assert!(matches!(
            normalize_answer("maybe", AnswerType::Bool),
            Err(MatchError::UnparseableAnswer { .. })
        ));
        assert!(matches!(
            normalize_answer("no number here", AnswerType::Float),
            Err(MatchError::UnparseableAnswer { .. })
        ));
    }

    #[test]
    fn number_extraction() {
        let cases = [
            ("The value is approximately 53%.", 53.0),
            ("$1,234.50 in revenue", 1234.5),
            ("about -4.5 units", -4.5),
            ("1.5e3 samples", 1500.0),
            ("COVID-19 cases: 20", 19.0),
            ("50 and 60", 50.0),
            ("1,23 is not grouped", 1.0),
            (".75", 0.75),
            ("2e apples", 2.0),
        ];
        for (raw, want) in cases {
            assert_eq!(first_number(raw), Some(want), "{raw}");
        }
    }

    #[test]
    fn text_is_collapsed_and_lowercased() {
        assert_eq!(
            normalize_answer("  Sales \n  Report ", AnswerType::String).unwrap(),
            NormalizedAnswer::Text("sales report".into())
        );
        let gold = QAItem::text("Title?", "Sales  REPORT", Category::TextPositive);
        assert!(judge("sales report", &gold));
    }

    #[test]
    fn tolerance_examples() {
        let gold = QAItem::float("v?", 50.0, 5.0);
        assert!(match_answer(&NormalizedAnswer::Number(53.0), &gold).unwrap());
        assert!(!match_answer(&NormalizedAnswer::Number(56.0), &gold).unwrap());
        assert!(match_answer(&NormalizedAnswer::Number(55.0), &gold).unwrap());
        assert!(match_answer(&NormalizedAnswer::Number(45.0), &gold).unwrap());
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let gold = QAItem::float("v?", 50.0, 5.0);
        assert!(matches!(
            match_answer(&NormalizedAnswer::Bool(true), &gold),
            Err(MatchError::TypeMismatch { .. })
        ));
        assert!(!judge("yes", &gold));
    }

    proptest! {
        #[test]
        fn tolerance_symmetric_in_sign(g in -1e6f64..1e6, d in 0f64..1e3, t in 0f64..1e3) {
            let gold = QAItem::float("v?", g, t);
            let up = match_answer(&NormalizedAnswer::Number(g + d), &gold).unwrap();
            let down = match_answer(&NormalizedAnswer::Number(g - d), &gold).unwrap();
            prop_assert_eq!(up, down);
        }

        #[test]
        fn tolerance_monotone(g in -1e4f64..1e4, p in -1e4f64..1e4, t in 0f64..100.0, shrink in 0f64..1.0) {
            let loose = QAItem::float("v?", g, t);
            let tight = QAItem::float("v?", g, t * shrink);
            let pred = NormalizedAnswer::Number(p);
            if !match_answer(&pred, &loose).unwrap() {
                prop_assert!(!match_answer(&pred, &tight).unwrap());
            }
        }

        #[test]
        fn normalization_idempotent(raw in "\\PC{0,40}", ty in prop_oneof![
            Just(AnswerType::Bool), Just(AnswerType::Float), Just(AnswerType::String)
        ]) {
            if let Ok(first) = normalize_answer(&raw, ty) {
                let again = normalize_answer(&first.render(), ty).unwrap();
                prop_assert_eq!(again, first);
            }
        }
    }
}
