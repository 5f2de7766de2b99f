//! Test/train overlap checks over averaged dual-encoder similarities.

use std::fmt::Write as _;

use base64::Engine as _;
use serde::Serialize;
use thiserror::Error;

use crate::embedding::{embed_all, nearest_neighbors, EmbeddingError, Encoder, MultiEmbedding};

#[derive(Debug, Error)]
pub enum ContaminationError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    /// PNG bytes.
    pub image: Vec<u8>,
}

impl LabeledImage {
    pub fn new(id: impl Into<String>, image: Vec<u8>) -> Self {
        LabeledImage {
            id: id.into(),
            image,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Match {
    pub train_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContaminationRow {
    pub test_id: String,
    /// Best first; ties broken by train index.
    pub matches: Vec<Match>,
}

impl ContaminationRow {
    pub fn best(&self) -> &Match {
        &self.matches[0]
    }
}

/// Distribution of best-match scores; linear interpolation between order
/// statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScorePercentiles {
    pub min: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContaminationReport {
    pub encoder_ids: Vec<String>,
    pub top_k: usize,
    pub rows: Vec<ContaminationRow>,
    /// `None` when the test set is empty.
    pub percentiles: Option<ScorePercentiles>,
}

pub const CONTAMINATION_CSV_HEADER: &str = "test_id,best_train_id,score";

/// Linear-interpolated percentile of sorted data, `q` in [0, 100].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl ContaminationReport {
    fn from_rows(encoder_ids: Vec<String>, top_k: usize, rows: Vec<ContaminationRow>) -> Self {
        let mut best: Vec<f64> = rows.iter().map(|r| r.best().score).collect();
        best.sort_by(f64::total_cmp);
        let percentiles = (!best.is_empty()).then(|| ScorePercentiles {
            min: best[0],
            p50: percentile(&best, 50.0),
            p90: percentile(&best, 90.0),
            p95: percentile(&best, 95.0),
            p99: percentile(&best, 99.0),
            max: best[best.len() - 1],
            mean: best.iter().sum::<f64>() / best.len() as f64,
        });
        ContaminationReport {
            encoder_ids,
            top_k,
            rows,
            percentiles,
        }
    }

    /// Rows sorted by best score, most suspicious first.
    pub fn ranked(&self) -> Vec<&ContaminationRow> {
        let mut rows: Vec<&ContaminationRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.best().score.total_cmp(&a.best().score));
        rows
    }

    /// One line per test item: its best training match.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CONTAMINATION_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{}",
                csv_field(&r.test_id),
                csv_field(&r.best().train_id),
                r.best().score
            );
        }
        out
    }

    pub fn summary(&self, threshold: f64) -> String {
        let mut out = format!(
            "contamination check: {} test items, encoders [{}], top_k {}\n",
            self.rows.len(),
            self.encoder_ids.join(", "),
            self.top_k
        );
        match &self.percentiles {
            None => out.push_str("no test items\n"),
            Some(p) => {
                let _ = writeln!(
                    out,
                    "best-match score: min {:.4}  p50 {:.4}  p90 {:.4}  p95 {:.4}  p99 {:.4}  max {:.4}  mean {:.4}",
                    p.min, p.p50, p.p90, p.p95, p.p99, p.max, p.mean
                );
                let flagged = self
                    .rows
                    .iter()
                    .filter(|r| r.best().score >= threshold)
                    .count();
                let _ = writeln!(
                    out,
                    "{flagged} test items with a match scoring >= {threshold}"
                );
            }
        }
        out
    }

    /// Static side-by-side gallery of each test image and its best match,
    /// ranked by score. Images are inlined as data URIs.
    pub fn gallery_html(
        &self,
        test: &[LabeledImage],
        train: &[LabeledImage],
        limit: usize,
    ) -> String {
        let find = |set: &[LabeledImage], id: &str| {
            set.iter().find(|s| s.id == id).map(|s| data_uri(&s.image))
        };
        let mut html = String::from(
            "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>Contamination gallery</title>\n<style>\
             body{font-family:sans-serif;margin:1em}table{border-collapse:collapse}\
             td,th{border:1px solid #ccc;padding:6px;text-align:center}img{max-width:320px}\
             </style></head><body>\n<h1>Contamination gallery</h1>\n<table>\n\
             <tr><th>#</th><th>test</th><th>best train match</th><th>score</th></tr>\n",
        );
        for (rank, row) in self.ranked().into_iter().take(limit).enumerate() {
            let best = row.best();
            let cell = |uri: Option<String>, id: &str| match uri {
                Some(u) => format!("<img src=\"{u}\" alt=\"{0}\"><br>{0}", escape(id)),
                None => escape(id),
            };
            let _ = writeln!(
                html,
                "<tr><td>{}</td><td>{}</td><td>{}</td><td>{:.4}</td></tr>",
                rank + 1,
                cell(find(test, &row.test_id), &row.test_id),
                cell(find(train, &best.train_id), &best.train_id),
                best.score
            );
        }
        html.push_str("</table>\n</body></html>\n");
        html
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn data_uri(png: &[u8]) -> String {
    format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(png)
    )
}

/// Report over precomputed embeddings. Ids are paired with embeddings by
/// position.
pub fn contamination_report_from_embeddings(
    test_ids: &[String],
    test: &[MultiEmbedding],
    train_ids: &[String],
    train: &[MultiEmbedding],
    top_k: usize,
) -> Result<ContaminationReport, ContaminationError> {
    if test_ids.len() != test.len() || train_ids.len() != train.len() {
        return Err(ContaminationError::InvalidArgument(
            "ids and embeddings differ in length".into(),
        ));
    }
    if top_k == 0 {
        return Err(ContaminationError::InvalidArgument(
            "top_k must be at least 1".into(),
        ));
    }
    if train.is_empty() {
        return Err(ContaminationError::InvalidArgument(
            "training set is empty".into(),
        ));
    }
    let neighbors = nearest_neighbors(test, train, top_k)?;
    let rows = test_ids
        .iter()
        .zip(neighbors)
        .map(|(id, ns)| ContaminationRow {
            test_id: id.clone(),
            matches: ns
                .into_iter()
                .map(|n| Match {
                    train_id: train_ids[n.index].clone(),
                    score: n.score,
                })
                .collect(),
        })
        .collect();
    let encoder_ids = test
        .first()
        .or(train.first())
        .map(|e| e.vectors().iter().map(|v| v.encoder_id.clone()).collect())
        .unwrap_or_default();
    Ok(ContaminationReport::from_rows(encoder_ids, top_k, rows))
}

/// Embeds both sets under every encoder and averages the per-encoder
/// cosine similarities.
pub fn embed_set(
    items: &[LabeledImage],
    encoders: &[&dyn Encoder],
    parallelism: usize,
) -> Result<Vec<MultiEmbedding>, ContaminationError> {
    if encoders.is_empty() {
        return Err(ContaminationError::InvalidArgument(
            "at least one encoder required".into(),
        ));
    }
    let images: Vec<&[u8]> = items.iter().map(|i| i.image.as_slice()).collect();
    let mut per_encoder = Vec::with_capacity(encoders.len());
    for enc in encoders {
        per_encoder.push(embed_all(&images, *enc, parallelism)?);
    }
    (0..items.len())
        .map(|i| {
            Ok(MultiEmbedding::new(
                per_encoder.iter().map(|vs| vs[i].clone()).collect(),
            )?)
        })
        .collect()
}

pub fn contamination_report(
    test: &[LabeledImage],
    train: &[LabeledImage],
    encoders: &[&dyn Encoder],
    top_k: usize,
    parallelism: usize,
) -> Result<ContaminationReport, ContaminationError> {
    let test_emb = embed_set(test, encoders, parallelism)?;
    let train_emb = embed_set(train, encoders, parallelism)?;
    let ids = |set: &[LabeledImage]| set.iter().map(|s| s.id.clone()).collect::<Vec<_>>();
    contamination_report_from_embeddings(&ids(test), &test_emb, &ids(train), &train_emb, top_k)
}
