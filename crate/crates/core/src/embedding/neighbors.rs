use serde::Serialize;

use super::{check_compatible, dot, EmbeddingError, FeatureVector};

/// One item embedded under several encoders, one vector per encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiEmbedding {
    vectors: Vec<FeatureVector>,
}

impl MultiEmbedding {
    /// Vectors are kept sorted by encoder id; duplicate encoders are rejected.
    pub fn new(mut vectors: Vec<FeatureVector>) -> Result<Self, EmbeddingError> {
        if vectors.is_empty() {
            return Err(EmbeddingError::InvalidArgument(
                "at least one encoder required".into(),
            ));
        }
        vectors.sort_by(|a, b| a.encoder_id.cmp(&b.encoder_id));
        if let Some(w) = vectors
            .windows(2)
            .find(|w| w[0].encoder_id == w[1].encoder_id)
        {
            return Err(EmbeddingError::InvalidArgument(format!(
                "encoder {} appears twice",
                w[0].encoder_id
            )));
        }
        Ok(MultiEmbedding { vectors })
    }

    pub fn single(v: FeatureVector) -> Self {
        MultiEmbedding { vectors: vec![v] }
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    fn encoder_ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.iter().map(|v| v.encoder_id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Neighbor {
    pub index: usize,
    /// Mean of the per-encoder cosine similarities.
    pub score: f64,
}

struct Prepared {
    vectors: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

fn prepare(item: &MultiEmbedding) -> Result<Prepared, EmbeddingError> {
    let norms: Vec<f64> = item.vectors.iter().map(FeatureVector::norm).collect();
    if norms.contains(&0.0) {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(Prepared {
        vectors: item.vectors.iter().map(|v| v.values.clone()).collect(),
        norms,
    })
}

/// Ranks the corpus for every query by averaged cosine similarity, highest
/// first; equal scores go to the lower corpus index. Exhaustive search.
pub fn nearest_neighbors(
    queries: &[MultiEmbedding],
    corpus: &[MultiEmbedding],
    top_k: usize,
) -> Result<Vec<Vec<Neighbor>>, EmbeddingError> {
    let Some(reference) = queries.first().or(corpus.first()) else {
        return Ok(Vec::new());
    };
    for item in queries.iter().chain(corpus) {
        if !item.encoder_ids().eq(reference.encoder_ids()) {
            return Err(EmbeddingError::EncoderMismatch {
                left: reference.encoder_ids().collect::<Vec<_>>().join("+"),
                right: item.encoder_ids().collect::<Vec<_>>().join("+"),
            });
        }
        for (a, b) in item.vectors.iter().zip(&reference.vectors) {
            check_compatible(a, b)?;
        }
    }

    let corpus: Vec<Prepared> = corpus.iter().map(prepare).collect::<Result<_, _>>()?;
    let encoders = reference.vectors.len() as f64;
    queries
        .iter()
        .map(|q| {
            let q = prepare(q)?;
            let mut scored: Vec<Neighbor> = corpus
                .iter()
                .enumerate()
                .map(|(index, c)| {
                    let total: f64 = (0..q.vectors.len())
                        .map(|e| {
                            (dot(&q.vectors[e], &c.vectors[e]) / (q.norms[e] * c.norms[e]))
                                .clamp(-1.0, 1.0)
                        })
                        .sum();
                    Neighbor {
                        index,
                        score: total / encoders,
                    }
                })
                .collect();
            scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
            scored.truncate(top_k);
            Ok(scored)
        })
        .collect()
}
