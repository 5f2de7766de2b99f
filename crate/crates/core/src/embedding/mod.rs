//! Image embeddings and the vector machinery built on them: cosine
//! similarity, K-Means representative sampling and multi-encoder
//! nearest-neighbour retrieval.

use image::imageops::FilterType;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image_io::{self, ImageError};
use crate::limiter::bounded_map;

mod cache;
mod kmeans;
mod neighbors;

pub use cache::VectorCache;
pub use kmeans::{kmeans, representative_sample, KMeansResult, KMEANS_MAX_ITERATIONS};
pub use neighbors::{nearest_neighbors, MultiEmbedding, Neighbor};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("image does not decode: {0}")]
    Image(#[from] ImageError),
    #[error("encoder unavailable: {0}")]
    Unavailable(String),
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("vectors from different encoders ({left} vs {right})")]
    EncoderMismatch { left: String, right: String },
    #[error("dimension mismatch ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid feature vector: {0}")]
    InvalidVector(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub encoder_id: String,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, encoder_id: impl Into<String>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::InvalidVector("empty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidVector(format!(
                "non-finite value {bad}"
            )));
        }
        Ok(FeatureVector {
            values,
            encoder_id: encoder_id.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub(crate) fn check_compatible(a: &FeatureVector, b: &FeatureVector) -> Result<(), EmbeddingError> {
    if a.encoder_id != b.encoder_id {
        return Err(EmbeddingError::EncoderMismatch {
            left: a.encoder_id.clone(),
            right: b.encoder_id.clone(),
        });
    }
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `dot(a, b) / (|a| |b|)`, clamped to [-1, 1] against rounding.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64, EmbeddingError> {
    check_compatible(a, b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot(&a.values, &b.values) / (na * nb)).clamp(-1.0, 1.0))
}

pub trait Encoder: Send + Sync {
    /// Identifies the model and its preprocessing; vectors are only
    /// comparable when ids match.
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, image: &[u8]) -> Result<FeatureVector, EmbeddingError>;
}

impl<T: Encoder + ?Sized> Encoder for std::sync::Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, image: &[u8]) -> Result<FeatureVector, EmbeddingError> {
        (**self).embed(image)
    }
}

/// Embeds and checks that the backend honoured its declared dimension.
pub fn embed(image: &[u8], encoder: &dyn Encoder) -> Result<FeatureVector, EmbeddingError> {
    let v = encoder.embed(image)?;
    if v.dim() != encoder.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            left: encoder.dimension(),
            right: v.dim(),
        });
    }
    Ok(v)
}

/// Embeds many images with at most `parallelism` requests in flight.
pub fn embed_all<I: AsRef<[u8]> + Sync>(
    images: &[I],
    encoder: &dyn Encoder,
    parallelism: usize,
) -> Result<Vec<FeatureVector>, EmbeddingError> {
    bounded_map(images, parallelism, |_, img| embed(img.as_ref(), encoder))
        .into_iter()
        .collect()
}

pub const STUB_SIDE: u32 = 32;
pub const STUB_ENCODER_ID: &str = "stub-gray32-centered-v1";

/// Deterministic test-time encoder: grayscale, resize to 32x32 (triangle
/// filter), map each pixel to `2 * luma / 255 - 1` and L2-normalize.
///
/// Centering keeps every vector non-zero (no u8 luma maps to 0) and makes
/// black and white images distinguishable.
#[derive(Debug, Default, Clone, Copy)]
pub struct StubEncoder;

impl Encoder for StubEncoder {
    fn id(&self) -> &str {
        STUB_ENCODER_ID
    }

    fn dimension(&self) -> usize {
        (STUB_SIDE * STUB_SIDE) as usize
    }

    fn embed(&self, image: &[u8]) -> Result<FeatureVector, EmbeddingError> {
        let img = image_io::decode(image)?;
        let gray = img.to_luma8();
        let small = image::imageops::resize(&gray, STUB_SIDE, STUB_SIDE, FilterType::Triangle);
        let mut values: Vec<f64> = small
            .pixels()
            .map(|p| 2.0 * p.0[0] as f64 / 255.0 - 1.0)
            .collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        values.iter_mut().for_each(|v| *v /= norm);
        FeatureVector::new(values, STUB_ENCODER_ID)
    }
}

/// Declarative encoder selection, as found in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EncoderBackend {
    DeterministicStub,
    RemoteService {
        id: String,
        endpoint: String,
        dimension: usize,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

fn default_timeout() -> f64 {
    60.0
}

impl EncoderBackend {
    pub fn dimension(&self) -> usize {
        match self {
            EncoderBackend::DeterministicStub => StubEncoder.dimension(),
            EncoderBackend::RemoteService { dimension, .. } => *dimension,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Encoder>, EmbeddingError> {
        match self {
            EncoderBackend::DeterministicStub => Ok(Box::new(StubEncoder)),
            #[cfg(feature = "remote")]
            EncoderBackend::RemoteService {
                id,
                endpoint,
                dimension,
                timeout_secs,
            } => Ok(Box::new(remote::RemoteEncoder::new(
                id,
                endpoint,
                *dimension,
                *timeout_secs,
            ))),
            #[cfg(not(feature = "remote"))]
            EncoderBackend::RemoteService { .. } => Err(EmbeddingError::Unavailable(
                "built without the `remote` feature".into(),
            )),
        }
    }
}

#[cfg(feature = "remote")]
pub use remote::RemoteEncoder;

#[cfg(feature = "remote")]
mod remote {
    use base64::Engine;
    use serde_json::{json, Value};

    use super::*;

    /// POSTs `{"image_b64": ...}` and accepts either a bare float array or
    /// `{"embedding": [...]}` in reply.
    pub struct RemoteEncoder {
        id: String,
        endpoint: String,
        dimension: usize,
        agent: ureq::Agent,
    }

    impl RemoteEncoder {
        pub fn new(id: &str, endpoint: &str, dimension: usize, timeout_secs: f64) -> Self {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(std::time::Duration::from_secs_f64(timeout_secs)))
                .build()
                .into();
            RemoteEncoder {
                id: id.to_string(),
                endpoint: endpoint.to_string(),
                dimension,
                agent,
            }
        }
    }

    pub(crate) fn parse_vector(body: &Value) -> Option<Vec<f64>> {
        let arr = match body {
            Value::Array(a) => a,
            Value::Object(o) => o.get("embedding")?.as_array()?,
            _ => return None,
        };
        arr.iter().map(Value::as_f64).collect()
    }

    impl Encoder for RemoteEncoder {
        fn id(&self) -> &str {
            &self.id
        }

        fn dimension(&self) -> usize {
            self.dimension
        }

        fn embed(&self, image: &[u8]) -> Result<FeatureVector, EmbeddingError> {
            image_io::decode(image)?;
            let b64 = base64::engine::general_purpose::STANDARD.encode(image);
            let mut resp = self
                .agent
                .post(&self.endpoint)
                .send_json(json!({ "image_b64": b64 }))
                .map_err(|e| EmbeddingError::Unavailable(e.to_string()))?;
            let body: Value = resp
                .body_mut()
                .read_json()
                .map_err(|e| EmbeddingError::Unavailable(format!("bad response body: {e}")))?;
            let values = parse_vector(&body).ok_or_else(|| {
                EmbeddingError::Unavailable("response is not a float array".into())
            })?;
            FeatureVector::new(values, self.id.clone())
        }
    }
}
