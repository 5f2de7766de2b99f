//! JSON-lines dataset shards.
//!
//! Each line is one [`ChartSample`]; the image lives next to the shard as a
//! file referenced by a relative path and pinned by its SHA-256. Images are
//! stored under `images/<sha256>.png`.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image_io::{self, ImageError};
use crate::model::{ChartSample, Provenance, QASet};

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(
        "{path}:{line}: checksum mismatch for {image_path} (expected {expected}, found {found})"
    )]
    Checksum {
        path: PathBuf,
        line: usize,
        image_path: String,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: image {image_path}: {source}")]
    Image {
        path: PathBuf,
        line: usize,
        image_path: String,
        #[source]
        source: ImageError,
    },
    #[error("duplicate sample id {id:?} in {path}")]
    DuplicateId { path: PathBuf, id: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ShardRecord {
    pub id: String,
    pub image_path: String,
    pub image_sha256: String,
    #[serde(default)]
    pub caption: Option<String>,
    #[serde(default)]
    pub code: Option<String>,
    #[serde(default)]
    pub qa: Option<QASet>,
    pub provenance: Provenance,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ShardError + '_ {
    move |source| ShardError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a shard, verifying image checksums and id uniqueness. Non-PNG
/// images are transcoded to PNG after the checksum check.
pub fn load_shard(path: &Path) -> Result<Vec<ChartSample>, ShardError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut samples = Vec::new();

    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ShardRecord =
            serde_json::from_str(&line).map_err(|e| ShardError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        let image_file = base.join(&record.image_path);
        let raw = fs::read(&image_file).map_err(io_err(&image_file))?;
        let found = image_io::sha256_hex(&raw);
        if !found.eq_ignore_ascii_case(&record.image_sha256) {
            return Err(ShardError::Checksum {
                path: path.to_path_buf(),
                line: line_no,
                image_path: record.image_path,
                expected: record.image_sha256,
                found,
            });
        }
        let image = image_io::canonical_png(&raw).map_err(|source| ShardError::Image {
            path: path.to_path_buf(),
            line: line_no,
            image_path: record.image_path.clone(),
            source,
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(ShardError::DuplicateId {
                path: path.to_path_buf(),
                id: record.id,
            });
        }
        samples.push(ChartSample {
            id: record.id,
            image,
            caption: record.caption,
            code: record.code,
            qa_set: record.qa,
            provenance: record.provenance,
        });
    }
    Ok(samples)
}

/// Writes `samples` to `path`, placing images in an `images/` directory next
/// to it. Returns the records as written.
pub fn write_shard(path: &Path, samples: &[ChartSample]) -> Result<Vec<ShardRecord>, ShardError> {
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert(s.id.as_str()) {
            return Err(ShardError::DuplicateId {
                path: path.to_path_buf(),
                id: s.id.clone(),
            });
        }
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let image_dir = base.join("images");
    fs::create_dir_all(&image_dir).map_err(io_err(&image_dir))?;

    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        let sha = image_io::sha256_hex(&s.image);
        let rel = format!("images/{sha}.png");
        let image_file = base.join(&rel);
        if !image_file.exists() {
            fs::write(&image_file, &s.image).map_err(io_err(&image_file))?;
        }
        let record = ShardRecord {
            id: s.id.clone(),
            image_path: rel,
            image_sha256: sha,
            caption: s.caption.clone(),
            code: s.code.clone(),
            qa: s.qa_set.clone(),
            provenance: s.provenance,
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| ShardError::Malformed {
            path: path.to_path_buf(),
            line: records.len() + 1,
            message: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(io_err(path))?;
        records.push(record);
    }
    out.flush().map_err(io_err(path))?;
    Ok(records)
}
