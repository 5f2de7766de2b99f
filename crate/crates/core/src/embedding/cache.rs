// Binary vector cache keyed by (encoder_id, image_sha256).
//
// Layout, all integers little-endian:
//   magic "FVC1" | u32 entry count | entries...
//   entry: u16 id_len | id bytes | 32-byte sha256 | u32 dim | dim x f64

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use super::{embed, EmbeddingError, Encoder, FeatureVector};
use crate::image_io;

const MAGIC: &[u8; 4] = b"FVC1";

#[derive(Debug, Default, Clone, PartialEq)]
pub struct VectorCache {
    entries: BTreeMap<(String, [u8; 32]), Vec<f64>>,
}

fn sha(image: &[u8]) -> [u8; 32] {
    let mut out = [0u8; 32];
    hex::decode_to_slice(image_io::sha256_hex(image), &mut out).expect("sha256 hex is 32 bytes");
    out
}

impl VectorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, encoder_id: &str, image: &[u8]) -> Option<FeatureVector> {
        self.entries
            .get(&(encoder_id.to_string(), sha(image)))
            .map(|v| FeatureVector {
                values: v.clone(),
                encoder_id: encoder_id.to_string(),
            })
    }

    pub fn insert(&mut self, image: &[u8], vector: &FeatureVector) {
        self.entries.insert(
            (vector.encoder_id.clone(), sha(image)),
            vector.values.clone(),
        );
    }

    pub fn get_or_embed(
        &mut self,
        image: &[u8],
        encoder: &dyn Encoder,
    ) -> Result<FeatureVector, EmbeddingError> {
        if let Some(v) = self.get(encoder.id(), image) {
            return Ok(v);
        }
        let v = embed(image, encoder)?;
        self.insert(image, &v);
        Ok(v)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for ((id, digest), values) in &self.entries {
            out.write_all(&(id.len() as u16).to_le_bytes())?;
            out.write_all(id.as_bytes())?;
            out.write_all(digest)?;
            out.write_all(&(values.len() as u32).to_le_bytes())?;
            for v in values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a vector cache"));
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        let count = u32::from_le_bytes(u32buf);
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let mut u16buf = [0u8; 2];
            input.read_exact(&mut u16buf)?;
            let mut id = vec![0u8; u16::from_le_bytes(u16buf) as usize];
            input.read_exact(&mut id)?;
            let id = String::from_utf8(id).map_err(|_| bad("encoder id is not utf-8"))?;
            let mut digest = [0u8; 32];
            input.read_exact(&mut digest)?;
            input.read_exact(&mut u32buf)?;
            let dim = u32::from_le_bytes(u32buf) as usize;
            let mut values = Vec::with_capacity(dim);
            let mut f = [0u8; 8];
            for _ in 0..dim {
                input.read_exact(&mut f)?;
                values.push(f64::from_le_bytes(f));
            }
            entries.insert((id, digest), values);
        }
        Ok(VectorCache { entries })
    }
}
