//! Model files: 8-byte magic, a JSON header, then the parameters as
//! little-endian f32 blobs in manifest order, starting right after the
//! header's closing brace.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ForecastError, ForecastModel, ModelConfig, ModelMeta, Result};

pub const MAGIC: &[u8; 8] = b"MUQARv01";
const FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the blob section.
    pub offset: usize,
    /// Length in bytes.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: u32,
    pub config: ModelConfig,
    pub meta: ModelMeta,
    pub manifest: Vec<ManifestEntry>,
}

fn corrupt(msg: impl Into<String>) -> ForecastError {
    ForecastError::Corrupt(msg.into())
}

fn check_magic(bytes: &[u8]) -> Result<()> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    Ok(())
}

/// Read just the header, leaving the weights unparsed.
pub fn read_header<R: Read>(mut reader: R) -> Result<ModelHeader> {
    let mut magic = [0u8; 8];
    reader
        .read_exact(&mut magic)
        .map_err(|_| corrupt("truncated before magic"))?;
    check_magic(&magic)?;
    let header = serde_json::Deserializer::from_reader(reader)
        .into_iter::<ModelHeader>()
        .next()
        .ok_or_else(|| corrupt("missing header"))?
        .map_err(|e| corrupt(format!("header: {e}")))?;
    if header.format != FORMAT {
        return Err(corrupt(format!("unsupported format {}", header.format)));
    }
    Ok(header)
}

fn check_taxonomy(meta: &ModelMeta, expected: Option<&str>) -> Result<()> {
    match expected {
        Some(h) if h != meta.taxonomy_hash => Err(ForecastError::TaxonomyMismatch {
            model: meta.taxonomy_hash.clone(),
            expected: h.to_string(),
        }),
        _ => Ok(()),
    }
}

impl ForecastModel {
    pub fn header(&self) -> ModelHeader {
        let mut offset = 0;
        let manifest = self
            .store
            .iter()
            .map(|(_, name, t)| {
                let len = t.numel() * 4;
                let e = ManifestEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    offset,
                    len,
                };
                offset += len;
                e
            })
            .collect();
        ModelHeader {
            format: FORMAT,
            config: self.config.clone(),
            meta: self.meta.clone(),
            manifest,
        }
    }

    pub fn save<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(MAGIC)?;
        serde_json::to_writer(&mut writer, &self.header())
            .map_err(|e| ForecastError::Io(e.into()))?;
        for (_, _, t) in self.store.iter() {
            let mut buf = Vec::with_capacity(t.numel() * 4);
            for &v in t.data() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            writer.write_all(&buf)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.save(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn load<R: Read>(mut reader: R, expected_taxonomy: Option<&str>) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, expected_taxonomy)
    }

    /// Parse a model file. With `expected_taxonomy` set, a model built
    /// against a different taxonomy hash is rejected.
    pub fn from_bytes(bytes: &[u8], expected_taxonomy: Option<&str>) -> Result<Self> {
        check_magic(bytes)?;
        let body = &bytes[MAGIC.len()..];
        let mut stream = serde_json::Deserializer::from_slice(body).into_iter::<ModelHeader>();
        let header = stream
            .next()
            .ok_or_else(|| corrupt("missing header"))?
            .map_err(|e| corrupt(format!("header: {e}")))?;
        let blobs = &body[stream.byte_offset()..];
        if header.format != FORMAT {
            return Err(corrupt(format!("unsupported format {}", header.format)));
        }
        check_taxonomy(&header.meta, expected_taxonomy)?;
        let mut model = Self::build(header.config, header.meta)?;
        if model.store.len() != header.manifest.len() {
            return Err(corrupt(format!(
                "manifest lists {} tensors, architecture has {}",
                header.manifest.len(),
                model.store.len()
            )));
        }
        let mut expected_offset = 0;
        let ids: Vec<_> = model.store.ids().collect();
        for (id, entry) in ids.into_iter().zip(&header.manifest) {
            let t = model.store.value(id);
            if entry.name != model.store.name(id) || entry.shape != t.shape() {
                return Err(corrupt(format!(
                    "tensor '{}' {:?} does not match architecture '{}' {:?}",
                    entry.name,
                    entry.shape,
                    model.store.name(id),
                    t.shape()
                )));
            }
            if entry.offset != expected_offset || entry.len != t.numel() * 4 {
                return Err(corrupt(format!("bad extent for '{}'", entry.name)));
            }
            let end = entry.offset + entry.len;
            let raw = blobs
                .get(entry.offset..end)
                .ok_or_else(|| corrupt(format!("truncated in '{}'", entry.name)))?;
            let data: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(corrupt(format!("non-finite value in '{}'", entry.name)));
            }
            model.store.set(id, data)?;
            expected_offset = end;
        }
        if blobs.len() != expected_offset {
            return Err(corrupt(format!(
                "{} trailing bytes",
                blobs.len() - expected_offset
            )));
        }
        Ok(model)
    }
}
