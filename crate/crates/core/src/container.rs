//! Binary model container shared by every persisted model.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset 0   8 bytes   magic  b"SDGKIT\0\x01"
//! offset 8   u64       header length H in bytes
//! offset 16  H bytes   UTF-8 JSON header
//! offset 16+H          section payloads, back to back, in header order
//! ```
//!
//! The header is a JSON object:
//!
//! ```json
//! {"format":"sdgkit-model","version":1,"kind":"tfidf",
//!  "meta":{...},
//!  "sections":[{"name":"idf","dtype":"f32","len":1234}]}
//! ```
//!
//! `dtype` is `f32` or `f64`; a section of `len` elements occupies
//! `len * 4` or `len * 8` bytes. JSON object keys are written in sorted
//! order, so identical models produce identical bytes.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

pub const MAGIC: &[u8; 8] = b"SDGKIT\0\x01";
pub const FORMAT_NAME: &str = "sdgkit-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not an sdgkit model file (bad magic)")]
    BadMagic,
    #[error("file truncated: {0}")]
    Truncated(&'static str),
    #[error("invalid header: {0}")]
    Header(String),
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("expected a `{expected}` model, found `{found}`")]
    WrongKind { expected: String, found: String },
    #[error("missing section `{0}`")]
    MissingSection(String),
    #[error("section `{name}` has dtype {found}, expected {expected}")]
    Dtype {
        name: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("section `{name}` has {found} elements, expected {expected}")]
    Length {
        name: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SectionData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl SectionData {
    fn dtype(&self) -> &'static str {
        match self {
            SectionData::F32(_) => "f32",
            SectionData::F64(_) => "f64",
        }
    }

    fn len(&self) -> usize {
        match self {
            SectionData::F32(v) => v.len(),
            SectionData::F64(v) => v.len(),
        }
    }
}

/// Header of a model stored inside another model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedHeader {
    pub kind: String,
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct SectionHeader {
    name: String,
    dtype: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
    meta: serde_json::Value,
    sections: Vec<SectionHeader>,
}

/// An in-memory model file: a kind tag, JSON metadata and named float
/// sections.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: String,
    pub meta: serde_json::Value,
    sections: Vec<(String, SectionData)>,
}

impl ModelFile {
    pub fn new<M: Serialize>(kind: &str, meta: &M) -> Result<Self, ContainerError> {
        Ok(ModelFile {
            kind: kind.to_string(),
            meta: serde_json::to_value(meta).map_err(|e| ContainerError::Header(e.to_string()))?,
            sections: Vec::new(),
        })
    }

    pub fn push_f32(&mut self, name: &str, data: Vec<f32>) {
        self.sections.push((name.to_string(), SectionData::F32(data)));
    }

    pub fn push_f64(&mut self, name: &str, data: Vec<f64>) {
        self.sections.push((name.to_string(), SectionData::F64(data)));
    }

    pub fn push_section(&mut self, name: &str, data: SectionData) {
        self.sections.push((name.to_string(), data));
    }

    pub fn sections(&self) -> &[(String, SectionData)] {
        &self.sections
    }

    /// Copies another model's sections in under `prefix/` and returns the
    /// `{"kind", "meta"}` header the caller stores in its own metadata.
    pub fn embed(&mut self, prefix: &str, inner: &ModelFile) -> EmbeddedHeader {
        for (name, data) in &inner.sections {
            self.sections.push((format!("{prefix}/{name}"), data.clone()));
        }
        EmbeddedHeader {
            kind: inner.kind.clone(),
            meta: inner.meta.clone(),
        }
    }

    /// Reverse of [`ModelFile::embed`].
    pub fn extract(&self, prefix: &str, header: &EmbeddedHeader) -> ModelFile {
        let lead = format!("{prefix}/");
        ModelFile {
            kind: header.kind.clone(),
            meta: header.meta.clone(),
            sections: self
                .sections
                .iter()
                .filter_map(|(n, d)| n.strip_prefix(&lead).map(|n| (n.to_string(), d.clone())))
                .collect(),
        }
    }

    pub fn meta<M: DeserializeOwned>(&self) -> Result<M, ContainerError> {
        serde_json::from_value(self.meta.clone()).map_err(|e| ContainerError::Header(e.to_string()))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), ContainerError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(ContainerError::WrongKind {
                expected: kind.to_string(),
                found: self.kind.clone(),
            })
        }
    }

    fn section(&self, name: &str) -> Result<&SectionData, ContainerError> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d)
            .ok_or_else(|| ContainerError::MissingSection(name.to_string()))
    }

    pub fn f32_section(&self, name: &str, expected_len: usize) -> Result<&[f32], ContainerError> {
        match self.section(name)? {
            SectionData::F32(v) if v.len() == expected_len => Ok(v),
            SectionData::F32(v) => Err(ContainerError::Length {
                name: name.to_string(),
                expected: expected_len,
                found: v.len(),
            }),
            other => Err(ContainerError::Dtype {
                name: name.to_string(),
                expected: "f32",
                found: other.dtype(),
            }),
        }
    }

    pub fn f64_section(&self, name: &str, expected_len: usize) -> Result<&[f64], ContainerError> {
        match self.section(name)? {
            SectionData::F64(v) if v.len() == expected_len => Ok(v),
            SectionData::F64(v) => Err(ContainerError::Length {
                name: name.to_string(),
                expected: expected_len,
                found: v.len(),
            }),
            other => Err(ContainerError::Dtype {
                name: name.to_string(),
                expected: "f64",
                found: other.dtype(),
            }),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            sections: self
                .sections
                .iter()
                .map(|(name, data)| SectionHeader {
                    name: name.clone(),
                    dtype: data.dtype().to_string(),
                    len: data.len(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, data) in &self.sections {
            match data {
                SectionData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                SectionData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        if bytes.len() < 16 {
            return Err(ContainerError::Truncated("preamble"));
        }
        if &bytes[..8] != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() < header_len {
            return Err(ContainerError::Truncated("header"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| ContainerError::Header(e.to_string()))?;
        if header.format != FORMAT_NAME {
            return Err(ContainerError::Header(format!("unknown format `{}`", header.format)));
        }
        if header.version != FORMAT_VERSION {
            return Err(ContainerError::Version(header.version));
        }
        let mut rest = &body[header_len..];
        let mut sections = Vec::with_capacity(header.sections.len());
        for s in header.sections {
            let data = match s.dtype.as_str() {
                "f32" => {
                    let (chunk, tail) = take(rest, s.len * 4)?;
                    rest = tail;
                    SectionData::F32(
                        chunk
                            .chunks_exact(4)
                            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                "f64" => {
                    let (chunk, tail) = take(rest, s.len * 8)?;
                    rest = tail;
                    SectionData::F64(
                        chunk
                            .chunks_exact(8)
                            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                other => return Err(ContainerError::Header(format!("unknown dtype `{other}`"))),
            };
            sections.push((s.name, data));
        }
        if !rest.is_empty() {
            return Err(ContainerError::Header("trailing bytes after last section".into()));
        }
        Ok(ModelFile {
            kind: header.kind,
            meta: header.meta,
            sections,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ContainerError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|source| ContainerError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ContainerError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ContainerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

fn take(bytes: &[u8], n: usize) -> Result<(&[u8], &[u8]), ContainerError> {
    if bytes.len() < n {
        Err(ContainerError::Truncated("section payload"))
    } else {
        Ok(bytes.split_at(n))
    }
}
