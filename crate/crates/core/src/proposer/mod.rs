//! The proposer contract used by the evolutionary loop: metadata proposal,
//! code synthesis, visual verification and repair. [`MockProposer`] is a
//! deterministic offline implementation; [`HttpProposer`] talks to a
//! JSON-over-HTTP chat service.

pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::parse;
use crate::render::read_pgm;

pub use http::{ApiToken, HttpProposer, ProposerConfig, API_KEY_ENV};
pub use mock::{MockMode, MockProposer};

/// Upper bound on the total size of context code sent for synthesis.
pub const MAX_CONTEXT_BYTES: usize = 64 * 1024;
/// Upper bound on the montage image size.
pub const MAX_MONTAGE_BYTES: usize = 1024 * 1024;
pub const MAX_CHILDREN: usize = 16;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProposerError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Descriptive part of a pool tuple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub name: String,
    pub r#abstract: String,
    pub detailed: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentInfo {
    pub id: u64,
    #[serde(flatten)]
    pub meta: Metadata,
}

/// A proposed child: metadata plus the ids of the parents it derives from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChildMeta {
    #[serde(flatten)]
    pub meta: Metadata,
    pub parents: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    pub id: u64,
    pub name: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposeRequest {
    pub parents: Vec<ParentInfo>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizeRequest {
    pub child: ChildMeta,
    /// Parents' code first, then retrieved neighbors.
    pub context: Vec<CodeBlock>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub child: ChildMeta,
    /// Binary PGM montage, base64 on the wire.
    #[serde(with = "b64")]
    pub montage: Vec<u8>,
    pub solid_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Execution,
    Geometry,
    Agreement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairRequest {
    pub child: ChildMeta,
    pub code: String,
    pub stage: Stage,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub agree: bool,
    pub critique: String,
}

pub trait Proposer: Send + Sync {
    fn propose_metadata(&self, req: &ProposeRequest) -> Result<Vec<ChildMeta>, ProposerError>;
    /// Returns MiniCQ generator source.
    fn synthesize_code(&self, req: &SynthesizeRequest) -> Result<String, ProposerError>;
    fn verify(&self, req: &VerifyRequest) -> Result<Verdict, ProposerError>;
    /// Returns revised MiniCQ generator source.
    fn repair(&self, req: &RepairRequest) -> Result<String, ProposerError>;
}

pub fn is_snake_case(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && !name.ends_with('_')
        && !name.contains("__")
}

pub fn check_propose(req: &ProposeRequest) -> Result<(), ProposerError> {
    if !(1..=MAX_CHILDREN).contains(&req.k) {
        return Err(ProposerError::InvalidRequest(format!(
            "k = {} outside 1..={MAX_CHILDREN}",
            req.k
        )));
    }
    if req.parents.is_empty() {
        return Err(ProposerError::InvalidRequest("no parents".into()));
    }
    Ok(())
}

pub fn check_synthesize(req: &SynthesizeRequest) -> Result<(), ProposerError> {
    if !is_snake_case(&req.child.meta.name) {
        return Err(ProposerError::InvalidRequest(format!(
            "child name `{}` is not snake_case",
            req.child.meta.name
        )));
    }
    let size: usize = req.context.iter().map(|b| b.code.len()).sum();
    if size > MAX_CONTEXT_BYTES {
        return Err(ProposerError::InvalidRequest(format!(
            "context is {size} bytes, limit {MAX_CONTEXT_BYTES}"
        )));
    }
    Ok(())
}

pub fn check_verify(req: &VerifyRequest) -> Result<(), ProposerError> {
    if req.montage.len() > MAX_MONTAGE_BYTES {
        return Err(ProposerError::InvalidRequest(format!(
            "montage is {} bytes, limit {MAX_MONTAGE_BYTES}",
            req.montage.len()
        )));
    }
    read_pgm(&req.montage).map_err(|e| ProposerError::InvalidRequest(e.to_string()))?;
    Ok(())
}

/// Parses generator text; every parameter must carry a default, which the
/// grammar enforces.
pub fn check_code(code: &str) -> Result<(), String> {
    parse(code).map(|_| ()).map_err(|e| e.to_string())
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests;
