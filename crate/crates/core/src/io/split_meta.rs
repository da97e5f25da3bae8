//! JSON sidecar describing a persisted split.
//!
//! Layout: one UTF-8 line holding a compact JSON object with keys in the
//! order `m_ratio, n_ratio, o_ratio, seed, counts`, where `counts` is
//! `{"train":…,"validation":…,"test":…}`, followed by a newline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::SplitSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitMetadata {
    pub m_ratio: f64,
    pub n_ratio: f64,
    pub o_ratio: f64,
    pub seed: u64,
    pub counts: SplitCounts,
}

impl SplitMetadata {
    pub fn new(spec: &SplitSpec, counts: SplitCounts) -> Self {
        SplitMetadata {
            m_ratio: spec.m_ratio,
            n_ratio: spec.n_ratio,
            o_ratio: spec.o_ratio,
            seed: spec.seed,
            counts,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("metadata is plain data");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let meta: SplitMetadata =
            serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        SplitSpec::new(meta.m_ratio, meta.n_ratio, meta.o_ratio, meta.seed)?;
        Ok(meta)
    }
}
