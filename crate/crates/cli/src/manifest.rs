use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Everything needed to rerun a command. The timestamp is the only field that
/// changes between identical runs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: BTreeMap<String, Value>,
    /// sha256 of each input file, keyed by the flag that named it.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            params: BTreeMap::new(),
            inputs: BTreeMap::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn param(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        let value = serde_json::to_value(value).expect("parameters serialize");
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn input(&mut self, name: &str, bytes: &[u8]) -> &mut Self {
        self.inputs.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        self
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text)
    }
}
