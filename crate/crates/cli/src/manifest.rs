//! Run manifest embedded in every report.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA: &str = "kroncov/1";

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

impl InputDigest {
    pub fn new(path: &str, bytes: &[u8]) -> Self {
        InputDigest { path: path.to_string(), bytes: bytes.len(), sha256: hex::encode(Sha256::digest(bytes)) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedInfo {
    pub value: u64,
    /// `flag` when given on the command line, `entropy` when drawn.
    pub source: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: SeedInfo,
    pub version: &'static str,
    pub inputs: Vec<InputDigest>,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub schema: &'static str,
    pub manifest: RunManifest,
    pub result: T,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        let d = InputDigest::new("x", b"");
        assert_eq!(d.sha256, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
