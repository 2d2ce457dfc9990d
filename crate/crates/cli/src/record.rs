//! Run records: everything needed to reproduce a command's outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RECORD_FILE: &str = "run_record.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// An input file, echoed in full.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEcho {
    /// How the command used the file (`scenario`, `sweep`, `on`, `off`).
    pub role: String,
    pub file_name: String,
    pub sha256: String,
    pub content: String,
}

impl InputEcho {
    pub fn new(role: &str, path: &Path, content: String) -> Self {
        InputEcho {
            role: role.into(),
            file_name: path
                .file_name()
                .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
            sha256: sha256_hex(content.as_bytes()),
            content,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRef {
    pub file_name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// RFC 3339, from `SOURCE_DATE_EPOCH` (the epoch itself when unset) so
    /// reruns stay byte-identical.
    pub timestamp: String,
    pub seed: u64,
    pub scenario_digest: Option<String>,
    pub inputs: Vec<InputEcho>,
    pub outputs: Vec<OutputRef>,
    pub results: serde_json::Value,
}

/// Timestamp for records: `SOURCE_DATE_EPOCH` seconds, or 0.
pub fn reproducible_timestamp() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .unwrap_or(0);
    chrono::DateTime::from_timestamp(secs, 0)
        .unwrap_or_default()
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn record_round_trips_through_json() {
        let r = RunRecord {
            tool: "radcool".into(),
            version: "0.1.0".into(),
            command: "simulate".into(),
            timestamp: "1970-01-01T00:00:00Z".into(),
            seed: 3,
            scenario_digest: Some("ab".into()),
            inputs: vec![InputEcho::new("scenario", Path::new("/x/a.scn"), "k = 1 K\n".into())],
            outputs: vec![],
            results: serde_json::json!({"n_mode": 0.44}),
        };
        assert_eq!(r.inputs[0].file_name, "a.scn");
        let back: RunRecord = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
