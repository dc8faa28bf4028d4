use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliResult;
use crate::formats::write_file;
use crate::json::to_pretty;

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    /// Map or family the run operates on.
    pub input: Value,
    /// Every subcommand parameter after defaults are applied.
    pub params: Value,
    pub out: String,
    pub seed: u64,
}

impl RunConfig {
    /// Compact JSON with keys sorted at every level.
    pub fn canonical_json(&self) -> String {
        canonical(&serde_json::to_value(self).expect("configs always serialize"))
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

/// Compact JSON with sorted object keys.
pub fn canonical(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical(&m[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(canonical).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `metadata.json` into `dir`.
pub fn write_metadata(dir: &Path, cfg: &RunConfig, caveats: &[&str], result: Value) -> CliResult<()> {
    let meta = json!({
        "software": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(cfg).expect("configs always serialize"),
        "config_hash": cfg.hash(),
        "caveats": caveats,
        "result": result,
    });
    write_file(&dir.join("metadata.json"), to_pretty(&meta).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(params: Value) -> RunConfig {
        RunConfig {
            subcommand: "slice".into(),
            input: json!({"factors": []}),
            params,
            out: "out".into(),
            seed: 7,
        }
    }

    #[test]
    fn key_order_does_not_change_the_hash() {
        let a: Value = serde_json::from_str(r#"{"res": 64, "budget": 10, "nested": {"y": 1, "x": 2}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"nested": {"x": 2, "y": 1}, "budget": 10, "res": 64}"#).unwrap();
        assert_eq!(cfg(a.clone()).canonical_json(), cfg(b).canonical_json());
        assert_eq!(cfg(a.clone()).hash(), cfg(a.clone()).hash());
        assert_ne!(cfg(a).hash(), cfg(json!({"res": 65})).hash());
        assert!(cfg(json!({})).canonical_json().starts_with(r#"{"input":"#));
    }

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
