//! Run manifests written next to every output.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Version of every JSON document the CLI writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub base_seed: Option<u64>,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<PathBuf>,
}

/// SHA-256 of the canonical JSON form: object keys sorted, shortest round-trip floats.
pub fn config_hash<T: Serialize>(config: &T) -> serde_json::Result<String> {
    let value = serde_json::to_value(config)?;
    let text = serde_json::to_string(&value)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, base_seed: Option<u64>, started: String) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config_hash,
            base_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started,
            finished: timestamp(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }
}

/// `<dir>/<stem>.manifest.json` for an output file.
pub fn manifest_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ivsel_core::sim::bundled;

    #[test]
    fn hash_tracks_every_field() {
        let base = bundled::load("table1_baseline").unwrap();
        let h = config_hash(&base).unwrap();
        assert_eq!(h, config_hash(&base.clone()).unwrap());
        assert_eq!(h.len(), 64);
        let mut c = base.clone();
        c.base_seed += 1;
        assert_ne!(h, config_hash(&c).unwrap());
        let mut c = base.clone();
        c.selection.gamma_r = f64::from_bits(c.selection.gamma_r.to_bits() + 1);
        assert_ne!(h, config_hash(&c).unwrap());
        let mut c = base;
        c.name.push('x');
        assert_ne!(h, config_hash(&c).unwrap());
    }

    #[test]
    fn hash_ignores_key_order() {
        let a = serde_json::json!({"b": 1, "a": [1.5, 2]});
        let b: serde_json::Value = serde_json::from_str(r#"{"a":[1.5,2],"b":1}"#).unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("/tmp/x/est.json")), PathBuf::from("/tmp/x/est.manifest.json"));
    }
}
