//! Artifact files and the manifest that fingerprints them.
//!
//! Every scenario produces a set of named byte buffers (CSV tables,
//! JSON reports). [`write_artifacts`] puts them on disk next to a
//! `manifest.json` that records the seed, the tool version, each file's
//! SHA-256 and size, and an echo of the effective configuration (plus
//! its digest). Nothing in an artifact or the manifest depends on
//! wall-clock time or paths, so re-running a scenario with the same
//! seed and configuration reproduces every byte.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            bytes,
        }
    }
}

/// Comma-separated table with a header row. Values are written as
/// given; callers format numbers with `Display`, which for floats is
/// the shortest digit string that round-trips.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "ragged CSV row");
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    name: String,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    scenario: String,
    version: String,
    seed: u64,
    config_sha256: String,
    artifacts: Vec<ManifestEntry>,
    config: serde_json::Value,
}

/// Write all artifacts plus `manifest.json` into `out_dir` (created if
/// missing). Returns the manifest path.
pub fn write_artifacts(
    out_dir: &Path,
    scenario: &str,
    seed: u64,
    effective_config: &serde_json::Value,
    artifacts: &[Artifact],
) -> io::Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let config_bytes =
        serde_json::to_vec(effective_config).expect("config value serializes");
    let manifest = Manifest {
        scenario: scenario.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config_sha256: sha256_hex(&config_bytes),
        artifacts: artifacts
            .iter()
            .map(|a| ManifestEntry {
                name: a.name.clone(),
                bytes: a.bytes.len(),
                sha256: sha256_hex(&a.bytes),
            })
            .collect(),
        config: effective_config.clone(),
    };
    for a in artifacts {
        fs::write(out_dir.join(&a.name), &a.bytes)?;
    }
    let manifest_path = out_dir.join("manifest.json");
    let mut body = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    body.push(b'\n');
    fs::write(&manifest_path, body)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_is_exact() {
        let bytes = csv(
            &["a", "b"],
            &[
                vec!["1".into(), "2.5".into()],
                vec!["x".into(), String::new()],
            ],
        );
        assert_eq!(String::from_utf8(bytes).unwrap(), "a,b\n1,2.5\nx,\n");
    }

    #[test]
    fn sha256_matches_known_vector() {
        // FIPS 180-2 test vector for "abc".
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_is_deterministic() {
        let dir_a = std::env::temp_dir().join("t2t-artifact-test-a");
        let dir_b = std::env::temp_dir().join("t2t-artifact-test-b");
        let config = serde_json::json!({"k": 1});
        let arts = vec![Artifact::new("t.csv", b"a,b\n1,2\n".to_vec())];
        let pa = write_artifacts(&dir_a, "demo", 7, &config, &arts).unwrap();
        let pb = write_artifacts(&dir_b, "demo", 7, &config, &arts).unwrap();
        assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
        fs::remove_dir_all(dir_a).ok();
        fs::remove_dir_all(dir_b).ok();
    }
}
