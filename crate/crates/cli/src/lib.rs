//! Experiment harness for the multiport simulator: TOML-configured runs,
//! stage-cached pipelines, structured result records, and reproducibility
//! manifests. The `multiport` binary is a thin clap front-end over
//! [`experiments::run`].

pub mod config;
pub mod experiments;
pub mod manifest;
pub mod records;

/// Lowercase hex SHA-256 of raw bytes.
pub fn sha256_hex(data: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(data);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
