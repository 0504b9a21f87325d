//! Run manifest: what a run produced, from which config, and how long each
//! stage took. The manifest hash covers the config hash, the artifact schema
//! versions, and the content hashes of every result file. Timings are
//! recorded but excluded from the hash, so re-running an identical config
//! yields an identical manifest hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use multiport_core::{artifact, Result};
use serde::{Deserialize, Serialize};

use crate::sha256_hex;

pub const MANIFEST_KIND: &str = "run-manifest";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    /// Path relative to the run's output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: u64,
    /// True when the stage was served from the artifact cache.
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    /// Run directory name relative to the configured output root. Derived
    /// from the config hash, so it needs no hash coverage of its own.
    pub run_dir: String,
    /// Artifact kind to schema version, for every artifact kind the run
    /// touched.
    pub artifact_versions: BTreeMap<String, u32>,
    pub timings: Vec<StageTiming>,
    pub results: Vec<ResultFile>,
    /// Content hash over (config_hash, artifact_versions, results).
    pub manifest_hash: String,
}

impl RunManifest {
    pub fn new(experiment: &str, config_hash: String) -> Self {
        RunManifest {
            experiment: experiment.to_string(),
            config_hash,
            run_dir: String::new(),
            artifact_versions: BTreeMap::new(),
            timings: Vec::new(),
            results: Vec::new(),
            manifest_hash: String::new(),
        }
    }

    pub fn touch_artifact(&mut self, kind: &str) {
        self.artifact_versions
            .insert(kind.to_string(), artifact::SCHEMA_VERSION);
    }

    pub fn record_timing(&mut self, stage: &str, millis: u64, cached: bool) {
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            millis,
            cached,
        });
    }

    /// Registers a finished result file by hashing its bytes on disk.
    pub fn record_result(&mut self, out_dir: &Path, rel_path: &str) -> Result<()> {
        let bytes = std::fs::read(out_dir.join(rel_path))?;
        self.results.push(ResultFile {
            path: rel_path.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    fn compute_hash(&self) -> String {
        let mut acc = String::new();
        acc.push_str(&self.config_hash);
        for (kind, version) in &self.artifact_versions {
            acc.push_str(&format!("|{kind}:{version}"));
        }
        // BTreeMap order makes artifact lines stable; results keep emission
        // order, which is itself a function of the config.
        for r in &self.results {
            acc.push_str(&format!("|{}:{}", r.path, r.sha256));
        }
        sha256_hex(acc.as_bytes())
    }

    pub fn finalize(&mut self) {
        self.manifest_hash = self.compute_hash();
    }

    pub fn save(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(MANIFEST_FILE);
        artifact::save_record(&path, MANIFEST_KIND, self)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        artifact::load_record(path, MANIFEST_KIND)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_timings_but_tracks_results() {
        let mut a = RunManifest::new("routing", "abc".into());
        a.touch_artifact("medium");
        a.results.push(ResultFile {
            path: "results.json".into(),
            sha256: "00ff".into(),
        });
        a.record_timing("medium", 12, false);
        a.finalize();

        let mut b = a.clone();
        b.timings.clear();
        b.record_timing("medium", 9000, true);
        b.finalize();
        assert_eq!(a.manifest_hash, b.manifest_hash);

        let mut c = a.clone();
        c.results[0].sha256 = "11ee".into();
        c.finalize();
        assert_ne!(a.manifest_hash, c.manifest_hash);
    }

    #[test]
    fn manifest_round_trips_as_artifact() {
        let dir = std::env::temp_dir().join(format!("manifest-rt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut m = RunManifest::new("swap", "deadbeef".into());
        m.touch_artifact("phase-planes");
        m.finalize();
        let path = m.save(&dir).unwrap();
        let back = RunManifest::load(&path).unwrap();
        assert_eq!(back, m);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
