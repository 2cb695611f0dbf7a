use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::config::ExperimentConfig;

/// Artifact directory. Every file is written to a temporary sibling and renamed into place.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<(String, String)>,
    started: SystemTime,
}

impl Outputs {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: SystemTime::now(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let mut tmp = NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.dir.join(name)).map_err(|e| e.error)?;
        self.written.push((name.to_string(), hex::encode(Sha256::digest(bytes))));
        log::info!("wrote {}", self.dir.join(name).display());
        Ok(())
    }

    /// Render into memory with `f`, then write atomically.
    pub fn write_with<E>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>,
    ) -> Result<(), E>
    where
        E: From<std::io::Error>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)?;
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl serde::Serialize) -> std::io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// `manifest.json` (deterministic) and `run_meta.json` (timestamps only).
    pub fn finish(mut self, command: &str, cfg: &ExperimentConfig) -> std::io::Result<()> {
        let files: Vec<_> = self
            .written
            .iter()
            .map(|(name, sha)| json!({ "file": name, "sha256": sha }))
            .collect();
        let manifest = json!({
            "command": command,
            "config": cfg,
            "config_sha256": cfg.hash(),
            "seed": cfg.seed,
            "versions": {
                "nvgf": nvgf::VERSION,
                "nvgf-cli": env!("CARGO_PKG_VERSION"),
            },
            "outputs": files,
        });
        self.write_json("manifest.json", &manifest)?;

        let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        let finished = SystemTime::now();
        let meta = json!({
            "started_unix": secs(self.started),
            "finished_unix": secs(finished),
            "elapsed_seconds": finished.duration_since(self.started).map_or(0.0, |d| d.as_secs_f64()),
        });
        self.write_json("run_meta.json", &meta)
    }
}
