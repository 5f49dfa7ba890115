//! Artifact persistence. Every file a run produces goes through the sink,
//! which stamps it with the config hash (CSV/TOML: `# config_hash=...`
//! comment line; JSON: a `config_hash` field; binary: the header metadata
//! slot) and records it for the manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;

use bohmlab_core::Wavefunction;

use crate::manifest::{RunManifest, TOOL_VERSION};
use crate::RunnerError;

pub struct ArtifactSink {
    dir: PathBuf,
    hash: String,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    payload: &'a T,
}

impl ArtifactSink {
    pub fn new(dir: PathBuf, hash: String) -> Result<Self, RunnerError> {
        std::fs::create_dir_all(&dir).map_err(|e| RunnerError::Io {
            path: dir.clone(),
            source: e,
        })?;
        Ok(ArtifactSink {
            dir,
            hash,
            files: Vec::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, RunnerError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| RunnerError::Io {
            path: path.clone(),
            source: e,
        })?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    fn io(&self, name: &str, e: std::io::Error) -> RunnerError {
        RunnerError::Io {
            path: self.dir.join(name),
            source: e,
        }
    }

    /// Text artifact (CSV, TOML) with a hash comment line on top.
    pub fn write_text(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), RunnerError> {
        let hash = self.hash.clone();
        let mut w = self.create(name)?;
        (|| {
            writeln!(w, "# config_hash={}", hash)?;
            body(&mut w)?;
            w.flush()
        })()
        .map_err(|e| self.io(name, e))
    }

    /// JSON artifact with an injected `config_hash` field.
    pub fn write_json<T: Serialize>(&mut self, name: &str, payload: &T) -> Result<(), RunnerError> {
        let text = serde_json::to_string_pretty(&Stamped {
            config_hash: &self.hash,
            payload,
        })
        .expect("artifact serialises");
        let mut w = self.create(name)?;
        (|| {
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")?;
            w.flush()
        })()
        .map_err(|e| self.io(name, e))
    }

    /// SVG artifact with the hash in a leading comment.
    pub fn write_svg(&mut self, name: &str, svg_body: &str) -> Result<(), RunnerError> {
        let hash = self.hash.clone();
        let mut w = self.create(name)?;
        (|| {
            writeln!(w, "<!-- config_hash={} -->", hash)?;
            w.write_all(svg_body.as_bytes())?;
            w.flush()
        })()
        .map_err(|e| self.io(name, e))
    }

    /// Binary wavefunction snapshot; the hash rides in the header metadata.
    pub fn write_state_binary(&mut self, name: &str, psi: &Wavefunction) -> Result<(), RunnerError> {
        let hash = self.hash.clone();
        let mut w = self.create(name)?;
        (|| {
            psi.write_binary(&mut w, &hash)?;
            w.flush()
        })()
        .map_err(|e| self.io(name, e))
    }

    /// Writes the manifest (listing itself last) and returns it.
    pub fn finish(mut self, seed: Option<u64>, wall_time_s: f64) -> Result<RunManifest, RunnerError> {
        let mut files = std::mem::take(&mut self.files);
        files.push("manifest.json".to_string());
        let manifest = RunManifest {
            config_hash: self.hash.clone(),
            tool_version: TOOL_VERSION.to_string(),
            seed,
            wall_time_s,
            files,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        let path = self.dir.join("manifest.json");
        let mut w = BufWriter::new(File::create(&path).map_err(|e| RunnerError::Io {
            path: path.clone(),
            source: e,
        })?);
        (|| {
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")?;
            w.flush()
        })()
        .map_err(|e| RunnerError::Io { path, source: e })?;
        Ok(manifest)
    }
}
