use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::Result;

/// Name of the directory that receives the outputs of a failed command.
pub const FAILED_DIR: &str = "failed";

/// Suffix of the provenance sidecar written next to every output file.
pub const SIDECAR_SUFFIX: &str = ".meta.json";

/// An output directory that tags every file with the producing config hash
/// and remembers what it wrote, so a failed command can set its partial
/// outputs aside.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    config_hash: String,
    command: String,
    written: Vec<PathBuf>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(SIDECAR_SUFFIX);
    path.with_file_name(name)
}

impl OutputDir {
    pub fn create(root: &Path, config_hash: &str, command: &str) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), config_hash: config_hash.to_string(), command: command.to_string(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Absolute path for `rel`, creating parent directories.
    pub fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    /// Records a file produced through `write` and adds its sidecar.
    pub fn record(&mut self, rel: &str, extra: Value) -> Result<PathBuf> {
        let p = self.root.join(rel);
        let mut meta = json!({ "config_hash": self.config_hash, "command": self.command, "file": rel });
        if let (Some(m), Value::Object(e)) = (meta.as_object_mut(), extra) {
            m.extend(e);
        }
        let side = sidecar_path(&p);
        fs::write(&side, serde_json::to_string_pretty(&meta)? + "\n")?;
        if !self.written.contains(&p) {
            self.written.push(p.clone());
            self.written.push(side);
        }
        Ok(p)
    }

    /// Calls `write` on the target path, then records it.
    pub fn write_with(&mut self, rel: &str, extra: Value, write: impl FnOnce(&Path) -> Result<()>) -> Result<PathBuf> {
        let p = self.path(rel)?;
        write(&p)?;
        self.record(rel, extra)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<PathBuf> {
        self.write_with(rel, Value::Null, |p| Ok(fs::write(p, text)?))
    }

    pub fn write_json(&mut self, rel: &str, value: &Value) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write_text(rel, &text)
    }

    /// Moves everything written so far under `failed/` and stores the error
    /// message there.
    pub fn mark_failed(&mut self, message: &str) -> Result<PathBuf> {
        let failed = self.root.join(FAILED_DIR);
        fs::create_dir_all(&failed)?;
        for p in std::mem::take(&mut self.written) {
            if !p.exists() {
                continue;
            }
            let rel = p.strip_prefix(&self.root).unwrap_or(&p).to_path_buf();
            let dest = failed.join(rel);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::rename(&p, &dest)?;
        }
        let err = failed.join("ERROR.txt");
        fs::write(&err, format!("command: {}\nconfig_hash: {}\nerror: {message}\n", self.command, self.config_hash))?;
        Ok(failed)
    }
}
