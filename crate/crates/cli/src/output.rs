//! Results directory handling. Every tabular file opens with a `#` line
//! carrying the config hash and seeds; `manifest.json` lists the files
//! written by a command together with the effective config.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;

pub struct OutputDir {
    root: PathBuf,
    command: String,
    provenance: String,
    seeds: Vec<(String, u64)>,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(cfg: &ExperimentConfig, command: &str, seeds: &[(&str, u64)]) -> Result<Self> {
        let root = cfg.out.join(command);
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        let mut provenance = format!("# needle {command} config_sha256={}", cfg.sha256());
        for (name, value) in seeds {
            provenance.push_str(&format!(" {name}={value}"));
        }
        Ok(Self {
            root,
            command: command.to_string(),
            provenance,
            seeds: seeds.iter().map(|(n, v)| (n.to_string(), *v)).collect(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Opens `name` for writing, creating parent directories, and records it.
    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(name.to_string());
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    /// CSV writer whose first line is the provenance comment.
    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        let mut w = self.file(name)?;
        writeln!(w, "{}", self.provenance)?;
        Ok(csv::Writer::from_writer(w))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes `manifest.json`; `extra` is merged in under `"details"`.
    pub fn finish(mut self, cfg: &ExperimentConfig, extra: serde_json::Value) -> Result<PathBuf> {
        let seeds: serde_json::Map<String, serde_json::Value> =
            self.seeds.iter().map(|(n, v)| (n.clone(), json!(v))).collect();
        let manifest = json!({
            "command": self.command,
            "config_sha256": cfg.sha256(),
            "seeds": seeds,
            "config": cfg,
            "files": self.files,
            "details": extra,
        });
        let path = self.root.join("manifest.json");
        self.files.clear();
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(self.root)
    }
}
