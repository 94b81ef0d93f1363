//! Declarative experiment configuration. One file per experiment, TOML or
//! JSON by extension; every section except `corpus` has defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use needle_core::corpus::{Format, Schema};
use needle_core::recipes::{FeatureSettings, GloveSettings, KeywordSettings, TopicSettings};
use needle_core::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusRef,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub keywords: KeywordSettings,
    #[serde(default)]
    pub expand: ExpandTask,
    #[serde(default)]
    pub topicrules: TopicTask,
    #[serde(default)]
    pub supervised: SupervisedTask,
    #[serde(default)]
    pub serve: ServeTask,
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRef {
    pub path: PathBuf,
    /// Inferred from the file extension when absent.
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub schema: Schema,
}

impl CorpusRef {
    pub fn format(&self) -> Result<Format> {
        if let Some(f) = self.format {
            return Ok(f);
        }
        let ext = self.path.extension().and_then(|e| e.to_str()).unwrap_or("");
        ext.parse()
            .with_context(|| format!("cannot infer corpus format of {}; set corpus.format", self.path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpandTask {
    /// Neighbourhood sizes; `M = 0` is always emitted as well.
    pub ms: Vec<usize>,
    pub local: bool,
    pub local_glove: GloveSettings,
    /// Pretrained vectors in word2vec/GloVe text format.
    pub embedding_file: Option<PathBuf>,
    /// Terms whose nine nearest neighbours are dumped per space.
    pub neighbor_terms: Vec<String>,
    pub neighbor_count: usize,
}

impl Default for ExpandTask {
    fn default() -> Self {
        Self {
            ms: (1..=9).collect(),
            local: true,
            local_glove: GloveSettings::default(),
            embedding_file: None,
            neighbor_terms: Vec::new(),
            neighbor_count: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
// No deny_unknown_fields here: serde cannot combine it with flatten.
#[serde(default)]
pub struct TopicTask {
    #[serde(flatten)]
    pub settings: TopicSettings,
    /// Terms per topic in the top-terms tables.
    pub top_terms: usize,
    pub write_fits: bool,
}

impl Default for TopicTask {
    fn default() -> Self {
        Self {
            settings: TopicSettings::default(),
            top_terms: 10,
            write_fits: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisedTask {
    pub features: FeatureSettings,
    pub folds: usize,
    pub stratified_folds: bool,
    pub init_size: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub models: Vec<ModelKind>,
    pub modes: Vec<ModeName>,
    pub oversample_factor: f64,
    /// Fixed C; tuned once on the initial set when absent.
    pub reg_c: Option<f64>,
}

impl Default for SupervisedTask {
    fn default() -> Self {
        Self {
            features: FeatureSettings::default(),
            folds: 5,
            stratified_folds: false,
            init_size: 250,
            batch_size: 50,
            iterations: 15,
            models: vec![ModelKind::Svm],
            modes: vec![ModeName::Active, ModeName::Passive],
            oversample_factor: 5.0,
            reg_c: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Active,
    Passive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeTask {
    pub bind: String,
    pub test_fold: usize,
    pub mode: ModeName,
    pub model: ModelKind,
    /// Seconds the loop waits for a complete batch before giving up.
    pub label_timeout_secs: u64,
    /// Directory of static assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServeTask {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8350".into(),
            test_fold: 0,
            mode: ModeName::Active,
            model: ModelKind::Svm,
            label_timeout_secs: 24 * 3600,
            static_dir: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub bind: Option<String>,
}

impl ExperimentConfig {
    pub fn from_str_as(text: &str, json: bool) -> Result<Self> {
        if json {
            Ok(serde_json::from_str(text)?)
        } else {
            Ok(toml::from_str(text)?)
        }
    }

    /// Reads a config file; relative corpus and embedding paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let json = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => true,
            Some("toml") => false,
            _ => bail!("config {} must end in .toml or .json", path.display()),
        };
        let mut cfg = Self::from_str_as(&text, json).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.corpus.path);
        if let Some(p) = cfg.expand.embedding_file.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.serve.static_dir.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(bind) = &o.bind {
            self.serve.bind = bind.clone();
        }
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn sha256(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
