use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use glyphsim::dataset::synth::SynthConfig;
use glyphsim::encoder::EncoderConfig;
use glyphsim::evaluation::EvalConfig;
use glyphsim::similarity::Granularity;
use glyphsim::training::{Stage1Config, Stage2Config};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Omniglot-style root: `<script>/<character>/<NN>.png`.
    pub data_root: Option<PathBuf>,
    /// `script<TAB>split` lines; defaults to `<data_root>/manifest.tsv`.
    pub manifest: Option<PathBuf>,
    pub fonts: Option<PathBuf>,
    pub ranges: Option<PathBuf>,
    /// `a<TAB>b<TAB>level` table for script ranking.
    pub levels: Option<PathBuf>,
    /// Dataset holding the separability triples' scripts.
    pub probe_root: Option<PathBuf>,
}

/// Everything a run needs, loadable from one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub eval: EvalConfig,
    pub granularity: Granularity,
    /// `(related_a, related_b, unrelated)` script ids.
    pub triples: Vec<(String, String, String)>,
    pub paths: Paths,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            encoder: EncoderConfig::default(),
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            eval: EvalConfig::default(),
            granularity: Granularity::Instances,
            triples: Vec::new(),
            paths: Paths::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Propagates the run seed into every component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.encoder.seed = seed;
        self.stage1.seed = seed;
        self.stage2.seed = seed;
        self.eval.seed = seed;
        self.synth.seed = seed;
        self
    }

    pub fn hash(&self) -> String {
        glyphsim::config_hash(self)
    }
}

/// Fails early on a path that should exist but does not.
pub fn existing(path: &Path, what: &str) -> Result<PathBuf> {
    if !path.exists() {
        anyhow::bail!("{what} {} does not exist", path.display());
    }
    Ok(path.to_path_buf())
}
