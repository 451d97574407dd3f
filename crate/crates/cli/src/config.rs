//! Resolved run configuration: defaults, then a JSON file, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rarecast::data::SplitSpec;
use rarecast::pipeline::PipelineConfig;
use rarecast::synth::GeneratorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub pipeline: PipelineConfig,
    pub split: SplitSpec,
    pub enrichment_provider: String,
    pub output_dir: Option<PathBuf>,
    /// When set, overrides the generator, pipeline and split seeds.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            schema: None,
            generator: GeneratorConfig::default(),
            pipeline: PipelineConfig::default(),
            split: SplitSpec::default(),
            enrichment_provider: "mock".into(),
            output_dir: None,
            seed: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.generator.seed = seed;
            self.pipeline.seed = seed;
            self.split.seed = seed;
        }
    }

    /// Split for a dataset of `n` records: the configured one when sizes add
    /// up to `n`, otherwise the default proportions scaled to `n`.
    pub fn split_for(&self, n: usize) -> SplitSpec {
        if self.split.total() == n {
            self.split.clone()
        } else {
            log::info!("split sizes total {} but dataset has {n} records; scaling", self.split.total());
            SplitSpec {
                stratified: self.split.stratified,
                ..SplitSpec::scaled_to(n, self.split.seed)
            }
        }
    }
}

/// Record written next to a command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config: RunConfig,
    /// SHA-256 of each input file, by path as given.
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<String>,
}
