//! The run configuration file: a global seed plus one section per subcommand.
//!
//! Relative paths are resolved against the directory of the configuration file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use funcssl::corpus::{FunctionalitySpec, Origin};
use funcssl::nlu::NluConfig;
use funcssl::paraphrase::{DetectorConfig, EmbeddingKind, MarginConfig, MiningConfig};
use funcssl::selection::{GreedyObjective, SubmodularConfig};
use funcssl::ssl::SslConfig;
use funcssl::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub gen: Option<GenSection>,
    pub train_nlu: Option<TrainNluSection>,
    pub ssl: Option<SslSection>,
    pub train_para: Option<TrainParaSection>,
    pub select: Option<SelectSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    pub grammar: PathBuf,
    pub count: usize,
    /// Nested annotation-increment fractions; empty for no split.
    #[serde(default)]
    pub increments: Vec<f64>,
    #[serde(default)]
    pub id_prefix: String,
    pub origin: Option<Origin>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainNluSection {
    pub data: Vec<PathBuf>,
    #[serde(default)]
    pub nlu: NluConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SslSection {
    pub annotated: Vec<PathBuf>,
    pub synthetic: Vec<PathBuf>,
    pub pool: PathBuf,
    pub functionality: FunctionalitySpec,
    #[serde(default)]
    pub settings: SslConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParaSection {
    pub data: Vec<PathBuf>,
    /// Grammars whose entity catalogs refill mined templates.
    pub grammars: Vec<PathBuf>,
    /// Datasets whose tokens join the embedding vocabulary.
    #[serde(default)]
    pub vocabulary: Vec<PathBuf>,
    #[serde(default)]
    pub mining: MiningConfig,
    #[serde(default)]
    pub margin: MarginConfig,
    #[serde(default = "default_kind")]
    pub embedding_kind: EmbeddingKind,
    #[serde(default)]
    pub detector: DetectorConfig,
}

fn default_kind() -> EmbeddingKind {
    EmbeddingKind::WordAvg
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectSection {
    pub pool: PathBuf,
    /// Annotated utterances the paraphrase method measures novelty against.
    pub anchors: Option<PathBuf>,
    /// Trained paraphrase detector, for the paraphrase method.
    pub model: Option<PathBuf>,
    #[serde(default = "default_batch_fraction")]
    pub batch_fraction: f64,
    #[serde(default)]
    pub objective: GreedyObjective,
    #[serde(default)]
    pub submodular: SubmodularConfig,
}

fn default_batch_fraction() -> f64 {
    0.05
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {}", path.display(), e)))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(s) = &mut cfg.gen {
            resolve(base, &mut s.grammar);
        }
        if let Some(s) = &mut cfg.train_nlu {
            s.data.iter_mut().for_each(|p| resolve(base, p));
        }
        if let Some(s) = &mut cfg.ssl {
            s.annotated.iter_mut().chain(&mut s.synthetic).for_each(|p| resolve(base, p));
            resolve(base, &mut s.pool);
        }
        if let Some(s) = &mut cfg.train_para {
            s.data
                .iter_mut()
                .chain(&mut s.grammars)
                .chain(&mut s.vocabulary)
                .for_each(|p| resolve(base, p));
        }
        if let Some(s) = &mut cfg.select {
            resolve(base, &mut s.pool);
            for p in s.anchors.iter_mut().chain(&mut s.model) {
                resolve(base, p);
            }
        }
        Ok(cfg)
    }
}

/// Fails with a configuration error naming the first missing input.
pub fn require_files<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::Config(format!("input file not found: {}", p.display())));
        }
    }
    Ok(())
}

pub fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| Error::Config(format!("config has no [{}] section", name)))
}
