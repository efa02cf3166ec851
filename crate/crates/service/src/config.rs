//! TOML configuration shared by the service and the command line.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! index = "store.gar"            # shot embeddings (text store)
//! image_index = "images.gar"     # optional store for generated-image search
//! concepts = "bank.txt"          # defaults to the bundled demo bank
//! topics = "topics.tsv"          # defaults to the bundled tv24 topics
//! journal = "sessions.jsonl"     # optional session journal
//!
//! [generators]
//! mode = "mock"                  # or "remote"
//! mock_dim = 256
//! # remote mode:
//! # t2t = "http://host:9000"
//! # t2i = "http://host:9000"
//! # i2t = "http://host:9000"
//! # embed = "http://host:9000"
//!
//! [generation]                   # n_t2t, n_images, seed, t2t, t2i, i2t, max_in_flight
//! n_images = 4
//!
//! [search]
//! k = 1000
//! normalization = "minmax"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use gar_core::embedding_index::EmbeddingStore;
use gar_core::fixtures::{demo_bank, tv24_mock_clients, tv24_topics, MOCK_DIM};
use gar_core::fusion::{Normalization, DEFAULT_CUTOFF};
use gar_core::generation::{ConceptBank, GeneratorConfig, Generators, Topic};
use gar_core::pipeline::{PipelineClients, StoreSet};
use gar_core::trec_io::parse_topics;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::remote::{Endpoint, RemoteCaptioner, RemoteEmbedder, RemoteImageGenerator, RemoteRewriter};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorMode {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorsConfig {
    pub mode: GeneratorMode,
    pub mock_dim: usize,
    pub t2t: Option<String>,
    pub t2i: Option<String>,
    pub i2t: Option<String>,
    pub embed: Option<String>,
}

impl Default for GeneratorsConfig {
    fn default() -> Self {
        Self {
            mode: GeneratorMode::Mock,
            mock_dim: MOCK_DIM,
            t2t: None,
            t2i: None,
            i2t: None,
            embed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub k: usize,
    pub normalization: Normalization,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_CUTOFF,
            normalization: Normalization::MinMax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    pub index: Option<PathBuf>,
    pub image_index: Option<PathBuf>,
    pub concepts: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub journal: Option<PathBuf>,
    pub generators: GeneratorsConfig,
    pub generation: GeneratorConfig,
    pub search: SearchConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            index: None,
            image_index: None,
            concepts: None,
            topics: None,
            journal: None,
            generators: GeneratorsConfig::default(),
            generation: GeneratorConfig::default(),
            search: SearchConfig::default(),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, ConfigError> {
    std::fs::read(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn invalid(e: impl ToString) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore, ConfigError> {
    EmbeddingStore::from_bytes(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(invalid)?;
        cfg.generation.validate().map_err(invalid)?;
        Ok(cfg)
    }

    /// Reads the file; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = String::from_utf8(read(path)?).map_err(invalid)?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.index,
            &mut cfg.image_index,
            &mut cfg.concepts,
            &mut cfg.topics,
            &mut cfg.journal,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_bank(&self) -> Result<ConceptBank, ConfigError> {
        match &self.concepts {
            None => Ok(demo_bank()),
            Some(p) => {
                let text = String::from_utf8(read(p)?).map_err(invalid)?;
                ConceptBank::parse(&text, p.display().to_string()).map_err(invalid)
            }
        }
    }

    pub fn load_topics(&self) -> Result<Vec<Topic>, ConfigError> {
        match &self.topics {
            None => Ok(tv24_topics()),
            Some(p) => parse_topics(&read(p)?).map_err(invalid),
        }
    }

    pub fn load_stores(&self) -> Result<StoreSet, ConfigError> {
        let text = self.index.as_deref().map(load_store).transpose()?.map(Arc::new);
        let image = self.image_index.as_deref().map(load_store).transpose()?.map(Arc::new);
        Ok(StoreSet { text, image })
    }

    /// The generator and embedder stack named by `[generators]`.
    pub fn clients(&self, bank: ConceptBank) -> Result<PipelineClients, ConfigError> {
        let g = &self.generators;
        match g.mode {
            GeneratorMode::Mock => {
                let mut clients = tv24_mock_clients(g.mock_dim);
                clients.bank = Arc::new(bank);
                Ok(clients)
            }
            GeneratorMode::Remote => {
                let cap = self.generation.max_in_flight;
                let endpoint = |name: &str, url: &Option<String>| {
                    url.clone()
                        .map(|u| Endpoint::new(u, cap))
                        .ok_or_else(|| invalid(format!("remote mode needs generators.{name}")))
                };
                Ok(PipelineClients {
                    generators: Generators {
                        rewriter: Arc::new(RemoteRewriter(endpoint("t2t", &g.t2t)?)),
                        images: Arc::new(RemoteImageGenerator(endpoint("t2i", &g.t2i)?)),
                        captioner: Arc::new(RemoteCaptioner(endpoint("i2t", &g.i2t)?)),
                    },
                    embedder: Arc::new(RemoteEmbedder(endpoint("embed", &g.embed)?)),
                    bank: Arc::new(bank),
                })
            }
        }
    }
}
