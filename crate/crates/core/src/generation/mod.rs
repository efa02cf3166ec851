//! Query transformations: text rewriting constrained by the concept bank
//! (T2T), text-to-image generation (T2I) and captioning of the generated
//! images (I2T), behind client traits with deterministic mock backends.

mod mock;
mod prompt;
mod text;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{decode_png_prompt, mock_png, MockCaptioner, MockEmbedder, MockImageGenerator, MockRewriter};
pub use prompt::{build_t2t_prompt, CONCEPT_SECTION_HEADER, PROMPT_CONCEPT_CAP, PROMPT_TEMPLATE_VERSION};
pub use text::{detect_oov, is_stopword, stopwords, token_hash_embed, tokenize, ConceptBank, MIN_HASH_DIM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("concept bank is empty")]
    EmptyBank,
    #[error("invalid topic: {0}")]
    InvalidTopic(String),
    #[error("text has no tokens")]
    EmptyText,
    #[error("text {0:?} hashes to the zero vector")]
    DegenerateText(String),
    #[error("embedding dimension {0} is below the minimum of 8")]
    InvalidDim(usize),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("every enabled channel failed: {0:?}")]
    AllChannelsFailed(Vec<ChannelWarning>),
}

/// Failure reported by a generator or embedder backend.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend error: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Original,
    T2t,
    T2i,
    I2t,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Original, Channel::T2t, Channel::T2i, Channel::I2t];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Original => "original",
            Channel::T2t => "t2t",
            Channel::T2i => "t2i",
            Channel::I2t => "i2t",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown channel {s:?} (expected original, t2t, t2i or i2t)"))
    }
}

/// A search topic. The text must contain at least one non-stopword token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub id: u32,
    pub text: String,
}

impl Topic {
    pub fn new(id: u32, text: impl Into<String>) -> Result<Self, GenerationError> {
        let text = text.into();
        if id == 0 {
            return Err(GenerationError::InvalidTopic("topic id must be positive".into()));
        }
        if !tokenize(&text).iter().any(|t| !is_stopword(t)) {
            return Err(GenerationError::InvalidTopic(format!("{text:?} has no content words")));
        }
        Ok(Self { id, text })
    }
}

/// A generated image (PNG bytes) with the prompt that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedImage {
    #[serde(with = "base64_bytes")]
    pub png: Vec<u8>,
    pub provenance_prompt: String,
    pub seed: u64,
}

pub(crate) mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelWarning {
    pub channel: Channel,
    pub message: String,
}

/// A topic with its generated rephrasings, images and captions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryVariantSet {
    pub topic: Topic,
    pub t2t_texts: Vec<String>,
    pub t2i_images: Vec<GeneratedImage>,
    /// One caption per image when I2T ran.
    pub i2t_captions: Vec<String>,
    /// The rewrite prompt, when T2T ran.
    pub t2t_prompt: Option<String>,
    pub warnings: Vec<ChannelWarning>,
}

impl QueryVariantSet {
    pub fn empty(topic: Topic) -> Self {
        Self {
            topic,
            t2t_texts: Vec::new(),
            t2i_images: Vec::new(),
            i2t_captions: Vec::new(),
            t2t_prompt: None,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_t2t: usize,
    pub n_images: usize,
    pub seed: u64,
    pub t2t: bool,
    pub t2i: bool,
    pub i2t: bool,
    /// Concurrent requests allowed per remote endpoint.
    pub max_in_flight: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_t2t: 1,
            n_images: 4,
            seed: 0,
            t2t: true,
            t2i: true,
            i2t: true,
            max_in_flight: 4,
        }
    }
}

impl GeneratorConfig {
    pub fn disabled() -> Self {
        Self {
            t2t: false,
            t2i: false,
            i2t: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.t2t && self.n_t2t == 0 {
            return Err(GenerationError::InvalidConfig("n_t2t must be at least 1".into()));
        }
        if (self.t2i || self.i2t) && self.n_images == 0 {
            return Err(GenerationError::InvalidConfig("n_images must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(GenerationError::InvalidConfig(
                "max_in_flight must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Body of a rewrite request; mirrors `POST /t2t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRequest {
    pub query: String,
    pub concepts: Vec<String>,
    pub oov: Vec<String>,
    pub n: usize,
}

pub trait TextRewriter: Send + Sync {
    fn rewrite(&self, request: &RewriteRequest) -> Result<Vec<String>, ClientError>;
}

pub trait ImageGenerator: Send + Sync {
    fn generate(&self, prompt: &str, n: usize, seed: u64) -> Result<Vec<GeneratedImage>, ClientError>;
}

pub trait Captioner: Send + Sync {
    fn caption(&self, image: &GeneratedImage) -> Result<String, ClientError>;
}

/// Maps texts and images into the shot embedding space.
pub trait Embedder: Send + Sync {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError>;
    fn embed_images(&self, images: &[GeneratedImage]) -> Result<Vec<Vec<f32>>, ClientError>;
}

#[derive(Clone)]
pub struct Generators {
    pub rewriter: Arc<dyn TextRewriter>,
    pub images: Arc<dyn ImageGenerator>,
    pub captioner: Arc<dyn Captioner>,
}

impl fmt::Debug for Generators {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generators").finish_non_exhaustive()
    }
}

/// Runs the enabled transformations for one topic.
///
/// Images are produced whenever T2I or I2T is enabled, since captions are
/// made from them. A failing channel leaves its lists empty and records a
/// warning; only when every enabled channel fails is an error returned.
pub fn generate_variants(
    topic: &Topic,
    bank: &ConceptBank,
    cfg: &GeneratorConfig,
    generators: &Generators,
) -> Result<QueryVariantSet, GenerationError> {
    cfg.validate()?;
    let mut set = QueryVariantSet::empty(topic.clone());
    let mut enabled = 0;
    let mut failed = 0;

    if cfg.t2t {
        enabled += 1;
        let oov = bank.detect_oov(&topic.text);
        let prompt = build_t2t_prompt(topic, bank, &oov);
        let request = RewriteRequest {
            query: topic.text.clone(),
            concepts: bank
                .sample(PROMPT_CONCEPT_CAP)
                .into_iter()
                .map(str::to_string)
                .collect(),
            oov: oov.into_iter().collect(),
            n: cfg.n_t2t,
        };
        set.t2t_prompt = Some(prompt);
        match generators.rewriter.rewrite(&request) {
            Ok(texts) => {
                let texts: Vec<String> = texts
                    .into_iter()
                    .map(|t| t.trim().to_string())
                    .filter(|t| !t.is_empty())
                    .take(cfg.n_t2t)
                    .collect();
                if texts.is_empty() {
                    failed += 1;
                    set.warnings.push(warning(Channel::T2t, "rewriter returned no texts"));
                }
                set.t2t_texts = texts;
            }
            Err(e) => {
                failed += 1;
                set.warnings.push(warning(Channel::T2t, e));
            }
        }
    }

    if cfg.t2i || cfg.i2t {
        enabled += usize::from(cfg.t2i) + usize::from(cfg.i2t);
        match generators.images.generate(&topic.text, cfg.n_images, cfg.seed) {
            Ok(images) if !images.is_empty() => set.t2i_images = images,
            Ok(_) => {
                failed += usize::from(cfg.t2i) + usize::from(cfg.i2t);
                set.warnings
                    .push(warning(Channel::T2i, "image generator returned no images"));
            }
            Err(e) => {
                failed += usize::from(cfg.t2i) + usize::from(cfg.i2t);
                set.warnings.push(warning(Channel::T2i, e));
            }
        }
        if cfg.i2t && !set.t2i_images.is_empty() {
            match set
                .t2i_images
                .iter()
                .map(|img| generators.captioner.caption(img))
                .collect::<Result<Vec<_>, _>>()
            {
                Ok(captions) => set.i2t_captions = captions,
                Err(e) => {
                    failed += 1;
                    set.warnings.push(warning(Channel::I2t, e));
                }
            }
        }
    }

    if enabled > 0 && failed == enabled {
        return Err(GenerationError::AllChannelsFailed(set.warnings));
    }
    Ok(set)
}

fn warning(channel: Channel, message: impl ToString) -> ChannelWarning {
    ChannelWarning {
        channel,
        message: message.to_string(),
    }
}
