//! Generation-augmented retrieval: generate query variants for each topic,
//! search every variant against the shot store, and fuse the channel lists
//! per topic into one run.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_index::EmbeddingStore;
use crate::fusion::{fuse, FusionSpec, Normalization, DEFAULT_CUTOFF};
use crate::generation::{
    generate_variants, Channel, ConceptBank, Embedder, GeneratedImage, GenerationError, GeneratorConfig, Generators,
    QueryVariantSet, Topic,
};
use crate::run::{validate_tag, Run, ScoredList};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("no topics given")]
    NoTopics,
    #[error("embedding store is not loaded")]
    StoreUnavailable,
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("{channel} search failed: {message}")]
    VariantSearchFailed { channel: Channel, message: String },
    #[error("no image produced a result list")]
    AllImagesFailed,
}

/// Shot stores searched by the pipeline. Generated images are searched in
/// `image` when present, which lets an image encoder have its own index.
#[derive(Debug, Clone, Default)]
pub struct StoreSet {
    pub text: Option<Arc<EmbeddingStore>>,
    pub image: Option<Arc<EmbeddingStore>>,
}

impl StoreSet {
    pub fn single(store: Arc<EmbeddingStore>) -> Self {
        Self {
            text: Some(store),
            image: None,
        }
    }

    pub fn with_image(mut self, store: Arc<EmbeddingStore>) -> Self {
        self.image = Some(store);
        self
    }

    fn text_store(&self) -> Result<&EmbeddingStore, PipelineError> {
        self.text.as_deref().ok_or(PipelineError::StoreUnavailable)
    }

    fn image_store(&self) -> Result<&EmbeddingStore, PipelineError> {
        self.image.as_deref().map_or_else(|| self.text_store(), Ok)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// The channel flags inside are overridden by `channels`.
    pub generator: GeneratorConfig,
    pub normalization: Normalization,
    /// Depth of the fused lists.
    pub cutoff: usize,
    /// Depth of every per-variant search.
    pub k: usize,
    pub channels: BTreeSet<Channel>,
    pub run_tag: String,
    pub stores: StoreSet,
}

impl PipelineConfig {
    pub fn new(run_tag: impl Into<String>, stores: StoreSet) -> Self {
        Self {
            generator: GeneratorConfig::default(),
            normalization: Normalization::MinMax,
            cutoff: DEFAULT_CUTOFF,
            k: DEFAULT_CUTOFF,
            channels: Channel::ALL.into_iter().collect(),
            run_tag: run_tag.into(),
            stores,
        }
    }

    pub fn with_channels(mut self, channels: impl IntoIterator<Item = Channel>) -> Self {
        self.channels = channels.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        validate_tag(&self.run_tag).map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        if self.channels.is_empty() {
            return Err(PipelineError::InvalidConfig("no channels enabled".into()));
        }
        self.effective_generator()
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }

    pub fn effective_generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            t2t: self.channels.contains(&Channel::T2t),
            t2i: self.channels.contains(&Channel::T2i),
            i2t: self.channels.contains(&Channel::I2t),
            ..self.generator.clone()
        }
    }

    /// Tag of the run holding a single channel's lists.
    pub fn channel_tag(&self, channel: Channel) -> String {
        format!("{}.{}", self.run_tag, channel)
    }
}

/// Everything the pipeline calls out to.
#[derive(Clone)]
pub struct PipelineClients {
    pub generators: Generators,
    pub embedder: Arc<dyn Embedder>,
    pub bank: Arc<ConceptBank>,
}

impl std::fmt::Debug for PipelineClients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PipelineClients")
            .field("bank", &self.bank.len())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicWarning {
    pub topic_id: u32,
    pub channel: Channel,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct GarOutput {
    pub fused: Run,
    /// One run per enabled channel; a topic whose channel failed is absent.
    pub channels: BTreeMap<Channel, Run>,
    pub variants: Vec<QueryVariantSet>,
    pub warnings: Vec<TopicWarning>,
}

fn search_failed(channel: Channel, e: impl ToString) -> PipelineError {
    PipelineError::VariantSearchFailed {
        channel,
        message: e.to_string(),
    }
}

fn knn_list(
    topic_id: u32,
    channel: Channel,
    query: &[f32],
    store: &EmbeddingStore,
    k: usize,
) -> Result<ScoredList, PipelineError> {
    let hits = store.knn_search(query, k).map_err(|e| search_failed(channel, e))?;
    Ok(ScoredList::from_hits(topic_id, hits, channel.as_str()))
}

/// Embeds `text` and returns its `k` nearest shots, tagged with the channel.
pub fn search_text_variant(
    topic_id: u32,
    channel: Channel,
    text: &str,
    store: &EmbeddingStore,
    k: usize,
    embedder: &dyn Embedder,
) -> Result<ScoredList, PipelineError> {
    if text.trim().is_empty() {
        return Err(search_failed(channel, "empty query text"));
    }
    if k == 0 {
        return Ok(ScoredList::empty(topic_id, channel.as_str()));
    }
    let vectors = embedder
        .embed_texts(&[text.to_string()])
        .map_err(|e| search_failed(channel, e))?;
    let query = vectors
        .into_iter()
        .next()
        .ok_or_else(|| search_failed(channel, "embedder returned no vector"))?;
    knn_list(topic_id, channel, &query, store, k)
}

/// Searches each image on its own and fuses the per-image lists with equal
/// weights. Images that fail to embed or search are skipped.
pub fn search_image_variant(
    topic_id: u32,
    images: &[GeneratedImage],
    store: &EmbeddingStore,
    k: usize,
    embedder: &dyn Embedder,
    normalization: Normalization,
) -> Result<ScoredList, PipelineError> {
    if k == 0 && !images.is_empty() {
        return Ok(ScoredList::empty(topic_id, Channel::T2i.as_str()));
    }
    let lists: Vec<ScoredList> = images
        .iter()
        .filter_map(|img| {
            let v = embedder
                .embed_images(std::slice::from_ref(img))
                .ok()?
                .into_iter()
                .next()?;
            knn_list(topic_id, Channel::T2i, &v, store, k).ok()
        })
        .collect();
    if lists.is_empty() {
        return Err(PipelineError::AllImagesFailed);
    }
    Ok(aggregate(lists, normalization, k).with_tag(Channel::T2i.as_str()))
}

/// Equal-weight fusion; a single list is returned as it is.
fn aggregate(mut lists: Vec<ScoredList>, normalization: Normalization, cutoff: usize) -> ScoredList {
    if lists.len() == 1 {
        let mut only = lists.pop().expect("one list");
        only.truncate(cutoff);
        return only;
    }
    let spec = FusionSpec::equal(lists.len())
        .with_normalization(normalization)
        .with_cutoff(cutoff);
    fuse(&lists, &spec).expect("lists share a topic and weights are equal")
}

/// Searches several texts of one channel and fuses them into one list.
fn search_texts(
    topic_id: u32,
    channel: Channel,
    texts: &[String],
    cfg: &PipelineConfig,
    embedder: &dyn Embedder,
) -> Result<ScoredList, PipelineError> {
    let store = cfg.stores.text_store()?;
    let mut lists = Vec::with_capacity(texts.len());
    let mut last_err = None;
    for text in texts {
        match search_text_variant(topic_id, channel, text, store, cfg.k, embedder) {
            Ok(list) => lists.push(list),
            Err(e) => last_err = Some(e),
        }
    }
    if lists.is_empty() {
        return Err(last_err.unwrap_or_else(|| search_failed(channel, "no variants generated")));
    }
    Ok(aggregate(lists, cfg.normalization, cfg.k).with_tag(channel.as_str()))
}

struct TopicResult {
    variants: QueryVariantSet,
    lists: BTreeMap<Channel, ScoredList>,
    fused: Option<ScoredList>,
    warnings: Vec<TopicWarning>,
}

/// Searches the variants of one topic channel by channel.
pub fn search_variant_set(
    variants: &QueryVariantSet,
    cfg: &PipelineConfig,
    embedder: &dyn Embedder,
) -> (BTreeMap<Channel, ScoredList>, Vec<TopicWarning>) {
    let topic_id = variants.topic.id;
    let mut lists = BTreeMap::new();
    let mut warnings = Vec::new();
    for &channel in &cfg.channels {
        let result = match channel {
            Channel::Original => search_texts(
                topic_id,
                channel,
                std::slice::from_ref(&variants.topic.text),
                cfg,
                embedder,
            ),
            Channel::T2t => search_texts(topic_id, channel, &variants.t2t_texts, cfg, embedder),
            Channel::I2t => search_texts(topic_id, channel, &variants.i2t_captions, cfg, embedder),
            Channel::T2i => cfg.stores.image_store().and_then(|store| {
                search_image_variant(
                    topic_id,
                    &variants.t2i_images,
                    store,
                    cfg.k,
                    embedder,
                    cfg.normalization,
                )
            }),
        };
        match result {
            Ok(list) => {
                lists.insert(channel, list);
            }
            Err(e) => warnings.push(TopicWarning {
                topic_id,
                channel,
                message: e.to_string(),
            }),
        }
    }
    (lists, warnings)
}

/// Equal-weight fusion of whichever channel lists exist for a topic.
pub fn fuse_channels(
    lists: &BTreeMap<Channel, ScoredList>,
    normalization: Normalization,
    cutoff: usize,
) -> Option<ScoredList> {
    if lists.is_empty() {
        return None;
    }
    Some(aggregate(lists.values().cloned().collect(), normalization, cutoff))
}

fn process_topic(topic: &Topic, cfg: &PipelineConfig, clients: &PipelineClients) -> TopicResult {
    let gen_cfg = cfg.effective_generator();
    let mut warnings = Vec::new();
    let variants = if gen_cfg.t2t || gen_cfg.t2i || gen_cfg.i2t {
        match generate_variants(topic, &clients.bank, &gen_cfg, &clients.generators) {
            Ok(v) => v,
            Err(GenerationError::AllChannelsFailed(ws)) => {
                let mut v = QueryVariantSet::empty(topic.clone());
                v.warnings = ws;
                v
            }
            Err(e) => {
                warnings.push(TopicWarning {
                    topic_id: topic.id,
                    channel: Channel::Original,
                    message: e.to_string(),
                });
                QueryVariantSet::empty(topic.clone())
            }
        }
    } else {
        QueryVariantSet::empty(topic.clone())
    };
    warnings.extend(variants.warnings.iter().map(|w| TopicWarning {
        topic_id: topic.id,
        channel: w.channel,
        message: w.message.clone(),
    }));
    let (lists, search_warnings) = search_variant_set(&variants, cfg, clients.embedder.as_ref());
    warnings.extend(search_warnings);
    let fused = fuse_channels(&lists, cfg.normalization, cfg.cutoff);
    TopicResult {
        variants,
        lists,
        fused,
        warnings,
    }
}

#[cfg(feature = "parallel")]
fn process_all(topics: &[Topic], cfg: &PipelineConfig, clients: &PipelineClients) -> Vec<TopicResult> {
    use rayon::prelude::*;
    topics.par_iter().map(|t| process_topic(t, cfg, clients)).collect()
}

#[cfg(not(feature = "parallel"))]
fn process_all(topics: &[Topic], cfg: &PipelineConfig, clients: &PipelineClients) -> Vec<TopicResult> {
    topics.iter().map(|t| process_topic(t, cfg, clients)).collect()
}

/// Runs the full pipeline over `topics`, returning the fused run together
/// with one run per enabled channel.
pub fn run_gar(topics: &[Topic], cfg: &PipelineConfig, clients: &PipelineClients) -> Result<GarOutput, PipelineError> {
    if topics.is_empty() {
        return Err(PipelineError::NoTopics);
    }
    cfg.validate()?;
    cfg.stores.text_store()?;
    let new_run = |tag: String| Run::new(tag).map_err(|e| PipelineError::InvalidConfig(e.to_string()));

    let mut fused = new_run(cfg.run_tag.clone())?;
    let mut channels = BTreeMap::new();
    for &c in &cfg.channels {
        channels.insert(c, new_run(cfg.channel_tag(c))?);
    }
    let mut variants = Vec::with_capacity(topics.len());
    let mut warnings = Vec::new();
    for result in process_all(topics, cfg, clients) {
        for (channel, list) in result.lists {
            let run = channels
                .get_mut(&channel)
                .expect("run exists for every enabled channel");
            let tag = run.tag().to_string();
            run.insert(list.with_tag(tag));
        }
        if let Some(list) = result.fused {
            fused.insert(list.with_tag(cfg.run_tag.clone()));
        }
        variants.push(result.variants);
        warnings.extend(result.warnings);
    }
    Ok(GarOutput {
        fused,
        channels,
        variants,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding_index::dot;
    use crate::generation::{
        token_hash_embed, ClientError, ImageGenerator, MockCaptioner, MockEmbedder, MockImageGenerator, MockRewriter,
    };

    const DIM: usize = 64;

    fn mock_store(texts: &[(&str, &str)]) -> EmbeddingStore {
        EmbeddingStore::build(
            texts
                .iter()
                .map(|(id, t)| (id.to_string(), token_hash_embed(t, DIM).unwrap().into_inner())),
            DIM,
        )
        .unwrap()
    }

    fn clients(rewriter: MockRewriter, bank: &[&str]) -> PipelineClients {
        PipelineClients {
            generators: Generators {
                rewriter: Arc::new(rewriter),
                images: Arc::new(MockImageGenerator),
                captioner: Arc::new(MockCaptioner::default()),
            },
            embedder: Arc::new(MockEmbedder::new(DIM)),
            bank: Arc::new(ConceptBank::from_terms(bank, "test").unwrap()),
        }
    }

    fn two_shot_store() -> EmbeddingStore {
        mock_store(&[("s_red", "red car"), ("s_blue", "blue sky")])
    }

    #[test]
    fn text_variant_finds_identical_text() {
        let store = two_shot_store();
        let e = MockEmbedder::new(DIM);
        let list = search_text_variant(1, Channel::Original, "red car", &store, 1, &e).unwrap();
        assert_eq!(list.doc_ids().collect::<Vec<_>>(), ["s_red"]);
        assert_eq!(list.source_tag, "original");
        // brute force
        let q = token_hash_embed("red car", DIM).unwrap();
        let best = store
            .iter()
            .max_by(|a, b| dot(q.as_slice(), a.1).total_cmp(&dot(q.as_slice(), b.1)))
            .unwrap();
        assert_eq!(best.0, "s_red");
    }

    #[test]
    fn text_variant_degenerate_inputs() {
        let store = two_shot_store();
        let e = MockEmbedder::new(DIM);
        assert!(matches!(
            search_text_variant(1, Channel::T2t, "  ", &store, 5, &e),
            Err(PipelineError::VariantSearchFailed {
                channel: Channel::T2t,
                ..
            })
        ));
        assert!(search_text_variant(1, Channel::T2t, "red car", &store, 0, &e)
            .unwrap()
            .is_empty());
        // embedder dimension disagrees with the store
        let wide = MockEmbedder::new(128);
        assert!(search_text_variant(1, Channel::Original, "red car", &store, 1, &wide).is_err());
    }

    #[test]
    fn image_variant_single_and_duplicate() {
        let store = two_shot_store();
        let e = MockEmbedder::new(DIM);
        let img = MockImageGenerator.generate("red car", 1, 0).unwrap();
        let one = search_image_variant(1, &img, &store, 10, &e, Normalization::MinMax).unwrap();
        let direct = knn_list(
            1,
            Channel::T2i,
            &token_hash_embed("red car", DIM).unwrap().into_inner(),
            &store,
            10,
        )
        .unwrap();
        assert_eq!(one, direct);
        let two = vec![img[0].clone(), img[0].clone()];
        let dup = search_image_variant(1, &two, &store, 10, &e, Normalization::MinMax).unwrap();
        assert_eq!(dup.doc_ids().collect::<Vec<_>>(), one.doc_ids().collect::<Vec<_>>());
    }

    #[test]
    fn image_variant_fuses_both_prompts() {
        let store = two_shot_store();
        let e = MockEmbedder::new(DIM);
        let mut imgs = MockImageGenerator.generate("red car", 1, 0).unwrap();
        imgs.extend(MockImageGenerator.generate("blue sky", 1, 0).unwrap());
        let fused = search_image_variant(1, &imgs, &store, 2, &e, Normalization::MinMax).unwrap();
        let ids: BTreeSet<&str> = fused.doc_ids().collect();
        assert_eq!(ids, BTreeSet::from(["s_red", "s_blue"]));
        // each per-image list has its own shot at 1 and the other at 0 after minmax
        assert!(fused.entries().iter().all(|d| (d.score - 0.5).abs() < 1e-12));
    }

    struct Broken;
    impl Embedder for Broken {
        fn embed_texts(&self, _: &[String]) -> Result<Vec<Vec<f32>>, ClientError> {
            Err(ClientError::Transport("down".into()))
        }
        fn embed_images(&self, _: &[GeneratedImage]) -> Result<Vec<Vec<f32>>, ClientError> {
            Err(ClientError::Transport("down".into()))
        }
    }

    #[test]
    fn image_variant_all_failed() {
        let store = two_shot_store();
        let imgs = MockImageGenerator.generate("red car", 2, 0).unwrap();
        assert_eq!(
            search_image_variant(1, &imgs, &store, 5, &Broken, Normalization::MinMax),
            Err(PipelineError::AllImagesFailed)
        );
        assert_eq!(
            search_image_variant(1, &[], &store, 5, &MockEmbedder::new(DIM), Normalization::MinMax),
            Err(PipelineError::AllImagesFailed)
        );
    }

    fn lineup_store() -> EmbeddingStore {
        mock_store(&[
            ("s1", "people lineup outdoors"),
            ("s2", "people standing outdoors"),
            ("s3", "dog park"),
            ("s4", "people in line"),
        ])
    }

    #[test]
    fn original_only_fused_equals_channel() {
        let c = clients(MockRewriter::default(), &["people"]);
        let cfg =
            PipelineConfig::new("r", StoreSet::single(Arc::new(lineup_store()))).with_channels([Channel::Original]);
        let topics = [Topic::new(1, "people standing in line outdoors").unwrap()];
        let out = run_gar(&topics, &cfg, &c).unwrap();
        let channel = &out.channels[&Channel::Original];
        assert_eq!(out.fused.get(1).unwrap().entries(), channel.get(1).unwrap().entries());
        // and equals plain search of the topic text
        let plain = search_text_variant(
            1,
            Channel::Original,
            &topics[0].text,
            &lineup_store(),
            1000,
            &MockEmbedder::new(DIM),
        )
        .unwrap();
        assert_eq!(channel.get(1).unwrap().entries(), plain.entries());
    }

    #[test]
    fn t2t_channel_lifts_bank_synonym() {
        let rewriter = MockRewriter::new([("standing in line", "lineup")]);
        let c = clients(rewriter, &["people", "outdoors", "lineup"]);
        let cfg = PipelineConfig::new("r", StoreSet::single(Arc::new(lineup_store())))
            .with_channels([Channel::Original, Channel::T2t]);
        let topics = [Topic::new(1, "Find shots of people standing in line outdoors").unwrap()];
        let out = run_gar(&topics, &cfg, &c).unwrap();
        let first = |ch| out.channels[&ch].get(1).unwrap().entries()[0].doc_id.clone();
        assert_eq!(first(Channel::T2t), "s1");
        assert_ne!(first(Channel::Original), "s1");
        let fused: BTreeSet<&str> = out.fused.get(1).unwrap().doc_ids().collect();
        let union: BTreeSet<&str> = out
            .channels
            .values()
            .flat_map(|r| r.get(1).unwrap().doc_ids())
            .collect();
        assert!(fused.is_subset(&union));
    }

    #[test]
    fn failed_channel_is_dropped_from_fusion() {
        let mut c = clients(MockRewriter::default(), &["people"]);
        c.embedder = Arc::new(Broken);
        let cfg = PipelineConfig::new("r", StoreSet::single(Arc::new(lineup_store())));
        let out = run_gar(&[Topic::new(3, "dog park").unwrap()], &cfg, &c).unwrap();
        assert!(out.fused.is_empty());
        assert_eq!(out.warnings.iter().filter(|w| w.topic_id == 3).count(), 4);
    }

    #[test]
    fn pipeline_errors() {
        let c = clients(MockRewriter::default(), &["people"]);
        let cfg = PipelineConfig::new("r", StoreSet::default());
        let topics = [Topic::new(1, "dog").unwrap()];
        assert_eq!(run_gar(&topics, &cfg, &c).unwrap_err(), PipelineError::StoreUnavailable);
        assert_eq!(run_gar(&[], &cfg, &c).unwrap_err(), PipelineError::NoTopics);
        let bad = PipelineConfig::new("bad tag", StoreSet::single(Arc::new(lineup_store())));
        assert!(matches!(
            run_gar(&topics, &bad, &c),
            Err(PipelineError::InvalidConfig(_))
        ));
    }

    #[test]
    fn channel_runs_are_tagged_and_cut() {
        let c = clients(MockRewriter::default(), &["people"]);
        let mut cfg = PipelineConfig::new("gar", StoreSet::single(Arc::new(lineup_store())));
        cfg.cutoff = 2;
        cfg.k = 3;
        let out = run_gar(&[Topic::new(7, "people outdoors").unwrap()], &cfg, &c).unwrap();
        assert_eq!(out.channels[&Channel::T2i].tag(), "gar.t2i");
        for run in out.channels.values() {
            assert!(run.lists().all(|l| l.len() <= 3 && l.is_canonical()));
        }
        assert!(out
            .fused
            .lists()
            .all(|l| l.len() <= 2 && l.is_canonical() && l.source_tag == "gar"));
    }
}
