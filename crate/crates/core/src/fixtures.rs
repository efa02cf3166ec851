//! Bundled data: the tv24 topics, the manually curated queries recorded for
//! them, a demo concept bank, and the mock backend stack wired to them.

use std::collections::HashMap;
use std::sync::Arc;

use crate::embedding_index::{EmbeddingStore, IndexError};
use crate::generation::{
    token_hash_embed, ConceptBank, Generators, MockCaptioner, MockEmbedder, MockImageGenerator, MockRewriter, Topic,
};
use crate::pipeline::PipelineClients;
use crate::trec_io::{parse_topics, TrecError};

pub const TV24_TOPICS_TSV: &str = include_str!("../data/tv24_topics.tsv");
pub const TV24_MANUAL_QUERIES_TSV: &str = include_str!("../data/tv24_manual_queries.tsv");
pub const DEMO_CONCEPT_BANK: &str = include_str!("../data/concept_bank.txt");
pub const DEMO_SUBSTITUTIONS_JSON: &str = include_str!("../data/substitutions.json");
pub const DEMO_SHOTS_TSV: &str = include_str!("../data/demo_shots.tsv");

/// Embedding width used by the mock stack unless told otherwise.
pub const MOCK_DIM: usize = 256;

pub fn tv24_topics() -> Vec<Topic> {
    parse_topics(TV24_TOPICS_TSV.as_bytes()).expect("bundled topics parse")
}

/// The queries a person settled on for one topic. Empty strings mean none
/// was recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManualQueries {
    pub topic_id: u32,
    pub manual: String,
    pub t2t: String,
    pub i2t: String,
}

pub fn parse_manual_queries(text: &str) -> Result<Vec<ManualQueries>, TrecError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, manual, t2t, i2t] = fields[..] else {
            return Err(TrecError::MalformedLine(i + 1));
        };
        let topic_id = id.trim().parse().map_err(|_| TrecError::MalformedLine(i + 1))?;
        out.push(ManualQueries {
            topic_id,
            manual: manual.trim().to_string(),
            t2t: t2t.trim().to_string(),
            i2t: i2t.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn tv24_manual_queries() -> Vec<ManualQueries> {
    parse_manual_queries(TV24_MANUAL_QUERIES_TSV).expect("bundled manual queries parse")
}

pub fn demo_bank() -> ConceptBank {
    ConceptBank::parse(DEMO_CONCEPT_BANK, "concept_bank.txt").expect("bundled bank is non-empty")
}

/// `shot_id<TAB>description` lines; `#` lines and blank lines are skipped.
pub fn parse_shot_texts(text: &str) -> Result<Vec<(String, String)>, TrecError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((id, desc)) = line.split_once('\t') else {
            return Err(TrecError::MalformedLine(i + 1));
        };
        if id.trim().is_empty() || desc.trim().is_empty() {
            return Err(TrecError::MalformedLine(i + 1));
        }
        out.push((id.trim().to_string(), desc.trim().to_string()));
    }
    Ok(out)
}

/// Embeds shot descriptions with the token-hash embedder.
pub fn mock_text_store(shots: &[(String, String)], dim: usize) -> Result<EmbeddingStore, IndexError> {
    let mut records = Vec::with_capacity(shots.len());
    for (id, text) in shots {
        let v = token_hash_embed(text, dim)
            .map_err(|_| IndexError::InvalidId(format!("{id}: description has no tokens")))?;
        records.push((id.clone(), v.into_inner()));
    }
    EmbeddingStore::build(records, dim)
}

pub fn demo_shots() -> Vec<(String, String)> {
    parse_shot_texts(DEMO_SHOTS_TSV).expect("bundled shots parse")
}

/// The bundled demo shots under the mock embedder.
pub fn demo_store(dim: usize) -> EmbeddingStore {
    mock_text_store(&demo_shots(), dim).expect("bundled shots embed")
}

/// Mock generators that answer the tv24 topics with the recorded rewrites
/// and captions, and fall back to phrase substitution and the default
/// caption for anything else.
pub fn tv24_mock_generators() -> Generators {
    let topics: HashMap<u32, String> = tv24_topics().into_iter().map(|t| (t.id, t.text)).collect();
    let mut rewrites = HashMap::new();
    let mut captions = HashMap::new();
    for q in tv24_manual_queries() {
        let Some(text) = topics.get(&q.topic_id) else { continue };
        if !q.t2t.is_empty() {
            rewrites.insert(text.clone(), vec![q.t2t.clone()]);
        }
        if !q.i2t.is_empty() {
            captions.insert(text.clone(), q.i2t.clone());
        }
    }
    let rewriter = MockRewriter::from_json(DEMO_SUBSTITUTIONS_JSON)
        .expect("bundled substitutions parse")
        .with_fixtures(rewrites);
    Generators {
        rewriter: Arc::new(rewriter),
        images: Arc::new(MockImageGenerator),
        captioner: Arc::new(MockCaptioner::with_fixtures(captions)),
    }
}

/// The full mock stack over the demo bank.
pub fn tv24_mock_clients(dim: usize) -> PipelineClients {
    PipelineClients {
        generators: tv24_mock_generators(),
        embedder: Arc::new(MockEmbedder::new(dim)),
        bank: Arc::new(demo_bank()),
    }
}
