//! Ranked result lists and runs.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_index::SearchHit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ListError {
    #[error("document {0} appears twice in one list")]
    DuplicateDoc(String),
    #[error("non-finite score for document {0}")]
    NonFiniteScore(String),
    #[error("score increases at rank {0}")]
    OutOfOrder(usize),
    #[error("invalid run tag {0:?}: must be non-empty without whitespace")]
    InvalidTag(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Per-topic ranked list: unique documents, scores non-increasing.
///
/// Lists built by this crate break score ties by ascending document id.
/// Lists read from external run files keep their file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredList {
    pub topic_id: u32,
    entries: Vec<RankedDoc>,
    pub source_tag: String,
}

pub(crate) fn doc_order(a: &RankedDoc, b: &RankedDoc) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| a.doc_id.as_bytes().cmp(b.doc_id.as_bytes()))
}

impl ScoredList {
    pub fn empty(topic_id: u32, source_tag: impl Into<String>) -> Self {
        Self {
            topic_id,
            entries: Vec::new(),
            source_tag: source_tag.into(),
        }
    }

    /// Sorts `entries` by score descending, id ascending.
    pub fn from_unsorted<I, S>(topic_id: u32, entries: I, source_tag: impl Into<String>) -> Result<Self, ListError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut docs = collect_checked(entries)?;
        docs.sort_by(doc_order);
        Ok(Self {
            topic_id,
            entries: docs,
            source_tag: source_tag.into(),
        })
    }

    /// Keeps the given order; it must already be non-increasing in score.
    pub fn from_ranked<I, S>(topic_id: u32, entries: I, source_tag: impl Into<String>) -> Result<Self, ListError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let docs = collect_checked(entries)?;
        if let Some(i) = docs.windows(2).position(|w| w[1].score > w[0].score) {
            return Err(ListError::OutOfOrder(i + 2));
        }
        Ok(Self {
            topic_id,
            entries: docs,
            source_tag: source_tag.into(),
        })
    }

    pub fn from_hits(topic_id: u32, hits: Vec<SearchHit>, source_tag: impl Into<String>) -> Self {
        Self {
            topic_id,
            entries: hits
                .into_iter()
                .map(|h| RankedDoc {
                    doc_id: h.shot_id,
                    score: f64::from(h.score),
                })
                .collect(),
            source_tag: source_tag.into(),
        }
    }

    pub fn entries(&self) -> &[RankedDoc] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|d| d.doc_id.as_str())
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    /// Replaces scores position by position, keeping document order.
    pub(crate) fn map_scores(&self, scores: impl IntoIterator<Item = f64>) -> Self {
        Self {
            topic_id: self.topic_id,
            entries: self
                .entries
                .iter()
                .zip(scores)
                .map(|(d, score)| RankedDoc {
                    doc_id: d.doc_id.clone(),
                    score,
                })
                .collect(),
            source_tag: self.source_tag.clone(),
        }
    }

    /// True when the list is sorted by score descending with id tie-break.
    pub fn is_canonical(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| doc_order(&w[0], &w[1]) == std::cmp::Ordering::Less)
    }
}

fn collect_checked<I, S>(entries: I) -> Result<Vec<RankedDoc>, ListError>
where
    I: IntoIterator<Item = (S, f64)>,
    S: Into<String>,
{
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (id, score) in entries {
        let doc_id = id.into();
        if !score.is_finite() {
            return Err(ListError::NonFiniteScore(doc_id));
        }
        if !seen.insert(doc_id.clone()) {
            return Err(ListError::DuplicateDoc(doc_id));
        }
        docs.push(RankedDoc { doc_id, score });
    }
    Ok(docs)
}

pub fn validate_tag(tag: &str) -> Result<(), ListError> {
    if tag.is_empty() || tag.chars().any(char::is_whitespace) {
        return Err(ListError::InvalidTag(tag.to_string()));
    }
    Ok(())
}

/// A tagged set of per-topic lists, ordered by topic id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    tag: String,
    lists: BTreeMap<u32, ScoredList>,
}

impl Run {
    pub fn new(tag: impl Into<String>) -> Result<Self, ListError> {
        let tag = tag.into();
        validate_tag(&tag)?;
        Ok(Self {
            tag,
            lists: BTreeMap::new(),
        })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Inserts (or replaces) the list for its topic.
    pub fn insert(&mut self, list: ScoredList) {
        self.lists.insert(list.topic_id, list);
    }

    pub fn get(&self, topic_id: u32) -> Option<&ScoredList> {
        self.lists.get(&topic_id)
    }

    pub fn topics(&self) -> impl Iterator<Item = u32> + '_ {
        self.lists.keys().copied()
    }

    pub fn lists(&self) -> impl Iterator<Item = &ScoredList> {
        self.lists.values()
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}
