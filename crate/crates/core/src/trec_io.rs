//! Parsers and writers for the three interchange formats: topic TSV,
//! stratified qrels and TREC run files.
//!
//! Parsers accept LF or CRLF, skip blank lines, and stop at the first error
//! with its 1-based line number. Writers emit LF only.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::Topic;
use crate::run::{ListError, Run, ScoredList};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrecError {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("malformed line {0}")]
    MalformedLine(usize),
    #[error("duplicate topic {0}")]
    DuplicateTopic(u32),
    #[error("duplicate document {doc} for topic {topic}")]
    DuplicateDoc { topic: u32, doc: String },
    #[error("unknown judgment {value} on line {line}")]
    UnknownJudgment { line: usize, value: i32 },
    #[error("rank gap in topic {topic}: expected rank {expected}, got {got}")]
    RankGap { topic: u32, expected: usize, got: usize },
    #[error("mixed run tags: {expected} and {got}")]
    TagMismatch { expected: String, got: String },
    #[error("score increases at rank {rank} of topic {topic}")]
    ScoreOrder { topic: u32, rank: usize },
    #[error("run file has no lines")]
    EmptyRun,
}

fn lines(bytes: &[u8]) -> Result<impl Iterator<Item = (usize, &str)>, TrecError> {
    let text = std::str::from_utf8(bytes).map_err(|_| TrecError::InvalidUtf8)?;
    Ok(text
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l))))
}

/// `topic_id<TAB>query text` per line; `#` comments allowed.
pub fn parse_topics(bytes: &[u8]) -> Result<Vec<Topic>, TrecError> {
    let mut seen = HashSet::new();
    let mut topics = Vec::new();
    for (lineno, line) in lines(bytes)? {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (id, text) = line.split_once('\t').ok_or(TrecError::MalformedLine(lineno))?;
        let id: u32 = id
            .trim()
            .parse()
            .ok()
            .filter(|&id| id > 0)
            .ok_or(TrecError::MalformedLine(lineno))?;
        let topic = Topic::new(id, text.trim()).map_err(|_| TrecError::MalformedLine(lineno))?;
        if !seen.insert(id) {
            return Err(TrecError::DuplicateTopic(id));
        }
        topics.push(topic);
    }
    Ok(topics)
}

pub fn write_topics(topics: &[Topic]) -> Vec<u8> {
    let mut out = String::new();
    for t in topics {
        let _ = writeln!(out, "{}\t{}", t.id, t.text);
    }
    out.into_bytes()
}

/// Judgment sentinel for pooled documents that were not sampled.
pub const UNSAMPLED: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StratumCounts {
    /// Pool size `N_s`.
    pub pooled: usize,
    /// Sampled (judged) count `m_s`.
    pub sampled: usize,
    /// Sampled relevant count `r_s`.
    pub relevant: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopicQrels {
    strata: BTreeMap<u32, Vec<(String, i32)>>,
}

impl TopicQrels {
    pub fn strata(&self) -> &BTreeMap<u32, Vec<(String, i32)>> {
        &self.strata
    }

    pub fn counts(&self, stratum: u32) -> Option<StratumCounts> {
        self.strata.get(&stratum).map(|docs| StratumCounts {
            pooled: docs.len(),
            sampled: docs.iter().filter(|(_, j)| *j >= 0).count(),
            relevant: docs.iter().filter(|(_, j)| *j >= 1).count(),
        })
    }

    /// `(stratum, judgment)` for every pooled document.
    pub fn lookup(&self) -> HashMap<&str, (u32, i32)> {
        self.strata
            .iter()
            .flat_map(|(s, docs)| docs.iter().map(move |(d, j)| (d.as_str(), (*s, *j))))
            .collect()
    }
}

/// Per-topic pools split into strata with sampled judgments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StratifiedQrels {
    topics: BTreeMap<u32, TopicQrels>,
}

impl StratifiedQrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one pooled document; `judgment` is −1 (unsampled), 0 or ≥1.
    pub fn add(&mut self, topic: u32, stratum: u32, doc: impl Into<String>, judgment: i32) -> Result<(), TrecError> {
        let doc = doc.into();
        if judgment < UNSAMPLED {
            return Err(TrecError::UnknownJudgment {
                line: 0,
                value: judgment,
            });
        }
        let entry = self.topics.entry(topic).or_default();
        if entry.strata.values().flatten().any(|(d, _)| *d == doc) {
            return Err(TrecError::DuplicateDoc { topic, doc });
        }
        entry.strata.entry(stratum).or_default().push((doc, judgment));
        Ok(())
    }

    pub fn topic(&self, topic: u32) -> Option<&TopicQrels> {
        self.topics.get(&topic)
    }

    pub fn topic_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.topics.keys().copied()
    }

    pub fn topics(&self) -> impl Iterator<Item = (u32, &TopicQrels)> {
        self.topics.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }
}

/// Whitespace-separated `topic stratum doc judgment` lines.
pub fn parse_qrels(bytes: &[u8]) -> Result<StratifiedQrels, TrecError> {
    let mut qrels = StratifiedQrels::new();
    let mut seen: HashSet<(u32, String)> = HashSet::new();
    for (lineno, line) in lines(bytes)? {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(TrecError::MalformedLine(lineno));
        }
        let topic: u32 = f[0].parse().map_err(|_| TrecError::MalformedLine(lineno))?;
        let stratum: u32 = f[1].parse().map_err(|_| TrecError::MalformedLine(lineno))?;
        let judgment: i32 = f[3].parse().map_err(|_| TrecError::MalformedLine(lineno))?;
        if judgment < UNSAMPLED {
            return Err(TrecError::UnknownJudgment {
                line: lineno,
                value: judgment,
            });
        }
        if !seen.insert((topic, f[2].to_string())) {
            return Err(TrecError::DuplicateDoc {
                topic,
                doc: f[2].to_string(),
            });
        }
        qrels
            .topics
            .entry(topic)
            .or_default()
            .strata
            .entry(stratum)
            .or_default()
            .push((f[2].to_string(), judgment));
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &StratifiedQrels) -> Vec<u8> {
    let mut out = String::new();
    for (topic, tq) in &qrels.topics {
        for (stratum, docs) in &tq.strata {
            for (doc, j) in docs {
                let _ = writeln!(out, "{topic} {stratum} {doc} {j}");
            }
        }
    }
    out.into_bytes()
}

/// `topic Q0 doc rank score tag`, sorted by topic then rank, score with six
/// decimals.
pub fn write_run(run: &Run) -> Vec<u8> {
    let mut out = String::new();
    for list in run.lists() {
        for (i, d) in list.entries().iter().enumerate() {
            let _ = writeln!(
                out,
                "{} Q0 {} {} {:.6} {}",
                list.topic_id,
                d.doc_id,
                i + 1,
                d.score,
                run.tag()
            );
        }
    }
    out.into_bytes()
}

pub fn read_run(bytes: &[u8]) -> Result<Run, TrecError> {
    let mut tag: Option<String> = None;
    let mut per_topic: BTreeMap<u32, Vec<(usize, String, f64)>> = BTreeMap::new();
    for (lineno, line) in lines(bytes)? {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 || !(f[1] == "Q0" || f[1] == "0") {
            return Err(TrecError::MalformedLine(lineno));
        }
        let topic: u32 = f[0].parse().map_err(|_| TrecError::MalformedLine(lineno))?;
        let rank: usize = f[3]
            .parse()
            .ok()
            .filter(|&r| r > 0)
            .ok_or(TrecError::MalformedLine(lineno))?;
        let score: f64 = f[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or(TrecError::MalformedLine(lineno))?;
        match &tag {
            None => tag = Some(f[5].to_string()),
            Some(t) if t != f[5] => {
                return Err(TrecError::TagMismatch {
                    expected: t.clone(),
                    got: f[5].to_string(),
                })
            }
            Some(_) => {}
        }
        per_topic
            .entry(topic)
            .or_default()
            .push((rank, f[2].to_string(), score));
    }
    let tag = tag.ok_or(TrecError::EmptyRun)?;
    let mut run = Run::new(tag).map_err(|_| TrecError::MalformedLine(1))?;
    for (topic, mut rows) in per_topic {
        rows.sort_by_key(|r| r.0);
        for (i, (rank, _, _)) in rows.iter().enumerate() {
            if *rank != i + 1 {
                return Err(TrecError::RankGap {
                    topic,
                    expected: i + 1,
                    got: *rank,
                });
            }
        }
        let list = ScoredList::from_ranked(topic, rows.into_iter().map(|(_, d, s)| (d, s)), run.tag()).map_err(
            |e| match e {
                ListError::DuplicateDoc(doc) => TrecError::DuplicateDoc { topic, doc },
                ListError::OutOfOrder(rank) => TrecError::ScoreOrder { topic, rank },
                _ => TrecError::MalformedLine(0),
            },
        )?;
        run.insert(list);
    }
    Ok(run)
}
