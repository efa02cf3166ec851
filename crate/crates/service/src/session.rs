//! Manual-query sessions: the generated candidates for one topic and the
//! choices a person made among them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use gar_core::generation::{Channel, ConceptBank, QueryVariantSet, Topic};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OovReport {
    pub original: Vec<String>,
    pub t2t: Vec<Vec<String>>,
    pub i2t: Vec<Vec<String>>,
}

impl OovReport {
    pub fn new(variants: &QueryVariantSet, bank: &ConceptBank) -> Self {
        let oov = |t: &str| bank.detect_oov(t).into_iter().collect::<Vec<_>>();
        Self {
            original: oov(&variants.topic.text),
            t2t: variants.t2t_texts.iter().map(|t| oov(t)).collect(),
            i2t: variants.i2t_captions.iter().map(|t| oov(t)).collect(),
        }
    }
}

/// A chosen candidate, or a text typed by the reviewer (`edited`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub channel: Channel,
    pub candidate_index: Option<usize>,
    /// The query text; absent for an image selection.
    pub text: Option<String>,
    pub edited: bool,
    pub oov: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub topic: Topic,
    pub variants: QueryVariantSet,
    pub oov_report: OovReport,
    pub selections: BTreeMap<Channel, Selection>,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectError {
    BadIndex {
        channel: Channel,
        index: usize,
        available: usize,
    },
    BadRequest(String),
}

impl std::fmt::Display for SelectError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::BadIndex {
                channel,
                index,
                available,
            } => write!(f, "{channel} has {available} candidates, index {index} is out of range"),
            Self::BadRequest(msg) => f.write_str(msg),
        }
    }
}

/// Body of `POST /sessions/{id}/select`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectRequest {
    pub channel: Channel,
    #[serde(default)]
    pub candidate_index: Option<usize>,
    #[serde(default)]
    pub edited_text: Option<String>,
}

impl Session {
    fn candidate_count(&self, channel: Channel) -> usize {
        match channel {
            Channel::Original => 1,
            Channel::T2t => self.variants.t2t_texts.len(),
            Channel::T2i => self.variants.t2i_images.len(),
            Channel::I2t => self.variants.i2t_captions.len(),
        }
    }

    pub fn select(&mut self, req: &SelectRequest, bank: &ConceptBank) -> Result<&Selection, SelectError> {
        let channel = req.channel;
        let selection = match (req.candidate_index, &req.edited_text) {
            (Some(index), None) => {
                let available = self.candidate_count(channel);
                if index >= available {
                    return Err(SelectError::BadIndex {
                        channel,
                        index,
                        available,
                    });
                }
                let text = match channel {
                    Channel::Original => Some(self.topic.text.clone()),
                    Channel::T2t => Some(self.variants.t2t_texts[index].clone()),
                    Channel::I2t => Some(self.variants.i2t_captions[index].clone()),
                    Channel::T2i => None,
                };
                Selection {
                    channel,
                    candidate_index: Some(index),
                    oov: text
                        .as_deref()
                        .map(|t| bank.detect_oov(t).into_iter().collect())
                        .unwrap_or_default(),
                    text,
                    edited: false,
                }
            }
            (None, Some(text)) => {
                if channel == Channel::T2i {
                    return Err(SelectError::BadRequest("image selections cannot be edited".into()));
                }
                Topic::new(self.topic.id, text.clone()).map_err(|e| SelectError::BadRequest(e.to_string()))?;
                Selection {
                    channel,
                    candidate_index: None,
                    oov: bank.detect_oov(text).into_iter().collect(),
                    text: Some(text.clone()),
                    edited: true,
                }
            }
            _ => {
                return Err(SelectError::BadRequest(
                    "give exactly one of candidate_index and edited_text".into(),
                ))
            }
        };
        self.selections.insert(channel, selection);
        Ok(&self.selections[&channel])
    }

    /// The selected queries as a variant set, with the channels to search.
    pub fn selected_variants(&self) -> (QueryVariantSet, BTreeSet<Channel>) {
        let mut set = QueryVariantSet::empty(self.topic.clone());
        for (channel, sel) in &self.selections {
            match channel {
                Channel::Original => {
                    if let Some(text) = &sel.text {
                        set.topic.text = text.clone();
                    }
                }
                Channel::T2t => set.t2t_texts.extend(sel.text.clone()),
                Channel::I2t => set.i2t_captions.extend(sel.text.clone()),
                Channel::T2i => {
                    if let Some(img) = sel.candidate_index.and_then(|i| self.variants.t2i_images.get(i)) {
                        set.t2i_images.push(img.clone());
                    }
                }
            }
        }
        (set, self.selections.keys().copied().collect())
    }

    /// Selected texts that use words outside `bank`, by channel.
    pub fn oov_violations(&self, bank: &ConceptBank) -> BTreeMap<Channel, Vec<String>> {
        self.selections
            .iter()
            .filter_map(|(c, sel)| {
                let oov: Vec<String> = bank.detect_oov(sel.text.as_deref()?).into_iter().collect();
                (!oov.is_empty()).then_some((*c, oov))
            })
            .collect()
    }
}

/// In-memory sessions, each behind its own lock, optionally mirrored to an
/// append-only journal of JSON snapshots.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next: AtomicU64,
    journal: Option<Mutex<File>>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Replays `path` (last snapshot per session wins) and appends to it from then on.
    pub fn with_journal(path: &Path) -> std::io::Result<Self> {
        let mut sessions = HashMap::new();
        let mut max_seq = 0;
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let Ok(s) = serde_json::from_str::<Session>(&line) else {
                    continue;
                };
                if let Some(seq) = s.session_id.strip_prefix("sess-").and_then(|n| n.parse::<u64>().ok()) {
                    max_seq = max_seq.max(seq);
                }
                sessions.insert(s.session_id.clone(), Arc::new(Mutex::new(s)));
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            sessions: Mutex::new(sessions),
            next: AtomicU64::new(max_seq),
            journal: Some(Mutex::new(file)),
        })
    }

    fn record(&self, session: &Session) {
        if let Some(journal) = &self.journal {
            let mut f = journal.lock().unwrap_or_else(|e| e.into_inner());
            let line = serde_json::to_string(session).expect("session serializes");
            // durability is best effort; the in-memory state stays authoritative
            let _ = writeln!(f, "{line}").and_then(|_| f.flush());
        }
    }

    pub fn create(&self, variants: QueryVariantSet, bank: &ConceptBank) -> Session {
        let seq = self.next.fetch_add(1, Ordering::SeqCst) + 1;
        let session = Session {
            session_id: format!("sess-{seq:06}"),
            topic: variants.topic.clone(),
            oov_report: OovReport::new(&variants, bank),
            variants,
            selections: BTreeMap::new(),
            created_at: unix_now(),
        };
        self.record(&session);
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(session.session_id.clone(), Arc::new(Mutex::new(session.clone())));
        session
    }

    pub fn get(&self, id: &str) -> Option<Session> {
        let handle = self.handle(id)?;
        let s = handle.lock().unwrap_or_else(|e| e.into_inner());
        Some(s.clone())
    }

    fn handle(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    /// Runs `f` under the session's lock and journals the result.
    pub fn update<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> T) -> Option<T> {
        let handle = self.handle(id)?;
        let mut s = handle.lock().unwrap_or_else(|e| e.into_inner());
        let out = f(&mut s);
        self.record(&s);
        Some(out)
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gar_core::fixtures::{demo_bank, tv24_mock_generators, tv24_topics};
    use gar_core::generation::{generate_variants, GeneratorConfig};

    fn session_for(store: &SessionStore, topic_id: u32) -> Session {
        let topic = tv24_topics().into_iter().find(|t| t.id == topic_id).unwrap();
        let v = generate_variants(
            &topic,
            &demo_bank(),
            &GeneratorConfig::default(),
            &tv24_mock_generators(),
        )
        .unwrap();
        store.create(v, &demo_bank())
    }

    #[test]
    fn selections_and_edits() {
        let store = SessionStore::in_memory();
        let s = session_for(&store, 770);
        let bank = demo_bank();
        let sel = store
            .update(&s.session_id, |s| {
                s.select(
                    &SelectRequest {
                        channel: Channel::T2t,
                        candidate_index: Some(0),
                        edited_text: None,
                    },
                    &bank,
                )
                .cloned()
            })
            .unwrap()
            .unwrap();
        assert_eq!(sel.text.as_deref(), Some("Two women wearing stylish hats outside"));
        assert!(!sel.edited);
        let bad = store.update(&s.session_id, |s| {
            s.select(
                &SelectRequest {
                    channel: Channel::T2t,
                    candidate_index: Some(99),
                    edited_text: None,
                },
                &bank,
            )
            .cloned()
        });
        assert!(matches!(bad, Some(Err(SelectError::BadIndex { index: 99, .. }))));
    }

    #[test]
    fn sessions_are_isolated() {
        let store = SessionStore::in_memory();
        let a = session_for(&store, 751);
        let b = session_for(&store, 752);
        assert_ne!(a.session_id, b.session_id);
        store.update(&a.session_id, |s| {
            s.select(
                &SelectRequest {
                    channel: Channel::Original,
                    candidate_index: None,
                    edited_text: Some("A bald man wearing glasses".into()),
                },
                &demo_bank(),
            )
            .map(|_| ())
        });
        assert!(store.get(&b.session_id).unwrap().selections.is_empty());
        assert_eq!(store.get(&a.session_id).unwrap().selections.len(), 1);
    }

    #[test]
    fn journal_replays_latest_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let id = {
            let store = SessionStore::with_journal(&path).unwrap();
            let s = session_for(&store, 753);
            store.update(&s.session_id, |s| {
                s.select(
                    &SelectRequest {
                        channel: Channel::I2t,
                        candidate_index: Some(1),
                        edited_text: None,
                    },
                    &demo_bank(),
                )
                .map(|_| ())
            });
            s.session_id
        };
        let store = SessionStore::with_journal(&path).unwrap();
        let s = store.get(&id).unwrap();
        assert_eq!(s.selections[&Channel::I2t].candidate_index, Some(1));
        // new ids continue after the replayed ones
        let next = session_for(&store, 754);
        assert_ne!(next.session_id, id);
    }
}
