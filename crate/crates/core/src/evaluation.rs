//! Average precision, extended inferred AP over stratified sampled
//! judgments, per-run reports and run comparisons.
//!
//! For a topic with strata `s` holding `N_s` pooled documents of which `m_s`
//! were sampled and `r_s` judged relevant:
//!
//! ```text
//! R̂      = Σ_s r_s · N_s / m_s
//! E[P@1] = 1
//! E[P@k] = 1/k + ((k−1)/k) · Σ_s (c_s/(k−1)) · (r'_s + ε) / (m'_s + 2ε)
//! xinfAP = (1/R̂) · Σ_{k: d_k sampled relevant in s*} (N_s*/m_s*) · E[P@k]
//! ```
//!
//! where `c_s`, `m'_s` and `r'_s` count, over ranks `1..k−1`, the documents
//! of stratum `s`'s pool, those sampled, and those sampled relevant.
//! Documents outside every pool advance `k` but join no stratum.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::rank_overlap;
use crate::run::{Run, ScoredList};
use crate::trec_io::{StratifiedQrels, StratumCounts, TopicQrels, UNSAMPLED};

pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("reports were computed over different qrels topics")]
    QrelsMismatch,
    #[error("at least two reports are needed, got {0}")]
    TooFewReports(usize),
    #[error("epsilon must be positive")]
    InvalidEpsilon,
    #[error("sampling rate {0} is outside [0, 1]")]
    InvalidRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub epsilon: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.epsilon > 0.0 && self.epsilon.is_finite() {
            Ok(())
        } else {
            Err(EvalError::InvalidEpsilon)
        }
    }
}

/// Stratum counts plus a per-document lookup for one topic.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicJudgmentView {
    strata: BTreeMap<u32, StratumCounts>,
    docs: HashMap<String, (u32, i32)>,
}

impl TopicJudgmentView {
    pub fn new(qrels: &TopicQrels) -> Self {
        let strata = qrels
            .strata()
            .keys()
            .map(|&s| (s, qrels.counts(s).unwrap_or_default()))
            .collect();
        let docs = qrels.lookup().into_iter().map(|(d, v)| (d.to_string(), v)).collect();
        Self { strata, docs }
    }

    pub fn counts(&self, stratum: u32) -> Option<StratumCounts> {
        self.strata.get(&stratum).copied()
    }

    pub fn judgment(&self, doc: &str) -> Option<(u32, i32)> {
        self.docs.get(doc).copied()
    }

    /// Largest `N_s / m_s` over strata with samples: an upper bound on xinfAP.
    pub fn max_inclusion_weight(&self) -> f64 {
        self.strata
            .values()
            .filter(|c| c.sampled > 0)
            .map(|c| c.pooled as f64 / c.sampled as f64)
            .fold(1.0, f64::max)
    }

    /// Estimated number of relevant documents, `Σ r_s·N_s/m_s`.
    pub fn estimated_relevant(&self) -> f64 {
        self.strata
            .values()
            .filter(|c| c.sampled > 0)
            .map(|c| c.relevant as f64 * c.pooled as f64 / c.sampled as f64)
            .sum()
    }

    /// Strata whose pool has documents but none sampled.
    pub fn unsampled_strata(&self) -> Vec<u32> {
        self.strata
            .iter()
            .filter(|(_, c)| c.sampled == 0 && c.pooled > 0)
            .map(|(s, _)| *s)
            .collect()
    }
}

/// Classic AP treating judgment ≥ 1 as relevant and everything else as not;
/// `R` counts every relevant pooled document.
pub fn average_precision(list: &ScoredList, view: &TopicJudgmentView) -> f64 {
    let total_relevant: usize = view.strata.values().map(|c| c.relevant).sum();
    if total_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, doc) in list.doc_ids().enumerate() {
        if matches!(view.judgment(doc), Some((_, j)) if j >= 1) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / total_relevant as f64
}

#[derive(Debug, Clone, Copy, Default)]
struct Above {
    pooled: usize,
    sampled: usize,
    relevant: usize,
}

/// Extended inferred AP of one ranked list.
pub fn xinf_ap(list: &ScoredList, view: &TopicJudgmentView, cfg: &EvalConfig) -> f64 {
    let r_hat = view.estimated_relevant();
    if r_hat <= 0.0 {
        return 0.0;
    }
    let eps = cfg.epsilon;
    let mut above: BTreeMap<u32, Above> = view.strata.keys().map(|&s| (s, Above::default())).collect();
    let mut sum = 0.0;
    for (i, doc) in list.doc_ids().enumerate() {
        let k = (i + 1) as f64;
        let Some((stratum, judgment)) = view.judgment(doc) else {
            continue;
        };
        if judgment >= 1 {
            let expected_precision = if i == 0 {
                1.0
            } else {
                let inner: f64 = above
                    .values()
                    .filter(|a| a.pooled > 0)
                    .map(|a| {
                        (a.pooled as f64 / (k - 1.0)) * ((a.relevant as f64 + eps) / (a.sampled as f64 + 2.0 * eps))
                    })
                    .sum();
                1.0 / k + ((k - 1.0) / k) * inner
            };
            let counts = view.strata[&stratum];
            sum += (counts.pooled as f64 / counts.sampled as f64) * expected_precision;
        }
        let a = above.get_mut(&stratum).expect("stratum from the same view");
        a.pooled += 1;
        if judgment > UNSAMPLED {
            a.sampled += 1;
        }
        if judgment >= 1 {
            a.relevant += 1;
        }
    }
    sum / r_hat
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Metric {
    #[default]
    #[serde(rename = "xinfAP")]
    XinfAp,
    #[serde(rename = "AP")]
    Ap,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::XinfAp => "xinfAP",
            Metric::Ap => "AP",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "xinfap" => Ok(Metric::XinfAp),
            "ap" => Ok(Metric::Ap),
            _ => Err(format!("unknown metric {s:?} (expected xinfap or ap)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_tag: String,
    pub metric: Metric,
    /// One value per qrels topic; topics missing from the run score 0.
    pub per_topic: BTreeMap<u32, f64>,
    pub mean: f64,
    pub missing_topics: Vec<u32>,
    /// Topics with a pooled stratum that had no samples.
    pub unsampled_strata: BTreeMap<u32, Vec<u32>>,
}

impl EvalReport {
    /// `topic<TAB>metric<TAB>value` rows preceded by a `runid` row and
    /// followed by the `mean` summary.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let m = self.metric.name();
        let _ = writeln!(out, "runid\t{m}\t{}", self.run_tag);
        for (topic, v) in &self.per_topic {
            let _ = writeln!(out, "{topic}\t{m}\t{v:.6}");
        }
        let _ = writeln!(out, "mean\t{m}\t{:.6}", self.mean);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn evaluate_run(run: &Run, qrels: &StratifiedQrels, cfg: &EvalConfig) -> EvalReport {
    evaluate_run_with(run, qrels, Metric::XinfAp, cfg)
}

pub fn evaluate_run_with(run: &Run, qrels: &StratifiedQrels, metric: Metric, cfg: &EvalConfig) -> EvalReport {
    let mut per_topic = BTreeMap::new();
    let mut missing_topics = Vec::new();
    let mut unsampled_strata = BTreeMap::new();
    for (topic, tq) in qrels.topics() {
        let view = TopicJudgmentView::new(tq);
        let unsampled = view.unsampled_strata();
        if !unsampled.is_empty() {
            unsampled_strata.insert(topic, unsampled);
        }
        let value = match run.get(topic) {
            Some(list) => match metric {
                Metric::XinfAp => xinf_ap(list, &view, cfg),
                Metric::Ap => average_precision(list, &view),
            },
            None => {
                missing_topics.push(topic);
                0.0
            }
        };
        per_topic.insert(topic, value);
    }
    let mean = if per_topic.is_empty() {
        0.0
    } else {
        per_topic.values().sum::<f64>() / per_topic.len() as f64
    };
    EvalReport {
        run_tag: run.tag().to_string(),
        metric,
        per_topic,
        mean,
        missing_topics,
        unsampled_strata,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run_tag: String,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: Metric,
    /// Sorted by mean descending, ties by run tag.
    pub rows: Vec<ComparisonRow>,
    /// Per run (in `rows` order): topic → value minus the best run's value.
    pub deltas: Vec<BTreeMap<u32, f64>>,
    /// Mean rank overlap over the qrels topics, `rows` order on both axes.
    pub overlap: Vec<Vec<f64>>,
    pub depth: usize,
}

/// Ranks evaluated runs and measures how different their rank lists are.
pub fn compare_runs(entries: &[(&EvalReport, &Run)], depth: usize) -> Result<Comparison, EvalError> {
    if entries.len() < 2 {
        return Err(EvalError::TooFewReports(entries.len()));
    }
    let topics: BTreeSet<u32> = entries[0].0.per_topic.keys().copied().collect();
    let metric = entries[0].0.metric;
    if entries
        .iter()
        .any(|(r, _)| r.metric != metric || !r.per_topic.keys().copied().eq(topics.iter().copied()))
    {
        return Err(EvalError::QrelsMismatch);
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (entries[a].0, entries[b].0);
        rb.mean
            .partial_cmp(&ra.mean)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| ra.run_tag.cmp(&rb.run_tag))
    });
    let best = entries[order[0]].0;
    let rows = order
        .iter()
        .map(|&i| ComparisonRow {
            run_tag: entries[i].0.run_tag.clone(),
            mean: entries[i].0.mean,
        })
        .collect();
    let deltas = order
        .iter()
        .map(|&i| {
            entries[i]
                .0
                .per_topic
                .iter()
                .map(|(t, v)| (*t, v - best.per_topic[t]))
                .collect()
        })
        .collect();
    let overlap = order
        .iter()
        .map(|&i| {
            order
                .iter()
                .map(|&j| mean_overlap(entries[i].1, entries[j].1, &topics, depth))
                .collect()
        })
        .collect();
    Ok(Comparison {
        metric,
        rows,
        deltas,
        overlap,
        depth,
    })
}

fn mean_overlap(a: &Run, b: &Run, topics: &BTreeSet<u32>, depth: usize) -> f64 {
    if topics.is_empty() {
        return 1.0;
    }
    let total: f64 = topics
        .iter()
        .map(|&t| {
            let empty = ScoredList::empty(t, "");
            rank_overlap(a.get(t).unwrap_or(&empty), b.get(t).unwrap_or(&empty), depth).value
        })
        .sum();
    total / topics.len() as f64
}

impl Comparison {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Run ID\t{}", self.metric);
        for row in &self.rows {
            let _ = writeln!(out, "{}\t{:.6}", row.run_tag, row.mean);
        }
        out.push('\n');
        let tags: Vec<&str> = self.rows.iter().map(|r| r.run_tag.as_str()).collect();
        let _ = writeln!(out, "delta vs {}\ttopic\tdelta", tags[0]);
        for (tag, deltas) in tags.iter().zip(&self.deltas) {
            for (topic, d) in deltas {
                let _ = writeln!(out, "{tag}\t{topic}\t{d:.6}");
            }
        }
        out.push('\n');
        let _ = writeln!(out, "overlap@{}\t{}", self.depth, tags.join("\t"));
        for (tag, row) in tags.iter().zip(&self.overlap) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(out, "{tag}\t{}", cells.join("\t"));
        }
        out
    }
}

/// One stratum of a sampling design: its pooled documents with their true
/// relevance, and the fraction to judge.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumDesign {
    pub id: u32,
    pub docs: Vec<(String, bool)>,
    pub rate: f64,
}

/// Draws `round(rate·N_s)` documents per stratum uniformly without
/// replacement; the rest are recorded as unsampled.
pub fn sample_judgments<R: Rng + ?Sized>(
    topic: u32,
    design: &[StratumDesign],
    rng: &mut R,
    qrels: &mut StratifiedQrels,
) -> Result<(), EvalError> {
    for stratum in design {
        if !(0.0..=1.0).contains(&stratum.rate) {
            return Err(EvalError::InvalidRate(stratum.rate));
        }
        let n = stratum.docs.len();
        let m = ((stratum.rate * n as f64).round() as usize).min(n);
        let mut chosen = vec![false; n];
        for i in sample(rng, n, m) {
            chosen[i] = true;
        }
        for ((doc, relevant), picked) in stratum.docs.iter().zip(chosen) {
            let judgment = match (picked, relevant) {
                (false, _) => UNSAMPLED,
                (true, true) => 1,
                (true, false) => 0,
            };
            qrels
                .add(topic, stratum.id, doc.clone(), judgment)
                .expect("design documents are unique per topic");
        }
    }
    Ok(())
}
