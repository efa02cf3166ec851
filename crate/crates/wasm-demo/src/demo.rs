//! The three demo operations as plain functions over strings, so they run
//! and test natively. Each returns JSON or run text, or a message to show.

use std::collections::{BTreeMap, BTreeSet};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use gar_core::evaluation::{
    average_precision, sample_judgments, xinf_ap, EvalConfig, StratumDesign, TopicJudgmentView,
};
use gar_core::pipeline::{run_gar, PipelineConfig};
use gar_core::synthetic::SyntheticCorpus;
use gar_core::{
    fuse_runs, read_run, write_run, Channel, FusionSpec, Normalization, RankedDoc, Run, StratifiedQrels, Topic,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const MAX_RESAMPLES: usize = 20_000;
pub const POOL_SIZE: usize = 200;

fn parse_channels(csv: &str) -> Result<Vec<Channel>, String> {
    let channels: Vec<Channel> = csv
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    if channels.is_empty() {
        return Err("choose at least one channel".into());
    }
    Ok(channels)
}

#[derive(Debug, Serialize)]
struct Hit {
    rank: usize,
    shot: String,
    score: f64,
    description: String,
    /// Only known when the query is one of the corpus topics.
    relevant: Option<bool>,
}

#[derive(Debug, Serialize)]
struct ChannelResult {
    channel: Channel,
    hits: Vec<Hit>,
    ap: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SearchResult {
    topic_id: Option<u32>,
    oov: Vec<String>,
    t2t: Vec<String>,
    captions: Vec<String>,
    /// `data:image/png;base64,...` URLs.
    images: Vec<String>,
    channels: Vec<ChannelResult>,
    fused: ChannelResult,
    warnings: Vec<String>,
}

/// The corpus topic ids with their texts, as JSON.
pub fn synthetic_topics() -> String {
    let corpus = SyntheticCorpus::new();
    let topics: Vec<_> = corpus
        .topics
        .iter()
        .map(|t| serde_json::json!({"id": t.id, "text": t.text, "oov": corpus.oov_topics.contains(&t.id)}))
        .collect();
    serde_json::to_string(&topics).expect("topics serialize")
}

/// Generates variants for `query`, searches the synthetic shots with each
/// enabled channel and fuses the results.
pub fn synthetic_search(query: &str, channels_csv: &str, k: usize) -> Result<String, String> {
    let channels = parse_channels(channels_csv)?;
    let corpus = SyntheticCorpus::new();
    let known = corpus.topics.iter().find(|t| t.text.eq_ignore_ascii_case(query.trim()));
    let topic = match known {
        Some(t) => t.clone(),
        None => Topic::new(1, query.trim()).map_err(|e| e.to_string())?,
    };
    let mut cfg = PipelineConfig::new("demo", corpus.stores()).with_channels(channels);
    cfg.k = k;
    cfg.cutoff = k;
    let clients = corpus.clients();
    let out = run_gar(std::slice::from_ref(&topic), &cfg, &clients).map_err(|e| e.to_string())?;

    let descriptions: BTreeMap<&str, &str> = corpus
        .descriptions
        .iter()
        .map(|(id, _, visual)| (id.as_str(), visual.as_str()))
        .collect();
    let view = known.and_then(|t| corpus.qrels.topic(t.id)).map(TopicJudgmentView::new);
    let relevant: BTreeSet<String> = known
        .and_then(|t| corpus.qrels.topic(t.id))
        .map(|q| {
            q.strata()
                .values()
                .flatten()
                .filter(|(_, j)| *j > 0)
                .map(|(d, _)| d.clone())
                .collect()
        })
        .unwrap_or_default();
    let describe = |channel: Channel, run: &Run| {
        let list = run.get(topic.id);
        let hits = list
            .map(|l| l.entries())
            .unwrap_or_default()
            .iter()
            .enumerate()
            .map(|(i, d): (usize, &RankedDoc)| Hit {
                rank: i + 1,
                shot: d.doc_id.clone(),
                score: d.score,
                description: descriptions.get(d.doc_id.as_str()).copied().unwrap_or("").to_string(),
                relevant: view.as_ref().map(|_| relevant.contains(&d.doc_id)),
            })
            .collect();
        let ap = view.as_ref().zip(list).map(|(v, l)| average_precision(l, v));
        ChannelResult { channel, hits, ap }
    };

    let variants = out.variants.first();
    let result = SearchResult {
        topic_id: known.map(|t| t.id),
        oov: clients.bank.detect_oov(&topic.text).into_iter().collect(),
        t2t: variants.map(|v| v.t2t_texts.clone()).unwrap_or_default(),
        captions: variants.map(|v| v.i2t_captions.clone()).unwrap_or_default(),
        images: variants
            .map(|v| {
                v.t2i_images
                    .iter()
                    .map(|i| format!("data:image/png;base64,{}", STANDARD.encode(&i.png)))
                    .collect()
            })
            .unwrap_or_default(),
        channels: out.channels.iter().map(|(c, r)| describe(*c, r)).collect(),
        fused: describe(Channel::Original, &out.fused),
        warnings: out
            .warnings
            .iter()
            .map(|w| format!("{}: {}", w.channel, w.message))
            .collect(),
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}

/// Fuses run texts separated by lines holding only `---`.
pub fn fuse_explorer(runs_text: &str, weights_csv: &str, norm: &str, cutoff: usize) -> Result<String, String> {
    let mut blocks = vec![String::new()];
    for line in runs_text.lines() {
        if line.trim() == "---" {
            blocks.push(String::new());
        } else {
            let block = blocks.last_mut().expect("one block exists");
            block.push_str(line);
            block.push('\n');
        }
    }
    let runs = blocks
        .iter()
        .filter(|b| !b.trim().is_empty())
        .enumerate()
        .map(|(i, b)| read_run(b.as_bytes()).map_err(|e| format!("run {}: {e}", i + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    if runs.is_empty() {
        return Err("paste at least one run".into());
    }
    let weights: Vec<f64> = if weights_csv.trim().is_empty() {
        vec![1.0; runs.len()]
    } else {
        weights_csv
            .split(',')
            .map(|w| w.trim().parse::<f64>().map_err(|_| format!("bad weight {w:?}")))
            .collect::<Result<_, _>>()?
    };
    if weights.len() != runs.len() {
        return Err(format!("{} weights given for {} runs", weights.len(), runs.len()));
    }
    let norm: Normalization = norm.parse().map_err(|e: gar_core::FusionError| e.to_string())?;
    let spec = FusionSpec::new(weights, norm)
        .map_err(|e| e.to_string())?
        .with_cutoff(cutoff);
    let fused = fuse_runs(&runs, &spec, "fused").map_err(|e| e.to_string())?;
    String::from_utf8(write_run(&fused)).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct SamplingResult {
    true_ap: f64,
    mean: f64,
    std_dev: f64,
    min: f64,
    max: f64,
    /// Counts over 20 equal-width bins spanning [0, 1].
    histogram: Vec<usize>,
    resamples: usize,
}

/// Repeatedly samples judgments from a fixed 200-document pool split into
/// a top and a bottom stratum, and reports the spread of xinfAP around the
/// true AP of the pool's ranking.
pub fn xinfap_explorer(top_rate: f64, bottom_rate: f64, resamples: usize, seed: u64) -> Result<String, String> {
    if resamples == 0 || resamples > MAX_RESAMPLES {
        return Err(format!("resamples must be between 1 and {MAX_RESAMPLES}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs: Vec<(String, bool)> = (0..POOL_SIZE)
        .map(|i| {
            // deterministic relevance that thins out with depth
            let relevant = (i * 7 + 3) % 10 < 5usize.saturating_sub(i * 5 / POOL_SIZE);
            (format!("s{i:03}"), relevant)
        })
        .collect();
    let half = POOL_SIZE / 2;
    let design = [
        StratumDesign {
            id: 1,
            docs: docs[..half].to_vec(),
            rate: top_rate,
        },
        StratumDesign {
            id: 2,
            docs: docs[half..].to_vec(),
            rate: bottom_rate,
        },
    ];
    let list = gar_core::ScoredList::from_ranked(
        1,
        docs.iter()
            .enumerate()
            .map(|(i, (d, _))| (d.as_str(), (POOL_SIZE - i) as f64)),
        "pool",
    )
    .map_err(|e| e.to_string())?;
    let mut full = StratifiedQrels::new();
    for (d, r) in &docs {
        full.add(1, 1, d.clone(), i32::from(*r)).map_err(|e| e.to_string())?;
    }
    let true_ap = average_precision(&list, &TopicJudgmentView::new(full.topic(1).expect("topic added")));

    let cfg = EvalConfig::default();
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut qrels = StratifiedQrels::new();
        sample_judgments(1, &design, &mut rng, &mut qrels).map_err(|e| e.to_string())?;
        let view = TopicJudgmentView::new(qrels.topic(1).expect("topic sampled"));
        values.push(xinf_ap(&list, &view, &cfg));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut histogram = vec![0usize; 20];
    for v in &values {
        histogram[((v.clamp(0.0, 1.0) * 20.0) as usize).min(19)] += 1;
    }
    let result = SamplingResult {
        true_ap,
        mean,
        std_dev: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        histogram,
        resamples,
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}
