use std::collections::BTreeMap;

use gar_core::evaluation::{evaluate_run, EvalConfig};
use gar_core::fixtures::{demo_store, tv24_mock_clients, tv24_topics};
use gar_core::pipeline::{run_gar, PipelineConfig, StoreSet};
use gar_core::synthetic::SyntheticCorpus;
use gar_core::{read_run, write_run, Channel, EmbeddingStore, Normalization};

#[test]
fn synthetic_runs_survive_the_file_format_and_score_the_same() {
    let corpus = SyntheticCorpus::new();
    let cfg = PipelineConfig::new("e2e", corpus.stores());
    let out = run_gar(&corpus.topics, &cfg, &corpus.clients()).unwrap();
    assert!(out.warnings.is_empty(), "{:?}", out.warnings);

    let eval = EvalConfig::default();
    for run in std::iter::once(&out.fused).chain(out.channels.values()) {
        let bytes = write_run(run);
        let back = read_run(bytes.as_slice()).unwrap();
        assert_eq!(write_run(&back), bytes);
        let direct = evaluate_run(run, &corpus.qrels, &eval);
        let reread = evaluate_run(&back, &corpus.qrels, &eval);
        for (t, v) in &direct.per_topic {
            // six printed decimals bound the drift
            assert!((v - reread.per_topic[t]).abs() < 1e-4, "topic {t}");
        }
    }
}

#[test]
fn unnormalized_fusion_is_the_plain_channel_mean() {
    let corpus = SyntheticCorpus::new();
    let mut cfg = PipelineConfig::new("mean", corpus.stores());
    cfg.normalization = Normalization::None;
    let out = run_gar(&corpus.topics, &cfg, &corpus.clients()).unwrap();
    for topic in &corpus.topics {
        let present: Vec<_> = out.channels.values().filter_map(|r| r.get(topic.id)).collect();
        let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
        for list in &present {
            for d in list.entries() {
                *sums.entry(d.doc_id.as_str()).or_default() += d.score;
            }
        }
        let mut expected: Vec<(&str, f64)> = sums
            .into_iter()
            .map(|(d, s)| {
                (
                    d,
                    if present.len() == 1 {
                        s
                    } else {
                        s / present.len() as f64
                    },
                )
            })
            .collect();
        expected.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        let fused = out.fused.get(topic.id).unwrap();
        assert_eq!(fused.len(), expected.len());
        for (got, (doc, score)) in fused.entries().iter().zip(&expected) {
            assert!((got.score - score).abs() < 1e-12, "topic {} {doc}", topic.id);
        }
        let got_ids: Vec<_> = fused.doc_ids().collect();
        let expected_ids: Vec<_> = expected.iter().map(|(d, _)| *d).collect();
        assert_eq!(got_ids, expected_ids, "topic {}", topic.id);
    }
}

#[test]
fn original_channel_alone_passes_through() {
    let corpus = SyntheticCorpus::new();
    let cfg = PipelineConfig::new("orig", corpus.stores()).with_channels([Channel::Original]);
    let out = run_gar(&corpus.topics, &cfg, &corpus.clients()).unwrap();
    let original = &out.channels[&Channel::Original];
    for t in &corpus.topics {
        assert_eq!(
            out.fused.get(t.id).unwrap().entries(),
            original.get(t.id).unwrap().entries()
        );
    }
}

#[test]
fn recorded_topics_run_end_to_end_on_the_demo_store() {
    let store = demo_store(256);
    let bytes = store.to_bytes();
    let store = EmbeddingStore::from_bytes(&bytes).unwrap();
    let mut cfg = PipelineConfig::new("tv24", StoreSet::single(store.clone().into()));
    cfg.k = 25;
    cfg.cutoff = 25;
    let topics = tv24_topics();
    let clients = tv24_mock_clients(store.dim());
    let a = run_gar(&topics, &cfg, &clients).unwrap();
    let b = run_gar(&topics, &cfg, &clients).unwrap();
    assert_eq!(write_run(&a.fused), write_run(&b.fused));
    assert_eq!(a.fused.len(), topics.len());
    for t in &topics {
        assert!(a.fused.get(t.id).unwrap().len() <= 25);
    }
    for (channel, run) in &a.channels {
        assert_eq!(run.tag(), format!("tv24.{channel}"));
    }
    assert_eq!(a.fused.tag(), "tv24");
}
