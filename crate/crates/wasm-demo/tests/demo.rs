use gar_wasm::demo::{fuse_explorer, synthetic_search, synthetic_topics, xinfap_explorer};
use serde_json::Value;

fn json(s: &str) -> Value {
    serde_json::from_str(s).expect("valid json")
}

#[test]
fn topics_list_includes_oov_flags() {
    let topics = json(&synthetic_topics());
    let topics = topics.as_array().unwrap();
    assert!(!topics.is_empty());
    assert!(topics.iter().any(|t| t["oov"] == true));
}

#[test]
fn corpus_topic_search_reports_relevance_and_ap() {
    let topics = json(&synthetic_topics());
    let text = topics[0]["text"].as_str().unwrap();
    let out = json(&synthetic_search(text, "original,t2t,t2i,i2t", 10).unwrap());
    assert_eq!(out["topic_id"], topics[0]["id"]);
    assert_eq!(out["channels"].as_array().unwrap().len(), 4);
    let fused = out["fused"]["hits"].as_array().unwrap();
    assert!(!fused.is_empty() && fused.len() <= 10);
    assert!(fused.iter().all(|h| h["relevant"].is_boolean()));
    assert!(out["fused"]["ap"].as_f64().unwrap() >= 0.0);
    for img in out["images"].as_array().unwrap() {
        assert!(img.as_str().unwrap().starts_with("data:image/png;base64,iVBORw0KGgo"));
    }
    let ranks: Vec<u64> = fused.iter().map(|h| h["rank"].as_u64().unwrap()).collect();
    assert_eq!(ranks, (1..=fused.len() as u64).collect::<Vec<_>>());
}

#[test]
fn free_text_search_has_no_judgments() {
    let out = json(&synthetic_search("a dog running on grass", "original", 5).unwrap());
    assert_eq!(out["topic_id"], Value::Null);
    assert!(out["fused"]["ap"].is_null());
    assert!(out["fused"]["hits"]
        .as_array()
        .unwrap()
        .iter()
        .all(|h| h["relevant"].is_null()));
}

#[test]
fn search_rejects_bad_channel_lists() {
    assert!(synthetic_search("dog", "", 5).is_err());
    assert!(synthetic_search("dog", "original,sonar", 5).is_err());
}

#[test]
fn fuse_explorer_matches_hand_computed_means() {
    let runs = "1 Q0 a 1 1.0 x\n1 Q0 b 2 0.5 x\n---\n1 Q0 b 1 1.0 y\n1 Q0 c 2 0.25 y\n";
    let out = fuse_explorer(runs, "1,3", "none", 10).unwrap();
    let lines: Vec<Vec<&str>> = out.lines().map(|l| l.split_whitespace().collect()).collect();
    // b: (0.5 + 3) / 4, c: (0 + 0.75) / 4, a: (1 + 0) / 4
    let got: Vec<(&str, f64)> = lines.iter().map(|l| (l[2], l[4].parse().unwrap())).collect();
    assert_eq!(got.len(), 3);
    assert_eq!(got[0].0, "b");
    assert!((got[0].1 - 0.875).abs() < 1e-6);
    assert_eq!(got[1].0, "a");
    assert!((got[1].1 - 0.25).abs() < 1e-6);
    assert_eq!(got[2].0, "c");
    assert!((got[2].1 - 0.1875).abs() < 1e-6);
    assert!(lines.iter().all(|l| l[5] == "fused"));
}

#[test]
fn fuse_explorer_reports_input_problems() {
    let run = "1 Q0 a 1 1.0 x\n";
    assert_eq!(
        fuse_explorer(&format!("{run}---\n{run}"), "1", "none", 10).unwrap_err(),
        "1 weights given for 2 runs"
    );
    assert!(fuse_explorer("", "", "none", 10).is_err());
    assert!(fuse_explorer(run, "", "softmax-ish", 10).is_err());
    assert!(fuse_explorer("not a run line\n", "", "none", 10).is_err());
}

#[test]
fn full_sampling_recovers_true_ap_exactly() {
    let out = json(&xinfap_explorer(1.0, 1.0, 5, 7).unwrap());
    let t = out["true_ap"].as_f64().unwrap();
    assert!(t > 0.0 && t < 1.0);
    assert!((out["min"].as_f64().unwrap() - t).abs() < 1e-6);
    assert!((out["max"].as_f64().unwrap() - t).abs() < 1e-6);
    assert_eq!(
        out["histogram"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c.as_u64().unwrap())
            .sum::<u64>(),
        5
    );
}

#[test]
fn sparse_sampling_spreads_but_centres_on_true_ap() {
    let out = json(&xinfap_explorer(0.5, 0.2, 2000, 11).unwrap());
    let t = out["true_ap"].as_f64().unwrap();
    assert!(out["std_dev"].as_f64().unwrap() > 0.0);
    assert!((out["mean"].as_f64().unwrap() - t).abs() < 0.05, "{out}");
    assert_eq!(out, json(&xinfap_explorer(0.5, 0.2, 2000, 11).unwrap()));
}

#[test]
fn sampling_bounds_are_enforced() {
    assert!(xinfap_explorer(0.5, 0.5, 0, 1).is_err());
    assert!(xinfap_explorer(0.5, 0.5, 20_001, 1).is_err());
    assert!(xinfap_explorer(1.5, 0.5, 10, 1).is_err());
}
