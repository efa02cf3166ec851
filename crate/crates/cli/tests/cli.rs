use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use gar_core::evaluation::{compare_runs, evaluate_run, EvalConfig};
use gar_core::fixtures::{demo_bank, demo_store, tv24_mock_clients, tv24_topics, MOCK_DIM};
use gar_core::generation::{generate_variants, GeneratorConfig};
use gar_core::pipeline::{run_gar, PipelineConfig, StoreSet};
use gar_core::{
    fuse_runs, parse_qrels, read_run, write_run, EmbeddingStore, FusionSpec, Normalization, QueryVariantSet,
};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn shots_tsv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/demo_shots.tsv")
}

fn gar(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gar"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

/// Builds the demo store in `dir` through the CLI.
fn build_demo_store(dir: &Path) -> PathBuf {
    let out = dir.join("demo.gar");
    let o = gar(
        &[
            "index",
            "build",
            "--texts",
            shots_tsv().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn eval_prints_mean_summary() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.tsv");
    let o = gar(
        &[
            "eval",
            "--run",
            data("full_judgment.run").to_str().unwrap(),
            "--qrels",
            data("full_judgment.qrels").to_str().unwrap(),
            "--metric",
            "xinfap",
            "--report",
            report.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "mean xinfAP 0.833333\n");
    assert_eq!(
        std::fs::read_to_string(&report).unwrap(),
        "runid\txinfAP\tfulljudge\n1\txinfAP\t0.833333\nmean\txinfAP\t0.833333\n"
    );

    let o = gar(
        &[
            "eval",
            "--run",
            data("full_judgment.run").to_str().unwrap(),
            "--qrels",
            data("full_judgment.qrels").to_str().unwrap(),
            "--metric",
            "ap",
        ],
        dir.path(),
    );
    assert_eq!(stdout(&o), "mean AP 0.833333\n");
}

#[test]
fn eval_json_report_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = gar(
        &[
            "eval",
            "--run",
            data("full_judgment.run").to_str().unwrap(),
            "--qrels",
            data("full_judgment.qrels").to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let run = read_run(&std::fs::read(data("full_judgment.run")).unwrap()).unwrap();
    let qrels = parse_qrels(&std::fs::read(data("full_judgment.qrels")).unwrap()).unwrap();
    let lib = evaluate_run(&run, &qrels, &EvalConfig::default());
    assert_eq!(std::fs::read_to_string(&report).unwrap(), lib.to_json() + "\n");
}

#[test]
fn unknown_flag_is_a_usage_error_with_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = gar(
        &["search", "--mock", "--tag", "t", "--out", "run.txt", "--frobnicate"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[usage]:"), "{err}");
    assert!(files_in(dir.path()).is_empty());

    let o = gar(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = gar(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("search"));
}

#[test]
fn fuse_weight_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let r = data("full_judgment.run");
    let r = r.to_str().unwrap();
    let o = gar(
        &[
            "fuse",
            "--runs",
            r,
            r,
            r,
            "--weights",
            "1,1",
            "--norm",
            "minmax",
            "--out",
            "fused.txt",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains('2') && err.contains('3'), "{err}");
    assert!(err.contains("2 weights given for 3 runs"), "{err}");
    assert!(files_in(dir.path()).is_empty());
}

#[test]
fn bad_tag_and_missing_source_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let store = build_demo_store(dir.path());
    let s = store.to_str().unwrap();
    let o = gar(
        &["search", "--store", s, "--mock", "--tag", "bad tag", "--out", "run.txt"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = gar(&["search", "--store", s, "--tag", "t", "--out", "run.txt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--mock or --config"));
    let o = gar(
        &[
            "search",
            "--store",
            s,
            "--mock",
            "--tag",
            "t",
            "--channels",
            "original,bogus",
            "--out",
            "run.txt",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(files_in(dir.path()), ["demo.gar"]);
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = gar(
        &[
            "eval",
            "--run",
            "missing.txt",
            "--qrels",
            data("full_judgment.qrels").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[runtime]: missing.txt"), "{err}");

    std::fs::write(dir.path().join("bad.gar"), b"GAREMB1\nnot a store").unwrap();
    let o = gar(
        &[
            "search", "--store", "bad.gar", "--mock", "--tag", "t", "--out", "run.txt",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(files_in(dir.path()), ["bad.gar"]);
}

#[test]
fn index_build_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let store = build_demo_store(dir.path());
    assert_eq!(std::fs::read(&store).unwrap(), demo_store(MOCK_DIM).to_bytes());

    let out = dir.path().join("v.gar");
    let o = gar(
        &[
            "index",
            "build",
            "--input",
            data("vectors.txt").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let lib = EmbeddingStore::from_text(&std::fs::read_to_string(data("vectors.txt")).unwrap()).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), lib.to_bytes());
    let o = gar(&["index", "info", "--store", out.to_str().unwrap()], dir.path());
    assert_eq!(
        stdout(&o),
        format!("vectors\t3\ndim\t3\nchecksum\t{:016x}\n", lib.checksum())
    );
}

#[test]
fn search_matches_library_and_golden() {
    let dir = tempfile::tempdir().unwrap();
    let store = build_demo_store(dir.path());
    let o = gar(
        &[
            "search",
            "--store",
            store.to_str().unwrap(),
            "--mock",
            "--topic-ids",
            "751,752,753",
            "--k",
            "10",
            "--tag",
            "golden",
            "--out",
            "run.txt",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        files_in(dir.path()),
        [
            "demo.gar",
            "run.i2t.txt",
            "run.original.txt",
            "run.t2i.txt",
            "run.t2t.txt",
            "run.txt"
        ]
    );

    let topics: Vec<_> = tv24_topics()
        .into_iter()
        .filter(|t| (751..=753).contains(&t.id))
        .collect();
    let mut cfg = PipelineConfig::new("golden", StoreSet::single(Arc::new(demo_store(MOCK_DIM))));
    cfg.k = 10;
    cfg.cutoff = 10;
    let lib = run_gar(&topics, &cfg, &tv24_mock_clients(MOCK_DIM)).unwrap();
    let fused = std::fs::read(dir.path().join("run.txt")).unwrap();
    assert_eq!(fused, write_run(&lib.fused));
    for (channel, run) in &lib.channels {
        let got = std::fs::read(dir.path().join(format!("run.{channel}.txt"))).unwrap();
        assert_eq!(got, write_run(run), "{channel}");
    }
    let golden = std::fs::read_to_string(data("search_mock_golden.txt")).unwrap();
    assert_eq!(String::from_utf8(fused).unwrap(), golden);
}

#[test]
fn search_with_config_file() {
    let dir = tempfile::tempdir().unwrap();
    build_demo_store(dir.path());
    std::fs::write(
        dir.path().join("svc.toml"),
        "index = \"demo.gar\"\n[search]\nk = 7\nnormalization = \"rank\"\n",
    )
    .unwrap();
    let o = gar(
        &[
            "search",
            "--config",
            "svc.toml",
            "--topic-ids",
            "760",
            "--channels",
            "original,i2t",
            "--tag",
            "cfg",
            "--out",
            "out/run.txt",
        ],
        dir.path(),
    );
    // the output directory does not exist
    assert_eq!(o.status.code(), Some(1));
    std::fs::create_dir(dir.path().join("out")).unwrap();
    let o = gar(
        &[
            "search",
            "--config",
            "svc.toml",
            "--topic-ids",
            "760",
            "--channels",
            "original,i2t",
            "--tag",
            "cfg",
            "--out",
            "out/run.txt",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        files_in(&dir.path().join("out")),
        ["run.i2t.txt", "run.original.txt", "run.txt"]
    );
    let run = read_run(&std::fs::read(dir.path().join("out/run.txt")).unwrap()).unwrap();
    assert_eq!(run.get(760).unwrap().len(), 7);
}

#[test]
fn generate_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let o = gar(
        &[
            "generate",
            "--mock",
            "--topic-ids",
            "752,770",
            "--seed",
            "3",
            "--n-images",
            "2",
            "--out",
            "v.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let got: Vec<QueryVariantSet> = serde_json::from_slice(&std::fs::read(dir.path().join("v.json")).unwrap()).unwrap();
    let cfg = GeneratorConfig {
        seed: 3,
        n_images: 2,
        ..GeneratorConfig::default()
    };
    let g = tv24_mock_clients(MOCK_DIM).generators;
    let bank = demo_bank();
    let want: Vec<_> = tv24_topics()
        .iter()
        .filter(|t| t.id == 752 || t.id == 770)
        .map(|t| generate_variants(t, &bank, &cfg, &g).unwrap())
        .collect();
    assert_eq!(got, want);
    assert_eq!(
        got[0].i2t_captions[0],
        "a woman with an umbrella walking on the street in the rain"
    );

    let o = gar(
        &["generate", "--mock", "--topic-ids", "999", "--out", "w.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("w.json").exists());
}

#[test]
fn fuse_and_compare_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let store = build_demo_store(dir.path());
    let o = gar(
        &[
            "search",
            "--store",
            store.to_str().unwrap(),
            "--mock",
            "--topic-ids",
            "751,760,770",
            "--k",
            "20",
            "--tag",
            "gar",
            "--out",
            "run.txt",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let names = ["run.original.txt", "run.t2t.txt", "run.t2i.txt", "run.i2t.txt"];
    let mut args = vec!["fuse", "--runs"];
    args.extend(names);
    args.extend([
        "--weights",
        "1,2,1,0.5",
        "--norm",
        "rank",
        "--tag",
        "refused",
        "--out",
        "f.txt",
    ]);
    let o = gar(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let runs: Vec<_> = names
        .iter()
        .map(|n| read_run(&std::fs::read(dir.path().join(n)).unwrap()).unwrap())
        .collect();
    let spec = FusionSpec::new(vec![1.0, 2.0, 1.0, 0.5], Normalization::Rank).unwrap();
    let lib = fuse_runs(&runs, &spec, "refused").unwrap();
    assert_eq!(std::fs::read(dir.path().join("f.txt")).unwrap(), write_run(&lib));

    // qrels: the first two shots of each original list judged relevant
    let mut qrels = String::new();
    for list in runs[0].lists() {
        for (i, d) in list.entries().iter().take(5).enumerate() {
            qrels.push_str(&format!("{} 1 {} {}\n", list.topic_id, d.doc_id, u8::from(i % 2 == 0)));
        }
    }
    std::fs::write(dir.path().join("q.txt"), &qrels).unwrap();
    let o = gar(
        &[
            "compare",
            "--runs",
            "run.txt",
            "run.original.txt",
            "f.txt",
            "--qrels",
            "q.txt",
            "--depth",
            "10",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let q = parse_qrels(qrels.as_bytes()).unwrap();
    let all: Vec<_> = ["run.txt", "run.original.txt", "f.txt"]
        .iter()
        .map(|n| read_run(&std::fs::read(dir.path().join(n)).unwrap()).unwrap())
        .collect();
    let reports: Vec<_> = all
        .iter()
        .map(|r| evaluate_run(r, &q, &EvalConfig::default()))
        .collect();
    let entries: Vec<_> = reports.iter().zip(&all).collect();
    assert_eq!(stdout(&o), compare_runs(&entries, 10).unwrap().to_tsv());
}

#[test]
fn oov_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let query = "Two women together wearing hats, excluding caps, outdoors";
    let o = gar(&["oov", "--query", query], dir.path());
    assert!(o.status.success());
    let want: String = demo_bank().detect_oov(query).into_iter().map(|t| t + "\n").collect();
    assert_eq!(stdout(&o), want);
    assert!(!want.is_empty());

    std::fs::write(dir.path().join("bank.txt"), "women\nhats\noutdoors\n").unwrap();
    let o = gar(
        &[
            "oov",
            "--concepts",
            "bank.txt",
            "--query",
            "women wearing hats outdoors",
        ],
        dir.path(),
    );
    assert_eq!(stdout(&o), "wearing\n");
}

#[test]
fn serve_answers_health_checks() {
    use std::io::{Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::time::{Duration, Instant};

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let dir = tempfile::tempdir().unwrap();
    build_demo_store(dir.path());
    std::fs::write(dir.path().join("svc.toml"), "index = \"demo.gar\"\n").unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_gar"))
        .args([
            "serve",
            "--config",
            "svc.toml",
            "--listen",
            &format!("127.0.0.1:{port}"),
        ])
        .current_dir(dir.path())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let body = loop {
        if let Ok(mut s) = TcpStream::connect(("127.0.0.1", port)) {
            s.write_all(b"GET /healthz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
                .unwrap();
            let mut buf = String::new();
            s.read_to_string(&mut buf).unwrap();
            break buf;
        }
        assert!(Instant::now() < deadline, "service did not start");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.contains("\"shots\":50"), "{body}");
}

#[test]
fn in_process_entry_point() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = gar_cli::run(["gar", "oov", "--query", "a bald man with glasses"], &mut out, &mut err);
    assert_eq!(code, 0);
    assert!(out.is_empty() && err.is_empty());
    let code = gar_cli::run(
        ["gar", "fuse", "--runs", "a", "b", "--weights", "1", "--out", "x"],
        &mut out,
        &mut err,
    );
    assert_eq!(code, 2);
    assert_eq!(
        String::from_utf8(err).unwrap(),
        "error[usage]: 1 weights given for 2 runs\n"
    );
}
