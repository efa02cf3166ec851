//! The `gar` command line.
//!
//! Exit codes: 0 on success, 1 when a command fails at runtime, 2 on a usage
//! error. Usage errors are detected before any file is written. Every
//! failure prints exactly one line starting with `error[usage]:` or
//! `error[runtime]:` to the error stream.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use gar_core::evaluation::{compare_runs, evaluate_run_with, EvalConfig, Metric};
use gar_core::fixtures::{demo_bank, mock_text_store, parse_shot_texts, tv24_mock_clients, MOCK_DIM};
use gar_core::generation::{generate_variants, Channel, ConceptBank, GeneratorConfig};
use gar_core::pipeline::{run_gar, PipelineClients, PipelineConfig, StoreSet};
use gar_core::run::{validate_tag, Run};
use gar_core::{fuse_runs, parse_qrels, read_run, write_run, EmbeddingStore, FusionSpec, Normalization, Topic};
use gar_service::config::GeneratorMode;
use gar_service::ServiceConfig;
use thiserror::Error;

pub mod output;

use output::PendingWrites;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Runtime(m) => ("runtime", m),
        };
        format!(
            "error[{kind}]: {}",
            msg.split_whitespace().collect::<Vec<_>>().join(" ")
        )
    }
}

fn usage(msg: impl ToString) -> CliError {
    CliError::Usage(msg.to_string())
}

fn runtime(msg: impl ToString) -> CliError {
    CliError::Runtime(msg.to_string())
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read_file(path)?).map_err(|_| runtime(format!("{}: not UTF-8", path.display())))
}

#[derive(Debug, Parser)]
#[command(
    name = "gar",
    version,
    about = "Generation-augmented retrieval for ad-hoc video search"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or inspect an embedding store.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Generate variants, search them and write the fused run plus one run per channel.
    Search(SearchArgs),
    /// Generate query variants and write them as JSON.
    Generate(GenerateArgs),
    /// Fuse run files.
    Fuse(FuseArgs),
    /// Score a run against stratified qrels.
    Eval(EvalArgs),
    /// Rank several runs and report per-topic deltas and rank overlap.
    Compare(CompareArgs),
    /// Print the query terms not covered by a concept bank.
    Oov(OovArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Build a binary store from `id v1 v2 ...` lines, or embed shot
    /// descriptions with the mock embedder.
    Build {
        #[arg(long, conflicts_with = "texts", required_unless_present = "texts")]
        input: Option<PathBuf>,
        /// `shot_id<TAB>description` lines.
        #[arg(long)]
        texts: Option<PathBuf>,
        #[arg(long, default_value_t = MOCK_DIM, requires = "texts")]
        mock_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print size, dimension and checksum of a store.
    Info {
        #[arg(long)]
        store: PathBuf,
    },
}

/// Where topics, concepts and generators come from.
#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Service config; its paths, generator settings and search defaults apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Deterministic mock generators and embedder.
    #[arg(long)]
    mock: bool,
    /// Topic TSV; the bundled tv24 topics by default.
    #[arg(long)]
    topics: Option<PathBuf>,
    /// Concept bank, one concept per line; the bundled demo bank by default.
    #[arg(long)]
    concepts: Option<PathBuf>,
    /// Only these topic ids.
    #[arg(long, value_delimiter = ',')]
    topic_ids: Vec<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_images: Option<usize>,
    #[arg(long)]
    n_t2t: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Store searched by generated images; the text store otherwise.
    #[arg(long)]
    image_store: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "original,t2t,t2i,i2t")]
    channels: Vec<Channel>,
    #[arg(long)]
    k: Option<usize>,
    /// Depth of the fused lists; defaults to `--k`.
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    norm: Option<Normalization>,
    #[arg(long)]
    tag: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write the generated variants as JSON.
    #[arg(long)]
    variants_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_delimiter = ',', default_value = "t2t,t2i,i2t")]
    channels: Vec<Channel>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Comma separated; equal weights by default.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    #[arg(long, default_value = "minmax")]
    norm: Normalization,
    #[arg(long, default_value_t = gar_core::fusion::DEFAULT_CUTOFF)]
    cutoff: usize,
    #[arg(long, default_value = "fused")]
    tag: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value = "xinfap")]
    metric: Metric,
    #[arg(long, default_value_t = gar_core::evaluation::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Per-topic report; JSON when the name ends in `.json`, TSV otherwise.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, num_args = 2.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value_t = 1000)]
    depth: usize,
    #[arg(long, default_value = "xinfap")]
    metric: Metric,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OovArgs {
    #[arg(long)]
    concepts: Option<PathBuf>,
    #[arg(long)]
    query: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    /// Serve the mock generator and embedding backends instead of the API.
    #[arg(long)]
    mock_backend: bool,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            let _ = writeln!(err, "{}", usage(first).line());
            return 2;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.line());
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Index(c) => index(c, out),
        Command::Search(a) => search(a, out, err),
        Command::Generate(a) => generate(a, out, err),
        Command::Fuse(a) => fuse(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Compare(a) => compare(a, out),
        Command::Oov(a) => oov(a, out),
        Command::Serve(a) => serve(a, err),
    }
}

fn index(cmd: IndexCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        IndexCommand::Build {
            input,
            texts,
            mock_dim,
            out: dest,
        } => {
            let store = match (input, texts) {
                (Some(input), _) => EmbeddingStore::from_text(&read_text(&input)?)
                    .map_err(|e| runtime(format!("{}: {e}", input.display())))?,
                (None, Some(texts)) => {
                    let shots = parse_shot_texts(&read_text(&texts)?)
                        .map_err(|e| runtime(format!("{}: {e}", texts.display())))?;
                    mock_text_store(&shots, mock_dim).map_err(runtime)?
                }
                (None, None) => return Err(usage("index build needs --input or --texts")),
            };
            let mut writes = PendingWrites::default();
            writes.add(&dest, store.to_bytes())?;
            writes.commit()?;
            let _ = writeln!(out, "{}\t{} vectors\tdim {}", dest.display(), store.len(), store.dim());
            Ok(())
        }
        IndexCommand::Info { store } => {
            let s = load_store(&store)?;
            let _ = writeln!(
                out,
                "vectors\t{}\ndim\t{}\nchecksum\t{:016x}",
                s.len(),
                s.dim(),
                s.checksum()
            );
            Ok(())
        }
    }
}

fn load_store(path: &Path) -> Result<EmbeddingStore, CliError> {
    EmbeddingStore::from_bytes(&read_file(path)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Resolved topics, bank, generator settings and clients for `search` and
/// `generate`.
struct Sources {
    config: ServiceConfig,
    topics: Vec<Topic>,
    generator: GeneratorConfig,
}

impl SourceArgs {
    /// Checks the flags alone, without touching the filesystem.
    fn check(&self) -> Result<(), CliError> {
        if !self.mock && self.config.is_none() {
            return Err(usage("needs --mock or --config"));
        }
        if self.n_images == Some(0) || self.n_t2t == Some(0) {
            return Err(usage("--n-images and --n-t2t must be at least 1"));
        }
        Ok(())
    }

    fn resolve(&self) -> Result<Sources, CliError> {
        let mut config = match &self.config {
            Some(path) => ServiceConfig::load(path).map_err(runtime)?,
            None => ServiceConfig::default(),
        };
        if self.mock {
            config.generators.mode = GeneratorMode::Mock;
        }
        if let Some(p) = &self.topics {
            config.topics = Some(p.clone());
        }
        if let Some(p) = &self.concepts {
            config.concepts = Some(p.clone());
        }
        let mut topics = config.load_topics().map_err(runtime)?;
        if !self.topic_ids.is_empty() {
            let wanted: BTreeSet<u32> = self.topic_ids.iter().copied().collect();
            topics.retain(|t| wanted.contains(&t.id));
            let found: BTreeSet<u32> = topics.iter().map(|t| t.id).collect();
            if let Some(missing) = wanted.difference(&found).next() {
                return Err(runtime(format!("topic {missing} is not in the topic file")));
            }
        }
        let mut generator = config.generation.clone();
        if let Some(seed) = self.seed {
            generator.seed = seed;
        }
        if let Some(n) = self.n_images {
            generator.n_images = n;
        }
        if let Some(n) = self.n_t2t {
            generator.n_t2t = n;
        }
        Ok(Sources {
            config,
            topics,
            generator,
        })
    }
}

impl Sources {
    /// Mock embeddings follow `dim` so they can be searched against the store.
    fn clients(&self, dim: Option<usize>) -> Result<PipelineClients, CliError> {
        let bank = self.config.load_bank().map_err(runtime)?;
        if self.config.generators.mode == GeneratorMode::Mock {
            let mut clients = tv24_mock_clients(dim.unwrap_or(self.config.generators.mock_dim));
            clients.bank = Arc::new(bank);
            return Ok(clients);
        }
        self.config.clients(bank).map_err(runtime)
    }
}

/// `run.txt` → `run.t2t.txt`.
pub fn channel_path(out: &Path, channel: Channel) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.{channel}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{channel}"),
    };
    out.with_file_name(name)
}

fn search(a: SearchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    a.source.check()?;
    validate_tag(&a.tag).map_err(usage)?;
    if a.channels.is_empty() {
        return Err(usage("--channels is empty"));
    }
    if a.store.is_none() && a.source.config.is_none() {
        return Err(usage("search needs --store or a config with an index"));
    }
    let sources = a.source.resolve()?;
    let mut stores = match &a.store {
        Some(p) => StoreSet::single(Arc::new(load_store(p)?)),
        None => sources.config.load_stores().map_err(runtime)?,
    };
    if let Some(p) = &a.image_store {
        stores = stores.with_image(Arc::new(load_store(p)?));
    }
    let dim = stores.text.as_ref().map(|s| s.dim());
    if dim.is_none() {
        return Err(runtime("no embedding store configured"));
    }
    let clients = sources.clients(dim)?;

    let k = a.k.unwrap_or(sources.config.search.k);
    let mut cfg = PipelineConfig::new(a.tag.clone(), stores).with_channels(a.channels.iter().copied());
    cfg.generator = sources.generator.clone();
    cfg.normalization = a.norm.unwrap_or(sources.config.search.normalization);
    cfg.k = k;
    cfg.cutoff = a.cutoff.unwrap_or(k);
    let result = run_gar(&sources.topics, &cfg, &clients).map_err(runtime)?;
    for w in &result.warnings {
        let _ = writeln!(err, "warning: topic {} {}: {}", w.topic_id, w.channel, w.message);
    }

    let mut writes = PendingWrites::default();
    writes.add(&a.out, write_run(&result.fused))?;
    for (channel, run) in &result.channels {
        writes.add(&channel_path(&a.out, *channel), write_run(run))?;
    }
    if let Some(p) = &a.variants_out {
        writes.add(p, variants_json(&result.variants)?)?;
    }
    let written = writes.commit()?;
    for p in written {
        let _ = writeln!(out, "{}", p.display());
    }
    let _ = writeln!(err, "searched {} topics", sources.topics.len());
    Ok(())
}

fn variants_json(variants: &[gar_core::QueryVariantSet]) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(variants).map_err(runtime)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn generate(a: GenerateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    a.source.check()?;
    let sources = a.source.resolve()?;
    let clients = sources.clients(None)?;
    let mut cfg = sources.generator.clone();
    cfg.t2t = a.channels.contains(&Channel::T2t);
    cfg.t2i = a.channels.contains(&Channel::T2i);
    cfg.i2t = a.channels.contains(&Channel::I2t);
    cfg.validate().map_err(usage)?;
    let mut all = Vec::with_capacity(sources.topics.len());
    for (i, topic) in sources.topics.iter().enumerate() {
        let v = generate_variants(topic, &clients.bank, &cfg, &clients.generators).map_err(runtime)?;
        for w in &v.warnings {
            let _ = writeln!(err, "warning: topic {} {}: {}", topic.id, w.channel, w.message);
        }
        all.push(v);
        let _ = writeln!(err, "{}/{}", i + 1, sources.topics.len());
    }
    let mut writes = PendingWrites::default();
    writes.add(&a.out, variants_json(&all)?)?;
    writes.commit()?;
    let _ = writeln!(out, "{}", a.out.display());
    Ok(())
}

fn read_run_file(path: &Path) -> Result<Run, CliError> {
    read_run(&read_file(path)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn fuse(a: FuseArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let weights = if a.weights.is_empty() {
        vec![1.0; a.runs.len()]
    } else {
        a.weights.clone()
    };
    if weights.len() != a.runs.len() {
        return Err(usage(format!(
            "{} weights given for {} runs",
            weights.len(),
            a.runs.len()
        )));
    }
    validate_tag(&a.tag).map_err(usage)?;
    let spec = FusionSpec::new(weights, a.norm).map_err(usage)?.with_cutoff(a.cutoff);
    let runs = a.runs.iter().map(|p| read_run_file(p)).collect::<Result<Vec<_>, _>>()?;
    let fused = fuse_runs(&runs, &spec, &a.tag).map_err(runtime)?;
    let mut writes = PendingWrites::default();
    writes.add(&a.out, write_run(&fused))?;
    writes.commit()?;
    let _ = writeln!(out, "{}\t{} topics", a.out.display(), fused.len());
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = EvalConfig { epsilon: a.epsilon };
    cfg.validate().map_err(usage)?;
    let run = read_run_file(&a.run)?;
    let qrels = parse_qrels(&read_file(&a.qrels)?).map_err(|e| runtime(format!("{}: {e}", a.qrels.display())))?;
    let report = evaluate_run_with(&run, &qrels, a.metric, &cfg);
    if let Some(path) = &a.report {
        let body = if path.extension().is_some_and(|e| e == "json") {
            report.to_json() + "\n"
        } else {
            report.to_tsv()
        };
        let mut writes = PendingWrites::default();
        writes.add(path, body.into_bytes())?;
        writes.commit()?;
    }
    let _ = writeln!(out, "mean {} {:.6}", report.metric, report.mean);
    Ok(())
}

fn compare(a: CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let qrels = parse_qrels(&read_file(&a.qrels)?).map_err(|e| runtime(format!("{}: {e}", a.qrels.display())))?;
    let runs = a.runs.iter().map(|p| read_run_file(p)).collect::<Result<Vec<_>, _>>()?;
    let cfg = EvalConfig::default();
    let reports: Vec<_> = runs
        .iter()
        .map(|r| evaluate_run_with(r, &qrels, a.metric, &cfg))
        .collect();
    let entries: Vec<_> = reports.iter().zip(&runs).collect();
    let cmp = compare_runs(&entries, a.depth).map_err(runtime)?;
    let text = cmp.to_tsv();
    match &a.out {
        Some(path) => {
            let mut writes = PendingWrites::default();
            writes.add(path, text.into_bytes())?;
            writes.commit()?;
        }
        None => {
            let _ = write!(out, "{text}");
        }
    }
    Ok(())
}

fn oov(a: OovArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bank = match &a.concepts {
        Some(p) => ConceptBank::parse(&read_text(p)?, p.display().to_string()).map_err(runtime)?,
        None => demo_bank(),
    };
    for term in bank.detect_oov(&a.query) {
        let _ = writeln!(out, "{term}");
    }
    Ok(())
}

fn serve(a: ServeArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => ServiceConfig::load(p).map_err(runtime)?,
        None => ServiceConfig::default(),
    };
    if let Some(l) = a.listen {
        cfg.listen = l;
    }
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    let _ = writeln!(err, "listening on {}", cfg.listen);
    if a.mock_backend {
        let bank = cfg.load_bank().map_err(runtime)?;
        let mut clients = tv24_mock_clients(cfg.generators.mock_dim);
        clients.bank = Arc::new(bank);
        let router = gar_service::mock_backend_router(clients);
        rt.block_on(gar_service::serve_router(router, &cfg.listen))
            .map_err(runtime)
    } else {
        rt.block_on(gar_service::serve(&cfg)).map_err(runtime)
    }
}
