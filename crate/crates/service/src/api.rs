//! Endpoint handlers. Each one parses its request, calls the matching
//! library operation and renders the result; no retrieval logic lives here.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use gar_core::evaluation::{evaluate_run_with, EvalConfig, EvalReport, Metric};
use gar_core::fusion::{fuse_runs, FusionSpec, Normalization};
use gar_core::generation::{generate_variants, Channel, GenerationError, GeneratorConfig, QueryVariantSet, Topic};
use gar_core::pipeline::{fuse_channels, search_variant_set, PipelineConfig, TopicWarning};
use gar_core::run::{validate_tag, RankedDoc, Run, ScoredList};
use gar_core::trec_io::{parse_qrels, read_run, write_run};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::session::{OovReport, SelectError, SelectRequest, Session};
use crate::AppState;

type AppResult<T> = Result<T, ApiError>;
type Shared = State<Arc<AppState>>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> AppResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> AppResult<T> + Send + 'static) -> AppResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal("Internal", e.to_string()))?
}

fn text_response(body: Vec<u8>) -> Response {
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        body,
    )
        .into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub store_loaded: bool,
    pub shots: usize,
    pub topics: usize,
    pub concepts: usize,
}

pub async fn healthz(State(app): Shared) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        store_loaded: app.stores.text.is_some(),
        shots: app.stores.text.as_ref().map_or(0, |s| s.len()),
        topics: app.topics.len(),
        concepts: app.clients.bank.len(),
    })
}

pub async fn list_topics(State(app): Shared) -> Json<Vec<Topic>> {
    Json(app.topics.values().cloned().collect())
}

#[derive(Debug, Deserialize)]
pub struct OovQuery {
    pub q: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct OovResponse {
    pub query: String,
    pub oov: Vec<String>,
}

pub async fn concepts_oov(State(app): Shared, Query(params): Query<OovQuery>) -> AppResult<Json<OovResponse>> {
    let query = params
        .q
        .ok_or_else(|| ApiError::bad_request("missing query parameter q"))?;
    let oov = app.clients.bank.detect_oov(&query).into_iter().collect();
    Ok(Json(OovResponse { query, oov }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VariantsResponse {
    pub session_id: String,
    pub variants: QueryVariantSet,
    pub oov_report: OovReport,
}

/// Body is an optional generator config; omitted fields take the server's values.
pub async fn topic_variants(
    State(app): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> AppResult<Json<VariantsResponse>> {
    let id: u32 = id
        .parse()
        .map_err(|_| ApiError::not_found("UnknownTopic", format!("no topic {id:?}")))?;
    let topic = app
        .topics
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("UnknownTopic", format!("no topic {id}")))?;
    let cfg = if body.iter().all(u8::is_ascii_whitespace) {
        app.generation.clone()
    } else {
        let mut merged = serde_json::to_value(&app.generation).expect("config serializes");
        let overrides: serde_json::Value = parse_body(&body)?;
        let serde_json::Value::Object(fields) = overrides else {
            return Err(ApiError::bad_request("body must be a JSON object"));
        };
        for (k, v) in fields {
            merged[k] = v;
        }
        serde_json::from_value::<GeneratorConfig>(merged).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let state = app.clone();
    let variants = blocking(move || {
        if !(cfg.t2t || cfg.t2i || cfg.i2t) {
            return Ok(QueryVariantSet::empty(topic));
        }
        generate_variants(&topic, &state.clients.bank, &cfg, &state.clients.generators).map_err(|e| match e {
            GenerationError::AllChannelsFailed(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "AllChannelsFailed", e.to_string())
            }
            other => ApiError::bad_request(other.to_string()),
        })
    })
    .await?;
    let session = app.sessions.create(variants, &app.clients.bank);
    Ok(Json(VariantsResponse {
        session_id: session.session_id,
        variants: session.variants,
        oov_report: session.oov_report,
    }))
}

pub async fn get_session(State(app): Shared, Path(id): Path<String>) -> AppResult<Json<Session>> {
    app.sessions.get(&id).map(Json).ok_or_else(|| unknown_session(&id))
}

fn unknown_session(id: &str) -> ApiError {
    ApiError::not_found("UnknownSession", format!("no session {id:?}"))
}

pub async fn select(State(app): Shared, Path(id): Path<String>, body: Bytes) -> AppResult<Json<Session>> {
    let req: SelectRequest = parse_body(&body)?;
    let bank = app.clients.bank.clone();
    app.sessions
        .update(&id, |s| {
            s.select(&req, &bank)?;
            Ok(s.clone())
        })
        .ok_or_else(|| unknown_session(&id))?
        .map(Json)
        .map_err(|e| match e {
            SelectError::BadIndex { .. } => ApiError::new(StatusCode::BAD_REQUEST, "BadCandidateIndex", e.to_string()),
            SelectError::BadRequest(_) => ApiError::bad_request(e.to_string()),
        })
}

/// Exactly one of `text`, `variant_set` and `session_id` names the queries.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchRequest {
    /// Topic id for a bare text search (defaults to 1).
    pub topic_id: Option<u32>,
    pub text: Option<String>,
    pub variant_set: Option<QueryVariantSet>,
    pub session_id: Option<String>,
    pub k: Option<usize>,
    /// Channels to search; defaults to those the query source provides.
    pub channels: Option<Vec<Channel>>,
    pub normalization: Option<Normalization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub topic_id: u32,
    pub channels: BTreeMap<Channel, Vec<RankedDoc>>,
    pub fused: Vec<RankedDoc>,
    pub warnings: Vec<TopicWarning>,
}

fn provided_channels(v: &QueryVariantSet) -> BTreeSet<Channel> {
    let mut out = BTreeSet::from([Channel::Original]);
    if !v.t2t_texts.is_empty() {
        out.insert(Channel::T2t);
    }
    if !v.t2i_images.is_empty() {
        out.insert(Channel::T2i);
    }
    if !v.i2t_captions.is_empty() {
        out.insert(Channel::I2t);
    }
    out
}

/// The pipeline settings one request searches with.
pub(crate) fn request_config(
    app: &AppState,
    channels: BTreeSet<Channel>,
    k: Option<usize>,
    norm: Option<Normalization>,
) -> PipelineConfig {
    let k = k.unwrap_or(app.search.k);
    let mut cfg = PipelineConfig::new("search", app.stores.clone()).with_channels(channels);
    cfg.k = k;
    cfg.cutoff = k;
    cfg.normalization = norm.unwrap_or(app.search.normalization);
    cfg
}

/// Searches one variant set; returns the channel lists and their fusion.
pub(crate) fn search_set(
    app: &AppState,
    variants: &QueryVariantSet,
    cfg: &PipelineConfig,
) -> (BTreeMap<Channel, ScoredList>, ScoredList, Vec<TopicWarning>) {
    let (lists, warnings) = search_variant_set(variants, cfg, app.clients.embedder.as_ref());
    let fused = fuse_channels(&lists, cfg.normalization, cfg.cutoff)
        .unwrap_or_else(|| ScoredList::empty(variants.topic.id, "fused"));
    (lists, fused, warnings)
}

pub async fn search(State(app): Shared, body: Bytes) -> AppResult<Json<SearchResponse>> {
    let req: SearchRequest = parse_body(&body)?;
    if app.stores.text.is_none() {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "StoreUnavailable",
            "no embedding store is loaded",
        ));
    }
    let sources = usize::from(req.text.is_some())
        + usize::from(req.variant_set.is_some())
        + usize::from(req.session_id.is_some());
    if sources != 1 {
        return Err(ApiError::bad_request(
            "give exactly one of text, variant_set and session_id",
        ));
    }
    let (variants, default_channels) = if let Some(text) = &req.text {
        let topic =
            Topic::new(req.topic_id.unwrap_or(1), text.clone()).map_err(|e| ApiError::bad_request(e.to_string()))?;
        (QueryVariantSet::empty(topic), BTreeSet::from([Channel::Original]))
    } else if let Some(v) = &req.variant_set {
        (v.clone(), provided_channels(v))
    } else {
        let id = req.session_id.as_deref().unwrap_or_default();
        let session = app.sessions.get(id).ok_or_else(|| unknown_session(id))?;
        if session.selections.is_empty() {
            (session.variants.clone(), BTreeSet::from([Channel::Original]))
        } else {
            session.selected_variants()
        }
    };
    let channels = req
        .channels
        .clone()
        .map(BTreeSet::from_iter)
        .unwrap_or(default_channels);
    if channels.is_empty() {
        return Err(ApiError::bad_request("channels must not be empty"));
    }
    let cfg = request_config(&app, channels, req.k, req.normalization);
    let state = app.clone();
    let (lists, fused, warnings) = blocking(move || Ok(search_set(&state, &variants, &cfg))).await?;
    Ok(Json(SearchResponse {
        topic_id: fused.topic_id,
        channels: lists.into_iter().map(|(c, l)| (c, l.entries().to_vec())).collect(),
        fused: fused.entries().to_vec(),
        warnings,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportRequest {
    pub session_ids: Vec<String>,
    pub run_tag: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub normalization: Option<Normalization>,
}

/// Checks the export preconditions and returns the sessions in request order.
pub(crate) fn check_export(app: &AppState, req: &ExportRequest) -> AppResult<Vec<Session>> {
    validate_tag(&req.run_tag).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadRunTag", e.to_string()))?;
    if req.session_ids.is_empty() {
        return Err(ApiError::bad_request("no sessions given"));
    }
    let sessions = req
        .session_ids
        .iter()
        .map(|id| app.sessions.get(id).ok_or_else(|| unknown_session(id)))
        .collect::<AppResult<Vec<_>>>()?;
    let mut seen = HashSet::new();
    if let Some(dup) = sessions.iter().find(|s| !seen.insert(s.topic.id)) {
        return Err(ApiError::bad_request(format!(
            "topic {} appears in more than one session",
            dup.topic.id
        )));
    }
    let incomplete: Vec<String> = sessions
        .iter()
        .filter(|s| s.selections.is_empty())
        .map(|s| format!("{} (topic {})", s.session_id, s.topic.id))
        .collect();
    if !incomplete.is_empty() {
        return Err(ApiError::conflict(
            "IncompleteSelections",
            format!("no selection recorded for {}", incomplete.join(", ")),
        ));
    }
    let violations: Vec<String> = sessions
        .iter()
        .flat_map(|s| {
            s.oov_violations(&app.clients.bank)
                .into_iter()
                .map(move |(c, terms)| format!("topic {} {c}: {}", s.topic.id, terms.join(", ")))
        })
        .collect();
    if !violations.is_empty() {
        return Err(ApiError::conflict("OovViolation", violations.join("; ")));
    }
    Ok(sessions)
}

/// Searches the selected queries of every session and writes the run.
pub(crate) fn export_run(app: &AppState, req: &ExportRequest, sessions: &[Session]) -> AppResult<Vec<u8>> {
    let mut run = Run::new(req.run_tag.clone()).map_err(|e| ApiError::bad_request(e.to_string()))?;
    for s in sessions {
        let (variants, channels) = s.selected_variants();
        let cfg = request_config(app, channels, req.k, req.normalization);
        let (_, fused, _) = search_set(app, &variants, &cfg);
        run.insert(fused.with_tag(req.run_tag.clone()));
    }
    Ok(write_run(&run))
}

pub async fn manual_export(State(app): Shared, body: Bytes) -> AppResult<Response> {
    let req: ExportRequest = parse_body(&body)?;
    if app.stores.text.is_none() {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "StoreUnavailable",
            "no embedding store is loaded",
        ));
    }
    let sessions = check_export(&app, &req)?;
    let state = app.clone();
    let bytes = blocking(move || export_run(&state, &req, &sessions)).await?;
    Ok(text_response(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuseRequest {
    /// Run files, verbatim.
    pub runs: Vec<String>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub cutoff: Option<usize>,
    pub tag: String,
}

pub async fn fuse(body: Bytes) -> AppResult<Response> {
    let req: FuseRequest = parse_body(&body)?;
    let runs = req
        .runs
        .iter()
        .enumerate()
        .map(|(i, r)| read_run(r.as_bytes()).map_err(|e| ApiError::bad_request(format!("run {i}: {e}"))))
        .collect::<AppResult<Vec<Run>>>()?;
    let weights = req.weights.clone().unwrap_or_else(|| vec![1.0; runs.len()]);
    let mut spec = FusionSpec::new(weights, req.normalization).map_err(|e| ApiError::bad_request(e.to_string()))?;
    if let Some(c) = req.cutoff {
        spec = spec.with_cutoff(c);
    }
    validate_tag(&req.tag).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadRunTag", e.to_string()))?;
    let fused = fuse_runs(&runs, &spec, &req.tag).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(text_response(write_run(&fused)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRequest {
    pub run: String,
    pub qrels: String,
    #[serde(default)]
    pub metric: Option<String>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

pub async fn eval(body: Bytes) -> AppResult<Json<EvalReport>> {
    let req: EvalRequest = parse_body(&body)?;
    let run = read_run(req.run.as_bytes()).map_err(|e| ApiError::bad_request(format!("run: {e}")))?;
    let qrels = parse_qrels(req.qrels.as_bytes()).map_err(|e| ApiError::bad_request(format!("qrels: {e}")))?;
    if qrels.is_empty() {
        return Err(ApiError::bad_request("qrels are empty"));
    }
    let metric: Metric = req
        .metric
        .as_deref()
        .map(str::parse)
        .transpose()
        .map_err(ApiError::bad_request)?
        .unwrap_or_default();
    let cfg = EvalConfig {
        epsilon: req.epsilon.unwrap_or(EvalConfig::default().epsilon),
    };
    cfg.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(evaluate_run_with(&run, &qrels, metric, &cfg)))
}
