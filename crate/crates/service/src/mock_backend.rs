//! The generator wire protocol served from in-process backends, normally
//! the deterministic mocks. Lets the remote clients be exercised end to end.

use std::sync::Arc;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use gar_core::generation::{ClientError, GeneratedImage, RewriteRequest};
use gar_core::pipeline::PipelineClients;

use crate::error::ApiError;
use crate::remote::{
    CaptionRequest, CaptionResponse, EmbedImageRequest, EmbedTextRequest, ImageRequest, ImagesResponse, TextsResponse,
    VectorsResponse,
};

type Backends = Arc<PipelineClients>;

fn backend_error(e: ClientError) -> ApiError {
    ApiError::internal("BackendError", e.to_string())
}

fn image_from_b64(s: &str) -> Result<GeneratedImage, ApiError> {
    let png = STANDARD
        .decode(s)
        .map_err(|e| ApiError::bad_request(format!("bad base64 image: {e}")))?;
    Ok(GeneratedImage {
        png,
        provenance_prompt: String::new(),
        seed: 0,
    })
}

async fn t2t(State(b): State<Backends>, Json(req): Json<RewriteRequest>) -> Result<Json<TextsResponse>, ApiError> {
    let texts = b.generators.rewriter.rewrite(&req).map_err(backend_error)?;
    Ok(Json(TextsResponse { texts }))
}

async fn t2i(State(b): State<Backends>, Json(req): Json<ImageRequest>) -> Result<Json<ImagesResponse>, ApiError> {
    let images = b
        .generators
        .images
        .generate(&req.prompt, req.n, req.seed)
        .map_err(backend_error)?;
    Ok(Json(ImagesResponse {
        images: images.iter().map(|i| STANDARD.encode(&i.png)).collect(),
    }))
}

async fn i2t(State(b): State<Backends>, Json(req): Json<CaptionRequest>) -> Result<Json<CaptionResponse>, ApiError> {
    let image = image_from_b64(&req.image)?;
    let caption = b.generators.captioner.caption(&image).map_err(backend_error)?;
    Ok(Json(CaptionResponse { caption }))
}

async fn embed_text(
    State(b): State<Backends>,
    Json(req): Json<EmbedTextRequest>,
) -> Result<Json<VectorsResponse>, ApiError> {
    let vectors = b.embedder.embed_texts(&req.texts).map_err(backend_error)?;
    Ok(Json(VectorsResponse { vectors }))
}

async fn embed_image(
    State(b): State<Backends>,
    Json(req): Json<EmbedImageRequest>,
) -> Result<Json<VectorsResponse>, ApiError> {
    let images = req
        .images
        .iter()
        .map(|s| image_from_b64(s))
        .collect::<Result<Vec<_>, _>>()?;
    let vectors = b.embedder.embed_images(&images).map_err(backend_error)?;
    Ok(Json(VectorsResponse { vectors }))
}

pub fn mock_backend_router(backends: PipelineClients) -> Router {
    Router::new()
        .route("/t2t", post(t2t))
        .route("/t2i", post(t2i))
        .route("/i2t", post(i2t))
        .route("/embed/text", post(embed_text))
        .route("/embed/image", post(embed_image))
        .with_state(Arc::new(backends))
}
