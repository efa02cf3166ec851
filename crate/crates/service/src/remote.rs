//! Blocking HTTP clients for external generator and embedding backends.
//!
//! Wire protocol (JSON bodies):
//!
//! | endpoint            | request                                        | response                 |
//! |---------------------|------------------------------------------------|--------------------------|
//! | `POST /t2t`         | `{"query", "concepts", "oov", "n"}`            | `{"texts": [str]}`       |
//! | `POST /t2i`         | `{"prompt", "n", "seed"}`                      | `{"images": [base64]}`   |
//! | `POST /i2t`         | `{"image": base64}`                            | `{"caption": str}`       |
//! | `POST /embed/text`  | `{"texts": [str]}`                             | `{"vectors": [[f32]]}`   |
//! | `POST /embed/image` | `{"images": [base64]}`                         | `{"vectors": [[f32]]}`   |

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use gar_core::generation::{
    Captioner, ClientError, Embedder, GeneratedImage, ImageGenerator, RewriteRequest, TextRewriter,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct TextsResponse {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImageRequest {
    pub prompt: String,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImagesResponse {
    pub images: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub image: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub caption: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedTextRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedImageRequest {
    pub images: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VectorsResponse {
    pub vectors: Vec<Vec<f32>>,
}

/// Counting gate on concurrent requests to one endpoint.
#[derive(Debug)]
pub struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        InFlightGuard { gate: self }
    }

    pub fn active(&self) -> usize {
        *self.active.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct InFlightGuard<'a> {
    gate: &'a InFlight,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut active = self.gate.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.gate.freed.notify_one();
    }
}

/// One backend base URL with its own in-flight cap.
#[derive(Debug, Clone)]
pub struct Endpoint {
    base: String,
    agent: ureq::Agent,
    gate: Arc<InFlight>,
}

impl Endpoint {
    pub fn new(base: impl Into<String>, max_in_flight: usize) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build(),
            gate: Arc::new(InFlight::new(max_in_flight)),
        }
    }

    pub fn gate(&self) -> &InFlight {
        &self.gate
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, ClientError> {
        let _slot = self.gate.acquire();
        let url = format!("{}{}", self.base, path);
        match self.agent.post(&url).send_json(body) {
            Ok(resp) => resp
                .into_json()
                .map_err(|e| ClientError::Protocol(format!("{url}: {e}"))),
            Err(ureq::Error::Status(code, resp)) => {
                let detail = resp.into_string().unwrap_or_default();
                Err(ClientError::Backend(format!("{url}: HTTP {code}: {detail}")))
            }
            Err(e) => Err(ClientError::Transport(format!("{url}: {e}"))),
        }
    }
}

fn decode_b64(s: &str) -> Result<Vec<u8>, ClientError> {
    STANDARD
        .decode(s)
        .map_err(|e| ClientError::Protocol(format!("bad base64 image: {e}")))
}

#[derive(Debug, Clone)]
pub struct RemoteRewriter(pub Endpoint);

impl TextRewriter for RemoteRewriter {
    fn rewrite(&self, request: &RewriteRequest) -> Result<Vec<String>, ClientError> {
        Ok(self.0.post::<_, TextsResponse>("/t2t", request)?.texts)
    }
}

/// Image `i` is recorded with seed `seed + i` and the request prompt.
#[derive(Debug, Clone)]
pub struct RemoteImageGenerator(pub Endpoint);

impl ImageGenerator for RemoteImageGenerator {
    fn generate(&self, prompt: &str, n: usize, seed: u64) -> Result<Vec<GeneratedImage>, ClientError> {
        let body = ImageRequest {
            prompt: prompt.to_string(),
            n,
            seed,
        };
        let resp: ImagesResponse = self.0.post("/t2i", &body)?;
        resp.images
            .iter()
            .enumerate()
            .map(|(i, b64)| {
                Ok(GeneratedImage {
                    png: decode_b64(b64)?,
                    provenance_prompt: prompt.to_string(),
                    seed: seed.wrapping_add(i as u64),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RemoteCaptioner(pub Endpoint);

impl Captioner for RemoteCaptioner {
    fn caption(&self, image: &GeneratedImage) -> Result<String, ClientError> {
        let body = CaptionRequest {
            image: STANDARD.encode(&image.png),
        };
        Ok(self.0.post::<_, CaptionResponse>("/i2t", &body)?.caption)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteEmbedder(pub Endpoint);

fn check_count(vectors: Vec<Vec<f32>>, expected: usize) -> Result<Vec<Vec<f32>>, ClientError> {
    if vectors.len() != expected {
        return Err(ClientError::Protocol(format!(
            "expected {expected} vectors, got {}",
            vectors.len()
        )));
    }
    Ok(vectors)
}

impl Embedder for RemoteEmbedder {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError> {
        let body = EmbedTextRequest { texts: texts.to_vec() };
        check_count(
            self.0.post::<_, VectorsResponse>("/embed/text", &body)?.vectors,
            texts.len(),
        )
    }

    fn embed_images(&self, images: &[GeneratedImage]) -> Result<Vec<Vec<f32>>, ClientError> {
        let body = EmbedImageRequest {
            images: images.iter().map(|i| STANDARD.encode(&i.png)).collect(),
        };
        check_count(
            self.0.post::<_, VectorsResponse>("/embed/image", &body)?.vectors,
            images.len(),
        )
    }
}
