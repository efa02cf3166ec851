//! Deterministic stand-ins for the generative and embedding backends.
//!
//! Mock images are 64×64 RGB PNGs with pseudo-random pixels and an `iTXt`
//! chunk carrying the prompt, so any component that only sees the bytes
//! (e.g. across the HTTP protocol) can still recover the provenance.

use std::collections::HashMap;
use std::io::Cursor;

use super::{
    token_hash_embed, Captioner, ClientError, Embedder, GeneratedImage, ImageGenerator, RewriteRequest, TextRewriter,
};
use crate::hash::{fnv1a64, XorShift64Star};

const MOCK_IMAGE_SIDE: u32 = 64;
const PROMPT_KEYWORD: &str = "prompt";

/// Rewrites by phrase substitution, or returns fixture rewrites for known queries.
#[derive(Debug, Clone, Default)]
pub struct MockRewriter {
    substitutions: Vec<(String, String)>,
    fixtures: HashMap<String, Vec<String>>,
}

impl MockRewriter {
    pub fn new<I, A, B>(substitutions: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut substitutions: Vec<(String, String)> = substitutions
            .into_iter()
            .map(|(a, b)| (a.into().to_lowercase(), b.into()))
            .filter(|(a, _)| !a.trim().is_empty())
            .collect();
        // longest phrase first, then lexicographic, so overlapping entries resolve the same way every time
        substitutions.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Self {
            substitutions,
            fixtures: HashMap::new(),
        }
    }

    /// Parses a JSON object mapping phrase to replacement.
    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let table: HashMap<String, String> = serde_json::from_str(json)?;
        Ok(Self::new(table))
    }

    /// Queries listed here are answered with the given rewrites instead.
    pub fn with_fixtures(mut self, fixtures: HashMap<String, Vec<String>>) -> Self {
        self.fixtures = fixtures;
        self
    }

    pub fn substitute(&self, query: &str) -> String {
        let mut text = query.to_string();
        for (phrase, replacement) in &self.substitutions {
            text = replace_phrase(&text, phrase, replacement);
        }
        text.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

/// Case-insensitive replacement of whole-word occurrences of `phrase`.
fn replace_phrase(text: &str, phrase: &str, replacement: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let lower: Vec<char> = chars.iter().map(|c| c.to_lowercase().next().unwrap_or(*c)).collect();
    let pat: Vec<char> = phrase.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let end = i + pat.len();
        let boundary_before = i == 0 || !lower[i - 1].is_alphanumeric();
        let boundary_after = end >= chars.len() || !lower[end].is_alphanumeric();
        if end <= chars.len() && boundary_before && boundary_after && lower[i..end] == pat[..] {
            out.push_str(replacement);
            i = end;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

impl TextRewriter for MockRewriter {
    fn rewrite(&self, request: &RewriteRequest) -> Result<Vec<String>, ClientError> {
        if let Some(fixed) = self.fixtures.get(&request.query) {
            return Ok(fixed.iter().take(request.n).cloned().collect());
        }
        Ok(vec![self.substitute(&request.query); request.n])
    }
}

/// Builds the mock PNG for `prompt` and `seed`.
pub fn mock_png(prompt: &str, seed: u64) -> Vec<u8> {
    let side = MOCK_IMAGE_SIDE as usize;
    let mut rng = XorShift64Star::new(fnv1a64(prompt.as_bytes()) ^ seed);
    let mut pixels = Vec::with_capacity(side * side * 3);
    while pixels.len() < side * side * 3 {
        let word = rng.next_u64().to_le_bytes();
        let take = (side * side * 3 - pixels.len()).min(8);
        pixels.extend_from_slice(&word[..take]);
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, MOCK_IMAGE_SIDE, MOCK_IMAGE_SIDE);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_itxt_chunk(PROMPT_KEYWORD.to_string(), prompt.to_string())
            .expect("itxt keyword is valid");
        let mut writer = enc.write_header().expect("in-memory png header");
        writer.write_image_data(&pixels).expect("in-memory png data");
    }
    out
}

/// Recovers the prompt embedded by [`mock_png`].
pub fn decode_png_prompt(png_bytes: &[u8]) -> Option<String> {
    let decoder = png::Decoder::new(Cursor::new(png_bytes));
    let reader = decoder.read_info().ok()?;
    reader
        .info()
        .utf8_text
        .iter()
        .find(|c| c.keyword == PROMPT_KEYWORD)
        .and_then(|c| c.get_text().ok())
}

/// Image `i` of a request uses seed `seed + i`; pixels come from xorshift64*
/// seeded with `FNV-1a(prompt) ^ seed`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockImageGenerator;

impl ImageGenerator for MockImageGenerator {
    fn generate(&self, prompt: &str, n: usize, seed: u64) -> Result<Vec<GeneratedImage>, ClientError> {
        Ok((0..n as u64)
            .map(|i| {
                let seed = seed.wrapping_add(i);
                GeneratedImage {
                    png: mock_png(prompt, seed),
                    provenance_prompt: prompt.to_string(),
                    seed,
                }
            })
            .collect())
    }
}

/// Captions `"a photo of <prompt>"` unless the prompt has a fixture caption.
#[derive(Debug, Clone, Default)]
pub struct MockCaptioner {
    fixtures: HashMap<String, String>,
}

impl MockCaptioner {
    /// `fixtures` maps a generation prompt to its caption.
    pub fn with_fixtures(fixtures: HashMap<String, String>) -> Self {
        Self { fixtures }
    }
}

fn image_prompt(image: &GeneratedImage) -> Result<String, ClientError> {
    if !image.provenance_prompt.is_empty() {
        return Ok(image.provenance_prompt.clone());
    }
    decode_png_prompt(&image.png).ok_or_else(|| ClientError::Backend("image carries no prompt".into()))
}

impl Captioner for MockCaptioner {
    fn caption(&self, image: &GeneratedImage) -> Result<String, ClientError> {
        let prompt = image_prompt(image)?;
        Ok(self
            .fixtures
            .get(&prompt)
            .cloned()
            .unwrap_or_else(|| format!("a photo of {prompt}")))
    }
}

/// Token-hash text embedder; an image embeds as its provenance prompt.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    pub dim: usize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Embedder for MockEmbedder {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError> {
        texts
            .iter()
            .map(|t| {
                token_hash_embed(t, self.dim)
                    .map(|v| v.into_inner())
                    .map_err(|e| ClientError::Backend(e.to_string()))
            })
            .collect()
    }

    fn embed_images(&self, images: &[GeneratedImage]) -> Result<Vec<Vec<f32>>, ClientError> {
        let prompts = images.iter().map(image_prompt).collect::<Result<Vec<_>, _>>()?;
        self.embed_texts(&prompts)
    }
}
