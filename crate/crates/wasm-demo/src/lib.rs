//! Browser bindings for the demo page in `www/`.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn synthetic_topics() -> String {
    demo::synthetic_topics()
}

#[wasm_bindgen]
pub fn synthetic_search(query: &str, channels: &str, k: usize) -> Result<String, JsValue> {
    js(demo::synthetic_search(query, channels, k))
}

#[wasm_bindgen]
pub fn fuse_explorer(runs: &str, weights: &str, norm: &str, cutoff: usize) -> Result<String, JsValue> {
    js(demo::fuse_explorer(runs, weights, norm, cutoff))
}

#[wasm_bindgen]
pub fn xinfap_explorer(top_rate: f64, bottom_rate: f64, resamples: usize, seed: u64) -> Result<String, JsValue> {
    js(demo::xinfap_explorer(top_rate, bottom_rate, resamples, seed))
}
