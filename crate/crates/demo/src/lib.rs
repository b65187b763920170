//! wasm-bindgen bindings for the static page in `www/`.
//!
//! The logic lives in [`ops`] as plain Rust so it can be tested natively;
//! the exported functions only convert errors.

use wasm_bindgen::prelude::*;

pub mod ops;

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// Side length of every glyph bitmap.
#[wasm_bindgen]
pub fn glyph_size() -> usize {
    glyphsim::glyph::CANVAS
}

/// One source glyph followed by `variants` augmented copies, each
/// `glyph_size()²` bytes of 0 (background) or 255 (ink).
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn augmentation_preview(
    seed: u32,
    glyph: u32,
    variants: u32,
    rotation_deg: f64,
    shear: f64,
    zoom: f64,
    translation_px: f64,
    probability: f64,
) -> Result<Vec<u8>, JsError> {
    let params = ops::symmetric_params(rotation_deg, shear, zoom, translation_px, probability);
    ops::augmentation_preview(u64::from(seed), glyph as usize, variants as usize, &params).map_err(js)
}

/// Learning rate at every step `0..=total`.
#[wasm_bindgen]
pub fn lr_curve(warmup: u32, total: u32, base_lr: f64) -> Result<Vec<f64>, JsError> {
    ops::lr_curve(u64::from(warmup), u64::from(total), base_lr).map_err(js)
}

/// NDCG@k of a ranking given the similarity level of each candidate in
/// ranked order (1 closest to 3 distant, 4 unrelated).
#[wasm_bindgen]
pub fn ndcg_from_levels(levels: Vec<u8>, k: u32) -> Result<f64, JsError> {
    ops::ndcg_from_levels(&levels, k as usize).map_err(js)
}

/// `[rho, p]`; `p` is NaN when undefined.
#[wasm_bindgen]
pub fn spearman(x: Vec<f64>, y: Vec<f64>) -> Result<Vec<f64>, JsError> {
    ops::spearman(&x, &y).map(|(r, p)| vec![r, p.unwrap_or(f64::NAN)]).map_err(js)
}

/// `[cosine similarity, glyph distance]` of two vectors after L2
/// normalization.
#[wasm_bindgen]
pub fn similarity_and_distance(a: Vec<f32>, b: Vec<f32>) -> Result<Vec<f64>, JsError> {
    ops::similarity_and_distance(&a, &b).map(|(s, d)| vec![s, d]).map_err(js)
}
