use glyphsim::dataset::synth::sample_glyphs;
use glyphsim::dataset::{apply_affine_augmentation, AugmentationParams, SimilarityLevelTable, UNRELATED_LEVEL};
use glyphsim::evaluation::{ndcg_at_k, spearman_rho, RankingGroundTruth};
use glyphsim::glyph::{Bitmap, GlyphImage, CANVAS};
use glyphsim::seed::{rng_for, str_id};
use glyphsim::similarity::{glyph_distance, glyph_similarity};
use glyphsim::training::lr_schedule;

type Result<T> = std::result::Result<T, String>;

/// Sliders are symmetric: rotation ±deg, shear ±k, zoom 1±z, shift ±px.
pub fn symmetric_params(rotation_deg: f64, shear: f64, zoom: f64, translation_px: f64, probability: f64) -> AugmentationParams {
    AugmentationParams {
        rotation_range: (-rotation_deg.abs(), rotation_deg.abs()),
        shear_range: (-shear.abs(), shear.abs()),
        zoom_range: (1.0 - zoom.abs(), 1.0 + zoom.abs()),
        translation_range: (-translation_px.abs(), translation_px.abs()),
        per_transform_probability: probability,
        ..AugmentationParams::default()
    }
}

fn bytes(bm: &Bitmap, out: &mut Vec<u8>) {
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            out.push(if bm.get(x, y) { 255 } else { 0 });
        }
    }
}

pub const PREVIEW_GLYPHS: usize = 12;

pub fn augmentation_preview(seed: u64, glyph: usize, variants: usize, params: &AugmentationParams) -> Result<Vec<u8>> {
    params.validate().map_err(|e| e.to_string())?;
    if glyph >= PREVIEW_GLYPHS {
        return Err(format!("glyph index {glyph} outside 0..{PREVIEW_GLYPHS}"));
    }
    let glyphs = sample_glyphs(seed, PREVIEW_GLYPHS).map_err(|e| e.to_string())?;
    let img = GlyphImage::new(glyphs[glyph].clone(), 0, "preview", 0).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity((variants + 1) * CANVAS * CANVAS);
    bytes(&img.pixels, &mut out);
    let mut rng = rng_for(seed, &[str_id("preview"), glyph as u64]);
    for _ in 0..variants {
        bytes(&apply_affine_augmentation(&img, params, &mut rng).glyph.pixels, &mut out);
    }
    Ok(out)
}

pub fn lr_curve(warmup: u64, total: u64, base_lr: f64) -> Result<Vec<f64>> {
    (0..=total)
        .map(|s| lr_schedule(s, warmup, total, base_lr).map_err(|e| e.to_string()))
        .collect()
}

pub fn ndcg_from_levels(levels: &[u8], k: usize) -> Result<f64> {
    let names: Vec<String> = (0..levels.len()).map(|i| format!("c{i}")).collect();
    let mut table = SimilarityLevelTable::new();
    for (n, &l) in names.iter().zip(levels) {
        if l != UNRELATED_LEVEL {
            table.insert("query", n, l).map_err(|e| e.to_string())?;
        }
    }
    let ranked: Vec<&str> = names.iter().map(String::as_str).collect();
    let gt = RankingGroundTruth::new(table);
    ndcg_at_k(&ranked, "query", &gt, k).map(|n| n.value).map_err(|e| e.to_string())
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, Option<f64>)> {
    if x.len() != y.len() {
        return Err(format!("length mismatch: {} vs {}", x.len(), y.len()));
    }
    let pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    spearman_rho(&pairs).map(|s| (s.rho, s.p_value)).map_err(|e| e.to_string())
}

fn normalized(v: &[f32]) -> Result<Vec<f32>> {
    let n = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err("vector must be finite and nonzero".into());
    }
    Ok(v.iter().map(|x| (f64::from(*x) / n) as f32).collect())
}

pub fn similarity_and_distance(a: &[f32], b: &[f32]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(format!("length mismatch: {} vs {}", a.len(), b.len()));
    }
    let (a, b) = (normalized(a)?, normalized(b)?);
    let s = glyph_similarity(&a, &b).map_err(|e| e.to_string())?;
    let d = glyph_distance(&a, &b).map_err(|e| e.to_string())?;
    Ok((s, d))
}
