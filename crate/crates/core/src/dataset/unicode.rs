//! Rendering codepoint ranges from user-supplied fonts onto the glyph canvas.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ab_glyph::{Font, FontVec, PxScale};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glyph::{Bitmap, GlyphImage, CANVAS};
use crate::parallel;

use super::{ClassInfo, Dataset, Split};

/// Largest allowed ink extent, as a fraction of the canvas side.
pub const FIT_FRACTION: f64 = 0.9;

const REFERENCE_PX: f32 = 100.0;
const FIT_ATTEMPTS: usize = 8;

/// A parsed font file.
pub struct FontGlyphs {
    pub name: String,
    font: FontVec,
}

impl fmt::Debug for FontGlyphs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FontGlyphs").field("name", &self.name).finish()
    }
}

impl FontGlyphs {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let font = FontVec::try_from_vec(bytes)
            .map_err(|e| Error::Font(format!("{}: {e}", path.display())))?;
        Ok(Self {
            name: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            font,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmissionReason {
    /// Surrogate or out-of-range value.
    NotAScalar,
    /// The font maps the codepoint to `.notdef`.
    MissingGlyph,
    /// The glyph exists but leaves no ink.
    Blank,
}

/// A codepoint that produced no image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Omission {
    pub script_id: String,
    pub codepoint: u32,
    pub reason: OmissionReason,
}

fn rasterize(font: &FontVec, id: ab_glyph::GlyphId, px: f32) -> Option<(Vec<bool>, usize, usize)> {
    let outlined = font.outline_glyph(id.with_scale(PxScale::from(px)))?;
    let b = outlined.px_bounds();
    let (w, h) = (b.width().ceil() as usize, b.height().ceil() as usize);
    if w == 0 || h == 0 {
        return None;
    }
    let mut ink = vec![false; w * h];
    outlined.draw(|x, y, c| {
        let (x, y) = (x as usize, y as usize);
        if x < w && y < h && c >= 0.5 {
            ink[y * w + x] = true;
        }
    });
    Some((ink, w, h))
}

/// Ink bounding box `(x0, y0, x1, y1)`, inclusive.
fn ink_box(ink: &[bool], w: usize) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in ink.iter().enumerate().filter(|(_, &v)| v) {
        let (x, y) = (i % w, i / w);
        bbox = Some(match bbox {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    bbox
}

/// Renders one codepoint with its ink box scaled to fit `FIT_FRACTION` of
/// the canvas and centered on it.
pub fn render_unicode_glyph(codepoint: u32, font: &FontGlyphs) -> std::result::Result<Bitmap, OmissionReason> {
    let ch = char::from_u32(codepoint).ok_or(OmissionReason::NotAScalar)?;
    let id = font.font.glyph_id(ch);
    if id.0 == 0 {
        return Err(OmissionReason::MissingGlyph);
    }
    let limit = (FIT_FRACTION * CANVAS as f64).floor() as usize;

    let (ink, w, _) = rasterize(&font.font, id, REFERENCE_PX).ok_or(OmissionReason::Blank)?;
    let (x0, y0, x1, y1) = ink_box(&ink, w).ok_or(OmissionReason::Blank)?;
    let side = (x1 - x0 + 1).max(y1 - y0 + 1);
    let mut px = REFERENCE_PX * limit as f32 / side as f32;
    let mut fitted = None;
    for _ in 0..FIT_ATTEMPTS {
        let Some((ink, w, _)) = rasterize(&font.font, id, px) else {
            break;
        };
        let Some(bb) = ink_box(&ink, w) else {
            break;
        };
        let side = (bb.2 - bb.0 + 1).max(bb.3 - bb.1 + 1);
        if side <= limit {
            fitted = Some((ink, w, bb));
            break;
        }
        px *= limit as f32 / side as f32 * 0.995;
    }
    let (ink, w, (x0, y0, x1, y1)) = fitted.ok_or(OmissionReason::Blank)?;

    let center = (CANVAS as f64 - 1.0) / 2.0;
    let dx = (center - (x0 + x1) as f64 / 2.0).round() as i64;
    let dy = (center - (y0 + y1) as f64 / 2.0).round() as i64;
    let mut bm = Bitmap::blank();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if ink[y * w + x] {
                bm.set((x as i64 + dx) as usize, (y as i64 + dy) as usize, true);
            }
        }
    }
    Ok(bm)
}

/// One line of a ranges file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeEntry {
    pub script_id: String,
    /// Inclusive codepoint intervals.
    pub ranges: Vec<(u32, u32)>,
    pub font: String,
}

fn parse_hex(s: &str) -> Result<u32> {
    let t = s.trim();
    let t = t
        .strip_prefix("U+")
        .or_else(|| t.strip_prefix("u+"))
        .or_else(|| t.strip_prefix("0x"))
        .unwrap_or(t);
    u32::from_str_radix(t, 16).map_err(|_| Error::Manifest(format!("bad codepoint '{s}'")))
}

/// Parses `<script>\t<start>-<end>[,<start>-<end>...]\t<font file>` lines.
pub fn parse_ranges(text: &str) -> Result<Vec<RangeEntry>> {
    let mut out: Vec<RangeEntry> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [script, spans, font] = cols[..] else {
            return Err(Error::Manifest(format!(
                "ranges line {}: expected three tab-separated fields",
                n + 1
            )));
        };
        if out.iter().any(|e| e.script_id == script) {
            return Err(Error::Manifest(format!("script '{script}' listed twice")));
        }
        let mut ranges = Vec::new();
        for span in spans.split(',') {
            let (a, b) = match span.split_once('-') {
                Some((a, b)) => (parse_hex(a)?, parse_hex(b)?),
                None => {
                    let c = parse_hex(span)?;
                    (c, c)
                }
            };
            if a > b {
                return Err(Error::Manifest(format!("ranges line {}: empty interval {span}", n + 1)));
            }
            ranges.push((a, b));
        }
        out.push(RangeEntry {
            script_id: script.to_string(),
            ranges,
            font: font.trim().to_string(),
        });
    }
    Ok(out)
}

/// Rendered benchmark plus the codepoints that were skipped.
#[derive(Debug, Clone)]
pub struct UnicodeDataset {
    pub dataset: Dataset,
    pub omissions: Vec<Omission>,
}

/// Renders every codepoint of every script in the ranges file. Images land
/// in `out/<script>/U+XXXX/01.png` (the Omniglot layout, one instance per
/// character) next to `manifest.tsv` and `omissions.tsv`.
pub fn build_unicode_dataset(ranges: &Path, fonts: &Path, out: &Path) -> Result<UnicodeDataset> {
    let text = std::fs::read_to_string(ranges).map_err(|e| Error::io(ranges, e))?;
    let entries = parse_ranges(&text)?;
    let mut loaded: BTreeMap<&str, FontGlyphs> = BTreeMap::new();
    for e in &entries {
        if !loaded.contains_key(e.font.as_str()) {
            loaded.insert(&e.font, FontGlyphs::load(&fonts.join(&e.font))?);
        }
    }

    let mut dataset = Dataset::empty(Split::Evaluation);
    let mut omissions = Vec::new();
    let mut class_id = 0u32;
    for e in &entries {
        let font = &loaded[e.font.as_str()];
        let cps: Vec<u32> = e.ranges.iter().flat_map(|&(a, b)| a..=b).collect();
        let rendered = parallel::map(&cps, |&cp| render_unicode_glyph(cp, font));
        let mut count = 0;
        for (&cp, r) in cps.iter().zip(rendered) {
            match r {
                Ok(bm) => {
                    dataset.classes.push(ClassInfo {
                        class_id,
                        script_id: e.script_id.clone(),
                        name: format!("U+{cp:04X}"),
                    });
                    dataset
                        .glyphs
                        .push(GlyphImage::new(bm, class_id, e.script_id.clone(), 0)?);
                    class_id += 1;
                    count += 1;
                }
                Err(reason) => omissions.push(Omission {
                    script_id: e.script_id.clone(),
                    codepoint: cp,
                    reason,
                }),
            }
        }
        if count == 0 {
            return Err(Error::EmptyScript(e.script_id.clone()));
        }
        dataset.script_ids.push(e.script_id.clone());
    }

    super::write_omniglot_layout(&dataset, out)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest: String = dataset
        .script_ids
        .iter()
        .map(|s| format!("{s}\t{}\n", Split::Evaluation))
        .collect();
    let mpath = out.join("manifest.tsv");
    std::fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    let mut om = String::from("script_id\tcodepoint\treason\n");
    for o in &omissions {
        let reason = serde_json::to_value(o.reason)?;
        om.push_str(&format!(
            "{}\tU+{:04X}\t{}\n",
            o.script_id,
            o.codepoint,
            reason.as_str().unwrap_or_default()
        ));
    }
    let opath = out.join("omissions.tsv");
    std::fs::write(&opath, om).map_err(|e| Error::io(&opath, e))?;
    Ok(UnicodeDataset { dataset, omissions })
}
