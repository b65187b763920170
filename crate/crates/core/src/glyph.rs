//! Binary glyph rasters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of every glyph canvas.
pub const CANVAS: usize = 105;
const PIXELS: usize = CANVAS * CANVAS;
const WORDS: usize = PIXELS.div_ceil(64);

/// A 105×105 bit raster, ink = `true`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bitmap {
    bits: Box<[u64]>,
}

impl Default for Bitmap {
    fn default() -> Self {
        Self::blank()
    }
}

impl std::fmt::Debug for Bitmap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bitmap")
            .field("ink", &self.ink_count())
            .field("bbox", &self.bounding_box())
            .finish()
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x0 + self.x1) as f64 / 2.0,
            (self.y0 + self.y1) as f64 / 2.0,
        )
    }
}

impl Bitmap {
    pub fn blank() -> Self {
        Self {
            bits: vec![0u64; WORDS].into_boxed_slice(),
        }
    }

    /// Builds a bitmap from row-major grayscale in [0,1] where 1 is ink.
    /// Values strictly above `threshold` become ink.
    pub fn from_intensity(values: &[f32], threshold: f32) -> Self {
        assert_eq!(values.len(), PIXELS);
        let mut bm = Self::blank();
        for (i, &v) in values.iter().enumerate() {
            if v > threshold {
                bm.bits[i / 64] |= 1 << (i % 64);
            }
        }
        bm
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = y * CANVAS + x;
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, ink: bool) {
        let i = y * CANVAS + x;
        if ink {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Signed lookup; out-of-canvas reads are background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        (0..CANVAS as i64).contains(&x) && (0..CANVAS as i64).contains(&y) && {
            self.get(x as usize, y as usize)
        }
    }

    pub fn ink_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut bb: Option<BoundingBox> = None;
        for y in 0..CANVAS {
            for x in 0..CANVAS {
                if self.get(x, y) {
                    let b = bb.get_or_insert(BoundingBox {
                        x0: x,
                        y0: y,
                        x1: x,
                        y1: y,
                    });
                    b.x0 = b.x0.min(x);
                    b.x1 = b.x1.max(x);
                    b.y0 = b.y0.min(y);
                    b.y1 = b.y1.max(y);
                }
            }
        }
        bb
    }

    /// Moves every pixel by (dx, dy); pixels leaving the canvas are dropped.
    pub fn shifted(&self, dx: i64, dy: i64) -> Self {
        let mut out = Self::blank();
        for y in 0..CANVAS {
            for x in 0..CANVAS {
                if self.get_signed(x as i64 - dx, y as i64 - dy) {
                    out.set(x, y, true);
                }
            }
        }
        out
    }

    /// Row-major pixel values as floats (ink = 1.0).
    pub fn to_f32(&self) -> Vec<f32> {
        (0..PIXELS)
            .map(|i| (self.bits[i / 64] >> (i % 64) & 1) as f32)
            .collect()
    }

    pub fn to_luma8(&self) -> image::GrayImage {
        // Omniglot convention: white background, black strokes.
        image::GrayImage::from_fn(CANVAS as u32, CANVAS as u32, |x, y| {
            if self.get(x as usize, y as usize) {
                image::Luma([0])
            } else {
                image::Luma([255])
            }
        })
    }

    /// Reads a PNG (any color type), converts to grayscale, resizes to the
    /// canvas if needed and binarizes: dark pixels (luma < 0.5) are ink.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let gray = img.to_luma32f();
        let gray = if gray.dimensions() != (CANVAS as u32, CANVAS as u32) {
            image::imageops::resize(
                &gray,
                CANVAS as u32,
                CANVAS as u32,
                image::imageops::FilterType::Nearest,
            )
        } else {
            gray
        };
        let ink: Vec<f32> = gray.pixels().map(|p| 1.0 - p.0[0]).collect();
        Ok(Self::from_intensity(&ink, 0.5))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.to_luma8().save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// ASCII rendering, handy in test failure messages.
    pub fn ascii(&self) -> String {
        let mut s = String::with_capacity(PIXELS + CANVAS);
        for y in 0..CANVAS {
            for x in 0..CANVAS {
                s.push(if self.get(x, y) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

/// Origin of an augmented glyph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_instance: u32,
    pub augmentation_index: u32,
}

/// One glyph instance with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphImage {
    pub pixels: Bitmap,
    pub class_id: u32,
    pub script_id: String,
    pub instance_id: u32,
    pub provenance: Option<Provenance>,
}

impl GlyphImage {
    /// Fails when the raster has no ink.
    pub fn new(
        pixels: Bitmap,
        class_id: u32,
        script_id: impl Into<String>,
        instance_id: u32,
    ) -> Result<Self> {
        if pixels.ink_count() == 0 {
            return Err(Error::InvalidGlyph("glyph has no ink pixels".into()));
        }
        Ok(Self {
            pixels,
            class_id,
            script_id: script_id.into(),
            instance_id,
            provenance: None,
        })
    }

    /// True for original (non-augmented) instances.
    pub fn is_genuine(&self) -> bool {
        self.provenance.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_and_count() {
        let mut bm = Bitmap::blank();
        bm.set(0, 0, true);
        bm.set(104, 104, true);
        bm.set(50, 7, true);
        assert!(bm.get(0, 0) && bm.get(104, 104) && bm.get(50, 7));
        assert_eq!(bm.ink_count(), 3);
        bm.set(50, 7, false);
        assert_eq!(bm.ink_count(), 2);
        let bb = bm.bounding_box().unwrap();
        assert_eq!((bb.x0, bb.y0, bb.x1, bb.y1), (0, 0, 104, 104));
    }

    #[test]
    fn shift_drops_pixels_off_canvas() {
        let mut bm = Bitmap::blank();
        bm.set(104, 10, true);
        bm.set(3, 3, true);
        let s = bm.shifted(2, 2);
        assert_eq!(s.ink_count(), 1);
        assert!(s.get(5, 5));
    }

    #[test]
    fn empty_glyph_rejected() {
        assert!(GlyphImage::new(Bitmap::blank(), 0, "x", 0).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let mut bm = Bitmap::blank();
        for i in 10..60 {
            bm.set(i, i / 2, true);
        }
        bm.save_png(&path).unwrap();
        assert_eq!(Bitmap::load_png(&path).unwrap(), bm);
    }
}
