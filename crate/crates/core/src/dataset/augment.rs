//! Random affine perturbations of binary glyphs.
//!
//! Rotation, shear, zoom and translation are each switched on independently
//! with a fixed probability, composed in that order about the canvas center
//! into one affine map, and applied by inverse mapping with nearest-neighbor
//! sampling so the output stays binary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glyph::{Bitmap, GlyphImage, CANVAS};

/// Resampling attempts before giving up on an augmentation that erased all ink.
pub const MAX_RETRIES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationParams {
    /// Degrees.
    pub rotation_range: (f64, f64),
    /// Horizontal shear factor.
    pub shear_range: (f64, f64),
    pub zoom_range: (f64, f64),
    /// Pixels, applied independently to x and y.
    pub translation_range: (f64, f64),
    pub per_transform_probability: f64,
    pub augmentations_per_instance: usize,
    /// Optional 3×3 dilation/erosion after the affine warp.
    pub photometric: bool,
}

impl Default for AugmentationParams {
    fn default() -> Self {
        Self {
            rotation_range: (-10.0, 10.0),
            shear_range: (-0.3, 0.3),
            zoom_range: (0.8, 1.2),
            translation_range: (-2.0, 2.0),
            per_transform_probability: 0.5,
            augmentations_per_instance: 8,
            photometric: false,
        }
    }
}

impl AugmentationParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.per_transform_probability) {
            return Err(Error::InvalidArgument(format!(
                "augmentation probability {} outside [0,1]",
                self.per_transform_probability
            )));
        }
        for (name, (lo, hi)) in [
            ("rotation", self.rotation_range),
            ("shear", self.shear_range),
            ("zoom", self.zoom_range),
            ("translation", self.translation_range),
        ] {
            if !(lo <= hi) {
                return Err(Error::InvalidArgument(format!("{name} range is empty")));
            }
        }
        if self.zoom_range.0 <= 0.0 {
            return Err(Error::InvalidArgument("zoom must be positive".into()));
        }
        Ok(())
    }

    /// Parameters that never change the image.
    pub fn identity() -> Self {
        Self {
            per_transform_probability: 0.0,
            ..Self::default()
        }
    }
}

/// A concrete draw of the four transforms; `None` means "not applied".
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AffineSpec {
    pub rotation_deg: Option<f64>,
    pub shear: Option<f64>,
    pub zoom: Option<f64>,
    pub translation: Option<(f64, f64)>,
}

impl AffineSpec {
    pub fn sample<R: Rng + ?Sized>(params: &AugmentationParams, rng: &mut R) -> Self {
        let p = params.per_transform_probability;
        let draw = |range: (f64, f64), rng: &mut R| -> Option<f64> {
            if rng.random::<f64>() < p {
                Some(if range.0 == range.1 {
                    range.0
                } else {
                    rng.random_range(range.0..=range.1)
                })
            } else {
                None
            }
        };
        let rotation_deg = draw(params.rotation_range, rng);
        let shear = draw(params.shear_range, rng);
        let zoom = draw(params.zoom_range, rng);
        let translation = draw(params.translation_range, rng).map(|tx| {
            let (lo, hi) = params.translation_range;
            let ty = if lo == hi { lo } else { rng.random_range(lo..=hi) };
            (tx, ty)
        });
        Self {
            rotation_deg,
            shear,
            zoom,
            translation,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation_deg.is_none()
            && self.shear.is_none()
            && self.zoom.is_none()
            && self.translation.is_none()
    }

    /// Forward linear part `zoom · shear · rotation` as a row-major 2×2.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        if let Some(deg) = self.rotation_deg {
            let (s, c) = deg.to_radians().sin_cos();
            m = mul([[c, -s], [s, c]], m);
        }
        if let Some(k) = self.shear {
            m = mul([[1.0, k], [0.0, 1.0]], m);
        }
        if let Some(z) = self.zoom {
            m = mul([[z, 0.0], [0.0, z]], m);
        }
        m
    }

    /// Warps `src` by this transform (pixel centers, origin at the canvas
    /// center, y pointing down).
    pub fn apply(&self, src: &Bitmap) -> Bitmap {
        if self.is_identity() {
            return src.clone();
        }
        let m = self.matrix();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ];
        let (tx, ty) = self.translation.unwrap_or((0.0, 0.0));
        let c = (CANVAS as f64 - 1.0) / 2.0;
        let mut out = Bitmap::blank();
        for y in 0..CANVAS {
            for x in 0..CANVAS {
                let qx = x as f64 - c - tx;
                let qy = y as f64 - c - ty;
                let sx = inv[0][0] * qx + inv[0][1] * qy + c;
                let sy = inv[1][0] * qx + inv[1][1] * qy + c;
                if src.get_signed(sx.round() as i64, sy.round() as i64) {
                    out.set(x, y, true);
                }
            }
        }
        out
    }
}

fn mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

fn morph(src: &Bitmap, dilate: bool) -> Bitmap {
    let mut out = Bitmap::blank();
    for y in 0..CANVAS as i64 {
        for x in 0..CANVAS as i64 {
            let mut any = false;
            let mut all = true;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let v = src.get_signed(x + dx, y + dy);
                    any |= v;
                    all &= v;
                }
            }
            if (dilate && any) || (!dilate && all) {
                out.set(x as usize, y as usize, true);
            }
        }
    }
    out
}

/// Outcome of one augmentation call.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub glyph: GlyphImage,
    /// Set when every attempt erased the glyph and the input was returned.
    pub warning: Option<String>,
}

pub fn apply_affine_augmentation<R: Rng + ?Sized>(
    img: &GlyphImage,
    params: &AugmentationParams,
    rng: &mut R,
) -> Augmented {
    for _ in 0..MAX_RETRIES {
        let spec = AffineSpec::sample(params, rng);
        let mut px = spec.apply(&img.pixels);
        if params.photometric && rng.random::<f64>() < params.per_transform_probability {
            let dilate = rng.random::<bool>();
            let m = morph(&px, dilate);
            if m.ink_count() > 0 {
                px = m;
            }
        }
        if px.ink_count() > 0 {
            let mut glyph = img.clone();
            glyph.pixels = px;
            return Augmented {
                glyph,
                warning: None,
            };
        }
    }
    let warning = format!(
        "augmentation erased class {} instance {} {} times; kept original",
        img.class_id, img.instance_id, MAX_RETRIES
    );
    log::warn!("{warning}");
    Augmented {
        glyph: img.clone(),
        warning: Some(warning),
    }
}
