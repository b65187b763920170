//! Glyph corpora: Omniglot-layout loading, split manifests, augmentation,
//! Unicode rendering, similarity-level tables and batch samplers.

mod augment;
mod levels;
mod omniglot;
mod sampling;
pub mod synth;
mod unicode;

pub use augment::{apply_affine_augmentation, AffineSpec, Augmented, AugmentationParams, MAX_RETRIES};
pub use levels::{SimilarityLevelTable, UNRELATED_LEVEL};
pub use omniglot::{load_omniglot, parse_split_manifest, write_omniglot_layout, Corpus};
pub use sampling::{sample_class_pairs, sample_supervised_batch, ClassPairs, SupervisedBatch};
pub use unicode::{
    build_unicode_dataset, parse_ranges, render_unicode_glyph, FontGlyphs, Omission, RangeEntry,
    UnicodeDataset, FIT_FRACTION,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glyph::{GlyphImage, Provenance};
use crate::{parallel, seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    SupervisedInvented,
    UnsupervisedHistorical,
    Evaluation,
}

impl Split {
    pub const ALL: [Split; 3] = [
        Split::SupervisedInvented,
        Split::UnsupervisedHistorical,
        Split::Evaluation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::SupervisedInvented => "supervised_invented",
            Split::UnsupervisedHistorical => "unsupervised_historical",
            Split::Evaluation => "evaluation",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.as_str() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown split '{s}'")))
    }
}

/// Name and script of one glyph class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub class_id: u32,
    pub script_id: String,
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub split: Split,
    pub glyphs: Vec<GlyphImage>,
    pub classes: Vec<ClassInfo>,
    pub script_ids: Vec<String>,
}

impl Dataset {
    pub fn empty(split: Split) -> Self {
        Self {
            split,
            glyphs: Vec::new(),
            classes: Vec::new(),
            script_ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Glyph indices grouped by class id, classes in ascending id order.
    pub fn by_class(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut m: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, g) in self.glyphs.iter().enumerate() {
            m.entry(g.class_id).or_default().push(i);
        }
        m
    }

    /// Genuine (non-augmented) glyph indices grouped by class.
    pub fn genuine_by_class(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut m: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, g) in self.glyphs.iter().enumerate() {
            if g.is_genuine() {
                m.entry(g.class_id).or_default().push(i);
            }
        }
        m
    }

    /// Glyph indices grouped by script, scripts in `script_ids` order.
    pub fn by_script(&self) -> Vec<(String, Vec<usize>)> {
        let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, g) in self.glyphs.iter().enumerate() {
            m.entry(g.script_id.as_str()).or_default().push(i);
        }
        self.script_ids
            .iter()
            .filter_map(|s| m.get(s.as_str()).map(|v| (s.clone(), v.clone())))
            .collect()
    }

    /// Checks the class/script invariants.
    pub fn validate(&self) -> Result<()> {
        let mut owner: BTreeMap<u32, &str> = BTreeMap::new();
        for g in &self.glyphs {
            if let Some(prev) = owner.insert(g.class_id, &g.script_id) {
                if prev != g.script_id {
                    return Err(Error::InvalidGlyph(format!(
                        "class {} appears in scripts {prev} and {}",
                        g.class_id, g.script_id
                    )));
                }
            }
        }
        if self.split == Split::SupervisedInvented {
            if let Some((c, _)) = self.by_class().into_iter().find(|(_, v)| v.len() < 2) {
                return Err(Error::Insufficient(format!(
                    "supervised class {c} has fewer than two instances"
                )));
            }
        }
        Ok(())
    }

    /// Keeps only the given classes.
    pub fn subset_classes(&self, keep: &[u32]) -> Dataset {
        let keep: std::collections::BTreeSet<u32> = keep.iter().copied().collect();
        let glyphs: Vec<GlyphImage> = self
            .glyphs
            .iter()
            .filter(|g| keep.contains(&g.class_id))
            .cloned()
            .collect();
        let classes: Vec<ClassInfo> = self
            .classes
            .iter()
            .filter(|c| keep.contains(&c.class_id))
            .cloned()
            .collect();
        let scripts: std::collections::BTreeSet<&str> =
            classes.iter().map(|c| c.script_id.as_str()).collect();
        Dataset {
            split: self.split,
            glyphs,
            script_ids: self
                .script_ids
                .iter()
                .filter(|s| scripts.contains(s.as_str()))
                .cloned()
                .collect(),
            classes,
        }
    }

    /// Concatenates datasets; class ids must already be disjoint.
    pub fn merged(parts: &[&Dataset], split: Split) -> Dataset {
        let mut out = Dataset::empty(split);
        for p in parts {
            out.glyphs.extend(p.glyphs.iter().cloned());
            out.classes.extend(p.classes.iter().cloned());
            out.script_ids.extend(p.script_ids.iter().cloned());
        }
        out
    }
}

/// Appends `augmentations_per_instance` augmented copies after every
/// original glyph. Each copy's RNG is derived from `(seed, class, instance,
/// index)`, so the output does not depend on processing order.
pub fn generate_augmented_set(
    ds: &Dataset,
    params: &AugmentationParams,
    master_seed: u64,
) -> Result<(Dataset, Vec<String>)> {
    params.validate()?;
    let per = params.augmentations_per_instance;
    let expanded = parallel::map(&ds.glyphs, |g| {
        let mut out = Vec::with_capacity(per + 1);
        let mut warnings = Vec::new();
        out.push(g.clone());
        for k in 0..per {
            let mut rng = seed::rng_for(
                master_seed,
                &[u64::from(g.class_id), u64::from(g.instance_id), k as u64],
            );
            let aug = apply_affine_augmentation(g, params, &mut rng);
            if let Some(w) = aug.warning {
                warnings.push(w);
            }
            let mut glyph = aug.glyph;
            glyph.provenance = Some(Provenance {
                source_instance: g.instance_id,
                augmentation_index: k as u32,
            });
            out.push(glyph);
        }
        (out, warnings)
    });
    let mut glyphs = Vec::with_capacity(ds.len() * (per + 1));
    let mut warnings = Vec::new();
    for (g, w) in expanded {
        glyphs.extend(g);
        warnings.extend(w);
    }
    Ok((
        Dataset {
            split: ds.split,
            glyphs,
            classes: ds.classes.clone(),
            script_ids: ds.script_ids.clone(),
        },
        warnings,
    ))
}
