use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::glyph::GlyphImage;
use crate::{parallel, seed};

use super::{apply_affine_augmentation, AugmentationParams, Dataset};

/// Indices into `Dataset::glyphs` plus their class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupervisedBatch {
    pub indices: Vec<usize>,
    pub labels: Vec<u32>,
}

impl SupervisedBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn images<'a>(&self, ds: &'a Dataset) -> Vec<&'a GlyphImage> {
        self.indices.iter().map(|&i| &ds.glyphs[i]).collect()
    }
}

/// Draws `min(B/2, eligible)` classes, two instances from each, and fills the
/// remaining slots with further unused instances of the drawn classes. Every
/// label in the batch therefore occurs at least twice.
pub fn sample_supervised_batch<R: Rng + ?Sized>(
    ds: &Dataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<SupervisedBatch> {
    if batch_size < 4 {
        return Err(Error::InvalidArgument(format!(
            "batch size {batch_size} is below the minimum of 4"
        )));
    }
    let eligible: Vec<(u32, Vec<usize>)> = ds
        .by_class()
        .into_iter()
        .filter(|(_, v)| v.len() >= 2)
        .collect();
    if eligible.len() < 2 {
        return Err(Error::Insufficient(format!(
            "{} class(es) with two or more instances; need at least 2",
            eligible.len()
        )));
    }
    let n_classes = (batch_size / 2).min(eligible.len());
    let chosen = index::sample(rng, eligible.len(), n_classes).into_vec();

    // Per chosen class: shuffled instance pool, first two taken up front.
    let mut pools: Vec<(u32, Vec<usize>)> = chosen
        .iter()
        .map(|&c| {
            let (label, idx) = &eligible[c];
            let mut idx = idx.clone();
            idx.shuffle(rng);
            (*label, idx)
        })
        .collect();
    let mut indices = Vec::with_capacity(batch_size);
    let mut labels = Vec::with_capacity(batch_size);
    for (label, pool) in &mut pools {
        for _ in 0..2 {
            indices.push(pool.pop().expect("eligible class has two instances"));
            labels.push(*label);
        }
    }
    while indices.len() < batch_size {
        let open: Vec<usize> = (0..pools.len()).filter(|&p| !pools[p].1.is_empty()).collect();
        if open.is_empty() {
            break;
        }
        let p = open[rng.random_range(0..open.len())];
        indices.push(pools[p].1.pop().expect("non-empty pool"));
        labels.push(pools[p].0);
    }
    Ok(SupervisedBatch { indices, labels })
}

/// One augmented view pair per sampled class.
#[derive(Debug, Clone)]
pub struct ClassPairs {
    pub classes: Vec<u32>,
    pub pairs: Vec<(GlyphImage, GlyphImage)>,
    pub warnings: Vec<String>,
}

/// Samples `class_count` classes (fewer if the split is smaller), draws two
/// distinct genuine instances from each and augments both. Classes with a
/// single genuine instance are skipped with a warning.
pub fn sample_class_pairs<R: Rng + ?Sized>(
    ds: &Dataset,
    class_count: usize,
    params: &AugmentationParams,
    rng: &mut R,
) -> Result<ClassPairs> {
    params.validate()?;
    let mut warnings = Vec::new();
    let mut eligible = Vec::new();
    for (class, idx) in ds.genuine_by_class() {
        if idx.len() >= 2 {
            eligible.push((class, idx));
        } else {
            let w = format!("class {class} has a single genuine instance; excluded from pairs");
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    let n = class_count.min(eligible.len());
    let chosen = index::sample(rng, eligible.len(), n).into_vec();
    let jobs: Vec<(u32, usize, usize, u64)> = chosen
        .iter()
        .map(|&c| {
            let (class, idx) = &eligible[c];
            let pick = index::sample(rng, idx.len(), 2);
            (*class, idx[pick.index(0)], idx[pick.index(1)], rng.next_u64())
        })
        .collect();
    let views = parallel::map(&jobs, |&(_, a, b, s)| {
        let mut r1 = seed::rng_for(s, &[1]);
        let mut r2 = seed::rng_for(s, &[2]);
        (
            apply_affine_augmentation(&ds.glyphs[a], params, &mut r1),
            apply_affine_augmentation(&ds.glyphs[b], params, &mut r2),
        )
    });
    let mut pairs = Vec::with_capacity(n);
    for (v1, v2) in views {
        warnings.extend(v1.warning);
        warnings.extend(v2.warning);
        pairs.push((v1.glyph, v2.glyph));
    }
    Ok(ClassPairs {
        classes: jobs.iter().map(|j| j.0).collect(),
        pairs,
        warnings,
    })
}
