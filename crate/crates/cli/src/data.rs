//! Corpus loading from a raw Omniglot-style root or a `prepare` output.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};

use glyphsim::dataset::{load_omniglot, Corpus, Split};

pub const PREPARE_SUMMARY: &str = "prepare.json";

/// Loads every split. A directory written by `prepare` holds one Omniglot
/// root per split; class ids are then renumbered so they match a load of
/// the original root.
pub fn load_corpus(root: &Path, manifest: Option<&Path>) -> Result<Corpus> {
    if root.join(PREPARE_SUMMARY).exists() {
        return load_prepared(root);
    }
    let default_manifest = root.join("manifest.tsv");
    let manifest = manifest.unwrap_or(&default_manifest);
    load_omniglot(root, manifest)
        .with_context(|| format!("loading {} with {}", root.display(), manifest.display()))
}

fn load_prepared(root: &Path) -> Result<Corpus> {
    let mut splits = BTreeMap::new();
    for split in Split::ALL {
        let dir = root.join(split.as_str());
        if !dir.exists() {
            splits.insert(split, glyphsim::dataset::Dataset::empty(split));
            continue;
        }
        let corpus = load_omniglot(&dir, &dir.join("manifest.tsv"))
            .with_context(|| format!("loading prepared split {}", dir.display()))?;
        let ds = corpus
            .splits
            .get(&split)
            .cloned()
            .unwrap_or_else(|| glyphsim::dataset::Dataset::empty(split));
        splits.insert(split, ds);
    }
    let mut names: Vec<(String, String, Split, u32)> = splits
        .iter()
        .flat_map(|(s, ds)| {
            ds.classes
                .iter()
                .map(|c| (c.script_id.clone(), c.name.clone(), *s, c.class_id))
        })
        .collect();
    names.sort();
    let remap: BTreeMap<(Split, u32), u32> = names
        .iter()
        .enumerate()
        .map(|(new, (_, _, s, old))| ((*s, *old), new as u32))
        .collect();
    for (s, ds) in splits.iter_mut() {
        for c in &mut ds.classes {
            c.class_id = remap[&(*s, c.class_id)];
        }
        for g in &mut ds.glyphs {
            g.class_id = remap[&(*s, g.class_id)];
        }
        ds.classes.sort_by_key(|c| c.class_id);
    }
    Ok(Corpus { splits })
}

pub fn split_of(corpus: &Corpus, split: Split) -> &glyphsim::dataset::Dataset {
    corpus.get(split).expect("every split is present after loading")
}
