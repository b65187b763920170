use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::glyph::{Bitmap, GlyphImage};
use crate::parallel;

use super::{ClassInfo, Dataset, Split};

/// All splits of one corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub splits: BTreeMap<Split, Dataset>,
}

impl Corpus {
    pub fn get(&self, split: Split) -> Option<&Dataset> {
        self.splits.get(&split)
    }

    pub fn total_classes(&self) -> usize {
        self.splits.values().map(Dataset::class_count).sum()
    }

    pub fn total_scripts(&self) -> usize {
        self.splits.values().map(|d| d.script_ids.len()).sum()
    }
}

/// Parses `<script>\t<split>` lines. Blank lines and `#` comments are skipped.
pub fn parse_split_manifest(text: &str) -> Result<BTreeMap<String, Split>> {
    let mut out: BTreeMap<String, Split> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (script, split) = line.split_once('\t').ok_or_else(|| {
            Error::Manifest(format!("line {}: expected '<script>\\t<split>'", n + 1))
        })?;
        let split: Split = split.trim().parse()?;
        if let Some(prev) = out.insert(script.to_string(), split) {
            if prev != split {
                return Err(Error::ScriptInTwoSplits {
                    script: script.to_string(),
                    first: prev.to_string(),
                    second: split.to_string(),
                });
            }
        }
    }
    Ok(out)
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        let keep = if want_dirs {
            path.is_dir()
        } else {
            path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
        };
        if keep {
            out.push((name, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Loads `root/<script>/<character>/<instance>.png` and partitions scripts
/// by the manifest. Class ids follow the lexicographic order of
/// (script, character) over the whole root; instance ids follow file order.
pub fn load_omniglot(root: &Path, manifest: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let assignment = parse_split_manifest(&text)?;
    let scripts = sorted_entries(root, true)?;
    for name in assignment.keys() {
        if !scripts.iter().any(|(s, _)| s == name) {
            return Err(Error::MissingScript(name.clone()));
        }
    }
    if let Some((s, _)) = scripts.iter().find(|(s, _)| !assignment.contains_key(s)) {
        return Err(Error::ScriptWithoutSplit(s.clone()));
    }

    struct Job {
        path: PathBuf,
        class_id: u32,
        script: String,
        instance: u32,
    }
    let mut jobs = Vec::new();
    let mut classes: BTreeMap<Split, Vec<ClassInfo>> = BTreeMap::new();
    let mut class_id = 0u32;
    for (script, sdir) in &scripts {
        let split = assignment[script];
        for (character, cdir) in sorted_entries(sdir, true)? {
            let files = sorted_entries(&cdir, false)?;
            if files.is_empty() {
                continue;
            }
            classes.entry(split).or_default().push(ClassInfo {
                class_id,
                script_id: script.clone(),
                name: character,
            });
            for (i, (_, path)) in files.into_iter().enumerate() {
                jobs.push(Job {
                    path,
                    class_id,
                    script: script.clone(),
                    instance: i as u32,
                });
            }
            class_id += 1;
        }
    }

    let loaded = parallel::map(&jobs, |j| Bitmap::load_png(&j.path));
    let mut splits: BTreeMap<Split, Dataset> = Split::ALL
        .iter()
        .map(|&s| (s, Dataset::empty(s)))
        .collect();
    for (script, _) in &scripts {
        splits
            .get_mut(&assignment[script])
            .expect("split")
            .script_ids
            .push(script.clone());
    }
    for (job, bm) in jobs.iter().zip(loaded) {
        let split = assignment[&job.script];
        let glyph = GlyphImage::new(bm?, job.class_id, job.script.clone(), job.instance)
            .map_err(|_| Error::Image {
                path: job.path.clone(),
                reason: "image contains no ink".into(),
            })?;
        splits.get_mut(&split).expect("split").glyphs.push(glyph);
    }
    for (split, cls) in classes {
        splits.get_mut(&split).expect("split").classes = cls;
    }
    Ok(Corpus { splits })
}

/// Writes the genuine glyphs of `ds` in the Omniglot directory layout.
pub fn write_omniglot_layout(ds: &Dataset, root: &Path) -> Result<()> {
    let names: BTreeMap<u32, &ClassInfo> = ds.classes.iter().map(|c| (c.class_id, c)).collect();
    for g in ds.glyphs.iter().filter(|g| g.is_genuine()) {
        let info = names.get(&g.class_id).ok_or_else(|| {
            Error::InvalidGlyph(format!("class {} has no ClassInfo", g.class_id))
        })?;
        let path = root
            .join(&info.script_id)
            .join(&info.name)
            .join(format!("{:02}.png", g.instance_id + 1));
        g.pixels.save_png(&path)?;
    }
    Ok(())
}
