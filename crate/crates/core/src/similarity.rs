//! Glyph- and script-level distances over frozen embeddings, the
//! separability ratio, and the on-disk embedding store.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;

/// Accepted deviation of an input norm from 1.
pub const UNIT_TOLERANCE: f64 = 1e-4;

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// `1 − cos` for unit vectors, evaluated as `½‖a − b‖²` so that identical
/// inputs give exactly 0.
fn unit_distance(a: &[f32], b: &[f32]) -> f64 {
    let sq: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    (0.5 * sq).clamp(0.0, 2.0)
}

fn check_unit(z: &[f32]) -> Result<()> {
    let n = dot(z, z).sqrt();
    if (n - 1.0).abs() > UNIT_TOLERANCE || !n.is_finite() {
        return Err(Error::InvalidArgument(format!("embedding norm {n} is not 1")));
    }
    Ok(())
}

/// Cosine of two unit vectors.
pub fn glyph_similarity(z1: &[f32], z2: &[f32]) -> Result<f64> {
    glyph_distance(z1, z2).map(|d| 1.0 - d)
}

/// `1 − cos`, in [0, 2].
pub fn glyph_distance(z1: &[f32], z2: &[f32]) -> Result<f64> {
    if z1.len() != z2.len() {
        return Err(Error::ShapeMismatch(format!(
            "embedding lengths {} and {}",
            z1.len(),
            z2.len()
        )));
    }
    check_unit(z1)?;
    check_unit(z2)?;
    Ok(unit_distance(z1, z2))
}

/// Embeddings of every glyph of one script.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptSet {
    pub script_id: String,
    pub embeddings: Vec<Vec<f32>>,
}

impl ScriptSet {
    pub fn new(script_id: impl Into<String>, embeddings: Vec<Vec<f32>>) -> Result<Self> {
        let script_id = script_id.into();
        let Some(first) = embeddings.first() else {
            return Err(Error::InvalidArgument(format!("script '{script_id}' has no embeddings")));
        };
        let d = first.len();
        for z in &embeddings {
            if z.len() != d {
                return Err(Error::ShapeMismatch(format!("script '{script_id}' mixes dimensions")));
            }
            check_unit(z)?;
        }
        Ok(Self {
            script_id,
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    fn dim(&self) -> usize {
        self.embeddings.first().map_or(0, Vec::len)
    }
}

/// Mean over `s1` of the distance to the nearest glyph of `s2`.
pub fn directed_script_distance(s1: &ScriptSet, s2: &ScriptSet) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::InvalidArgument("script set is empty".into()));
    }
    if s1.dim() != s2.dim() {
        return Err(Error::ShapeMismatch("script sets differ in dimension".into()));
    }
    let total: f64 = s1
        .embeddings
        .iter()
        .map(|x| {
            s2.embeddings
                .iter()
                .map(|y| unit_distance(x, y))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / s1.len() as f64)
}

/// Symmetrized mean-of-nearest-neighbor distance.
pub fn script_distance(s1: &ScriptSet, s2: &ScriptSet) -> Result<f64> {
    Ok(0.5 * (directed_script_distance(s1, s2)? + directed_script_distance(s2, s1)?))
}

/// Symmetric script distance matrix; rows and columns follow `script_ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub script_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.script_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script_ids.is_empty()
    }

    pub fn index_of(&self, script: &str) -> Option<usize> {
        self.script_ids.iter().position(|s| s == script)
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.values[self.index_of(a)?][self.index_of(b)?])
    }

    /// CSV with a `script_id` header row and column.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("script_id");
        for id in &self.script_ids {
            s.push(',');
            s.push_str(id);
        }
        s.push('\n');
        for (id, row) in self.script_ids.iter().zip(&self.values) {
            s.push_str(id);
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn script_distance_matrix(scripts: &[ScriptSet]) -> Result<DistanceMatrix> {
    if scripts.len() < 2 {
        return Err(Error::InvalidArgument("distance matrix needs at least two scripts".into()));
    }
    let mut seen = BTreeSet::new();
    for s in scripts {
        if !seen.insert(s.script_id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate script '{}'", s.script_id)));
        }
    }
    let n = scripts.len();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let dists = parallel::map(&cells, |&(i, j)| script_distance(&scripts[i], &scripts[j]));
    let mut values = vec![vec![0.0; n]; n];
    for (&(i, j), d) in cells.iter().zip(dists) {
        let d = d?;
        values[i][j] = d;
        values[j][i] = d;
    }
    Ok(DistanceMatrix {
        script_ids: scripts.iter().map(|s| s.script_id.clone()).collect(),
        values,
    })
}

/// `d_s(a, b)` over the mean distance of `c` to `a` and `b`. Lower means the
/// related pair stands out more clearly against the unrelated script.
pub fn separability_ratio(related_a: &ScriptSet, related_b: &ScriptSet, unrelated_c: &ScriptSet) -> Result<f64> {
    let ids = [&related_a.script_id, &related_b.script_id, &unrelated_c.script_id];
    if ids[0] == ids[1] || ids[0] == ids[2] || ids[1] == ids[2] {
        return Err(Error::InvalidArgument("separability needs three distinct scripts".into()));
    }
    let num = script_distance(related_a, related_b)?;
    let den = 0.5 * (script_distance(unrelated_c, related_a)? + script_distance(unrelated_c, related_b)?);
    if den == 0.0 {
        return Err(Error::DegenerateSeparability);
    }
    Ok(num / den)
}

/// How a script is represented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Every glyph instance.
    #[default]
    Instances,
    /// One re-normalized mean embedding per character class.
    Centroids,
}

/// Labels of one embedded glyph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlyphKey {
    pub script_id: String,
    pub class_id: u32,
    pub instance_id: u32,
}

/// Groups embeddings into script sets, ordered by first appearance.
pub fn build_script_sets(keys: &[GlyphKey], embeddings: &[Vec<f32>], granularity: Granularity) -> Result<Vec<ScriptSet>> {
    if keys.len() != embeddings.len() {
        return Err(Error::ShapeMismatch("keys and embeddings differ in count".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, BTreeMap<u32, Vec<&Vec<f32>>>> = BTreeMap::new();
    for (k, z) in keys.iter().zip(embeddings) {
        let g = groups.entry(&k.script_id).or_insert_with(|| {
            order.push(&k.script_id);
            BTreeMap::new()
        });
        g.entry(k.class_id).or_default().push(z);
    }
    order
        .into_iter()
        .map(|s| {
            let classes = &groups[s];
            let embeddings: Vec<Vec<f32>> = match granularity {
                Granularity::Instances => {
                    // keep input order
                    keys.iter()
                        .zip(embeddings)
                        .filter(|(k, _)| k.script_id == s)
                        .map(|(_, z)| z.clone())
                        .collect()
                }
                Granularity::Centroids => classes
                    .values()
                    .map(|zs| {
                        let d = zs[0].len();
                        let mut m = vec![0.0f64; d];
                        for z in zs {
                            for (a, &v) in m.iter_mut().zip(z.iter()) {
                                *a += f64::from(v);
                            }
                        }
                        let n = m.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if n == 0.0 {
                            return Err(Error::ZeroNorm);
                        }
                        Ok(m.iter().map(|v| (v / n) as f32).collect())
                    })
                    .collect::<Result<_>>()?,
            };
            ScriptSet::new(s, embeddings)
        })
        .collect()
}

/// Per-script embedding file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub script_id: String,
    pub dim: usize,
    pub class_ids: Vec<u32>,
    pub instance_ids: Vec<u32>,
    pub rows: Vec<Vec<f32>>,
    pub config_hash: String,
    pub tool_version: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreHeader {
    script_id: String,
    d: usize,
    count: usize,
    class_ids: Vec<u32>,
    instance_ids: Vec<u32>,
    config_hash: String,
    tool_version: String,
}

impl EmbeddingStore {
    /// Splits embeddings into one store per script, in first-appearance order.
    pub fn from_keys(keys: &[GlyphKey], embeddings: &[Vec<f32>], config_hash: &str) -> Result<Vec<Self>> {
        if keys.len() != embeddings.len() {
            return Err(Error::ShapeMismatch("keys and embeddings differ in count".into()));
        }
        let dim = embeddings.first().map_or(0, Vec::len);
        let mut out: Vec<EmbeddingStore> = Vec::new();
        for (k, z) in keys.iter().zip(embeddings) {
            if z.len() != dim {
                return Err(Error::ShapeMismatch("embeddings differ in dimension".into()));
            }
            let store = match out.iter_mut().find(|s| s.script_id == k.script_id) {
                Some(s) => s,
                None => {
                    out.push(EmbeddingStore {
                        script_id: k.script_id.clone(),
                        dim,
                        class_ids: Vec::new(),
                        instance_ids: Vec::new(),
                        rows: Vec::new(),
                        config_hash: config_hash.into(),
                        tool_version: crate::VERSION.into(),
                    });
                    out.last_mut().expect("just pushed")
                }
            };
            store.class_ids.push(k.class_id);
            store.instance_ids.push(k.instance_id);
            store.rows.push(z.clone());
        }
        Ok(out)
    }

    /// 8-byte little-endian header length, JSON header, then f32 rows.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&StoreHeader {
            script_id: self.script_id.clone(),
            d: self.dim,
            count: self.rows.len(),
            class_ids: self.class_ids.clone(),
            instance_ids: self.instance_ids.clone(),
            config_hash: self.config_hash.clone(),
            tool_version: self.tool_version.clone(),
        })?;
        let mut out = (header.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(&header);
        for r in &self.rows {
            for v in r {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("embedding store: {m}"));
        let len = u64::from_le_bytes(bytes.get(..8).ok_or_else(|| bad("too short"))?.try_into().expect("8")) as usize;
        let header: StoreHeader =
            serde_json::from_slice(bytes.get(8..8 + len).ok_or_else(|| bad("truncated header"))?)?;
        let body = &bytes[8 + len..];
        if body.len() != header.count * header.d * 4 || header.class_ids.len() != header.count {
            return Err(bad("payload size does not match header"));
        }
        let flat: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4")))
            .collect();
        let rows = if header.d == 0 {
            vec![Vec::new(); header.count]
        } else {
            flat.chunks(header.d).map(<[f32]>::to_vec).collect()
        };
        Ok(Self {
            script_id: header.script_id,
            dim: header.d,
            class_ids: header.class_ids,
            instance_ids: header.instance_ids,
            rows,
            config_hash: header.config_hash,
            tool_version: header.tool_version,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn keys(&self) -> Vec<GlyphKey> {
        self.class_ids
            .iter()
            .zip(&self.instance_ids)
            .map(|(&c, &i)| GlyphKey {
                script_id: self.script_id.clone(),
                class_id: c,
                instance_id: i,
            })
            .collect()
    }
}

/// `script_id,class_id,instance_id,v0..v{d-1}` rows for every store.
pub fn embeddings_csv(stores: &[EmbeddingStore]) -> String {
    let d = stores.first().map_or(0, |s| s.dim);
    let mut s = String::from("script_id,class_id,instance_id");
    for i in 0..d {
        s.push_str(&format!(",v{i}"));
    }
    s.push('\n');
    for st in stores {
        for ((c, i), r) in st.class_ids.iter().zip(&st.instance_ids).zip(&st.rows) {
            s.push_str(&format!("{},{c},{i}", st.script_id));
            for v in r {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
    }
    s
}
