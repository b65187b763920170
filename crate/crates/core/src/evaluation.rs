//! N-way 1-shot retrieval, NDCG@k over script rankings, Spearman correlation
//! against curated similarity levels, and the aggregated report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{Dataset, SimilarityLevelTable, UNRELATED_LEVEL};
use crate::encoder::{embed, EncoderParams};
use crate::error::{Error, Result};
use crate::similarity::{build_script_sets, DistanceMatrix, GlyphKey, Granularity, ScriptSet};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_way: usize,
    pub k_values: Vec<usize>,
    pub episodes: usize,
    pub ndcg_k: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_way: 20,
            k_values: vec![1, 5],
            episodes: 400,
            ndcg_k: 10,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 {
            return Err(Error::InvalidArgument("N must be at least 2".into()));
        }
        if self.episodes == 0 {
            return Err(Error::InvalidArgument("need at least one episode".into()));
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k == 0 || k > self.n_way) {
            return Err(Error::InvalidArgument(format!("k={k} outside 1..=N")));
        }
        if self.ndcg_k == 0 {
            return Err(Error::InvalidArgument("NDCG cutoff must be positive".into()));
        }
        Ok(())
    }
}

/// One retrieval trial. All fields index into `Dataset::glyphs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub query: usize,
    pub candidates: Vec<usize>,
    pub positive_index: usize,
}

/// Draws a target class with two or more genuine instances and `n − 1`
/// distractor classes uniformly across the split. Query and positive are
/// distinct instances of the target; each distractor contributes one
/// instance; candidate order is shuffled.
pub fn sample_episode<R: Rng + ?Sized>(ds: &Dataset, n: usize, rng: &mut R) -> Result<Episode> {
    if n < 2 {
        return Err(Error::InvalidArgument("N must be at least 2".into()));
    }
    let classes: Vec<(u32, Vec<usize>)> = ds.genuine_by_class().into_iter().collect();
    if classes.len() < n {
        return Err(Error::Insufficient(format!(
            "{} classes available for a {n}-way episode",
            classes.len()
        )));
    }
    let targets: Vec<usize> = (0..classes.len()).filter(|&c| classes[c].1.len() >= 2).collect();
    if targets.is_empty() {
        return Err(Error::Insufficient("no class has two instances".into()));
    }
    let t = targets[rng.random_range(0..targets.len())];
    let pick = index::sample(rng, classes[t].1.len(), 2);
    let query = classes[t].1[pick.index(0)];
    let positive = classes[t].1[pick.index(1)];

    let others: Vec<usize> = (0..classes.len()).filter(|&c| c != t).collect();
    let mut candidates: Vec<usize> = index::sample(rng, others.len(), n - 1)
        .into_iter()
        .map(|o| {
            let pool = &classes[others[o]].1;
            pool[rng.random_range(0..pool.len())]
        })
        .collect();
    candidates.push(positive);
    candidates.shuffle(rng);
    let positive_index = candidates.iter().position(|&c| c == positive).expect("positive present");
    Ok(Episode {
        query,
        candidates,
        positive_index,
    })
}

/// Episode sequence fully determined by `cfg.seed`.
pub fn sample_episodes(ds: &Dataset, cfg: &EvalConfig) -> Result<Vec<Episode>> {
    cfg.validate()?;
    let mut rng = seed::rng_for(cfg.seed, &[seed::str_id("episodes")]);
    (0..cfg.episodes).map(|_| sample_episode(ds, cfg.n_way, &mut rng)).collect()
}

/// 1-based rank of the positive by descending similarity; ties go to the
/// lower candidate index.
pub fn positive_rank(query: &[f32], candidates: &[&[f32]], positive_index: usize) -> usize {
    let sim = |c: &[f32]| -> f64 { query.iter().zip(c).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum() };
    let sp = sim(candidates[positive_index]);
    1 + candidates
        .iter()
        .enumerate()
        .filter(|&(j, c)| {
            let s = sim(c);
            s > sp || (s == sp && j < positive_index)
        })
        .count()
}

/// Ranks of the positive in every episode, given embeddings indexed like the
/// dataset's glyphs.
pub fn episode_ranks(embeddings: &[Vec<f32>], episodes: &[Episode]) -> Result<Vec<usize>> {
    episodes
        .iter()
        .map(|e| {
            let get = |i: usize| {
                embeddings
                    .get(i)
                    .map(Vec::as_slice)
                    .ok_or_else(|| Error::InvalidArgument(format!("episode refers to glyph {i} without embedding")))
            };
            let q = get(e.query)?;
            let c: Vec<&[f32]> = e.candidates.iter().map(|&i| get(i)).collect::<Result<_>>()?;
            Ok(positive_rank(q, &c, e.positive_index))
        })
        .collect()
}

/// Fraction of ranks at or below `k`.
pub fn topk_from_ranks(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

/// Embeds the glyphs the episodes touch and returns the top-k accuracy.
pub fn topk_accuracy(params: &EncoderParams, ds: &Dataset, episodes: &[Episode], k: usize) -> Result<f64> {
    let emb = embed_episode_glyphs(params, ds, episodes);
    Ok(topk_from_ranks(&episode_ranks(&emb, episodes)?, k))
}

/// Embeddings for every glyph referenced by `episodes`; other slots stay empty.
pub fn embed_episode_glyphs(params: &EncoderParams, ds: &Dataset, episodes: &[Episode]) -> Vec<Vec<f32>> {
    let used: BTreeSet<usize> = episodes
        .iter()
        .flat_map(|e| std::iter::once(e.query).chain(e.candidates.iter().copied()))
        .collect();
    let used: Vec<usize> = used.into_iter().collect();
    let images: Vec<_> = used.iter().map(|&i| &ds.glyphs[i].pixels).collect();
    let out = embed(params, &images);
    let mut all = vec![Vec::new(); ds.len()];
    for (i, z) in used.into_iter().zip(out.embeddings) {
        all[i] = z.0;
    }
    all
}

/// Graded relevance `4 − level`.
pub fn relevance_from_level(level: u8) -> Result<u32> {
    if (1..=UNRELATED_LEVEL).contains(&level) {
        Ok(u32::from(UNRELATED_LEVEL - level))
    } else {
        Err(Error::InvalidArgument(format!("similarity level {level} is not in 1..=4")))
    }
}

/// Level table plus the relevance mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RankingGroundTruth {
    pub table: SimilarityLevelTable,
}

impl RankingGroundTruth {
    pub fn new(table: SimilarityLevelTable) -> Self {
        Self { table }
    }

    pub fn relevance(&self, query: &str, candidate: &str) -> u32 {
        relevance_from_level(self.table.level(query, candidate)).expect("table levels are valid")
    }

    pub const MAPPING: &'static str = "rel = 4 - level";
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ndcg {
    pub value: f64,
    /// Set when every candidate has relevance 0 (the value is then 0).
    pub flagged: bool,
}

fn dcg(rels: impl Iterator<Item = u32>) -> f64 {
    rels.enumerate()
        .map(|(r, rel)| f64::from(rel) / ((r + 2) as f64).log2())
        .sum()
}

pub fn ndcg_at_k(ranked: &[&str], query: &str, gt: &RankingGroundTruth, k: usize) -> Result<Ndcg> {
    if ranked.contains(&query) {
        return Err(Error::InvalidArgument(format!("query '{query}' appears in its own ranking")));
    }
    if k == 0 || k > ranked.len() {
        return Err(Error::InvalidArgument(format!(
            "k={k} outside 1..={}",
            ranked.len()
        )));
    }
    let rels: Vec<u32> = ranked.iter().map(|c| gt.relevance(query, c)).collect();
    let mut ideal = rels.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(k));
    if idcg == 0.0 {
        return Ok(Ndcg {
            value: 0.0,
            flagged: true,
        });
    }
    Ok(Ndcg {
        value: dcg(rels.into_iter().take(k)) / idcg,
        flagged: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryNdcg {
    pub query: String,
    pub ndcg: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRanking {
    pub per_query: Vec<QueryNdcg>,
    pub mean: f64,
    /// Cutoff actually used; smaller than requested with few scripts.
    pub effective_k: usize,
}

/// Ranks the other scripts by ascending distance for every query (ties by
/// script id) and averages NDCG@k.
pub fn script_ranking_eval(m: &DistanceMatrix, gt: &RankingGroundTruth, k: usize) -> Result<ScriptRanking> {
    if m.len() < 2 {
        return Err(Error::InvalidArgument("ranking needs at least two scripts".into()));
    }
    let effective_k = k.min(m.len() - 1);
    if effective_k < k {
        log::warn!("only {} scripts; NDCG cutoff reduced from {k} to {effective_k}", m.len());
    }
    let mut per_query = Vec::with_capacity(m.len());
    for (qi, q) in m.script_ids.iter().enumerate() {
        let mut others: Vec<usize> = (0..m.len()).filter(|&j| j != qi).collect();
        others.sort_by(|&a, &b| {
            m.values[qi][a]
                .total_cmp(&m.values[qi][b])
                .then_with(|| m.script_ids[a].cmp(&m.script_ids[b]))
        });
        let ranked: Vec<&str> = others.iter().map(|&j| m.script_ids[j].as_str()).collect();
        let n = ndcg_at_k(&ranked, q, gt, effective_k)?;
        per_query.push(QueryNdcg {
            query: q.clone(),
            ndcg: n.value,
            flagged: n.flagged,
        });
    }
    let mean = per_query.iter().map(|q| q.ndcg).sum::<f64>() / per_query.len() as f64;
    Ok(ScriptRanking {
        per_query,
        mean,
        effective_k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Two-sided p-value from the normal approximation `ρ·√(n−1)`.
    pub p_value: Option<f64>,
}

/// 1-based ranks with ties sharing their average rank.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation of `(distance, level)` pairs: Pearson correlation of
/// the fractional rank vectors.
pub fn spearman_rho(pairs: &[(f64, f64)]) -> Result<Spearman> {
    let n = pairs.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("Spearman needs at least 3 pairs, got {n}")));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::NonFinite("Spearman input".into()));
    }
    let r = fractional_ranks(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let s = fractional_ranks(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in r.iter().zip(&s) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean).powi(2);
        syy += (b - mean).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroRankVariance);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let z = rho * ((n - 1) as f64).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = 2.0 * (1.0 - normal.cdf(z.abs()));
    Ok(Spearman {
        rho,
        p_value: Some(p.clamp(0.0, 1.0)),
    })
}

/// `(d_s, level)` for every unordered script pair of the matrix.
pub fn level_pairs(m: &DistanceMatrix, table: &SimilarityLevelTable) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            out.push((m.values[i][j], f64::from(table.level(&m.script_ids[i], &m.script_ids[j]))));
        }
    }
    out
}

/// Glyph-level results of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphMetrics {
    pub n20r1: f64,
    pub n20r5: f64,
    pub episodes: usize,
    pub n_way: usize,
    /// Positive rank per episode, for plotting.
    pub ranks: Vec<usize>,
}

impl GlyphMetrics {
    pub fn from_ranks(ranks: Vec<usize>, n_way: usize) -> Self {
        Self {
            n20r1: topk_from_ranks(&ranks, 1),
            n20r5: topk_from_ranks(&ranks, 5),
            episodes: ranks.len(),
            n_way,
            ranks,
        }
    }
}

/// Script-level results of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptMetrics {
    pub ranking: ScriptRanking,
    pub spearman: Spearman,
}

/// Everything measured for one model (teacher, student, target, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub glyph: Option<GlyphMetrics>,
    pub script: Option<ScriptMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityEntry {
    /// `a/b/c`, related pair first.
    pub triple: String,
    pub model: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
    /// Model whose numbers fill the top-level fields; defaults to the
    /// target, then the last row.
    pub primary: Option<String>,
    pub notices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub n20r1: Option<f64>,
    pub n20r5: Option<f64>,
    pub ndcg10: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub spearman_p: Option<f64>,
    pub ndcg_effective_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n20r1: f64,
    pub n20r5: f64,
    pub ndcg10: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub separability: BTreeMap<String, BTreeMap<String, f64>>,
    pub config_hash: String,
    pub seed: u64,
    pub primary_model: String,
    pub rows: Vec<ReportRow>,
    pub relevance_mapping: String,
    pub tool_version: String,
    pub notices: Vec<String>,
}

pub fn build_report(models: &[ModelMetrics], separability: &[SeparabilityEntry], meta: &RunMeta) -> Result<Report> {
    if models.is_empty() {
        return Err(Error::Report("no model metrics".into()));
    }
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for m in models {
        if !seen.insert(m.model.as_str()) {
            return Err(Error::Report(format!("duplicate metric key '{}'", m.model)));
        }
        let g = m
            .glyph
            .as_ref()
            .ok_or_else(|| Error::Report(format!("missing required metric n20r1 for '{}'", m.model)))?;
        rows.push(ReportRow {
            model: m.model.clone(),
            n20r1: Some(g.n20r1),
            n20r5: Some(g.n20r5),
            ndcg10: m.script.as_ref().map(|s| s.ranking.mean),
            spearman_rho: m.script.as_ref().map(|s| s.spearman.rho),
            spearman_p: m.script.as_ref().and_then(|s| s.spearman.p_value),
            ndcg_effective_k: m.script.as_ref().map(|s| s.ranking.effective_k),
        });
    }
    let mut sep: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for e in separability {
        if sep
            .entry(e.triple.clone())
            .or_default()
            .insert(e.model.clone(), e.ratio)
            .is_some()
        {
            return Err(Error::Report(format!(
                "duplicate metric key 'separability.{}.{}'",
                e.triple, e.model
            )));
        }
    }
    let primary = match &meta.primary {
        Some(p) => rows
            .iter()
            .find(|r| &r.model == p)
            .ok_or_else(|| Error::Report(format!("primary model '{p}' has no metrics")))?,
        None => rows
            .iter()
            .find(|r| r.model == "target")
            .unwrap_or_else(|| rows.last().expect("non-empty")),
    };
    Ok(Report {
        n20r1: primary.n20r1.expect("set above"),
        n20r5: primary.n20r5.expect("set above"),
        ndcg10: primary.ndcg10,
        spearman_rho: primary.spearman_rho,
        separability: sep,
        config_hash: meta.config_hash.clone(),
        seed: meta.seed,
        primary_model: primary.model.clone(),
        relevance_mapping: RankingGroundTruth::MAPPING.into(),
        tool_version: crate::VERSION.into(),
        notices: meta.notices.clone(),
        rows,
    })
}

fn cell(v: Option<f64>, pct: bool) -> String {
    match v {
        Some(v) if pct => format!("{:.1}", v * 100.0),
        Some(v) => format!("{v:.4}"),
        None => "-".into(),
    }
}

impl Report {
    /// Plain-text table: Model, N20R1, N20R5, NDCG@10, Spearman ρ.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<16} {:>7} {:>7} {:>8} {:>11}\n",
            "Model", "N20R1", "N20R5", "NDCG@10", "Spearman ρ"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<16} {:>7} {:>7} {:>8} {:>11}\n",
                r.model,
                cell(r.n20r1, true),
                cell(r.n20r5, true),
                cell(r.ndcg10, false),
                cell(r.spearman_rho, false)
            ));
        }
        for (triple, by_model) in &self.separability {
            s.push_str(&format!("\nseparability {triple}:"));
            for (m, v) in by_model {
                s.push_str(&format!(" {m}={v:.4}"));
            }
            s.push('\n');
        }
        s.push_str(&format!("\nconfig {} seed {} version {}\n", self.config_hash, self.seed, self.tool_version));
        for n in &self.notices {
            s.push_str(&format!("note: {n}\n"));
        }
        s
    }
}

/// `model,episode,positive_rank,hit1,hit5` rows.
pub fn episodes_csv(models: &[ModelMetrics]) -> String {
    let mut s = String::from("model,episode,positive_rank,hit1,hit5\n");
    for m in models {
        if let Some(g) = &m.glyph {
            for (e, r) in g.ranks.iter().enumerate() {
                s.push_str(&format!("{},{e},{r},{},{}\n", m.model, u8::from(*r <= 1), u8::from(*r <= 5)));
            }
        }
    }
    s
}

/// `model,query,ndcg,flagged` rows.
pub fn ndcg_csv(models: &[ModelMetrics]) -> String {
    let mut s = String::from("model,query,ndcg,flagged\n");
    for m in models {
        if let Some(sc) = &m.script {
            for q in &sc.ranking.per_query {
                s.push_str(&format!("{},{},{},{}\n", m.model, q.query, q.ndcg, q.flagged));
            }
        }
    }
    s
}

/// Writes `report.json`, `report.txt`, `episodes.csv` and `ndcg.csv`.
pub fn write_report(report: &Report, models: &[ModelMetrics], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("report.json", serde_json::to_string_pretty(report)? + "\n"),
        ("report.txt", report.to_table()),
        ("episodes.csv", episodes_csv(models)),
        ("ndcg.csv", ndcg_csv(models)),
    ];
    for (name, text) in files {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Glyph metrics of one encoder on fixed episodes.
pub fn glyph_metrics(params: &EncoderParams, ds: &Dataset, episodes: &[Episode], n_way: usize) -> Result<GlyphMetrics> {
    let emb = embed_episode_glyphs(params, ds, episodes);
    Ok(GlyphMetrics::from_ranks(episode_ranks(&emb, episodes)?, n_way))
}

/// Script metrics from a distance matrix.
pub fn script_metrics(m: &DistanceMatrix, table: &SimilarityLevelTable, k: usize) -> Result<ScriptMetrics> {
    let gt = RankingGroundTruth::new(table.clone());
    Ok(ScriptMetrics {
        ranking: script_ranking_eval(m, &gt, k)?,
        spearman: spearman_rho(&level_pairs(m, table))?,
    })
}

/// Labels of every glyph of a dataset, in order.
pub fn glyph_keys(ds: &Dataset) -> Vec<GlyphKey> {
    ds.glyphs
        .iter()
        .map(|g| GlyphKey {
            script_id: g.script_id.clone(),
            class_id: g.class_id,
            instance_id: g.instance_id,
        })
        .collect()
}

/// Embeds a dataset and groups it into per-script sets.
pub fn dataset_script_sets(params: &EncoderParams, ds: &Dataset, granularity: Granularity) -> Result<Vec<ScriptSet>> {
    build_script_sets(&glyph_keys(ds), &embed_dataset(params, ds), granularity)
}

/// Embeds every glyph of a dataset in order.
pub fn embed_dataset(params: &EncoderParams, ds: &Dataset) -> Vec<Vec<f32>> {
    let images: Vec<_> = ds.glyphs.iter().map(|g| &g.pixels).collect();
    embed(params, &images).embeddings.into_iter().map(|e| e.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassInfo, Split};
    use crate::glyph::{Bitmap, GlyphImage};
    use crate::seed::rng;

    fn toy(classes: u32, per: u32) -> Dataset {
        let mut ds = Dataset::empty(Split::Evaluation);
        for c in 0..classes {
            ds.classes.push(ClassInfo {
                class_id: c,
                script_id: "s".into(),
                name: format!("{c}"),
            });
            for i in 0..per {
                let mut bm = Bitmap::blank();
                bm.set(c as usize, i as usize, true);
                ds.glyphs.push(GlyphImage::new(bm, c, "s", i).unwrap());
            }
        }
        ds.script_ids.push("s".into());
        ds
    }

    #[test]
    fn minimal_episode_structure() {
        let ds = toy(2, 2);
        let e = sample_episode(&ds, 2, &mut rng(0)).unwrap();
        assert_eq!(e.candidates.len(), 2);
        let qc = ds.glyphs[e.query].class_id;
        let pos = e.candidates[e.positive_index];
        assert_eq!(ds.glyphs[pos].class_id, qc);
        assert_ne!(pos, e.query);
        let neg = e.candidates[1 - e.positive_index];
        assert_ne!(ds.glyphs[neg].class_id, qc);
        assert!(sample_episode(&ds, 3, &mut rng(0)).is_err());
    }

    #[test]
    fn episode_invariants_and_reproducibility() {
        let ds = toy(30, 3);
        let cfg = EvalConfig {
            episodes: 50,
            ..Default::default()
        };
        let a = sample_episodes(&ds, &cfg).unwrap();
        assert_eq!(a, sample_episodes(&ds, &cfg).unwrap());
        for e in &a {
            let classes: BTreeSet<u32> = e.candidates.iter().map(|&i| ds.glyphs[i].class_id).collect();
            assert_eq!(classes.len(), 20);
        }
    }

    #[test]
    fn rank_tie_break_by_index() {
        let q = [1.0f32, 0.0];
        let same = [1.0f32, 0.0];
        assert_eq!(positive_rank(&q, &[&same, &same], 1), 2);
        assert_eq!(positive_rank(&q, &[&same, &same], 0), 1);
    }

    #[test]
    fn ndcg_hand_example() {
        let mut t = SimilarityLevelTable::new();
        t.insert("q", "b", 1).unwrap();
        let gt = RankingGroundTruth::new(t);
        let n = ndcg_at_k(&["a", "b"], "q", &gt, 2).unwrap();
        assert!((n.value - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert_eq!(ndcg_at_k(&["b", "a"], "q", &gt, 2).unwrap().value, 1.0);
        let z = ndcg_at_k(&["a", "c"], "q", &gt, 2).unwrap();
        assert!(z.flagged && z.value == 0.0);
        assert!(ndcg_at_k(&["q", "a"], "q", &gt, 1).is_err());
        assert!(ndcg_at_k(&["a"], "q", &gt, 2).is_err());
    }

    #[test]
    fn relevance_mapping() {
        assert_eq!(relevance_from_level(1).unwrap(), 3);
        assert_eq!(relevance_from_level(4).unwrap(), 0);
        assert!(relevance_from_level(0).is_err());
        assert!(relevance_from_level(5).is_err());
    }

    #[test]
    fn spearman_cases() {
        let inc = [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)];
        assert_eq!(spearman_rho(&inc).unwrap().rho, 1.0);
        let dec = [(1.0, 4.0), (2.0, 3.0), (3.0, 2.0), (4.0, 1.0)];
        assert_eq!(spearman_rho(&dec).unwrap().rho, -1.0);
        assert_eq!(fractional_ranks(&[1.0, 1.0, 2.0, 2.0]), vec![1.5, 1.5, 3.5, 3.5]);
        assert!(matches!(
            spearman_rho(&[(1.0, 2.0), (2.0, 2.0), (3.0, 2.0)]),
            Err(Error::ZeroRankVariance)
        ));
        assert!(spearman_rho(&[(1.0, 2.0), (2.0, 3.0)]).is_err());
    }

    #[test]
    fn report_schema_and_errors() {
        let g = GlyphMetrics::from_ranks(vec![1, 3, 7], 20);
        let m = ModelMetrics {
            model: "teacher".into(),
            glyph: Some(g.clone()),
            script: None,
        };
        let meta = RunMeta {
            config_hash: "abc".into(),
            seed: 1,
            primary: None,
            notices: vec![],
        };
        let r = build_report(&[m.clone()], &[], &meta).unwrap();
        assert!((r.n20r1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.ndcg10, None);
        let json = serde_json::to_value(&r).unwrap();
        for key in ["n20r1", "n20r5", "ndcg10", "spearman_rho", "separability", "config_hash", "seed"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(build_report(&[m.clone(), m.clone()], &[], &meta).is_err());
        let missing = ModelMetrics {
            glyph: None,
            ..m.clone()
        };
        assert!(build_report(&[missing], &[], &meta).is_err());
        let sep = SeparabilityEntry {
            triple: "a/b/c".into(),
            model: "teacher".into(),
            ratio: 0.5,
        };
        assert!(build_report(&[m], &[sep.clone(), sep], &meta).is_err());
    }
}
