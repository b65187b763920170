use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use glyphsim::dataset::synth::{generate, write_synth};
use glyphsim::dataset::{
    build_unicode_dataset, generate_augmented_set, write_omniglot_layout, Dataset, SimilarityLevelTable, Split,
};
use glyphsim::encoder::{load_checkpoint, save_checkpoint, Checkpoint};
use glyphsim::evaluation::{
    build_report, dataset_script_sets, glyph_keys, glyph_metrics, sample_episodes, script_metrics, write_report,
    ModelMetrics, RunMeta, SeparabilityEntry, embed_dataset,
};
use glyphsim::parallel;
use glyphsim::seed::{derive, str_id};
use glyphsim::similarity::{
    embeddings_csv, script_distance_matrix, separability_ratio, EmbeddingStore, ScriptSet,
};
use glyphsim::training::{train_stage1, train_stage2, InitMode, TrainingLog};

use crate::config::{existing, RunConfig};
use crate::data::{load_corpus, split_of, PREPARE_SUMMARY};
use crate::{Cli, Command, DataArgs};

struct Ctx {
    cfg: RunConfig,
    hash: String,
    out: PathBuf,
}

impl Ctx {
    fn data_root(&self, args: &DataArgs) -> Result<PathBuf> {
        let root = args
            .data_root
            .clone()
            .or_else(|| self.cfg.paths.data_root.clone())
            .context("no data root: pass --data-root or set paths.data_root")?;
        existing(&root, "data root")
    }

    fn corpus(&self, args: &DataArgs) -> Result<glyphsim::dataset::Corpus> {
        let root = self.data_root(args)?;
        let manifest = match args.manifest.clone().or_else(|| self.cfg.paths.manifest.clone()) {
            Some(m) => Some(existing(&m, "manifest")?),
            None => None,
        };
        load_corpus(&root, manifest.as_deref())
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn save_log(&self, log: &mut TrainingLog, stem: &str) -> Result<()> {
        log.config_hash = self.hash.clone();
        log.write(&self.out.join("logs"), stem)?;
        Ok(())
    }

    fn save_ckpt(&self, ckpt: &mut Checkpoint, name: &str) -> Result<PathBuf> {
        ckpt.meta.config_hash = self.hash.clone();
        let path = self.out.join(name);
        save_checkpoint(&path, ckpt)?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        parallel::set_threads(t);
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let ctx = Ctx {
        hash: cfg.hash(),
        cfg,
        out: cli.out,
    };
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    match cli.command {
        Command::Synth => synth(&ctx),
        Command::Prepare(args) => prepare(&ctx, &args),
        Command::RenderUnicode { ranges, fonts } => render_unicode(&ctx, ranges, fonts),
        Command::TrainTeacher(args) => train_teacher(&ctx, &args),
        Command::TrainStudent { data, init } => train_student(&ctx, &data, &init),
        Command::Embed { data, checkpoint, split, dim } => embed(&ctx, &data, &checkpoint, split, dim),
        Command::Eval { data, checkpoint, split, levels, probe_root, triple } => {
            eval(&ctx, &data, &checkpoint, split, levels, probe_root, &triple)
        }
        Command::Report { metrics } => report(&ctx, metrics),
    }
}

fn synth(ctx: &Ctx) -> Result<()> {
    let s = generate(&ctx.cfg.synth)?;
    write_synth(&s, &ctx.out)?;
    ctx.write_json(
        "synth.json",
        &serde_json::json!({
            "config_hash": ctx.hash,
            "tool_version": glyphsim::VERSION,
            "triple": s.triple,
            "classes": s.corpus.total_classes(),
            "scripts": s.corpus.total_scripts(),
        }),
    )?;
    println!("synthetic corpus written to {}", ctx.out.display());
    Ok(())
}

fn manifest_text(ds: &Dataset) -> String {
    ds.script_ids.iter().map(|s| format!("{s}\t{}\n", ds.split)).collect()
}

fn prepare(ctx: &Ctx, args: &DataArgs) -> Result<()> {
    let corpus = ctx.corpus(args)?;
    let mut summary = BTreeMap::new();
    let mut all_manifest = String::new();
    for split in Split::ALL {
        let ds = split_of(&corpus, split);
        all_manifest.push_str(&manifest_text(ds));
        summary.insert(
            split.as_str(),
            serde_json::json!({"scripts": ds.script_ids.len(), "classes": ds.class_count(), "glyphs": ds.len()}),
        );
        if ds.script_ids.is_empty() {
            continue;
        }
        let dir = ctx.out.join(split.as_str());
        write_omniglot_layout(ds, &dir)?;
        ctx.write(&format!("{}/manifest.tsv", split.as_str()), &manifest_text(ds))?;
    }
    ctx.write("manifest.tsv", &all_manifest)?;

    // same seed derivation as stage 1, so these are the glyphs it trains on
    let sup = split_of(&corpus, Split::SupervisedInvented);
    let aug = &ctx.cfg.stage1.augmentation;
    let (augmented, warnings) = generate_augmented_set(sup, aug, derive(ctx.cfg.stage1.seed, &[str_id("augment")]))?;
    let names: BTreeMap<u32, (&str, &str)> = sup
        .classes
        .iter()
        .map(|c| (c.class_id, (c.script_id.as_str(), c.name.as_str())))
        .collect();
    let mut written = 0usize;
    for g in &augmented.glyphs {
        if let Some(p) = g.provenance {
            let (script, name) = names[&g.class_id];
            let path = ctx
                .out
                .join("augmented")
                .join(script)
                .join(name)
                .join(format!("{:02}_{:02}.png", p.source_instance + 1, p.augmentation_index + 1));
            g.pixels.save_png(&path)?;
            written += 1;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    ctx.write_json(
        PREPARE_SUMMARY,
        &serde_json::json!({
            "config_hash": ctx.hash,
            "tool_version": glyphsim::VERSION,
            "splits": summary,
            "augmented": written,
            "augmentation": aug,
            "warnings": warnings,
        }),
    )?;
    println!("{all_manifest}");
    println!("prepared {} classes, {written} augmented glyphs in {}", corpus.total_classes(), ctx.out.display());
    Ok(())
}

fn render_unicode(ctx: &Ctx, ranges: Option<PathBuf>, fonts: Option<PathBuf>) -> Result<()> {
    let ranges = ranges
        .or_else(|| ctx.cfg.paths.ranges.clone())
        .context("no ranges file: pass --ranges or set paths.ranges")?;
    let fonts = fonts
        .or_else(|| ctx.cfg.paths.fonts.clone())
        .context("no font directory: pass --fonts or set paths.fonts")?;
    let out = build_unicode_dataset(&existing(&ranges, "ranges file")?, &existing(&fonts, "font directory")?, &ctx.out)?;
    ctx.write_json(
        "render.json",
        &serde_json::json!({
            "config_hash": ctx.hash,
            "tool_version": glyphsim::VERSION,
            "scripts": out.dataset.script_ids,
            "glyphs": out.dataset.len(),
            "omitted": out.omissions.len(),
        }),
    )?;
    println!("rendered {} glyphs, omitted {}", out.dataset.len(), out.omissions.len());
    Ok(())
}

fn train_teacher(ctx: &Ctx, args: &DataArgs) -> Result<()> {
    let corpus = ctx.corpus(args)?;
    let sup = split_of(&corpus, Split::SupervisedInvented);
    let mut out = train_stage1(&ctx.cfg.stage1, sup, &ctx.cfg.encoder).context("stage-1 training")?;
    ctx.save_log(&mut out.log, "stage1")?;
    ctx.save_ckpt(&mut out.checkpoint, "teacher.ckpt")?;
    if let Some(e) = out.log.epochs().last() {
        println!("final validation: {:?}", e.metrics);
    }
    Ok(())
}

fn train_student(ctx: &Ctx, args: &DataArgs, init: &str) -> Result<()> {
    let mut s2 = ctx.cfg.stage2.clone();
    let teacher = if init == "random" {
        s2.init_mode = InitMode::Random;
        None
    } else {
        s2.init_mode = InitMode::Teacher;
        let path = existing(Path::new(init), "teacher checkpoint")?;
        Some(load_checkpoint(&path).with_context(|| format!("loading {}", path.display()))?)
    };
    let corpus = ctx.corpus(args)?;
    let uns = split_of(&corpus, Split::UnsupervisedHistorical);
    let pool = match s2.init_mode {
        InitMode::Teacher => uns.clone(),
        // the baseline sees both pools without labels
        InitMode::Random => Dataset::merged(&[split_of(&corpus, Split::SupervisedInvented), uns], Split::UnsupervisedHistorical),
    };
    log::info!("stage 2 on {} glyphs from {} classes", pool.len(), pool.class_count());
    let mut out = train_stage2(&s2, &pool, &ctx.cfg.encoder, teacher.as_ref()).context("stage-2 training")?;
    ctx.save_log(&mut out.log, "stage2")?;
    ctx.save_ckpt(&mut out.student, "student.ckpt")?;
    ctx.save_ckpt(&mut out.target, "target.ckpt")?;
    ctx.write_json(
        "collapse.json",
        &serde_json::json!({
            "config_hash": ctx.hash,
            "probe_mean_cosine": out.collapse.probe_mean_cosine,
            "covariance_spectrum": out.collapse.covariance_spectrum,
            "effective_rank": out.collapse.effective_rank,
        }),
    )?;
    Ok(())
}

fn embed(ctx: &Ctx, args: &DataArgs, ckpt: &Path, split: Split, dim: Option<usize>) -> Result<()> {
    let ckpt = load_checkpoint(&existing(ckpt, "checkpoint")?)?;
    let d = ckpt.encoder.config.embedding_dim;
    if let Some(want) = dim {
        if want != d {
            bail!("checkpoint produces d={d}, but d={want} was requested");
        }
    }
    let corpus = ctx.corpus(args)?;
    let ds = split_of(&corpus, split);
    if ds.is_empty() {
        bail!("split {split} has no glyphs");
    }
    let keys = glyph_keys(ds);
    let emb = embed_dataset(&ckpt.encoder, ds);
    let stores = EmbeddingStore::from_keys(&keys, &emb, &ctx.hash)?;
    for s in &stores {
        s.save(&ctx.out.join("embeddings").join(format!("{}.emb", s.script_id)))?;
    }
    ctx.write("embeddings.csv", &embeddings_csv(&stores))?;
    println!("{} stores, {} embeddings of dimension {d}", stores.len(), emb.len());
    Ok(())
}

/// Saved between `eval` and `report`.
#[derive(Debug, Serialize, Deserialize)]
struct SavedMetrics {
    models: Vec<ModelMetrics>,
    separability: Vec<SeparabilityEntry>,
    meta: RunMeta,
}

fn model_name(ckpt: &Checkpoint, path: &Path, taken: &[ModelMetrics]) -> String {
    let role = ckpt.meta.role.to_string();
    if taken.iter().any(|m| m.model == role) {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(role)
    } else {
        role
    }
}

fn parse_triple(s: &str) -> Result<(String, String, String)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b, c] => Ok((a.to_string(), b.to_string(), c.to_string())),
        _ => bail!("triple '{s}' must be 'related_a,related_b,unrelated'"),
    }
}

fn eval(
    ctx: &Ctx,
    args: &DataArgs,
    checkpoints: &[PathBuf],
    split: Split,
    levels: Option<PathBuf>,
    probe_root: Option<PathBuf>,
    triples: &[String],
) -> Result<()> {
    let cfg = &ctx.cfg;
    let corpus = ctx.corpus(args)?;
    let ds = split_of(&corpus, split);
    let episodes = sample_episodes(ds, &cfg.eval).context("sampling retrieval episodes")?;
    let mut notices = Vec::new();
    let table = match levels.or_else(|| cfg.paths.levels.clone()) {
        Some(p) => Some(SimilarityLevelTable::load(&existing(&p, "levels table")?)?),
        None => {
            notices.push("no similarity level table supplied; script metrics skipped".to_string());
            None
        }
    };
    // Configured triples are skipped when the probe lacks their scripts;
    // triples given on the command line must resolve.
    let mut all_triples: Vec<_> = cfg.triples.iter().map(|t| (t.clone(), false)).collect();
    for t in triples {
        all_triples.push((parse_triple(t)?, true));
    }
    let triples = all_triples;
    let probe = if triples.is_empty() {
        None
    } else {
        let root = probe_root.or_else(|| cfg.paths.probe_root.clone());
        Some(match root {
            Some(r) => {
                let c = load_corpus(&existing(&r, "probe root")?, None)?;
                let parts: Vec<&Dataset> = c.splits.values().collect();
                Dataset::merged(&parts, split)
            }
            None => ds.clone(),
        })
    };

    let mut models: Vec<ModelMetrics> = Vec::new();
    let mut separability = Vec::new();
    for path in checkpoints {
        let ckpt = load_checkpoint(&existing(path, "checkpoint")?)
            .with_context(|| format!("loading {}", path.display()))?;
        let name = model_name(&ckpt, path, &models);
        log::info!("evaluating {name} ({})", path.display());
        let glyph = glyph_metrics(&ckpt.encoder, ds, &episodes, cfg.eval.n_way)?;
        let script = match &table {
            Some(t) => {
                let sets = dataset_script_sets(&ckpt.encoder, ds, cfg.granularity)?;
                Some(script_metrics(&script_distance_matrix(&sets)?, t, cfg.eval.ndcg_k)?)
            }
            None => None,
        };
        if let Some(p) = &probe {
            let sets = dataset_script_sets(&ckpt.encoder, p, cfg.granularity)?;
            for ((a, b, c), explicit) in &triples {
                if !explicit && [a, b, c].iter().any(|id| !sets.iter().any(|s| &s.script_id == *id)) {
                    let note = format!("probe data lacks a script of {a}/{b}/{c}; separability skipped");
                    if !notices.contains(&note) {
                        notices.push(note);
                    }
                    continue;
                }
                let ratio = separability_ratio(find_set(&sets, a)?, find_set(&sets, b)?, find_set(&sets, c)?)?;
                separability.push(SeparabilityEntry {
                    triple: format!("{a}/{b}/{c}"),
                    model: name.clone(),
                    ratio,
                });
            }
        }
        models.push(ModelMetrics {
            model: name,
            glyph: Some(glyph),
            script,
        });
    }
    let meta = RunMeta {
        config_hash: ctx.hash.clone(),
        seed: cfg.seed,
        primary: None,
        notices,
    };
    let saved = SavedMetrics {
        models,
        separability,
        meta,
    };
    ctx.write_json("metrics.json", &saved)?;
    write_and_print(ctx, &saved)
}

fn find_set<'a>(sets: &'a [ScriptSet], id: &str) -> Result<&'a ScriptSet> {
    sets.iter()
        .find(|s| s.script_id == id)
        .with_context(|| format!("script '{id}' not found in the probe data"))
}

fn write_and_print(ctx: &Ctx, saved: &SavedMetrics) -> Result<()> {
    let report = build_report(&saved.models, &saved.separability, &saved.meta)?;
    write_report(&report, &saved.models, &ctx.out)?;
    for n in &report.notices {
        eprintln!("notice: {n}");
    }
    println!("{}", report.to_table());
    Ok(())
}

fn report(ctx: &Ctx, metrics: Option<PathBuf>) -> Result<()> {
    let path = metrics.unwrap_or_else(|| ctx.out.join("metrics.json"));
    let text = std::fs::read_to_string(existing(&path, "metrics file")?)?;
    let saved: SavedMetrics = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    write_and_print(ctx, &saved)
}
