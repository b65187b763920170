//! Procedural handwritten-script corpus in the Omniglot layout.
//!
//! A script is a drawing *family* (stroke vocabulary, angle grid, pen width)
//! plus a set of *radicals* (small stroke groups). Characters combine one to
//! three radicals in a layout, and every instance is a fresh pen trace with
//! point, stroke and page-level jitter. Related scripts are derived from a
//! base script:
//!
//! * level 1: the base's characters with small shape mutations,
//! * level 2: half of the base's radicals reused in new characters,
//! * level 3: the same family with fresh radicals,
//!
//! and scripts from different families are unrelated. Invented scripts use
//! free-form families; historical scripts form lineages in alphabetic
//! (curvy), logographic (grid) and free styles.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glyph::{Bitmap, GlyphImage, CANVAS};
use crate::{parallel, seed};

use super::{write_omniglot_layout, ClassInfo, Corpus, Dataset, SimilarityLevelTable, Split};

type P = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
enum Stroke {
    Poly(Vec<P>),
    Bezier([P; 3]),
    Ellipse { c: P, rx: f64, ry: f64, start: f64, sweep: f64 },
    Dot(P),
}

impl Stroke {
    fn map(&self, f: &impl Fn(P) -> P, s: f64) -> Stroke {
        match self {
            Stroke::Poly(pts) => Stroke::Poly(pts.iter().map(|&p| f(p)).collect()),
            Stroke::Bezier(b) => Stroke::Bezier([f(b[0]), f(b[1]), f(b[2])]),
            Stroke::Ellipse { c, rx, ry, start, sweep } => Stroke::Ellipse {
                c: f(*c),
                rx: rx * s,
                ry: ry * s,
                start: *start,
                sweep: *sweep,
            },
            Stroke::Dot(p) => Stroke::Dot(f(*p)),
        }
    }

    /// Densely sampled trace in the stroke's own coordinates.
    fn trace(&self, step: f64) -> Vec<P> {
        let mut out = Vec::new();
        let seg = |a: P, b: P, out: &mut Vec<P>| {
            let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            let n = (len / step).ceil().max(1.0) as usize;
            for i in 0..=n {
                let t = i as f64 / n as f64;
                out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
            }
        };
        match self {
            Stroke::Poly(pts) => {
                for w in pts.windows(2) {
                    seg(w[0], w[1], &mut out);
                }
            }
            Stroke::Bezier([a, c, b]) => {
                let approx = ((b.0 - a.0).abs() + (b.1 - a.1).abs() + (c.0 - a.0).abs() + (c.1 - a.1).abs()) * 2.0;
                let n = (approx / step).ceil().max(2.0) as usize;
                for i in 0..=n {
                    let t = i as f64 / n as f64;
                    let u = 1.0 - t;
                    out.push((
                        u * u * a.0 + 2.0 * u * t * c.0 + t * t * b.0,
                        u * u * a.1 + 2.0 * u * t * c.1 + t * t * b.1,
                    ));
                }
            }
            Stroke::Ellipse { c, rx, ry, start, sweep } => {
                let n = ((rx.max(*ry) * sweep.abs()) / step).ceil().max(4.0) as usize;
                for i in 0..=n {
                    let a = start + sweep * i as f64 / n as f64;
                    out.push((c.0 + rx * a.cos(), c.1 + ry * a.sin()));
                }
            }
            Stroke::Dot(p) => out.push(*p),
        }
        out
    }
}

/// Drawing style shared by related scripts.
#[derive(Debug, Clone)]
struct Family {
    /// Weights over (line, hook, arc, ellipse, dot).
    weights: [f64; 5],
    /// Line directions are multiples of π/n when set.
    angles: Option<u32>,
    /// Grid families draw only horizontal/vertical lines and boxes.
    grid: bool,
    strokes_per_radical: (usize, usize),
    pen: f64,
}

impl Family {
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut weights = [0.0; 5];
        for w in &mut weights {
            *w = if rng.random::<f64>() < 0.25 { 0.0 } else { rng.random::<f64>() };
        }
        weights[rng.random_range(0..3)] += 1.0;
        Self {
            weights,
            angles: if rng.random::<bool>() {
                Some(rng.random_range(2..=6))
            } else {
                None
            },
            grid: false,
            strokes_per_radical: (1, rng.random_range(2..=3)),
            pen: rng.random_range(2.4..3.8),
        }
    }

    fn grid<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            weights: [1.0, 0.3, 0.0, 0.0, 0.15],
            angles: Some(2),
            grid: true,
            strokes_per_radical: (2, 4),
            pen: rng.random_range(2.4..3.4),
        }
    }

    fn curvy<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            weights: [0.6, 0.3, 1.0, 0.7, 0.1],
            angles: None,
            grid: false,
            strokes_per_radical: (1, 2),
            pen: rng.random_range(2.6..3.6),
        }
    }

    fn stroke<R: Rng + ?Sized>(&self, rng: &mut R) -> Stroke {
        let clamp = |p: P| (p.0.clamp(0.0, 1.0), p.1.clamp(0.0, 1.0));
        let pt = |rng: &mut R| (rng.random::<f64>(), rng.random::<f64>());
        let direction = |rng: &mut R| match self.angles {
            Some(n) => PI * rng.random_range(0..n) as f64 / n as f64,
            None => rng.random::<f64>() * PI,
        };
        if self.grid {
            let snap = |v: f64| (v * 4.0).round() / 4.0;
            if rng.random::<f64>() < 0.2 {
                let (x0, y0) = (snap(rng.random_range(0.0..0.5)), snap(rng.random_range(0.0..0.5)));
                let (x1, y1) = (snap(rng.random_range(0.5..1.0)), snap(rng.random_range(0.5..1.0)));
                return Stroke::Poly(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]);
            }
        }
        let total: f64 = self.weights.iter().sum();
        let mut pick = rng.random::<f64>() * total;
        let mut kind = 0;
        for (k, w) in self.weights.iter().enumerate() {
            if pick < *w {
                kind = k;
                break;
            }
            pick -= w;
        }
        match kind {
            0 | 1 => {
                let a = pt(rng);
                let th = direction(rng);
                let len = rng.random_range(0.45..1.0);
                let b = clamp((a.0 + len * th.cos(), a.1 + len * th.sin()));
                if kind == 0 {
                    Stroke::Poly(vec![a, b])
                } else {
                    let th2 = th + if rng.random::<bool>() { 1.0 } else { -1.0 } * PI / 2.0;
                    let l2 = rng.random_range(0.15..0.4);
                    Stroke::Poly(vec![a, b, clamp((b.0 + l2 * th2.cos(), b.1 + l2 * th2.sin()))])
                }
            }
            2 => {
                let a = pt(rng);
                let b = pt(rng);
                let mid = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
                let bend = rng.random_range(-0.5..0.5);
                let c = clamp((mid.0 - bend * (b.1 - a.1), mid.1 + bend * (b.0 - a.0)));
                Stroke::Bezier([a, c, b])
            }
            3 => {
                let rx = rng.random_range(0.15..0.4);
                let ry = rx * rng.random_range(0.6..1.4);
                Stroke::Ellipse {
                    c: (rng.random_range(rx..1.0 - rx), rng.random_range(0.2..0.8)),
                    rx,
                    ry,
                    start: rng.random::<f64>() * 2.0 * PI,
                    sweep: rng.random_range(PI..2.0 * PI),
                }
            }
            _ => Stroke::Dot(pt(rng)),
        }
    }

    fn radical<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Stroke> {
        let (lo, hi) = self.strokes_per_radical;
        (0..rng.random_range(lo..=hi)).map(|_| self.stroke(rng)).collect()
    }
}

/// Slot rectangles `(x, y, w, h)` in the character box.
const LAYOUTS: [&[(f64, f64, f64, f64)]; 4] = [
    &[(0.0, 0.0, 1.0, 1.0)],
    &[(0.0, 0.0, 0.48, 1.0), (0.52, 0.0, 0.48, 1.0)],
    &[(0.0, 0.0, 1.0, 0.48), (0.0, 0.52, 1.0, 0.48)],
    &[(0.0, 0.0, 1.0, 0.45), (0.0, 0.55, 0.48, 0.45), (0.52, 0.55, 0.48, 0.45)],
];

#[derive(Debug, Clone)]
struct ScriptSpec {
    family: Family,
    radicals: Vec<Vec<Stroke>>,
    chars: Vec<Vec<Stroke>>,
}

fn compose<R: Rng + ?Sized>(family: &Family, radicals: &[Vec<Stroke>], rng: &mut R) -> Vec<Stroke> {
    let layout = LAYOUTS[rng.random_range(0..LAYOUTS.len())];
    let mut strokes = Vec::new();
    for &(x, y, w, h) in layout {
        let r = &radicals[rng.random_range(0..radicals.len())];
        let s = w.min(h);
        let f = |p: P| (x + p.0 * w, y + p.1 * h);
        strokes.extend(r.iter().map(|st| st.map(&f, s)));
    }
    if rng.random::<f64>() < 0.3 {
        strokes.push(family.stroke(rng));
    }
    strokes
}

fn chars_from<R: Rng + ?Sized>(family: &Family, radicals: &[Vec<Stroke>], n: usize, rng: &mut R) -> Vec<Vec<Stroke>> {
    (0..n).map(|_| compose(family, radicals, rng)).collect()
}

impl ScriptSpec {
    fn new<R: Rng + ?Sized>(family: Family, n_radicals: usize, n_chars: usize, rng: &mut R) -> Self {
        let radicals: Vec<_> = (0..n_radicals).map(|_| family.radical(rng)).collect();
        let chars = chars_from(&family, &radicals, n_chars, rng);
        Self { family, radicals, chars }
    }

    /// Same characters, each with its control points nudged and
    /// occasionally one stroke redrawn.
    fn mutated<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let noise = Normal::new(0.0, 0.05).expect("valid sigma");
        let chars = self
            .chars
            .iter()
            .map(|c| {
                let mut c: Vec<Stroke> = c
                    .iter()
                    .map(|s| {
                        let (dx, dy) = (noise.sample(rng), noise.sample(rng));
                        s.map(&|p: P| (p.0 + dx, p.1 + dy), 1.0)
                    })
                    .collect();
                if rng.random::<f64>() < 0.35 {
                    let i = rng.random_range(0..c.len());
                    c[i] = self.family.stroke(rng);
                }
                c
            })
            .collect();
        Self {
            family: self.family.clone(),
            radicals: self.radicals.clone(),
            chars,
        }
    }

    /// New characters over a radical set sharing `keep` of this script's.
    fn sharing<R: Rng + ?Sized>(&self, keep: f64, rng: &mut R) -> Self {
        let n = self.radicals.len();
        let kept = ((n as f64) * keep).round() as usize;
        let mut radicals: Vec<_> = self.radicals[..kept].to_vec();
        radicals.extend((kept..n).map(|_| self.family.radical(rng)));
        let chars = chars_from(&self.family, &radicals, self.chars.len(), rng);
        Self {
            family: self.family.clone(),
            radicals,
            chars,
        }
    }
}

/// Handwriting variation of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Jitter {
    /// Std-dev of per-control-point noise, in character-box units.
    pub point: f64,
    /// Std-dev of per-stroke offsets, in character-box units.
    pub stroke: f64,
    /// Maximum page rotation, degrees.
    pub rotation_deg: f64,
    /// Maximum page translation, pixels.
    pub shift_px: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            point: 0.02,
            stroke: 0.02,
            rotation_deg: 6.0,
            shift_px: 4.0,
        }
    }
}

impl Jitter {
    pub fn none() -> Self {
        Self {
            point: 0.0,
            stroke: 0.0,
            rotation_deg: 0.0,
            shift_px: 0.0,
        }
    }
}

const BOX_LO: f64 = 18.0;
const BOX_SIDE: f64 = 68.0;

fn draw<R: Rng + ?Sized>(strokes: &[Stroke], pen: f64, jitter: &Jitter, rng: &mut R) -> Bitmap {
    let gauss = |rng: &mut R, sd: f64| {
        if sd > 0.0 {
            Normal::new(0.0, sd).expect("positive sigma").sample(rng)
        } else {
            0.0
        }
    };
    let scale = BOX_SIDE * if jitter.point > 0.0 { rng.random_range(0.88..1.05) } else { 1.0 };
    let rot = if jitter.rotation_deg > 0.0 {
        rng.random_range(-jitter.rotation_deg..jitter.rotation_deg).to_radians()
    } else {
        0.0
    };
    let (sx, sy) = if jitter.shift_px > 0.0 {
        (
            rng.random_range(-jitter.shift_px..jitter.shift_px),
            rng.random_range(-jitter.shift_px..jitter.shift_px),
        )
    } else {
        (0.0, 0.0)
    };
    let radius = (pen + if jitter.point > 0.0 { rng.random_range(-0.4..0.4) } else { 0.0 }) / 2.0;
    let c = (CANVAS as f64 - 1.0) / 2.0;
    let (cos, sin) = (rot.cos(), rot.sin());
    let to_canvas = |p: P| {
        let (x, y) = (BOX_LO + p.0 * BOX_SIDE - c, BOX_LO + p.1 * BOX_SIDE - c);
        let (x, y) = (x * scale / BOX_SIDE, y * scale / BOX_SIDE);
        (c + cos * x - sin * y + sx, c + sin * x + cos * y + sy)
    };

    let mut bm = Bitmap::blank();
    let r = radius.ceil() as i64;
    for s in strokes {
        let (ox, oy) = (gauss(rng, jitter.stroke), gauss(rng, jitter.stroke));
        let jittered = match s {
            Stroke::Poly(pts) => Stroke::Poly(
                pts.iter()
                    .map(|&(x, y)| (x + ox + gauss(rng, jitter.point), y + oy + gauss(rng, jitter.point)))
                    .collect(),
            ),
            Stroke::Bezier(b) => {
                let mut q = *b;
                for p in &mut q {
                    *p = (p.0 + ox + gauss(rng, jitter.point), p.1 + oy + gauss(rng, jitter.point));
                }
                Stroke::Bezier(q)
            }
            Stroke::Ellipse { c, rx, ry, start, sweep } => Stroke::Ellipse {
                c: (c.0 + ox, c.1 + oy),
                rx: rx * (1.0 + gauss(rng, jitter.point * 3.0)),
                ry: ry * (1.0 + gauss(rng, jitter.point * 3.0)),
                start: *start + gauss(rng, jitter.point * 3.0),
                sweep: *sweep,
            },
            Stroke::Dot(p) => Stroke::Dot((p.0 + ox, p.1 + oy)),
        };
        let dot_boost = if matches!(s, Stroke::Dot(_)) { 1.6 } else { 1.0 };
        for (x, y) in jittered.trace(0.5 / BOX_SIDE) {
            let (px, py) = to_canvas((x, y));
            let rr = radius * dot_boost;
            for dy in -r * 2..=r * 2 {
                for dx in -r * 2..=r * 2 {
                    let (qx, qy) = (px.round() as i64 + dx, py.round() as i64 + dy);
                    let d2 = (qx as f64 - px).powi(2) + (qy as f64 - py).powi(2);
                    if d2 <= rr * rr && (0..CANVAS as i64).contains(&qx) && (0..CANVAS as i64).contains(&qy) {
                        bm.set(qx as usize, qy as usize, true);
                    }
                }
            }
        }
    }
    bm
}

/// Corpus shape. Defaults mirror the Omniglot split proportions at a
/// reduced scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub supervised_scripts: usize,
    pub unsupervised_scripts: usize,
    /// Each evaluation family yields a base script and one script at each
    /// of levels 1, 2 and 3.
    pub evaluation_families: usize,
    pub chars_per_script: usize,
    pub radicals_per_script: usize,
    pub instances_per_class: usize,
    pub jitter: Jitter,
    /// Characters per script of the Greek/Latin/CJK-style probe triple.
    pub probe_chars: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            supervised_scripts: 15,
            unsupervised_scripts: 25,
            evaluation_families: 4,
            chars_per_script: 15,
            radicals_per_script: 8,
            instances_per_class: 20,
            jitter: Jitter::default(),
            probe_chars: 24,
        }
    }
}

/// Generated corpus, evaluation level table and the separability probe.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub levels: SimilarityLevelTable,
    /// One clean (jitter-free) instance per character, like a font rendering.
    pub probe: Dataset,
    /// `(related_a, related_b, unrelated)` script ids of the probe.
    pub triple: (String, String, String),
}

struct Planned {
    name: String,
    split: Split,
    spec: ScriptSpec,
}

fn render_scripts(planned: &[Planned], instances: usize, jitter: &Jitter, master: u64, tag: u64) -> Vec<Dataset> {
    // Class ids follow the lexicographic (script, character) order, as the
    // directory loader assigns them.
    let mut order: Vec<usize> = (0..planned.len()).collect();
    order.sort_by(|&a, &b| planned[a].name.cmp(&planned[b].name));
    let mut jobs = Vec::new();
    let mut classes: Vec<(usize, ClassInfo)> = Vec::new();
    let mut next = 0u32;
    for &si in &order {
        let p = &planned[si];
        for ci in 0..p.spec.chars.len() {
            classes.push((
                si,
                ClassInfo {
                    class_id: next,
                    script_id: p.name.clone(),
                    name: format!("char_{ci:02}"),
                },
            ));
            for inst in 0..instances {
                jobs.push((si, ci, next, inst as u32));
            }
            next += 1;
        }
    }
    let images = parallel::map(&jobs, |&(si, ci, class_id, inst)| {
        let p = &planned[si];
        let mut rng = seed::rng_for(master, &[tag, seed::str_id(&p.name), ci as u64, u64::from(inst)]);
        let bm = draw(&p.spec.chars[ci], p.spec.family.pen, jitter, &mut rng);
        GlyphImage::new(bm, class_id, p.name.clone(), inst)
    });

    let mut by_split: BTreeMap<Split, Dataset> = BTreeMap::new();
    for &si in &order {
        let ds = by_split
            .entry(planned[si].split)
            .or_insert_with(|| Dataset::empty(planned[si].split));
        ds.script_ids.push(planned[si].name.clone());
    }
    for (si, info) in classes {
        by_split.get_mut(&planned[si].split).expect("split").classes.push(info);
    }
    for (job, img) in jobs.iter().zip(images) {
        let split = planned[job.0].split;
        by_split
            .get_mut(&split)
            .expect("split")
            .glyphs
            .push(img.expect("strokes always leave ink"));
    }
    by_split.into_values().collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.chars_per_script < 2 || cfg.radicals_per_script < 2 || cfg.instances_per_class < 2 {
        return Err(Error::InvalidArgument(
            "synthetic corpus needs at least 2 characters, radicals and instances".into(),
        ));
    }
    let mut rng = seed::rng_for(cfg.seed, &[seed::str_id("synth")]);
    let (nr, nc) = (cfg.radicals_per_script, cfg.chars_per_script);
    let mut planned = Vec::new();
    for i in 0..cfg.supervised_scripts {
        let fam = Family::random(&mut rng);
        planned.push(Planned {
            name: format!("invented_{i:02}"),
            split: Split::SupervisedInvented,
            spec: ScriptSpec::new(fam, nr, nc, &mut rng),
        });
    }
    // Historical scripts come in lineages of three (base, radical-sharing
    // descendant, mutated descendant) drawn in alphabetic, logographic and
    // free styles in turn.
    let mut base = None;
    for i in 0..cfg.unsupervised_scripts {
        let spec = match (i % 3, &base) {
            (1, Some(b)) => ScriptSpec::sharing(b, 0.5, &mut rng),
            (2, Some(b)) => ScriptSpec::mutated(b, &mut rng),
            _ => {
                let fam = match (i / 3) % 3 {
                    0 => Family::curvy(&mut rng),
                    1 => Family::grid(&mut rng),
                    _ => Family::random(&mut rng),
                };
                let b = ScriptSpec::new(fam, nr, nc, &mut rng);
                base = Some(b.clone());
                b
            }
        };
        planned.push(Planned {
            name: format!("historical_{i:02}"),
            split: Split::UnsupervisedHistorical,
            spec,
        });
    }
    let mut levels = SimilarityLevelTable::new();
    for f in 0..cfg.evaluation_families {
        let fam = Family::random(&mut rng);
        let base = ScriptSpec::new(fam.clone(), nr, nc, &mut rng);
        let l1 = base.mutated(&mut rng);
        let l2 = base.sharing(0.5, &mut rng);
        let l3 = ScriptSpec::new(fam, nr, nc, &mut rng);
        let names = ["base", "lvl1", "lvl2", "lvl3"].map(|s| format!("family{f}_{s}"));
        levels.insert(&names[0], &names[1], 1)?;
        levels.insert(&names[0], &names[2], 2)?;
        levels.insert(&names[1], &names[2], 2)?;
        for n in &names[..3] {
            levels.insert(n, &names[3], 3)?;
        }
        for (name, spec) in names.into_iter().zip([base, l1, l2, l3]) {
            planned.push(Planned {
                name,
                split: Split::Evaluation,
                spec,
            });
        }
    }

    let mut splits: BTreeMap<Split, Dataset> = Split::ALL.iter().map(|&s| (s, Dataset::empty(s))).collect();
    for ds in render_scripts(&planned, cfg.instances_per_class, &cfg.jitter, cfg.seed, 1) {
        splits.insert(ds.split, ds);
    }

    let latin = ScriptSpec::new(Family::curvy(&mut rng), nr, cfg.probe_chars.max(2), &mut rng);
    let greek = latin.sharing(0.5, &mut rng);
    let cjk = ScriptSpec::new(Family::grid(&mut rng), nr, cfg.probe_chars.max(2), &mut rng);
    let probe_plan: Vec<Planned> = [("Latin", latin), ("Greek", greek), ("CJK", cjk)]
        .into_iter()
        .map(|(n, spec)| Planned {
            name: n.into(),
            split: Split::Evaluation,
            spec,
        })
        .collect();
    let probe = render_scripts(&probe_plan, 1, &Jitter::none(), cfg.seed, 2)
        .pop()
        .expect("probe split");

    Ok(SynthCorpus {
        corpus: Corpus { splits },
        levels,
        probe,
        triple: ("Greek".into(), "Latin".into(), "CJK".into()),
    })
}

/// `count` characters of one freshly invented script, drawn once each
/// with the default handwriting jitter.
pub fn sample_glyphs(seed: u64, count: usize) -> Result<Vec<Bitmap>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be positive".into()));
    }
    let mut rng = seed::rng_for(seed, &[seed::str_id("sample")]);
    let fam = Family::random(&mut rng);
    let spec = ScriptSpec::new(fam, 6, count, &mut rng);
    let jitter = Jitter::default();
    Ok(spec
        .chars
        .iter()
        .enumerate()
        .map(|(i, strokes)| {
            let mut r = seed::rng_for(seed, &[seed::str_id("sample_draw"), i as u64]);
            draw(strokes, spec.family.pen, &jitter, &mut r)
        })
        .collect())
}

/// Writes `root/omniglot/...`, `root/manifest.tsv`, `root/levels.tsv`,
/// `root/probe/...` and `root/probe/manifest.tsv`.
pub fn write_synth(s: &SynthCorpus, root: &Path) -> Result<()> {
    let write = |path: &Path, text: String| -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    };
    let mut manifest = String::new();
    for ds in s.corpus.splits.values() {
        write_omniglot_layout(ds, &root.join("omniglot"))?;
        for sid in &ds.script_ids {
            manifest.push_str(&format!("{sid}\t{}\n", ds.split));
        }
    }
    write(&root.join("manifest.tsv"), manifest)?;
    write(&root.join("levels.tsv"), s.levels.to_tsv())?;
    write_omniglot_layout(&s.probe, &root.join("probe"))?;
    let probe_manifest: String = s
        .probe
        .script_ids
        .iter()
        .map(|sid| format!("{sid}\tevaluation\n"))
        .collect();
    write(&root.join("probe").join("manifest.tsv"), probe_manifest)?;
    write(
        &root.join("probe").join("triple.tsv"),
        format!("{}\t{}\t{}\n", s.triple.0, s.triple.1, s.triple.2),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_omniglot;

    fn small() -> SynthConfig {
        SynthConfig {
            supervised_scripts: 2,
            unsupervised_scripts: 2,
            evaluation_families: 1,
            chars_per_script: 3,
            instances_per_class: 3,
            probe_chars: 4,
            ..Default::default()
        }
    }

    #[test]
    fn shapes_and_levels() {
        let s = generate(&small()).unwrap();
        let sup = s.corpus.get(Split::SupervisedInvented).unwrap();
        assert_eq!(sup.class_count(), 6);
        assert_eq!(sup.len(), 18);
        sup.validate().unwrap();
        let ev = s.corpus.get(Split::Evaluation).unwrap();
        assert_eq!(ev.script_ids.len(), 4);
        assert_eq!(s.levels.level("family0_base", "family0_lvl1"), 1);
        assert_eq!(s.levels.level("family0_lvl3", "family0_lvl2"), 3);
        assert_eq!(s.probe.len(), 12);
        for g in &sup.glyphs {
            let ink = g.pixels.ink_count();
            assert!(ink > 50 && ink < 105 * 105 / 3, "ink {ink}");
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        for (x, y) in a.corpus.splits.values().zip(b.corpus.splits.values()) {
            assert_eq!(x.glyphs, y.glyphs);
        }
        let c = generate(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(
            a.corpus.get(Split::Evaluation).unwrap().glyphs,
            c.corpus.get(Split::Evaluation).unwrap().glyphs
        );
    }

    #[test]
    fn instances_differ_within_class() {
        let s = generate(&small()).unwrap();
        let ev = s.corpus.get(Split::Evaluation).unwrap();
        assert_ne!(ev.glyphs[0].pixels, ev.glyphs[1].pixels);
    }

    #[test]
    fn written_layout_loads_with_same_ids() {
        let s = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_synth(&s, dir.path()).unwrap();
        let back = load_omniglot(&dir.path().join("omniglot"), &dir.path().join("manifest.tsv")).unwrap();
        for split in Split::ALL {
            let (a, b) = (s.corpus.get(split).unwrap(), back.get(split).unwrap());
            assert_eq!(a.classes, b.classes);
            assert_eq!(a.glyphs, b.glyphs);
            assert_eq!(a.script_ids, b.script_ids);
        }
        let levels = SimilarityLevelTable::load(&dir.path().join("levels.tsv")).unwrap();
        assert_eq!(levels, s.levels);
    }
}
