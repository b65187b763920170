//! Reduced-compute end-to-end run on the synthetic corpus with timings.
//! Knobs are read from environment variables (see `knob`).

use std::time::Instant;

use glyphsim::dataset::synth::{generate, SynthConfig};
use glyphsim::dataset::{AugmentationParams, Split};
use glyphsim::encoder::{EncoderConfig, EncoderParams};
use glyphsim::evaluation::{dataset_script_sets, glyph_metrics, sample_episodes, script_metrics, EvalConfig};
use glyphsim::similarity::{script_distance_matrix, separability_ratio, Granularity, ScriptSet};
use glyphsim::training::{train_stage1, train_stage2, InitMode, Stage1Config, Stage2Config};

fn knob<T: std::str::FromStr>(name: &str, default: T) -> T {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    env_logger::init();
    let t0 = Instant::now();
    let synth = generate(&SynthConfig::default()).unwrap();
    println!("synth {:.1}s", t0.elapsed().as_secs_f64());
    let sup = synth.corpus.get(Split::SupervisedInvented).unwrap();
    let uns = synth.corpus.get(Split::UnsupervisedHistorical).unwrap();
    let eval = synth.corpus.get(Split::Evaluation).unwrap();
    let enc = EncoderConfig {
        widths: [8, 16, 32, 32],
        convs_per_block: 1,
        embedding_dim: knob("DIM", 64),
        ..Default::default()
    };
    let s1 = Stage1Config {
        batch_size: knob("S1_B", 128),
        base_lr: knob("S1_LR", 2e-3),
        warmup_epochs: knob("S1_WARM", 2),
        epochs: knob("S1_EPOCHS", 20),
        steps_per_epoch: Some(knob("S1_SPE", 30)),
        temperature: knob("TAU", 0.1),
        validation_every: 5,
        augmentation: AugmentationParams::default(),
        ..Default::default()
    };
    let t = Instant::now();
    let cache = std::path::Path::new("/tmp/desk_teacher.ckpt");
    let teacher = train_stage1(&s1, sup, &enc).unwrap();
    glyphsim::encoder::save_checkpoint(cache, &teacher.checkpoint).unwrap();
    println!("stage1 {:.1}s losses {:?}", t.elapsed().as_secs_f64(), (teacher.log.losses().first(), teacher.log.losses().last()));
    for e in teacher.log.epochs() {
        println!("  epoch {} val {:?}", e.epoch, e.metrics);
    }
    let held = sup.subset_classes(&teacher.validation_classes);
    let ecfg = EvalConfig { seed: 1, ..Default::default() };
    let episodes = sample_episodes(&held, &ecfg).unwrap();
    let gm = glyph_metrics(&teacher.checkpoint.encoder, &held, &episodes, 20).unwrap();
    println!("teacher held-out N20R1 {:.3} N20R5 {:.3}", gm.n20r1, gm.n20r5);

    let s2 = |mode| Stage2Config {
        batch_size: knob("S2_B", 64),
        base_lr: knob("S2_LR", 1e-3),
        ema_decay: knob("KAPPA", 0.99),
        predictor_hidden: knob("HIDDEN", 256),
        warmup_epochs: knob("S2_WARM", 1),
        epochs: knob("S2_EPOCHS", 10),
        steps_per_epoch: Some(knob("S2_SPE", 20)),
        init_mode: mode,
        probe_every: 20,
        ..Default::default()
    };
    let t = Instant::now();
    let hybrid = train_stage2(&s2(InitMode::Teacher), uns, &enc, Some(&teacher.checkpoint)).unwrap();
    println!("stage2 hybrid {:.1}s probe {:?} rank {}", t.elapsed().as_secs_f64(), hybrid.collapse.probe_mean_cosine, hybrid.collapse.effective_rank);
    let t = Instant::now();
    let mixed = glyphsim::dataset::Dataset::merged(&[sup, uns], Split::UnsupervisedHistorical);
    let random = train_stage2(&s2(InitMode::Random), &mixed, &enc, None).unwrap();
    println!("stage2 random {:.1}s probe {:?} rank {}", t.elapsed().as_secs_f64(), random.collapse.probe_mean_cosine, random.collapse.effective_rank);

    let triple = &synth.triple;
    let find = |sets: &[ScriptSet], id: &str| sets.iter().find(|s| s.script_id == id).unwrap().clone();
    let models: Vec<(&str, &EncoderParams)> = vec![
        ("teacher", &teacher.checkpoint.encoder),
        ("student", &hybrid.student.encoder),
        ("target", &hybrid.target.encoder),
        ("byol_random", &random.target.encoder),
    ];
    for (name, p) in models {
        let t = Instant::now();
        for gran in [Granularity::Instances, Granularity::Centroids] {
            let sets = dataset_script_sets(p, eval, gran).unwrap();
            let m = script_distance_matrix(&sets).unwrap();
            let sm = script_metrics(&m, &synth.levels, 10).unwrap();
            let psets = dataset_script_sets(p, &synth.probe, gran).unwrap();
            let r = separability_ratio(&find(&psets, &triple.0), &find(&psets, &triple.1), &find(&psets, &triple.2)).unwrap();
            let d = |a: &str, b: &str| glyphsim::similarity::script_distance(&find(&psets, a), &find(&psets, b)).unwrap();
            println!("{name:12} {gran:?}: NDCG@10 {:.4} rho {:.3} R {:.3} dGL {:.3} dGC {:.3} dLC {:.3}", sm.ranking.mean, sm.spearman.rho, r, d("Greek", "Latin"), d("Greek", "CJK"), d("Latin", "CJK"));
        }
        println!("  eval {:.1}s", t.elapsed().as_secs_f64());
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
