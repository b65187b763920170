use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index;

use crate::dataset::{sample_class_pairs, Dataset};
use crate::encoder::{
    ema_update, init_encoder, predictor_backward, predictor_forward, Checkpoint, CheckpointMeta,
    EncoderConfig, EncoderParams, Network, PredictorParams, Role,
};
use crate::error::{Error, Result};
use crate::glyph::Bitmap;
use crate::losses::{byol_loss_and_grad, ByolViewBatch};
use crate::seed::{derive, rng_for, str_id};
use crate::{config_hash, parallel};

use super::{
    clip_global_norm, covariance_spectrum, effective_rank, lr_schedule, mean_pairwise_cosine,
    optimizer_step, warmup_steps, AdamState, InitMode, Stage2Config, StepRecord, TrainingLog,
};

/// Eigenvalues below this fraction of the largest count as collapsed.
const RANK_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollapseStats {
    /// `(step, mean pairwise cosine)` of the student over the probe glyphs;
    /// step 0 is the initialization.
    pub probe_mean_cosine: Vec<(u64, f64)>,
    pub covariance_spectrum: Vec<f64>,
    pub effective_rank: usize,
}

#[derive(Debug, Clone)]
pub struct Stage2Output {
    pub student: Checkpoint,
    pub target: Checkpoint,
    pub log: TrainingLog,
    pub collapse: CollapseStats,
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

fn initial_student(cfg: &Stage2Config, enc_cfg: &EncoderConfig, teacher: Option<&Checkpoint>) -> Result<EncoderParams> {
    match cfg.init_mode {
        InitMode::Teacher => {
            let t = teacher.ok_or_else(|| {
                Error::InvalidArgument("init_mode=teacher needs a teacher checkpoint".into())
            })?;
            // the init seed is irrelevant once weights are copied
            let mut arch = t.encoder.config.clone();
            arch.seed = enc_cfg.seed;
            if arch != *enc_cfg {
                return Err(Error::ShapeMismatch(format!(
                    "teacher architecture {:?} differs from the configured encoder {:?}",
                    t.encoder.config, enc_cfg
                )));
            }
            Network::new(enc_cfg)?
                .init_params(0)
                .check_compatible(&t.encoder.tensors)?;
            Ok(EncoderParams {
                config: t.encoder.config.clone(),
                role: Role::Student,
                tensors: t.encoder.tensors.clone(),
            })
        }
        InitMode::Random => {
            let mut p = init_encoder(enc_cfg)?;
            p.role = Role::Student;
            Ok(p)
        }
    }
}

/// Self-distillation of a student/target pair on unlabeled view pairs.
/// Only the student and predictor receive gradients; the target follows the
/// student by exponential moving average.
pub fn train_stage2(
    cfg: &Stage2Config,
    ds: &Dataset,
    enc_cfg: &EncoderConfig,
    teacher: Option<&Checkpoint>,
) -> Result<Stage2Output> {
    cfg.validate()?;
    enc_cfg.validate()?;
    let mut log = TrainingLog::new();
    for w in cfg.range_warnings() {
        log::warn!("{w}");
        log.notices.push(w);
    }
    if cfg.init_mode == InitMode::Random && teacher.is_some() {
        log.notices.push("teacher checkpoint ignored under init_mode=random".into());
    }
    let hash = config_hash(&(cfg, enc_cfg, teacher.map(|t| &t.meta.config_hash)));

    let mut student = initial_student(cfg, enc_cfg, teacher)?;
    let mut target = student.clone();
    target.role = Role::Target;
    let net = student.network();
    let mut predictor = PredictorParams::init(
        enc_cfg.embedding_dim,
        cfg.predictor_hidden,
        derive(cfg.seed, &[str_id("predictor")]),
    )?;
    // fresh optimizer state, independent of the teacher run
    let mut enc_state = AdamState::new(&student.tensors);
    let mut pred_state = AdamState::new(&predictor.tensors);

    let genuine: Vec<usize> = (0..ds.glyphs.len()).filter(|&i| ds.glyphs[i].provenance.is_none()).collect();
    let probe: Vec<&Bitmap> = {
        let n = cfg.probe_size.min(genuine.len());
        let mut pick = index::sample(&mut rng_for(cfg.seed, &[str_id("probe")]), genuine.len(), n).into_vec();
        pick.sort_unstable();
        pick.iter().map(|&k| &ds.glyphs[genuine[k]].pixels).collect()
    };
    let probe_embeddings = |p: &EncoderParams| -> Vec<Vec<f32>> {
        net.embed_batch::<f32>(&p.tensors, &probe).into_iter().map(|f| f.z).collect()
    };

    let classes = ds.genuine_by_class().values().filter(|v| v.len() >= 2).count();
    let spe = cfg
        .steps_per_epoch
        .unwrap_or_else(|| classes.div_ceil(cfg.batch_size))
        .max(1) as u64;
    let total = spe * cfg.epochs as u64;
    if total > 0 && classes == 0 {
        return Err(Error::Insufficient("no class has two genuine instances".into()));
    }
    let warm = warmup_steps(cfg.warmup_epochs, spe, total);
    let kappa = cfg.ema_decay;
    let mut rng = rng_for(cfg.seed, &[str_id("stage2-pairs")]);
    let mut collapse = CollapseStats::default();
    if cfg.probe_every > 0 && probe.len() >= 2 {
        collapse.probe_mean_cosine.push((0, mean_pairwise_cosine(&probe_embeddings(&student))));
    }
    let start = Instant::now();

    for step in 0..total {
        let epoch = (step / spe) as usize;
        let lr = lr_schedule(step, warm, total, cfg.base_lr)?;
        let pairs = sample_class_pairs(ds, cfg.batch_size, &cfg.augmentation, &mut rng)?;
        let b = pairs.pairs.len();
        let images: Vec<&Bitmap> = pairs
            .pairs
            .iter()
            .map(|p| &p.0.pixels)
            .chain(pairs.pairs.iter().map(|p| &p.1.pixels))
            .collect();

        // target outputs carry no gradient
        let zt: Vec<Vec<f64>> = net
            .embed_batch::<f32>(&target.tensors, &images)
            .iter()
            .map(|f| to_f64(&f.z))
            .collect();
        let mut pred_grads = predictor.tensors.zeros_like();
        let mut target_grad_sq = 0.0;
        let (loss, mut enc_grads) = net.loss_and_grads(&student.tensors, &images, |zs| {
            let fwd: Vec<_> = parallel::map(zs, |z| predictor_forward(&predictor.tensors, z, true));
            let p64: Vec<Vec<f64>> = fwd.iter().map(|(p, _)| to_f64(p)).collect();
            let out = byol_loss_and_grad(&ByolViewBatch {
                p1: &p64[..b],
                p2: &p64[b..],
                z1: &zt[..b],
                z2: &zt[b..],
            })?;
            target_grad_sq = out.dz1.iter().chain(&out.dz2).flatten().map(|g| g * g).sum();
            let dz = out
                .dp1
                .iter()
                .chain(&out.dp2)
                .zip(zs)
                .zip(&fwd)
                .map(|((dp, z), (_, cache))| {
                    let dp: Vec<f32> = dp.iter().map(|&g| g as f32).collect();
                    predictor_backward(&predictor.tensors, z, cache, &dp, &mut pred_grads)
                })
                .collect();
            Ok((out.loss, dz))
        })?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("stage-2 loss at step {step}")));
        }
        if target_grad_sq != 0.0 {
            return Err(Error::NonFinite("gradient reached the target network".into()));
        }
        let grad_norm = clip_global_norm(&mut [&mut enc_grads, &mut pred_grads], cfg.grad_clip);
        optimizer_step(&mut student.tensors, &enc_grads, lr, cfg.weight_decay, &mut enc_state)?;
        optimizer_step(
            &mut predictor.tensors,
            &pred_grads,
            lr * cfg.predictor_lr_multiplier,
            cfg.weight_decay,
            &mut pred_state,
        )?;
        ema_update(&mut target, &student, kappa)?;

        let mut extra = BTreeMap::from([("target_grad_norm".to_string(), 0.0)]);
        let done = step + 1;
        if cfg.probe_every > 0 && (done % cfg.probe_every as u64 == 0 || done == total) && probe.len() >= 2 {
            let c = mean_pairwise_cosine(&probe_embeddings(&student));
            log::info!("stage 2 step {done} loss {loss:.4} probe cosine {c:.4}");
            collapse.probe_mean_cosine.push((done, c));
            extra.insert("probe_mean_cos".into(), c);
        }
        log.push_step(StepRecord {
            step: done,
            epoch,
            lr,
            loss,
            kappa: Some(kappa),
            grad_norm,
            wall_ms: start.elapsed().as_millis() as u64,
            extra,
        })?;
    }

    if !probe.is_empty() {
        collapse.covariance_spectrum = covariance_spectrum(&probe_embeddings(&student));
        collapse.effective_rank = effective_rank(&collapse.covariance_spectrum, RANK_THRESHOLD);
    }

    log.config_hash = hash.clone();
    let mut meta = CheckpointMeta::new(enc_cfg, Role::Student, 2, total, &hash);
    let student_ckpt = Checkpoint::new(student, Some(predictor), meta.clone());
    meta.role = Role::Target;
    let target_ckpt = Checkpoint::new(target, None, meta);
    Ok(Stage2Output {
        student: student_ckpt,
        target: target_ckpt,
        log,
        collapse,
    })
}
