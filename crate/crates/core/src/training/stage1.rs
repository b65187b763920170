use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::dataset::{generate_augmented_set, sample_supervised_batch, Dataset};
use crate::encoder::{init_encoder, Checkpoint, CheckpointMeta, EncoderConfig, Network, Role};
use crate::error::{Error, Result};
use crate::evaluation::{sample_episodes, topk_accuracy, EvalConfig};
use crate::glyph::Bitmap;
use crate::losses::{supcon_loss_and_grad, SupConBatch};
use crate::seed::{derive, rng_for, str_id};
use crate::config_hash;

use super::{
    clip_global_norm, lr_schedule, optimizer_step, warmup_steps, AdamState, EpochRecord,
    Stage1Config, StepRecord, TrainingLog,
};

const VALIDATION_N_WAY: usize = 20;

#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub checkpoint: Checkpoint,
    pub log: TrainingLog,
    /// Character classes withheld from training.
    pub validation_classes: Vec<u32>,
}

fn note(log: &mut TrainingLog, msg: String) {
    log::warn!("{msg}");
    log.notices.push(msg);
}

/// Splits off `fraction` of the classes (seeded) for validation.
fn hold_out(ds: &Dataset, fraction: f64, seed: u64) -> (Dataset, Dataset, Vec<u32>) {
    let mut ids: Vec<u32> = ds.classes.iter().map(|c| c.class_id).collect();
    ids.sort_unstable();
    ids.shuffle(&mut rng_for(seed, &[str_id("holdout")]));
    let n_val = (fraction * ids.len() as f64).round() as usize;
    let (val, train) = ids.split_at(n_val.min(ids.len()));
    let mut val = val.to_vec();
    val.sort_unstable();
    (ds.subset_classes(train), ds.subset_classes(&val), val)
}

/// Trains the teacher with the supervised contrastive objective.
pub fn train_stage1(
    cfg: &Stage1Config,
    ds: &Dataset,
    enc_cfg: &EncoderConfig,
) -> Result<Stage1Output> {
    cfg.validate()?;
    enc_cfg.validate()?;
    let mut log = TrainingLog::new();
    for w in cfg.range_warnings() {
        note(&mut log, w);
    }
    let hash = config_hash(&(cfg, enc_cfg));

    let (train, val, validation_classes) = hold_out(ds, cfg.validation_fraction, cfg.seed);
    let augmented = train.glyphs.iter().any(|g| g.provenance.is_some());
    let train = if !augmented && cfg.augmentation.augmentations_per_instance > 0 {
        let (aug, warnings) = generate_augmented_set(&train, &cfg.augmentation, derive(cfg.seed, &[str_id("augment")]))?;
        for w in warnings {
            note(&mut log, w);
        }
        aug
    } else {
        train
    };
    if train.is_empty() {
        return Err(Error::Insufficient("no training glyphs after hold-out".into()));
    }

    let eligible = val.genuine_by_class().values().filter(|v| v.len() >= 2).count();
    let episodes = if eligible >= 2 {
        let ecfg = EvalConfig {
            n_way: VALIDATION_N_WAY.min(eligible),
            k_values: vec![1],
            episodes: cfg.validation_episodes.max(1),
            ndcg_k: 1,
            seed: derive(cfg.seed, &[str_id("validation")]),
        };
        sample_episodes(&val, &ecfg)?
    } else {
        note(&mut log, format!("validation skipped: {eligible} held-out class(es) with two instances"));
        Vec::new()
    };

    let net = Network::new(enc_cfg)?;
    let mut params = init_encoder(enc_cfg)?;
    let mut state = AdamState::new(&params.tensors);
    let spe = cfg
        .steps_per_epoch
        .unwrap_or_else(|| train.len().div_ceil(cfg.batch_size))
        .max(1) as u64;
    let total = spe * cfg.epochs as u64;
    let warm = warmup_steps(cfg.warmup_epochs, spe, total);
    let mut rng = rng_for(cfg.seed, &[str_id("stage1-batches")]);
    let start = Instant::now();

    for epoch in 0..cfg.epochs {
        for s in 0..spe {
            let step = epoch as u64 * spe + s;
            let lr = lr_schedule(step, warm, total, cfg.base_lr)?;
            let batch = sample_supervised_batch(&train, cfg.batch_size, &mut rng)?;
            let images: Vec<&Bitmap> = batch.indices.iter().map(|&i| &train.glyphs[i].pixels).collect();
            let (loss, mut grads) = net.loss_and_grads(&params.tensors, &images, |zs| {
                let z64: Vec<Vec<f64>> = zs.iter().map(|z| z.iter().map(|&v| f64::from(v)).collect()).collect();
                let out = supcon_loss_and_grad(&SupConBatch {
                    embeddings: &z64,
                    labels: &batch.labels,
                    temperature: cfg.temperature,
                })?;
                let g = out.grads.iter().map(|g| g.iter().map(|&v| v as f32).collect()).collect();
                Ok((out.loss, g))
            })?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("stage-1 loss at step {step}")));
            }
            let grad_norm = clip_global_norm(&mut [&mut grads], cfg.grad_clip);
            optimizer_step(&mut params.tensors, &grads, lr, cfg.weight_decay, &mut state)?;
            log.push_step(StepRecord {
                step: step + 1,
                epoch,
                lr,
                loss,
                kappa: None,
                grad_norm,
                wall_ms: start.elapsed().as_millis() as u64,
                extra: BTreeMap::new(),
            })?;
        }
        let last = epoch + 1 == cfg.epochs;
        if !episodes.is_empty() && ((epoch + 1) % cfg.validation_every == 0 || last) {
            let top1 = topk_accuracy(&params, &val, &episodes, 1)?;
            log::info!("stage 1 epoch {} val top-1 {top1:.4}", epoch + 1);
            log.push_epoch(EpochRecord {
                epoch,
                metrics: BTreeMap::from([("val_top1".to_string(), top1)]),
            });
        }
    }

    log.config_hash = hash.clone();
    let meta = CheckpointMeta::new(enc_cfg, Role::Teacher, 1, total, &hash);
    Ok(Stage1Output {
        checkpoint: Checkpoint::new(params, None, meta),
        log,
        validation_classes,
    })
}
