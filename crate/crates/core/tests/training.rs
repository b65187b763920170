use glyphsim::dataset::synth::{generate, SynthConfig};
use glyphsim::dataset::{AugmentationParams, Dataset, Split};
use glyphsim::encoder::{init_encoder, Checkpoint, CheckpointMeta, EncoderConfig, Role};
use glyphsim::training::{
    train_stage1, train_stage2, InitMode, Stage1Config, Stage2Config,
};

fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        embedding_dim: 16,
        widths: [4, 8, 8, 8],
        convs_per_block: 1,
        norm_groups: 4,
        seed: 3,
        ..Default::default()
    }
}

fn toy(split: Split, scripts: usize, chars: usize) -> Dataset {
    let cfg = SynthConfig {
        seed: 11,
        supervised_scripts: scripts,
        unsupervised_scripts: scripts,
        evaluation_families: 1,
        chars_per_script: chars,
        radicals_per_script: 4,
        instances_per_class: 6,
        probe_chars: 2,
        ..Default::default()
    };
    generate(&cfg).unwrap().corpus.get(split).unwrap().clone()
}

fn small_aug() -> AugmentationParams {
    AugmentationParams {
        augmentations_per_instance: 1,
        ..Default::default()
    }
}

fn stage1_cfg(epochs: usize) -> Stage1Config {
    Stage1Config {
        batch_size: 10,
        base_lr: 3e-3,
        warmup_epochs: 2,
        epochs,
        steps_per_epoch: Some(1),
        validation_fraction: 0.0,
        augmentation: small_aug(),
        ..Default::default()
    }
}

fn teacher_checkpoint() -> Checkpoint {
    let enc = init_encoder(&tiny_encoder()).unwrap();
    let meta = CheckpointMeta::new(&enc.config, Role::Teacher, 1, 0, "test");
    Checkpoint::new(enc, None, meta)
}

fn stage2_cfg(epochs: usize) -> Stage2Config {
    Stage2Config {
        predictor_hidden: 32,
        batch_size: 6,
        base_lr: 1e-3,
        warmup_epochs: 1,
        epochs,
        steps_per_epoch: Some(1),
        augmentation: small_aug(),
        probe_size: 24,
        probe_every: 10,
        ..Default::default()
    }
}

#[test]
fn stage1_loss_decreases_on_toy_classes() {
    let ds = toy(Split::SupervisedInvented, 1, 5);
    assert_eq!(ds.class_count(), 5);
    let out = train_stage1(&stage1_cfg(50), &ds, &tiny_encoder()).unwrap();
    let losses = out.log.losses();
    assert_eq!(losses.len(), 50);
    let head: f64 = losses[..5].iter().sum::<f64>() / 5.0;
    let tail: f64 = losses[45..].iter().sum::<f64>() / 5.0;
    assert!(tail < head, "loss did not fall: {head} -> {tail}");
    assert_eq!(out.checkpoint.meta.role, Role::Teacher);
    assert_eq!(out.checkpoint.meta.stage, 1);
}

#[test]
fn stage1_replays_exactly() {
    let ds = toy(Split::SupervisedInvented, 1, 5);
    let a = train_stage1(&stage1_cfg(4), &ds, &tiny_encoder()).unwrap();
    let b = train_stage1(&stage1_cfg(4), &ds, &tiny_encoder()).unwrap();
    for (x, y) in a.log.losses().iter().zip(b.log.losses()) {
        assert!((x - y).abs() <= 1e-6);
    }
    assert_eq!(a.checkpoint.encoder.tensors, b.checkpoint.encoder.tensors);
}

#[test]
fn stage1_validates_on_held_out_classes() {
    let ds = toy(Split::SupervisedInvented, 2, 10);
    let cfg = Stage1Config {
        validation_fraction: 0.2,
        validation_every: 1,
        validation_episodes: 10,
        ..stage1_cfg(2)
    };
    let out = train_stage1(&cfg, &ds, &tiny_encoder()).unwrap();
    assert_eq!(out.validation_classes.len(), 4);
    assert_eq!(out.log.epochs().len(), 2);
    let top1 = out.log.epochs()[1].metrics["val_top1"];
    assert!((0.0..=1.0).contains(&top1));
}

#[test]
fn stage2_zero_epochs_keeps_teacher_weights() {
    let ds = toy(Split::UnsupervisedHistorical, 1, 6);
    let teacher = teacher_checkpoint();
    let out = train_stage2(&stage2_cfg(0), &ds, &tiny_encoder(), Some(&teacher)).unwrap();
    assert_eq!(out.student.encoder.tensors, teacher.encoder.tensors);
    assert_eq!(out.target.encoder.tensors, teacher.encoder.tensors);
    assert_eq!(out.student.meta.role, Role::Student);
    assert_eq!(out.target.meta.role, Role::Target);
    assert!(out.student.predictor.is_some());
    assert!(out.log.steps().is_empty());
}

#[test]
fn stage2_target_moves_by_at_most_one_minus_kappa() {
    let ds = toy(Split::UnsupervisedHistorical, 1, 6);
    let teacher = teacher_checkpoint();
    let cfg = Stage2Config {
        ema_decay: 0.9995,
        warmup_epochs: 0,
        ..stage2_cfg(1)
    };
    let out = train_stage2(&cfg, &ds, &tiny_encoder(), Some(&teacher)).unwrap();
    // θ₀ = ξ₀, so ξ₁ − ξ₀ = (1−κ)(θ₁ − θ₀)
    let t0 = &teacher.encoder.tensors;
    let mut max_target = 0.0f64;
    let mut max_student = 0.0f64;
    for ((a, b), c) in t0.tensors().iter().zip(out.target.encoder.tensors.tensors()).zip(out.student.encoder.tensors.tensors()) {
        for ((&x0, &xi), &th) in a.data.iter().zip(&b.data).zip(&c.data) {
            max_target = max_target.max((f64::from(xi) - f64::from(x0)).abs());
            max_student = max_student.max((f64::from(th) - f64::from(x0)).abs());
        }
    }
    assert!(max_student > 0.0);
    assert!(max_target <= 0.0005 * max_student * 1.01 + 1e-7, "{max_target} vs {max_student}");
    assert!(out.log.steps()[0].extra["target_grad_norm"] == 0.0);
}

#[test]
fn stage2_zero_lr_freezes_student_and_target() {
    let ds = toy(Split::UnsupervisedHistorical, 1, 6);
    let teacher = teacher_checkpoint();
    let cfg = Stage2Config {
        base_lr: 0.0,
        ema_decay: 0.5,
        ..stage2_cfg(6)
    };
    let out = train_stage2(&cfg, &ds, &tiny_encoder(), Some(&teacher)).unwrap();
    assert_eq!(out.student.encoder.tensors, teacher.encoder.tensors);
    assert_eq!(out.target.encoder.tensors, teacher.encoder.tensors);
    assert_eq!(out.student.predictor, train_stage2(&cfg, &ds, &tiny_encoder(), Some(&teacher)).unwrap().student.predictor);
}

#[test]
fn stage2_rejects_mismatched_teacher_and_missing_teacher() {
    let ds = toy(Split::UnsupervisedHistorical, 1, 6);
    let teacher = teacher_checkpoint();
    let wider = EncoderConfig {
        embedding_dim: 32,
        ..tiny_encoder()
    };
    assert!(train_stage2(&stage2_cfg(1), &ds, &wider, Some(&teacher)).is_err());
    assert!(train_stage2(&stage2_cfg(1), &ds, &tiny_encoder(), None).is_err());
}

#[test]
fn stage2_random_init_does_not_collapse() {
    let ds = toy(Split::UnsupervisedHistorical, 2, 8);
    let cfg = Stage2Config {
        init_mode: InitMode::Random,
        ..stage2_cfg(100)
    };
    let out = train_stage2(&cfg, &ds, &tiny_encoder(), None).unwrap();
    assert_eq!(out.collapse.probe_mean_cosine.len(), 11);
    for &(step, c) in &out.collapse.probe_mean_cosine {
        assert!(c < 0.99, "probe cosine {c} at step {step}");
    }
    assert!(out.collapse.effective_rank >= 1);
}

#[test]
fn stage2_replays_exactly() {
    let ds = toy(Split::UnsupervisedHistorical, 1, 6);
    let teacher = teacher_checkpoint();
    let a = train_stage2(&stage2_cfg(3), &ds, &tiny_encoder(), Some(&teacher)).unwrap();
    let b = train_stage2(&stage2_cfg(3), &ds, &tiny_encoder(), Some(&teacher)).unwrap();
    assert_eq!(a.log.losses(), b.log.losses());
    assert_eq!(a.target.encoder.tensors, b.target.encoder.tensors);
}
