use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use glyphsim::encoder::load_checkpoint;
use glyphsim::similarity::EmbeddingStore;

const CONFIG: &str = r#"{
  "synth": {"supervised_scripts": 2, "unsupervised_scripts": 3, "evaluation_families": 1,
            "chars_per_script": 4, "radicals_per_script": 3, "instances_per_class": 4, "probe_chars": 4},
  "encoder": {"embedding_dim": 8, "widths": [4, 4, 8, 8], "convs_per_block": 1, "norm_groups": 2},
  "stage1": {"batch_size": 8, "epochs": 1, "steps_per_epoch": 2, "warmup_epochs": 0,
             "validation_fraction": 0.25, "validation_episodes": 5,
             "augmentation": {"augmentations_per_instance": 1}},
  "stage2": {"batch_size": 4, "epochs": 1, "steps_per_epoch": 2, "warmup_epochs": 0,
             "predictor_hidden": 16, "probe_size": 16, "probe_every": 1},
  "eval": {"n_way": 4, "k_values": [1], "episodes": 10, "ndcg_k": 3},
  "triples": [["Greek", "Latin", "CJK"]]
}"#;

fn glyphsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glyphsim"))
        .current_dir(dir)
        .args(["--config", "config.json", "--threads", "1"])
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = glyphsim(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.json"), CONFIG).unwrap();
    ok(dir.path(), &["--out", "synth", "synth"]);
    dir
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Runs the whole pipeline into `<dir>/<out>`.
fn pipeline(dir: &Path, out: &str) {
    ok(dir, &["--out", &format!("{out}/prep"), "prepare", "--data-root", "synth/omniglot", "--manifest", "synth/manifest.tsv"]);
    let prep = format!("{out}/prep");
    ok(dir, &["--out", out, "train-teacher", "--data-root", &prep]);
    ok(dir, &["--out", out, "train-student", "--data-root", &prep, "--init", &format!("{out}/teacher.ckpt")]);
    ok(dir, &["--out", &format!("{out}/emb"), "embed", "--data-root", &prep, "--checkpoint", &format!("{out}/target.ckpt")]);
    ok(dir, &[
        "--out", &format!("{out}/eval"), "eval", "--data-root", &prep,
        "--checkpoint", &format!("{out}/target.ckpt"), "--checkpoint", &format!("{out}/student.ckpt"),
        "--levels", "synth/levels.tsv", "--probe-root", "synth/probe",
    ]);
}

#[test]
fn prepare_is_idempotent_and_loadable() {
    let dir = setup();
    let d = dir.path();
    let stdout = ok(d, &["--out", "prep", "prepare", "--data-root", "synth/omniglot", "--manifest", "synth/manifest.tsv"]);
    assert!(stdout.contains("invented_00\tsupervised_invented"));
    for split in ["supervised_invented", "unsupervised_historical", "evaluation"] {
        assert!(d.join("prep").join(split).join("manifest.tsv").exists());
    }
    let summary = read(d.join("prep/prepare.json"));
    let manifest = read(d.join("prep/manifest.tsv"));
    let some_png = d.join("prep/supervised_invented/invented_00/char_00/01.png");
    let png = read(some_png.clone());
    ok(d, &["--out", "prep", "prepare", "--data-root", "synth/omniglot", "--manifest", "synth/manifest.tsv"]);
    assert_eq!(summary, read(d.join("prep/prepare.json")));
    assert_eq!(manifest, read(d.join("prep/manifest.tsv")));
    assert_eq!(png, read(some_png));
    assert!(d.join("prep/augmented/invented_00/char_00/01_01.png").exists());
}

#[test]
fn prepare_rejects_missing_script() {
    let dir = setup();
    let d = dir.path();
    let mut manifest = std::fs::read_to_string(d.join("synth/manifest.tsv")).unwrap();
    manifest.push_str("Phoenician\tevaluation\n");
    std::fs::write(d.join("bad.tsv"), manifest).unwrap();
    let out = glyphsim(d, &["--out", "prep", "prepare", "--data-root", "synth/omniglot", "--manifest", "bad.tsv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Phoenician"));
}

#[test]
fn full_pipeline_outputs_and_determinism() {
    let dir = setup();
    let d = dir.path();
    pipeline(d, "run1");
    pipeline(d, "run2");

    let teacher = load_checkpoint(&d.join("run1/teacher.ckpt")).unwrap();
    let target = load_checkpoint(&d.join("run1/target.ckpt")).unwrap();
    assert_eq!(teacher.meta.config_hash, target.meta.config_hash);
    assert!(d.join("run1/logs/stage1.csv").exists());
    assert!(d.join("run1/logs/stage2.json").exists());
    assert!(d.join("run1/collapse.json").exists());

    let report: serde_json::Value = serde_json::from_slice(&read(d.join("run1/eval/report.json"))).unwrap();
    for key in ["n20r1", "n20r5", "ndcg10", "spearman_rho", "separability", "config_hash", "seed"] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    let models: Vec<&str> = report["rows"].as_array().unwrap().iter().map(|r| r["model"].as_str().unwrap()).collect();
    assert_eq!(models, ["target", "student"]);
    assert_eq!(report["config_hash"], teacher.meta.config_hash.as_str());
    assert!(report["separability"]["Greek/Latin/CJK"]["student"].is_number());

    for file in ["teacher.ckpt", "student.ckpt", "target.ckpt", "eval/report.json", "eval/episodes.csv", "emb/embeddings.csv"] {
        assert_eq!(read(d.join("run1").join(file)), read(d.join("run2").join(file)), "{file} differs");
    }
    let mut stores: Vec<_> = std::fs::read_dir(d.join("run1/emb/embeddings")).unwrap().map(|e| e.unwrap().path()).collect();
    stores.sort();
    assert_eq!(stores.len(), 4);
    for p in &stores {
        let bytes = read(p.clone());
        assert_eq!(bytes, read(d.join("run2/emb/embeddings").join(p.file_name().unwrap())));
        let s = EmbeddingStore::load(p).unwrap();
        assert_eq!(s.to_bytes().unwrap(), bytes);
        assert_eq!(s.config_hash, teacher.meta.config_hash);
    }

    // report rebuilds the same files from saved metrics
    ok(d, &["--out", "run1/eval", "report"]);
    assert_eq!(read(d.join("run1/eval/report.json")), read(d.join("run2/eval/report.json")));
}

#[test]
fn student_init_modes_and_errors() {
    let dir = setup();
    let d = dir.path();
    let data = ["--data-root", "synth/omniglot", "--manifest", "synth/manifest.tsv"];
    let mut args = vec!["--out", "rand", "train-student"];
    args.extend(data);
    args.extend(["--init", "random"]);
    ok(d, &args);
    let log = std::fs::read_to_string(d.join("rand/logs/stage2.json")).unwrap();
    assert!(log.contains("config_hash"));

    let mut args = vec!["--out", "x", "train-student"];
    args.extend(data);
    args.extend(["--init", "nope.ckpt"]);
    let out = glyphsim(d, &args);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.ckpt"));

    let mut args = vec!["--out", "rand/emb", "embed", "--checkpoint", "rand/target.ckpt", "--dim", "32"];
    args.extend(data);
    assert!(!glyphsim(d, &args).status.success());
}

#[test]
fn eval_without_levels_keeps_glyph_metrics() {
    let dir = setup();
    let d = dir.path();
    let data = ["--data-root", "synth/omniglot", "--manifest", "synth/manifest.tsv"];
    let mut args = vec!["--out", "t", "train-teacher"];
    args.extend(data);
    ok(d, &args);
    let mut args = vec!["--out", "t/eval", "eval", "--checkpoint", "t/teacher.ckpt"];
    args.extend(data);
    let out = glyphsim(d, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("script metrics skipped"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("separability skipped"));
    let report: serde_json::Value = serde_json::from_slice(&read(d.join("t/eval/report.json"))).unwrap();
    assert!(report["n20r1"].is_number());
    assert_eq!(report["rows"][0]["model"], "teacher");
}
