use glyphsim::dataset::{apply_affine_augmentation, AugmentationParams};
use glyphsim::glyph::{Bitmap, GlyphImage};
use glyphsim::evaluation::{fractional_ranks, spearman_rho};
use glyphsim::losses::{supcon_loss, SupConBatch};
use glyphsim::similarity::{directed_script_distance, script_distance, ScriptSet};
use glyphsim::training::lr_schedule;
use proptest::prelude::*;
use rand::SeedableRng;

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn unit_vectors(count: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), count)
        .prop_filter("nonzero", |vs| vs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)))
        .prop_map(|vs| vs.into_iter().map(unit).collect())
}

fn to_f32(vs: &[Vec<f64>]) -> Vec<Vec<f32>> {
    vs.iter().map(|v| v.iter().map(|&x| x as f32).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn supcon_ignores_common_rotation(z in unit_vectors(4..12, 3), angle in 0.0..std::f64::consts::TAU, tau in 0.05f64..0.5) {
        let labels: Vec<u32> = (0..z.len() as u32).map(|i| i % 2).collect();
        let (s, c) = angle.sin_cos();
        let rotated: Vec<Vec<f64>> = z.iter().map(|v| vec![c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]).collect();
        let a = supcon_loss(&SupConBatch { embeddings: &z, labels: &labels, temperature: tau }).unwrap();
        let b = supcon_loss(&SupConBatch { embeddings: &rotated, labels: &labels, temperature: tau }).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn script_distance_permutation_and_absorption(a in unit_vectors(1..8, 5), b in unit_vectors(1..8, 5), shift in 0usize..8) {
        let (a, b) = (to_f32(&a), to_f32(&b));
        let s1 = ScriptSet::new("a", a.clone()).unwrap();
        let s2 = ScriptSet::new("b", b.clone()).unwrap();
        let mut rotated = b.clone();
        rotated.rotate_left(shift % b.len());
        let s2r = ScriptSet::new("b", rotated).unwrap();
        let d = directed_script_distance(&s1, &s2).unwrap();
        prop_assert!((d - directed_script_distance(&s1, &s2r).unwrap()).abs() < 1e-12);
        prop_assert!((script_distance(&s1, &s2).unwrap() - script_distance(&s2r, &s1).unwrap()).abs() < 1e-12);

        // mean of mins never exceeds the largest min
        let max_min = a.iter().map(|x| {
            b.iter().map(|y| ScriptSet::new("p", vec![x.clone()]).and_then(|p| directed_script_distance(&p, &ScriptSet::new("q", vec![y.clone()])?)).unwrap())
                .fold(f64::INFINITY, f64::min)
        }).fold(0.0, f64::max);
        prop_assert!(d <= max_min + 1e-12);

        let mut both = b;
        both.extend(a.iter().cloned());
        let absorbed = ScriptSet::new("ab", both).unwrap();
        prop_assert_eq!(directed_script_distance(&s1, &absorbed).unwrap(), 0.0);
    }

    #[test]
    fn fractional_ranks_sum_and_spearman_bounds(values in prop::collection::vec(0u8..6, 3..30), levels in prop::collection::vec(1u8..5, 3..30)) {
        let n = values.len().min(levels.len());
        let x: Vec<f64> = values[..n].iter().map(|&v| f64::from(v)).collect();
        let r = fractional_ranks(&x);
        prop_assert!((r.iter().sum::<f64>() - (n * (n + 1)) as f64 / 2.0).abs() < 1e-9);
        let pairs: Vec<(f64, f64)> = x.iter().zip(&levels[..n]).map(|(&a, &b)| (a, f64::from(b))).collect();
        if let Ok(s) = spearman_rho(&pairs) {
            prop_assert!((-1.0..=1.0).contains(&s.rho));
            let p = s.p_value.unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn lr_schedule_stays_in_range(total in 2u64..500, warm_frac in 0.0f64..0.99, base in 1e-6f64..1.0) {
        let warm = ((total as f64 * warm_frac) as u64).min(total - 1);
        let mut prev = 0.0;
        for step in 0..=total {
            let lr = lr_schedule(step, warm, total, base).unwrap();
            prop_assert!((0.0..=base * (1.0 + 1e-12)).contains(&lr));
            if step <= warm { prop_assert!(lr >= prev); } else { prop_assert!(lr <= prev + 1e-15); }
            prev = lr;
        }
        prop_assert!(lr_schedule(total, warm, total, base).unwrap().abs() < 1e-12 * base.max(1.0));
        prop_assert!(lr_schedule(total + 1, warm, total, base).is_err());
    }

    #[test]
    fn augmentation_keeps_ink(x0 in 10usize..60, y0 in 10usize..60, len in 5usize..40, seed in any::<u64>(), p in 0.0f64..1.0) {
        let mut bm = Bitmap::blank();
        for i in 0..len {
            bm.set(x0 + i, y0, true);
            bm.set(x0, y0 + i, true);
        }
        let img = GlyphImage::new(bm, 0, "s", 0).unwrap();
        let params = AugmentationParams { per_transform_probability: p, ..Default::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let out = apply_affine_augmentation(&img, &params, &mut rng);
        prop_assert!(out.glyph.pixels.ink_count() > 0);
        prop_assert_eq!(out.glyph.class_id, 0);
        let same = apply_affine_augmentation(&img, &AugmentationParams::identity(), &mut rng);
        prop_assert_eq!(&same.glyph.pixels, &img.pixels);
    }
}
