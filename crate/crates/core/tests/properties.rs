use disent_core::losses::{content_bottleneck_loss, l1_mean};
use disent_core::metrics::{fid, lpips_diversity, RandomConvExtractor};
use disent_core::synthetic::{hsv_to_rgb, hue_distance, rgb_to_hsv};
use disent_core::types::{denormalize_u8, normalize_u8};
use disent_core::{ContentCode, Image, Tensor, TrainConfig};
use proptest::prelude::*;

fn code(values: Vec<f64>) -> ContentCode {
    let n = values.len();
    ContentCode(Tensor::new(&[1, 1, 1, n], values))
}

fn image_from(seed: &[f64]) -> Image {
    let data = (0..3 * 8 * 8)
        .map(|i| (seed[i % seed.len()] * (i as f64 * 0.37).cos()).tanh())
        .collect();
    Image::new(Tensor::new(&[3, 8, 8], data)).unwrap()
}

#[test]
fn pixel_normalization_round_trips_every_level() {
    for v in 0..=255u8 {
        let x = normalize_u8(v);
        assert!((-1.0..=1.0).contains(&x));
        assert_eq!(denormalize_u8(x), v);
    }
}

#[test]
fn config_defaults_round_trip_through_text() {
    let d = TrainConfig::default();
    let mut c = TrainConfig {
        num_domains: 7,
        sigma: 0.25,
        ..TrainConfig::default()
    };
    for (key, value) in d.entries() {
        c.set(key, &value).unwrap();
    }
    assert_eq!(c, d);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_closed_form_permutation_invariant_and_quadratic(
        mu in prop::collection::vec(-3.0f64..3.0, 1..40),
        sigma in 0.1f64..3.0,
        k in -4.0f64..4.0,
        rot in 0usize..40,
    ) {
        let base = content_bottleneck_loss(&code(mu.clone()), sigma).unwrap();
        let expect = mu.iter().map(|m| m * m).sum::<f64>() / (2.0 * sigma * sigma);
        prop_assert!((base - expect).abs() <= 1e-12 * expect.max(1.0));
        prop_assert!(base >= 0.0);
        let mut permuted = mu.clone();
        permuted.rotate_left(rot % mu.len());
        permuted.reverse();
        let p = content_bottleneck_loss(&code(permuted), sigma).unwrap();
        prop_assert!((p - base).abs() <= 1e-12 * base.max(1.0));
        let scaled = content_bottleneck_loss(&code(mu.iter().map(|m| k * m).collect()), sigma).unwrap();
        prop_assert!((scaled - k * k * base).abs() <= 1e-10 * (k * k * base).max(1.0));
    }

    #[test]
    fn l1_is_zero_only_on_equality_and_permutation_invariant(
        a in prop::collection::vec(-1.0f64..1.0, 12),
        b in prop::collection::vec(-1.0f64..1.0, 12),
        shift in 0usize..12,
    ) {
        let ta = Tensor::new(&[3, 2, 2], a.clone());
        let tb = Tensor::new(&[3, 2, 2], b.clone());
        prop_assert_eq!(l1_mean(&ta, &ta), 0.0);
        prop_assert_eq!(l1_mean(&ta, &tb) == 0.0, a == b);
        let (mut pa, mut pb) = (a.clone(), b.clone());
        pa.rotate_left(shift);
        pb.rotate_left(shift);
        let moved = l1_mean(&Tensor::new(&[3, 2, 2], pa), &Tensor::new(&[3, 2, 2], pb));
        prop_assert!((moved - l1_mean(&ta, &tb)).abs() <= 1e-15);
    }

    #[test]
    fn fid_is_symmetric_and_zero_on_itself(
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 12..30),
        offset in -1.0f64..1.0,
    ) {
        let other: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * 0.8 + offset).collect()).collect();
        prop_assert!(fid(&rows, &rows).unwrap().abs() < 1e-6);
        let ab = fid(&rows, &other).unwrap();
        let ba = fid(&other, &rows).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-6 * ab.max(1.0));
    }

    #[test]
    fn diversity_ignores_order(
        seeds in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 1..5), 2..6),
        rot in 0usize..6,
    ) {
        let ex = RandomConvExtractor::desk_default(3);
        let images: Vec<Image> = seeds.iter().map(|s| image_from(s)).collect();
        let mut shuffled = images.clone();
        shuffled.rotate_left(rot % images.len());
        shuffled.reverse();
        let a = lpips_diversity(&images, &ex).unwrap();
        let b = lpips_diversity(&shuffled, &ex).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        let same = vec![images[0].clone(); images.len()];
        prop_assert_eq!(lpips_diversity(&same, &ex).unwrap(), 0.0);
    }

    #[test]
    fn hue_distance_is_a_circular_metric(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let ab = hue_distance(a, b);
        prop_assert!((0.0..=0.5).contains(&ab));
        prop_assert_eq!(ab, hue_distance(b, a));
        prop_assert!(hue_distance(a, c) <= ab + hue_distance(b, c) + 1e-12);
        prop_assert!(hue_distance(a, (a + 1.0) % 1.0) < 1e-12);
    }

    #[test]
    fn hsv_round_trips(h in 0.0f64..1.0, s in 0.05f64..1.0, v in 0.05f64..1.0) {
        let (h2, s2, v2) = rgb_to_hsv(hsv_to_rgb(h, s, v));
        prop_assert!(hue_distance(h, h2) < 1e-9);
        prop_assert!((s - s2).abs() < 1e-9 && (v - v2).abs() < 1e-9);
    }
}
