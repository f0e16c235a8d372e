use gradgate::fixtures::{
    planted_region, planted_trigger_image, underpass_model, underpass_samples,
};
use gradgate::gradcam::{cam, channel_weights, combined, gradcam_for, normalize, Heatmap};
use gradgate::model::Model;
use gradgate::numerics::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(id: &str, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Heatmap {
    let raw = Tensor::new(
        vec![h, w],
        (0..w * h).map(|_| rng.gen_range(0.0..3.0)).collect(),
    )
    .unwrap();
    normalize(&raw).unwrap().with_sample_id(id)
}

#[test]
fn channel_weights_match_the_scalar_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = Tensor::new(
        vec![4, 3, 3],
        (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let alpha = channel_weights(&g).unwrap();
    for k in 0..4 {
        let mut s = 0.0;
        for i in 0..9 {
            s += g.data()[k * 9 + i];
        }
        assert_eq!(alpha.data()[k], s / 9.0);
    }
}

#[test]
fn normalize_preserves_the_argmax_and_hits_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let (w, h) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let raw: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..10.0)).collect();
        let arg = (0..raw.len()).fold(0, |best, i| if raw[i] > raw[best] { i } else { best });
        let map = normalize(&Tensor::new(vec![h, w], raw).unwrap()).unwrap();
        assert_eq!(map.values[arg], 1.0);
        assert!(map.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn cam_is_invariant_to_positive_gradient_scaling_after_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = 3 * 5 * 5;
        let a = Tensor::new(
            vec![3, 5, 5],
            (0..n).map(|_| rng.gen_range(0.0..2.0)).collect(),
        )
        .unwrap();
        let g = Tensor::new(
            vec![3, 5, 5],
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let s = rng.gen_range(0.1..50.0);
        let gs = Tensor::new(vec![3, 5, 5], g.data().iter().map(|v| v * s).collect()).unwrap();
        let m1 = normalize(&cam(&a, &channel_weights(&g).unwrap()).unwrap()).unwrap();
        let m2 = normalize(&cam(&a, &channel_weights(&gs).unwrap()).unwrap()).unwrap();
        assert_eq!(m1.degenerate, m2.degenerate);
        for (x, y) in m1.values.iter().zip(&m2.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn planted_heatmap_is_local_and_zero_class_is_degenerate() {
    let (manifest, weights) = planted_region();
    let model = Model::from_weights(manifest, &weights).unwrap();
    let record = model
        .forward(&model.image_to_tensor(&planted_trigger_image()).unwrap())
        .unwrap();
    let map = gradcam_for(&model, &record, None, 224, 224).unwrap();
    let (mut inside, mut total) = (0.0, 0.0);
    for y in 0..224 {
        for x in 0..224 {
            let v = map.value(x, y);
            total += v;
            if (112..168).contains(&x) && (56..112).contains(&y) {
                inside += v;
            }
        }
    }
    assert!(inside / total >= 0.9);
    assert_eq!(map.class_label, "planted");

    let dead = gradcam_for(&model, &record, Some(0), 224, 224).unwrap();
    assert!(dead.degenerate && dead.values.iter().all(|&v| v == 0.0));
}

#[test]
fn upsampled_maps_peak_at_one_and_repeat_bit_for_bit() {
    let (manifest, weights) = underpass_model();
    let model = Model::from_weights(manifest, &weights).unwrap();
    for planned in underpass_samples().into_iter().take(6) {
        let t = model.image_to_tensor(&planned.image).unwrap();
        let once = gradcam_for(&model, &model.forward(&t).unwrap(), None, 320, 180).unwrap();
        let twice = gradcam_for(&model, &model.forward(&t).unwrap(), None, 320, 180).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.values.iter().copied().fold(0.0, f64::max), 1.0);
    }
}

#[test]
fn combined_matches_the_mean_oracle_and_ignores_input_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut maps: Vec<Heatmap> = (0..10)
        .map(|i| random_map(&format!("m{i:02}"), 9, 7, &mut rng))
        .collect();
    let c = combined(&maps).unwrap();
    for p in 0..63 {
        let mut s = 0.0;
        for m in &maps {
            s += m.values[p];
        }
        assert_eq!(c.values[p], s / 10.0);
    }
    for _ in 0..5 {
        maps.shuffle(&mut rng);
        assert_eq!(combined(&maps).unwrap(), c);
    }
}

#[test]
fn combined_of_one_and_of_zero_plus_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let one = random_map("a", 4, 4, &mut rng);
    assert_eq!(
        combined(std::slice::from_ref(&one)).unwrap().values,
        one.values
    );

    let mut zeros = one.clone();
    zeros.sample_id = "z".into();
    zeros.values = vec![0.0; 16];
    let mut ones = one.clone();
    ones.values = vec![1.0; 16];
    assert!(combined(&[zeros, ones])
        .unwrap()
        .values
        .iter()
        .all(|&v| v == 0.5));
}
