//! Compares the analytic class-score gradient at the Grad-CAM layer against
//! central finite differences on randomly generated small CNNs.
//!
//!     cargo run --example gradient_check -- [networks=10] [seed=1]
//!
//! Piecewise-linear layers (ReLU, max pool) make the finite difference
//! meaningless right at a kink, so entries whose perturbation changes any
//! ReLU state or pooling winner are skipped and counted.

use gradgate::fixtures::{random_cnn, random_input};
use gradgate::model::{InferenceRecord, Model};
use gradgate::numerics::{forward_logits, forward_trace, Layer, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;

/// Pre-softmax logit plus the on/off pattern of every ReLU and max-pool argmax.
fn evaluate(tail: &[Layer], input: Tensor, class: usize) -> (f64, Vec<bool>, Vec<usize>) {
    let logit = forward_logits(tail, input.clone())
        .expect("tail runs")
        .data()[class];
    let (_, caches) = forward_trace(tail, input).expect("tail runs");
    let mut on = Vec::new();
    let mut winners = Vec::new();
    for (layer, cache) in tail.iter().zip(&caches) {
        match layer {
            Layer::Relu => on.extend(cache.input.data().iter().map(|&z| z > 0.0)),
            Layer::MaxPool { .. } => winners.extend(cache.argmax.as_deref().unwrap_or(&[])),
            _ => {}
        }
    }
    (logit, on, winners)
}

fn check(model: &Model, record: &InferenceRecord, class: usize) -> (f64, usize, usize) {
    let analytic = model.class_score_gradient(record, class).expect("gradient");
    let tail = &model.layers()[record.activation_layer + 1..];
    let base = &record.target_activation;
    let (_, on0, win0) = evaluate(tail, base.clone(), class);
    let (mut worst, mut compared, mut skipped) = (0.0f64, 0, 0);
    for i in 0..base.len() {
        let shifted = |d: f64| {
            let mut t = base.clone();
            t.data_mut()[i] += d;
            evaluate(tail, t, class)
        };
        let (up, on_p, win_p) = shifted(EPS);
        let (down, on_m, win_m) = shifted(-EPS);
        if on_p != on0 || on_m != on0 || win_p != win0 || win_m != win0 {
            skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * EPS);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12));
        compared += 1;
    }
    (worst, compared, skipped)
}

fn main() -> gradgate::Result<()> {
    let mut args = std::env::args().skip(1);
    let networks: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut overall = 0.0f64;
    for n in 0..networks {
        let (manifest, weights) = random_cnn(&mut rng, 12);
        let model = Model::from_weights(manifest, &weights)?;
        let record = model.forward(&random_input(&mut rng, model.input_shape()))?;
        let class = record.predicted_class;
        let (worst, compared, skipped) = check(&model, &record, class);
        overall = overall.max(worst);
        println!(
            "net {n:>2}: {} params, activation {:?}, {compared} entries compared, {skipped} near kinks, max rel err {worst:.2e}",
            model.parameter_count(),
            record.target_activation.shape(),
        );
    }
    println!("worst relative error over all networks: {overall:.2e}");
    Ok(())
}
