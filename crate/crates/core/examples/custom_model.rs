//! Defines a small CNN in code, writes it in the on-disk manifest + weights
//! format, loads it back, and prints what the loader derived from it.
//!
//!     cargo run --example custom_model -- [output-dir]

use std::path::PathBuf;

use gradgate::model::{
    write_model, LayerSelector, LayerSpec, Manifest, Model, Normalization, FORMAT_VERSION,
};
use gradgate::numerics::Tensor;

fn main() -> gradgate::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gradgate-custom"));
    std::fs::create_dir_all(&out).map_err(|e| gradgate::Error::io(&out, e))?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        input_shape: [3, 16, 16],
        class_labels: vec!["cat".into(), "dog".into(), "neither".into()],
        normalization: Some(Normalization {
            mean: vec![0.5, 0.5, 0.5],
            std: vec![0.25, 0.25, 0.25],
        }),
        target_layer: Some(LayerSelector::Name("conv_a".into())),
        layers: vec![
            LayerSpec::conv(3, 4, 3, 1, 1).named("conv_a"),
            LayerSpec::relu(),
            LayerSpec::maxpool(2, 2),
            LayerSpec::conv(4, 6, 3, 1, 1).named("conv_b"),
            LayerSpec::relu(),
            LayerSpec::maxpool(2, 2),
            LayerSpec::flatten(),
            LayerSpec::dense(6 * 4 * 4, 3).named("head"),
            LayerSpec::softmax(),
        ],
    };
    let shapes = manifest.validate()?;
    for (spec, shape) in manifest.layers.iter().zip(&shapes) {
        println!(
            "{:<8} {:<9} -> {:?}",
            spec.name().unwrap_or("-"),
            spec.kind(),
            shape.dims()
        );
    }

    // Deterministic small weights; any f32 sequence of the right length works.
    let n = manifest.parameter_count();
    let weights: Vec<f32> = (0..n)
        .map(|i| ((i * 37 % 101) as f32 - 50.0) / 500.0)
        .collect();
    let (mpath, wpath) = (out.join("custom.json"), out.join("custom.bin"));
    write_model(&manifest, &weights, &mpath, &wpath)?;
    println!(
        "{n} parameters written to {} and {}",
        mpath.display(),
        wpath.display()
    );

    let model = Model::load(&mpath, &wpath)?;
    println!("Grad-CAM target layer index: {}", model.target_layer());
    let input = Tensor::new(
        vec![3, 16, 16],
        (0..768).map(|i| (i % 17) as f64 / 17.0).collect(),
    )?;
    let record = model.forward(&input)?;
    for (label, p) in model.class_labels().iter().zip(record.probabilities.data()) {
        println!("  p({label}) = {p:.4}");
    }

    // A truncated weights file is rejected with both sizes in the message.
    let short = out.join("short.bin");
    std::fs::write(&short, &std::fs::read(&wpath).unwrap()[..16]).unwrap();
    match Model::load(&mpath, &short) {
        Ok(_) => println!("unexpectedly loaded a truncated weights file"),
        Err(e) => println!("truncated weights: {e}"),
    }
    Ok(())
}
