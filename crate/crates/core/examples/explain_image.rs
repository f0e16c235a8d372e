//! Explains a single image: prints the predicted label and confidence, then
//! writes a heatmap overlay and the raw heatmap as JSON.
//!
//!     cargo run --example explain_image -- <image> <manifest> <weights> [output-dir]
//!
//! With no arguments it builds the planted-region model and explains its
//! trigger image, which makes the expected answer easy to check by eye.

use std::path::PathBuf;

use gradgate::fixtures::{write_planted, PLANTED_REGION};
use gradgate::harness::{explain_image, overlay_file_name, render_overlay};
use gradgate::imaging::ColorMap;
use gradgate::model::Model;

fn main() -> gradgate::Result<()> {
    let args: Vec<PathBuf> = std::env::args_os().skip(1).map(PathBuf::from).collect();
    let out = args
        .get(3)
        .cloned()
        .unwrap_or_else(|| std::env::temp_dir().join("gradgate-explain"));
    std::fs::create_dir_all(&out).map_err(|e| gradgate::Error::io(&out, e))?;

    let (image, manifest, weights) = match args.as_slice() {
        [image, manifest, weights, ..] => (image.clone(), manifest.clone(), weights.clone()),
        _ => {
            let planted = write_planted(&out)?;
            println!(
                "no model given; using the planted-region fixture in {}",
                out.display()
            );
            (
                planted.trigger,
                planted.model.manifest,
                planted.model.weights,
            )
        }
    };

    let model = Model::load(&manifest, &weights)?;
    let stem = image
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string();
    let explained = explain_image(&model, &image, &stem, None)?;
    let record = &explained.record;
    let heatmap = &explained.heatmap;

    println!(
        "{} with confidence {:.4} (target layer {})",
        model.class_labels()[record.predicted_class],
        record.confidence,
        model.target_layer()
    );
    if heatmap.degenerate {
        println!("the activation map is all zero; nothing to localize");
    }

    // Where does the heat sit? Report the peak and the mass inside the
    // planted region, which is only meaningful for the default fixture.
    let peak = (0..heatmap.values.len())
        .max_by(|&a, &b| heatmap.values[a].total_cmp(&heatmap.values[b]))
        .unwrap_or(0);
    println!(
        "peak at ({}, {})",
        peak % heatmap.width,
        peak / heatmap.width
    );
    if args.len() < 3 {
        let inside: f64 = (0..heatmap.height)
            .flat_map(|y| (0..heatmap.width).map(move |x| (x, y)))
            .filter(|&(x, y)| PLANTED_REGION.contains(x, y))
            .map(|(x, y)| heatmap.value(x, y))
            .sum();
        println!(
            "share of heat inside the planted region: {:.4}",
            inside / heatmap.mass()
        );
    }

    let overlay = out.join(overlay_file_name(&stem, &heatmap.class_label));
    render_overlay(&explained.image, heatmap, &ColorMap::blue_to_red(), 0.4)?.save_png(&overlay)?;
    let sidecar = overlay.with_extension("json");
    std::fs::write(&sidecar, heatmap.to_json()).map_err(|e| gradgate::Error::io(&sidecar, e))?;
    println!("wrote {} and {}", overlay.display(), sidecar.display());
    Ok(())
}
