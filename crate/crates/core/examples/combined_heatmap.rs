//! Averages the heatmaps of a whole dataset into one map, showing where the
//! model tends to look across every image.
//!
//!     cargo run --example combined_heatmap -- [output-dir]

use std::path::PathBuf;

use gradgate::fixtures::{write_underpass_suite, SuiteVariant};
use gradgate::harness::{
    combine_aligned, explain_all, load_annotations, write_combined, ClassMode,
};
use gradgate::imaging::ColorMap;
use gradgate::model::Model;

fn main() -> gradgate::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gradgate-combined"));
    let suite = write_underpass_suite(&out.join("data"), SuiteVariant::Full)?;
    let model = Model::load(&suite.model.manifest, &suite.model.weights)?;
    let samples = load_annotations(&suite.annotations)?;

    let mut maps = Vec::new();
    for (id, explained) in explain_all(&model, &samples, ClassMode::Predicted, 0)? {
        match explained {
            Ok(e) => {
                let tag = if e.heatmap.degenerate {
                    " (degenerate)"
                } else {
                    ""
                };
                println!("{id}: {}{tag}", e.heatmap.class_label);
                maps.push(e.heatmap);
            }
            Err(err) => println!("{id}: skipped, {err}"),
        }
    }

    let combined = combine_aligned(&maps)?;
    std::fs::create_dir_all(&out).map_err(|e| gradgate::Error::io(&out, e))?;
    let written = write_combined(&combined, &ColorMap::blue_to_red(), &out)?;
    println!(
        "mean of {} maps at {}x{}, excluded {:?}",
        combined.sample_count, combined.width, combined.height, combined.excluded
    );
    println!("wrote {}", out.join(written.png).display());
    Ok(())
}
