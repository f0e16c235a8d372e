//! Writes every constructed fixture to disk: the planted-region model, the
//! underpass suite (full and all-pass), and the seeded VGG-style model.
//!
//!     cargo run --example generate_fixtures -- [output-dir] [vgg-seed]

use std::path::PathBuf;

use gradgate::fixtures::{write_planted, write_underpass_suite, write_vgg_style, SuiteVariant};

fn main() -> gradgate::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fixtures"));
    let seed: u64 = args
        .next()
        .map_or(2024, |s| s.parse().expect("seed must be an integer"));

    let planted = write_planted(&out.join("planted"))?;
    println!("planted model   {}", planted.model.manifest.display());
    println!("trigger image   {}", planted.trigger.display());

    for variant in [SuiteVariant::Full, SuiteVariant::AllPass] {
        let suite = write_underpass_suite(&out.join("underpass"), variant)?;
        println!(
            "{:<15} {} ({} samples)",
            format!("{variant:?} suite"),
            suite.annotations.display(),
            suite.expected.len()
        );
    }

    let vgg = write_vgg_style(&out.join("vgg"), seed)?;
    println!(
        "vgg-style model {} (seed {seed})",
        vgg.model.manifest.display()
    );
    println!("reference image {}", vgg.reference_image.display());
    Ok(())
}
