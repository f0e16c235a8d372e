//! Renders a synthetic heatmap with each built-in palette and blends it over
//! an image at several opacities.
//!
//!     cargo run --example colormap_overlay -- [output-dir]

use std::path::PathBuf;

use gradgate::imaging::{colorize, superimpose, ColorMap, Image};

fn main() -> gradgate::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gradgate-colormaps"));
    std::fs::create_dir_all(&out).map_err(|e| gradgate::Error::io(&out, e))?;

    let (w, h) = (256, 96);
    // A gaussian blob on the right third; its peak is exactly 1.
    let values: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            let dx = (x as f64 - 180.0) / 40.0;
            let dy = (y as f64 - 48.0) / 25.0;
            (-(dx * dx + dy * dy)).exp()
        })
        .collect();

    // Checkerboard base so the blend is visible.
    let mut base = Image::filled(w, h, [200, 200, 200]);
    for y in 0..h {
        for x in 0..w {
            if (x / 16 + y / 16) % 2 == 0 {
                base.pixel_mut(x, y).copy_from_slice(&[90, 90, 90]);
            }
        }
    }
    base.save_png(&out.join("base.png"))?;

    for name in ["blue-red", "gray"] {
        let cmap = ColorMap::by_name(name)?;
        let stops: Vec<String> = cmap
            .stops()
            .iter()
            .map(|(v, c)| format!("{v}:{c:?}"))
            .collect();
        println!("{name}: {}", stops.join(" "));
        let heat = colorize(&values, w, h, &cmap);
        heat.save_png(&out.join(format!("{name}.png")))?;
        for alpha in [0.2, 0.4, 0.8] {
            let blended = superimpose(&base, &heat, alpha)?;
            blended.save_png(&out.join(format!("{name}-alpha{alpha}.png")))?;
        }
    }
    println!("wrote palettes and overlays to {}", out.display());
    Ok(())
}
