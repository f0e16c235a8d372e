//! Image I/O, bilinear resampling, and heatmap colorization.
//!
//! Resampling uses the align-corners convention: output pixel `x` samples
//! source coordinate `x * (in_w - 1) / (out_w - 1)`, so corner pixels map onto
//! corner pixels exactly. Every conversion back to 8 bits rounds half away
//! from zero.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageReader};

use crate::error::{Error, Result};

/// 8-bit image, 1 (gray) or 3 (RGB) interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

/// Rounds half away from zero and saturates into `0..=255`.
pub fn round_channel(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::input(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::input(format!(
                "{width}x{height}x{channels} image needs {} bytes, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Image {
            width,
            height,
            channels: 3,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data: self.data.iter().flat_map(|&g| [g, g, g]).collect(),
        }
    }

    /// BT.601 luma.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| {
                round_channel(
                    0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]),
                )
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = if self.channels == 1 {
            ColorType::L8
        } else {
            ColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::input(format!("{}: cannot write PNG: {e}", path.display())))
    }

    /// Binary PPM (P6) encoding; gray images are expanded to RGB.
    pub fn to_ppm(&self) -> Vec<u8> {
        let rgb = self.to_rgb();
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&rgb.data);
        out
    }
}

/// Decodes a PNG or binary PPM file.
pub fn decode(path: &Path) -> Result<Image> {
    let fail = |msg: String| Error::input(format!("{}: {msg}", path.display()));
    let reader = ImageReader::open(path)
        .map_err(|e| fail(format!("cannot open image: {e}")))?
        .with_guessed_format()
        .map_err(|e| fail(format!("cannot read image: {e}")))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Pnm) => {}
        other => return Err(fail(format!("unsupported image format {other:?}"))),
    }
    let img = reader
        .decode()
        .map_err(|e| fail(format!("corrupt or truncated image: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let converted = if img.color().has_color() {
        Image::new(w, h, 3, DynamicImage::to_rgb8(&img).into_raw())
    } else {
        Image::new(w, h, 1, DynamicImage::to_luma8(&img).into_raw())
    };
    converted.map_err(|e| fail(e.to_string()))
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // a + t(b - a) keeps equal endpoints exact; the clamp keeps rounding inside [a, b].
    let v = a + t * (b - a);
    v.clamp(a.min(b), a.max(b))
}

fn source_coord(out: usize, out_len: usize, in_len: usize) -> (usize, usize, f64) {
    if out_len <= 1 || in_len <= 1 {
        return (0, 0, 0.0);
    }
    let src = (out * (in_len - 1)) as f64 / (out_len - 1) as f64;
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, src - i0 as f64)
}

/// Bilinear resize of one row-major `f64` plane.
pub fn resize_plane(
    values: &[f64],
    width: usize,
    height: usize,
    out_w: usize,
    out_h: usize,
) -> Vec<f64> {
    assert_eq!(values.len(), width * height, "plane size mismatch");
    assert!(out_w >= 1 && out_h >= 1, "output size must be positive");
    let cols: Vec<_> = (0..out_w).map(|x| source_coord(x, out_w, width)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, ty) = source_coord(y, out_h, height);
        let r0 = &values[y0 * width..(y0 + 1) * width];
        let r1 = &values[y1 * width..(y1 + 1) * width];
        for &(x0, x1, tx) in &cols {
            let top = lerp(r0[x0], r0[x1], tx);
            let bottom = lerp(r1[x0], r1[x1], tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    out
}

/// Bilinear resize of an 8-bit image, channel by channel.
pub fn resize_bilinear(image: &Image, out_w: usize, out_h: usize) -> Image {
    let c = image.channels;
    let mut data = vec![0u8; out_w * out_h * c];
    for ch in 0..c {
        let plane: Vec<f64> = image.data[ch..]
            .iter()
            .step_by(c)
            .map(|&v| f64::from(v))
            .collect();
        let resized = resize_plane(&plane, image.width, image.height, out_w, out_h);
        for (i, v) in resized.into_iter().enumerate() {
            data[i * c + ch] = round_channel(v);
        }
    }
    Image {
        width: out_w,
        height: out_h,
        channels: c,
        data,
    }
}

/// Piecewise-linear color ramp over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMap {
    stops: Vec<(f64, [u8; 3])>,
}

impl ColorMap {
    /// Stop positions must increase strictly from 0 to 1.
    pub fn new(stops: Vec<(f64, [u8; 3])>) -> Result<Self> {
        if stops.len() < 2 {
            return Err(Error::config("a color map needs at least two stops"));
        }
        if stops[0].0 != 0.0 || stops[stops.len() - 1].0 != 1.0 {
            return Err(Error::config(
                "color map stops must start at 0 and end at 1",
            ));
        }
        if stops.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::config(
                "color map stop positions must be strictly increasing",
            ));
        }
        Ok(ColorMap { stops })
    }

    /// Blue, cyan, green, yellow, red at 0, 0.25, 0.5, 0.75, 1.
    pub fn blue_to_red() -> Self {
        ColorMap {
            stops: vec![
                (0.0, [0, 0, 255]),
                (0.25, [0, 255, 255]),
                (0.5, [0, 255, 0]),
                (0.75, [255, 255, 0]),
                (1.0, [255, 0, 0]),
            ],
        }
    }

    pub fn grayscale() -> Self {
        ColorMap {
            stops: vec![(0.0, [0, 0, 0]), (1.0, [255, 255, 255])],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "blue-red" | "default" => Ok(Self::blue_to_red()),
            "gray" | "grayscale" => Ok(Self::grayscale()),
            other => Err(Error::config(format!(
                "unknown colormap {other:?} (expected blue-red or gray)"
            ))),
        }
    }

    pub fn stops(&self) -> &[(f64, [u8; 3])] {
        &self.stops
    }

    pub fn color(&self, value: f64) -> [u8; 3] {
        let v = value.clamp(0.0, 1.0);
        let seg = self
            .stops
            .windows(2)
            .position(|w| v <= w[1].0)
            .unwrap_or(self.stops.len() - 2);
        let (p0, c0) = self.stops[seg];
        let (p1, c1) = self.stops[seg + 1];
        let t = (v - p0) / (p1 - p0);
        std::array::from_fn(|i| round_channel(lerp(f64::from(c0[i]), f64::from(c1[i]), t)))
    }
}

/// Maps each value of a `[0, 1]` grid to an RGB pixel.
pub fn colorize(values: &[f64], width: usize, height: usize, cmap: &ColorMap) -> Image {
    assert_eq!(values.len(), width * height, "grid size mismatch");
    let data = values.iter().flat_map(|&v| cmap.color(v)).collect();
    Image {
        width,
        height,
        channels: 3,
        data,
    }
}

/// `round((1 - alpha) * base + alpha * heat)` per channel. Gray inputs are
/// expanded to RGB when the other side is RGB.
pub fn superimpose(base: &Image, heat: &Image, alpha: f64) -> Result<Image> {
    if base.width != heat.width || base.height != heat.height {
        return Err(Error::input(format!(
            "cannot overlay a {}x{} heatmap on a {}x{} image",
            heat.width, heat.height, base.width, base.height
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::input(format!("alpha {alpha} outside [0, 1]")));
    }
    let (base, heat) = if base.channels == heat.channels {
        (base.clone(), heat.clone())
    } else {
        (base.to_rgb(), heat.to_rgb())
    };
    let data = base
        .data
        .iter()
        .zip(&heat.data)
        .map(|(&b, &h)| round_channel((1.0 - alpha) * f64::from(b) + alpha * f64::from(h)))
        .collect();
    Ok(Image { data, ..base })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_channel(0.5), 1);
        assert_eq!(round_channel(1.5), 2);
        assert_eq!(round_channel(2.5), 3);
        assert_eq!(round_channel(2.4999), 2);
        assert_eq!(round_channel(-3.0), 0);
        assert_eq!(round_channel(300.0), 255);
    }

    #[test]
    fn constant_planes_stay_constant() {
        let plane = vec![0.1; 6];
        for (w, h) in [(1, 1), (5, 7), (13, 2)] {
            let out = resize_plane(&plane, 3, 2, w, h);
            assert!(out.iter().all(|&v| v == 0.1));
        }
        let img = Image::filled(4, 3, [10, 200, 77]);
        let out = resize_bilinear(&img, 9, 11);
        assert!(out.data().chunks(3).all(|p| p == [10, 200, 77]));
    }

    #[test]
    fn align_corners_ramp() {
        let out = resize_plane(&[0.0, 1.0], 2, 1, 4, 1);
        assert_eq!(out, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn colormap_endpoints_and_controls() {
        let cmap = ColorMap::blue_to_red();
        assert_eq!(cmap.color(0.0), [0, 0, 255]);
        assert_eq!(cmap.color(1.0), [255, 0, 0]);
        assert_eq!(cmap.color(0.25), [0, 255, 255]);
        assert_eq!(cmap.color(0.5), [0, 255, 0]);
        assert_eq!(cmap.color(0.75), [255, 255, 0]);
    }

    #[test]
    fn colormap_midpoint_is_channel_mean() {
        let a = [10u8, 100, 250];
        let b = [30u8, 60, 0];
        let cmap =
            ColorMap::new(vec![(0.0, [0, 0, 0]), (0.4, a), (0.6, b), (1.0, [9, 9, 9])]).unwrap();
        let got = cmap.color(0.5);
        for i in 0..3 {
            let mean = (f64::from(a[i]) + f64::from(b[i])) / 2.0;
            assert_eq!(got[i], round_channel(mean));
        }
    }

    #[test]
    fn colormap_validation() {
        assert!(ColorMap::new(vec![(0.0, [0; 3])]).is_err());
        assert!(ColorMap::new(vec![(0.1, [0; 3]), (1.0, [0; 3])]).is_err());
        assert!(ColorMap::new(vec![
            (0.0, [0; 3]),
            (0.5, [0; 3]),
            (0.5, [0; 3]),
            (1.0, [0; 3])
        ])
        .is_err());
        assert!(ColorMap::by_name("viridis").is_err());
    }

    #[test]
    fn superimpose_extremes_and_mismatch() {
        let base = Image::filled(3, 2, [10, 20, 30]);
        let heat = Image::filled(3, 2, [200, 100, 0]);
        assert_eq!(superimpose(&base, &heat, 0.0).unwrap(), base);
        assert_eq!(superimpose(&base, &heat, 1.0).unwrap(), heat);
        let small = Image::filled(2, 2, [0, 0, 0]);
        assert!(superimpose(&base, &small, 0.5).is_err());
    }

    #[test]
    fn gray_is_expanded_for_overlay() {
        let base = Image::new(1, 1, 1, vec![100]).unwrap();
        let heat = Image::filled(1, 1, [0, 0, 200]);
        let out = superimpose(&base, &heat, 0.5).unwrap();
        assert_eq!(out.channels(), 3);
        assert_eq!(out.data(), [50, 50, 150]);
    }
}
