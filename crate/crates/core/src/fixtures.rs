//! Hand-built models and datasets whose Grad-CAM behaviour is known by
//! construction. Tests, examples, and the acceptance suite all draw on these.
//!
//! * [`planted_region`]: a one-input-channel model whose "planted" logit is
//!   the sum of the pixels inside a fixed 56x56 window of a 224x224 input.
//! * [`underpass_model`] and [`write_underpass_suite`]: a four-class color
//!   detector ("pedestrian" red, "dog walker" green, "bicyclist" blue, "empty"
//!   plain background) with a 12-sample annotated suite whose verdicts are
//!   fixed in advance.
//! * [`vgg_style`]: a small four-conv network with seeded random weights,
//!   for format and parameter-count checks.
//! * [`random_cnn`]: random small networks for gradient checking.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::harness::annotations::{to_jsonl, AnnotatedSample, BoundingBox};
use crate::harness::scoring::Status;
use crate::imaging::Image;
use crate::model::{
    write_model, LayerSelector, LayerSpec, Manifest, Normalization, FORMAT_VERSION,
};
use crate::numerics::Tensor;

/// Paths of a manifest and its weights file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelFiles {
    pub manifest: PathBuf,
    pub weights: PathBuf,
}

pub fn write_model_files(
    dir: &Path,
    stem: &str,
    manifest: &Manifest,
    weights: &[f32],
) -> Result<ModelFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ModelFiles {
        manifest: dir.join(format!("{stem}.json")),
        weights: dir.join(format!("{stem}.bin")),
    };
    write_model(manifest, weights, &files.manifest, &files.weights)?;
    Ok(files)
}

/// Axis-aligned pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    pub fn to_box(self) -> BoundingBox {
        BoundingBox::new(
            self.x0 as u32,
            self.y0 as u32,
            self.x1 as u32,
            self.y1 as u32,
        )
        .expect("regions are non-empty")
    }

    fn grown(self, margin: usize, width: usize, height: usize) -> Region {
        Region {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x1 + margin).min(width),
            y1: (self.y1 + margin).min(height),
        }
    }
}

pub const PLANTED_SIZE: usize = 224;
pub const PLANTED_REGION: Region = Region {
    x0: 112,
    y0: 56,
    x1: 168,
    y1: 112,
};
pub const PLANTED_CLASS: usize = 1;

/// Model whose class-1 logit is the pixel sum over [`PLANTED_REGION`].
///
/// A 1x1 conv copies the input into two channels. Only channel 1 is wired to
/// the dense layer, and only inside the region; class 0 has all-zero weights.
pub fn planted_region() -> (Manifest, Vec<f32>) {
    let n = PLANTED_SIZE;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        input_shape: [1, n, n],
        class_labels: vec!["background".into(), "planted".into()],
        normalization: None,
        target_layer: None,
        layers: vec![
            LayerSpec::conv(1, 2, 1, 1, 0).named("features"),
            LayerSpec::relu(),
            LayerSpec::flatten(),
            LayerSpec::dense(2 * n * n, 2).named("logits"),
            LayerSpec::softmax(),
        ],
    };
    let mut weights = vec![1.0, 1.0, 0.0, 0.0];
    weights.extend(std::iter::repeat_n(0.0, 2 * n * n));
    let mut planted_row = vec![0.0f32; 2 * n * n];
    for y in 0..n {
        for x in 0..n {
            if PLANTED_REGION.contains(x, y) {
                planted_row[n * n + y * n + x] = 1.0;
            }
        }
    }
    weights.extend(planted_row);
    weights.extend([0.0, 0.0]);
    (manifest, weights)
}

/// Grayscale 224x224 image: textured bright content inside the planted
/// region, black elsewhere.
pub fn planted_trigger_image() -> Image {
    let n = PLANTED_SIZE;
    let mut data = vec![0u8; n * n];
    for y in 0..n {
        for x in 0..n {
            if PLANTED_REGION.contains(x, y) {
                data[y * n + x] = 128 + ((x * 7 + y * 13) % 128) as u8;
            }
        }
    }
    Image::new(n, n, 1, data).expect("valid dimensions")
}

/// Grayscale image with the same texture placed outside the planted region.
pub fn planted_decoy_image() -> Image {
    let n = PLANTED_SIZE;
    let mut data = vec![0u8; n * n];
    for y in 150..206 {
        for x in 10..66 {
            data[y * n + x] = 128 + ((x * 7 + y * 13) % 128) as u8;
        }
    }
    Image::new(n, n, 1, data).expect("valid dimensions")
}

/// Files written by [`write_planted`].
#[derive(Debug, Clone)]
pub struct PlantedFixture {
    pub model: ModelFiles,
    pub trigger: PathBuf,
    pub decoy: PathBuf,
    /// One-sample suite: the trigger image annotated with the planted region.
    pub annotations: PathBuf,
}

pub fn write_planted(dir: &Path) -> Result<PlantedFixture> {
    let (manifest, weights) = planted_region();
    let model = write_model_files(dir, "planted", &manifest, &weights)?;
    let trigger = dir.join("trigger.png");
    planted_trigger_image().save_png(&trigger)?;
    let decoy = dir.join("decoy.png");
    planted_decoy_image().save_png(&decoy)?;
    let sample = AnnotatedSample {
        sample_id: "trigger".into(),
        image: trigger.clone(),
        true_label: "planted".into(),
        odd_tag: "synthetic".into(),
        boxes: vec![PLANTED_REGION.to_box()],
        line: 0,
    };
    let annotations = dir.join("planted.jsonl");
    fs::write(&annotations, to_jsonl(&[sample], dir)).map_err(|e| Error::io(&annotations, e))?;
    Ok(PlantedFixture {
        model,
        trigger,
        decoy,
        annotations,
    })
}

pub const UNDERPASS_LABELS: [&str; 4] = ["pedestrian", "dog walker", "bicyclist", "empty"];
pub const UNDERPASS_WIDTH: usize = 320;
pub const UNDERPASS_HEIGHT: usize = 180;

/// Four-class color detector on 3x224x224 inputs.
///
/// `conv1` turns RGB into red, green, blue, and brightness detectors; `conv2`
/// (the Grad-CAM target) is the identity. Each object class sums its own
/// detector over the pooled 14x14 grid with weight 2; "empty" sums brightness
/// with weight 0.1. An all-black image activates nothing and yields a
/// degenerate heatmap.
pub fn underpass_model() -> (Manifest, Vec<f32>) {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        input_shape: [3, 224, 224],
        class_labels: UNDERPASS_LABELS.iter().map(|s| s.to_string()).collect(),
        normalization: None,
        target_layer: Some(LayerSelector::Name("conv2".into())),
        layers: vec![
            LayerSpec::conv(3, 4, 1, 1, 0).named("conv1"),
            LayerSpec::relu(),
            LayerSpec::maxpool(4, 4),
            LayerSpec::conv(4, 4, 1, 1, 0).named("conv2"),
            LayerSpec::relu(),
            LayerSpec::maxpool(4, 4),
            LayerSpec::flatten(),
            LayerSpec::dense(4 * 14 * 14, 4).named("logits"),
            LayerSpec::softmax(),
        ],
    };
    let third = 1.0 / 3.0;
    let mut w: Vec<f32> = vec![
        1.0, -0.5, -0.5, // red
        -0.5, 1.0, -0.5, // green
        -0.5, -0.5, 1.0, // blue
        third, third, third, // brightness
    ];
    w.extend([-0.2, -0.2, -0.2, -0.25]);
    for o in 0..4 {
        for i in 0..4 {
            w.push(if o == i { 1.0 } else { 0.0 });
        }
    }
    w.extend([0.0; 4]);
    let cells = 14 * 14;
    for class in 0..4 {
        for ch in 0..4 {
            let v = match (class, ch) {
                (c, ch) if c < 3 && c == ch => 2.0,
                (3, 3) => 0.1,
                _ => 0.0,
            };
            w.extend(std::iter::repeat_n(v, cells));
        }
    }
    w.extend([0.0; 4]);
    (manifest, w)
}

const GRAY: [u8; 3] = [128, 128, 128];
const CURB: [u8; 3] = [100, 100, 100];
const RED: [u8; 3] = [220, 30, 30];
const GREEN: [u8; 3] = [30, 200, 30];
const BLUE: [u8; 3] = [30, 30, 220];
const NIGHT: [u8; 3] = [35, 35, 45];
const DIM: [u8; 3] = [60, 60, 60];

fn fill(img: &mut Image, r: Region, rgb: [u8; 3]) {
    for y in r.y0..r.y1.min(img.height()) {
        for x in r.x0..r.x1.min(img.width()) {
            img.pixel_mut(x, y).copy_from_slice(&rgb);
        }
    }
}

fn rect(x0: usize, y0: usize, w: usize, h: usize) -> Region {
    Region {
        x0,
        y0,
        x1: x0 + w,
        y1: y0 + h,
    }
}

fn daytime_scene() -> Image {
    let mut img = Image::filled(UNDERPASS_WIDTH, UNDERPASS_HEIGHT, GRAY);
    fill(&mut img, rect(0, 150, UNDERPASS_WIDTH, 30), CURB);
    img
}

/// One constructed suite sample and the verdict it is built to produce.
#[derive(Debug, Clone)]
pub struct PlannedSample {
    pub sample: AnnotatedSample,
    pub image: Image,
    pub expected: Status,
    /// Region that holds the activating content, if any.
    pub content: Option<Region>,
}

const MARGIN: usize = 8;

fn planned(
    id: &str,
    label: &str,
    odd: &str,
    image: Image,
    boxes: Vec<Region>,
    content: Option<Region>,
    expected: Status,
) -> PlannedSample {
    PlannedSample {
        sample: AnnotatedSample {
            sample_id: id.into(),
            image: PathBuf::from(format!("images/{id}.png")),
            true_label: label.into(),
            odd_tag: odd.into(),
            boxes: boxes.into_iter().map(Region::to_box).collect(),
            line: 0,
        },
        image,
        expected,
        content,
    }
}

fn figure(
    id: &str,
    label: &str,
    color: [u8; 3],
    body: Region,
    extra: Option<Region>,
) -> PlannedSample {
    let mut img = daytime_scene();
    fill(&mut img, body, color);
    let mut content = body;
    if let Some(e) = extra {
        fill(&mut img, e, color);
        content = Region {
            x0: content.x0.min(e.x0),
            y0: content.y0.min(e.y0),
            x1: content.x1.max(e.x1),
            y1: content.y1.max(e.y1),
        };
    }
    let bbox = content.grown(MARGIN, UNDERPASS_WIDTH, UNDERPASS_HEIGHT);
    planned(
        id,
        label,
        "daytime",
        img,
        vec![bbox],
        Some(content),
        Status::Pass,
    )
}

/// The twelve planned samples: 8 PASS, 3 FAIL, 1 INCONCLUSIVE.
///
/// * s01-s06: correctly classified figures with boxes around them.
/// * s07-s08: empty scenes, judged on classification only.
/// * s09: a confident, correct pedestrian whose box is somewhere else.
/// * s10: a dog walker that looks like a bicyclist, well localized.
/// * s11: a night scene where a curb-long blue stripe reads as a bicyclist.
/// * s12: an all-black frame; nothing activates.
pub fn underpass_samples() -> Vec<PlannedSample> {
    let mut out = vec![
        figure("s01", "pedestrian", RED, rect(60, 50, 24, 60), None),
        figure("s02", "pedestrian", RED, rect(230, 70, 24, 60), None),
        figure(
            "s03",
            "dog walker",
            GREEN,
            rect(100, 40, 24, 60),
            Some(rect(128, 88, 16, 12)),
        ),
        figure(
            "s04",
            "dog walker",
            GREEN,
            rect(200, 60, 24, 60),
            Some(rect(176, 108, 16, 12)),
        ),
        figure("s05", "bicyclist", BLUE, rect(40, 80, 40, 50), None),
        figure("s06", "bicyclist", BLUE, rect(250, 60, 40, 50), None),
    ];

    out.push(planned(
        "s07",
        "empty",
        "daytime",
        daytime_scene(),
        vec![],
        None,
        Status::Pass,
    ));
    let mut wall = daytime_scene();
    fill(&mut wall, rect(20, 10, 120, 40), [150, 150, 150]);
    out.push(planned(
        "s08",
        "empty",
        "daytime",
        wall,
        vec![],
        None,
        Status::Pass,
    ));

    let mut off_box = daytime_scene();
    let body = rect(40, 50, 24, 60);
    fill(&mut off_box, body, RED);
    out.push(planned(
        "s09",
        "pedestrian",
        "daytime",
        off_box,
        vec![rect(220, 40, 48, 90)],
        Some(body),
        Status::Fail,
    ));

    let mut lookalike = daytime_scene();
    let body = rect(150, 60, 40, 50);
    fill(&mut lookalike, body, BLUE);
    out.push(planned(
        "s10",
        "dog walker",
        "daytime",
        lookalike,
        vec![body.grown(MARGIN, UNDERPASS_WIDTH, UNDERPASS_HEIGHT)],
        Some(body),
        Status::Fail,
    ));

    let mut night = Image::filled(UNDERPASS_WIDTH, UNDERPASS_HEIGHT, NIGHT);
    fill(&mut night, rect(150, 60, 20, 40), DIM);
    let stripe = rect(0, 160, UNDERPASS_WIDTH, 8);
    fill(&mut night, stripe, [30, 30, 200]);
    out.push(planned(
        "s11",
        "pedestrian",
        "nighttime",
        night,
        vec![rect(144, 54, 32, 52)],
        Some(stripe),
        Status::Fail,
    ));

    let black = Image::filled(UNDERPASS_WIDTH, UNDERPASS_HEIGHT, [0, 0, 0]);
    out.push(planned(
        "s12",
        "pedestrian",
        "nighttime",
        black,
        vec![rect(150, 60, 20, 40)],
        None,
        Status::Inconclusive,
    ));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteVariant {
    /// All twelve samples.
    Full,
    /// Only the eight samples planned to PASS.
    AllPass,
}

/// Files written by [`write_underpass_suite`].
#[derive(Debug, Clone)]
pub struct UnderpassSuite {
    pub model: ModelFiles,
    pub annotations: PathBuf,
    /// `(sample_id, planned status)` in sample-id order.
    pub expected: Vec<(String, Status)>,
}

pub fn write_underpass_suite(dir: &Path, variant: SuiteVariant) -> Result<UnderpassSuite> {
    let (manifest, weights) = underpass_model();
    let model = write_model_files(dir, "underpass", &manifest, &weights)?;
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut samples = Vec::new();
    let mut expected = Vec::new();
    for p in underpass_samples() {
        if variant == SuiteVariant::AllPass && p.expected != Status::Pass {
            continue;
        }
        let path = dir.join(&p.sample.image);
        p.image.save_png(&path)?;
        let mut s = p.sample.clone();
        s.image = path;
        samples.push(s);
        expected.push((p.sample.sample_id.clone(), p.expected));
    }
    let annotations = dir.join(match variant {
        SuiteVariant::Full => "suite.jsonl",
        SuiteVariant::AllPass => "suite-pass.jsonl",
    });
    fs::write(&annotations, to_jsonl(&samples, dir)).map_err(|e| Error::io(&annotations, e))?;
    Ok(UnderpassSuite {
        model,
        annotations,
        expected,
    })
}

pub const VGG_CLASSES: usize = 4;

/// Small VGG-style network: two conv blocks of two 3x3 convs each, then two
/// dense layers. Weights are uniform in `±sqrt(3 / fan_in)`, biases in
/// `±0.1`, drawn from a ChaCha8 stream seeded with `seed`.
pub fn vgg_style(seed: u64) -> (Manifest, Vec<f32>) {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        input_shape: [3, 32, 32],
        class_labels: UNDERPASS_LABELS.iter().map(|s| s.to_string()).collect(),
        normalization: Some(Normalization {
            mean: vec![0.485, 0.456, 0.406],
            std: vec![0.229, 0.224, 0.225],
        }),
        target_layer: None,
        layers: vec![
            LayerSpec::conv(3, 8, 3, 1, 1).named("block1_conv1"),
            LayerSpec::relu(),
            LayerSpec::conv(8, 8, 3, 1, 1).named("block1_conv2"),
            LayerSpec::relu(),
            LayerSpec::maxpool(2, 2).named("block1_pool"),
            LayerSpec::conv(8, 16, 3, 1, 1).named("block2_conv1"),
            LayerSpec::relu(),
            LayerSpec::conv(16, 16, 3, 1, 1).named("block2_conv2"),
            LayerSpec::relu(),
            LayerSpec::maxpool(2, 2).named("block2_pool"),
            LayerSpec::flatten(),
            LayerSpec::dense(16 * 8 * 8, 32).named("fc1"),
            LayerSpec::relu(),
            LayerSpec::dense(32, VGG_CLASSES).named("predictions"),
            LayerSpec::softmax(),
        ],
    };
    let weights = seeded_weights(&manifest, seed);
    (manifest, weights)
}

fn seeded_weights(manifest: &Manifest, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(manifest.parameter_count());
    for layer in &manifest.layers {
        let (fan_in, count, biases) = match *layer {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (
                in_channels * kernel * kernel,
                out_channels * in_channels * kernel * kernel,
                out_channels,
            ),
            LayerSpec::Dense {
                in_features,
                out_features,
                ..
            } => (in_features, out_features * in_features, out_features),
            _ => continue,
        };
        let scale = (3.0 / fan_in as f64).sqrt() as f32;
        weights.extend((0..count).map(|_| rng.gen_range(-1.0f32..1.0) * scale));
        weights.extend((0..biases).map(|_| rng.gen_range(-0.1f32..0.1)));
    }
    weights
}

/// Deterministic 32x32 RGB test pattern for [`vgg_style`].
pub fn vgg_reference_image() -> Image {
    let mut img = Image::filled(32, 32, [0, 0, 0]);
    for y in 0..32 {
        for x in 0..32 {
            let px = img.pixel_mut(x, y);
            px[0] = (x * 8) as u8;
            px[1] = (y * 8) as u8;
            px[2] = (((x + y) * 4 + (x * y) % 17) % 256) as u8;
        }
    }
    img
}

/// Files written by [`write_vgg_style`].
#[derive(Debug, Clone)]
pub struct VggFixture {
    pub model: ModelFiles,
    pub reference_image: PathBuf,
}

pub fn write_vgg_style(dir: &Path, seed: u64) -> Result<VggFixture> {
    let (manifest, weights) = vgg_style(seed);
    let model = write_model_files(dir, "vgg_style", &manifest, &weights)?;
    let reference_image = dir.join("vgg_reference.png");
    vgg_reference_image().save_png(&reference_image)?;
    Ok(VggFixture {
        model,
        reference_image,
    })
}

/// Random single-channel CNN with at most two conv layers and at most
/// `max_side` x `max_side` input, ending in a dense layer over 2 to 4 classes.
///
/// Conv biases lean positive so most ReLUs stay open.
pub fn random_cnn<R: Rng>(rng: &mut R, max_side: usize) -> (Manifest, Vec<f32>) {
    let side = rng.gen_range(4..=max_side.max(4));
    let (mut c, mut h, mut w) = (1usize, side, side);
    let mut layers = Vec::new();
    let convs = rng.gen_range(1..=2);
    for i in 0..convs {
        let out = rng.gen_range(1..=3);
        let kernel = rng.gen_range(1..=3usize).min(h).min(w);
        let padding = if kernel > 1 { rng.gen_range(0..=1) } else { 0 };
        layers.push(LayerSpec::conv(c, out, kernel, 1, padding).named(&format!("conv{}", i + 1)));
        c = out;
        h = h + 2 * padding - kernel + 1;
        w = w + 2 * padding - kernel + 1;
        if rng.gen_bool(0.8) {
            layers.push(LayerSpec::relu());
        }
        if h % 2 == 0 && w % 2 == 0 && h >= 4 && rng.gen_bool(0.5) {
            layers.push(LayerSpec::maxpool(2, 2));
            h /= 2;
            w /= 2;
        }
    }
    let classes = rng.gen_range(2..=4);
    layers.push(LayerSpec::flatten());
    layers.push(LayerSpec::dense(c * h * w, classes));
    if rng.gen_bool(0.5) {
        layers.push(LayerSpec::softmax());
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        input_shape: [1, side, side],
        class_labels: (0..classes).map(|k| format!("class{k}")).collect(),
        normalization: None,
        target_layer: None,
        layers,
    };
    let mut weights = Vec::with_capacity(manifest.parameter_count());
    for layer in &manifest.layers {
        match *layer {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let n = out_channels * in_channels * kernel * kernel;
                weights.extend((0..n).map(|_| rng.gen_range(-1.0f32..1.0)));
                weights.extend((0..out_channels).map(|_| rng.gen_range(0.0f32..0.5)));
            }
            LayerSpec::Dense {
                in_features,
                out_features,
                ..
            } => {
                let n = in_features * out_features;
                weights.extend((0..n).map(|_| rng.gen_range(-1.0f32..1.0)));
                weights.extend((0..out_features).map(|_| rng.gen_range(-0.1f32..0.1)));
            }
            _ => {}
        }
    }
    (manifest, weights)
}

/// Uniform `[0, 1)` tensor of the given shape.
pub fn random_input<R: Rng>(rng: &mut R, shape: [usize; 3]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
    .expect("shape matches data")
}
