//! Portable model format and recorded inference.
//!
//! A model is a JSON manifest plus a raw weights file. The manifest lists the
//! layers in order; the weights file holds every parameter as 32-bit
//! little-endian floats, concatenated in layer order with no header:
//! conv weights `[C_out, C_in, k, k]` then bias `[C_out]`, dense weights
//! `[M, N]` then bias `[M]`. Layers without parameters contribute nothing.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "input_shape": [3, 224, 224],
//!   "class_labels": ["pedestrian", "dog walker", "bicyclist", "empty"],
//!   "normalization": { "mean": [0.5, 0.5, 0.5], "std": [0.25, 0.25, 0.25] },
//!   "target_layer": "conv2",
//!   "layers": [
//!     { "kind": "conv2d", "name": "conv1", "in_channels": 3, "out_channels": 8,
//!       "kernel": 3, "stride": 1, "padding": 1 },
//!     { "kind": "relu" },
//!     { "kind": "maxpool", "kernel": 2, "stride": 2 },
//!     { "kind": "flatten" },
//!     { "kind": "dense", "in_features": 100352, "out_features": 4 },
//!     { "kind": "softmax" }
//!   ]
//! }
//! ```
//!
//! `normalization` and `target_layer` are optional. `target_layer` may be a
//! layer index or a layer name and must select a `conv2d` layer; it defaults
//! to the last one.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{resize_bilinear, Image};
use crate::numerics::{
    backward_to_layer, forward_trace, kernels::window_output, softmax, Conv2d, Dense, Layer,
    LayerCache, Tensor,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    /// `[C, H, W]`
    pub input_shape: [usize; 3],
    pub class_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_layer: Option<LayerSelector>,
    pub layers: Vec<LayerSpec>,
}

/// Per-channel `(pixel/255 - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerSelector {
    Index(usize),
    Name(String),
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelector::Index(i) => write!(f, "{i}"),
            LayerSelector::Name(n) => write!(f, "{n:?}"),
        }
    }
}

impl std::str::FromStr for LayerSelector {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LayerSelector::Index(i),
            Err(_) => LayerSelector::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", try_from = "RawLayer")]
pub enum LayerSpec {
    Conv2d {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    #[serde(rename = "maxpool")]
    MaxPool {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        kernel: usize,
        stride: usize,
    },
    Flatten {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Dense {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        in_features: usize,
        out_features: usize,
    },
    Softmax {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

/// Flat form of a layer entry. Parsing through it keeps the full field path
/// in type errors, which internally tagged enums lose.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    kind: String,
    name: Option<String>,
    in_channels: Option<usize>,
    out_channels: Option<usize>,
    kernel: Option<usize>,
    stride: Option<usize>,
    padding: Option<usize>,
    in_features: Option<usize>,
    out_features: Option<usize>,
}

impl TryFrom<RawLayer> for LayerSpec {
    type Error = String;

    fn try_from(raw: RawLayer) -> std::result::Result<Self, String> {
        let kind = raw.kind.clone();
        let fields = [
            ("in_channels", raw.in_channels),
            ("out_channels", raw.out_channels),
            ("kernel", raw.kernel),
            ("stride", raw.stride),
            ("padding", raw.padding),
            ("in_features", raw.in_features),
            ("out_features", raw.out_features),
        ];
        let allowed: &[&str] = match kind.as_str() {
            "conv2d" => &["in_channels", "out_channels", "kernel", "stride", "padding"],
            "maxpool" => &["kernel", "stride"],
            "dense" => &["in_features", "out_features"],
            "relu" | "flatten" | "softmax" => &[],
            other => {
                return Err(format!(
                    "unknown layer kind {other:?} (expected conv2d, relu, maxpool, flatten, dense, softmax)"
                ))
            }
        };
        if let Some((field, _)) = fields
            .iter()
            .find(|(f, v)| v.is_some() && !allowed.contains(f))
        {
            return Err(format!("field `{field}` does not apply to a {kind} layer"));
        }
        let need = |field: &str, v: Option<usize>| {
            v.ok_or_else(|| format!("{kind} layer is missing `{field}`"))
        };
        let name = raw.name;
        Ok(match kind.as_str() {
            "conv2d" => LayerSpec::Conv2d {
                name,
                in_channels: need("in_channels", raw.in_channels)?,
                out_channels: need("out_channels", raw.out_channels)?,
                kernel: need("kernel", raw.kernel)?,
                stride: raw.stride.unwrap_or(1),
                padding: raw.padding.unwrap_or(0),
            },
            "maxpool" => LayerSpec::MaxPool {
                name,
                kernel: need("kernel", raw.kernel)?,
                stride: need("stride", raw.stride)?,
            },
            "dense" => LayerSpec::Dense {
                name,
                in_features: need("in_features", raw.in_features)?,
                out_features: need("out_features", raw.out_features)?,
            },
            "relu" => LayerSpec::Relu { name },
            "flatten" => LayerSpec::Flatten { name },
            _ => LayerSpec::Softmax { name },
        })
    }
}

impl LayerSpec {
    pub fn conv(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        LayerSpec::Conv2d {
            name: None,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn relu() -> Self {
        LayerSpec::Relu { name: None }
    }

    pub fn maxpool(kernel: usize, stride: usize) -> Self {
        LayerSpec::MaxPool {
            name: None,
            kernel,
            stride,
        }
    }

    pub fn flatten() -> Self {
        LayerSpec::Flatten { name: None }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Dense {
            name: None,
            in_features,
            out_features,
        }
    }

    pub fn softmax() -> Self {
        LayerSpec::Softmax { name: None }
    }

    pub fn named(mut self, new_name: &str) -> Self {
        match &mut self {
            LayerSpec::Conv2d { name, .. }
            | LayerSpec::Relu { name }
            | LayerSpec::MaxPool { name, .. }
            | LayerSpec::Flatten { name }
            | LayerSpec::Dense { name, .. }
            | LayerSpec::Softmax { name } => *name = Some(new_name.to_string()),
        }
        self
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            LayerSpec::Conv2d { name, .. }
            | LayerSpec::Relu { name }
            | LayerSpec::MaxPool { name, .. }
            | LayerSpec::Flatten { name }
            | LayerSpec::Dense { name, .. }
            | LayerSpec::Softmax { name } => name.as_deref(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu { .. } => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten { .. } => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax { .. } => "softmax",
        }
    }

    /// Number of stored parameters (weights plus bias).
    pub fn parameter_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel + out_channels,
            LayerSpec::Dense {
                in_features,
                out_features,
                ..
            } => out_features * in_features + out_features,
            _ => 0,
        }
    }
}

/// Activation shape as tracked during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Chw(usize, usize, usize),
    Flat(usize),
}

impl Shape {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Chw(c, h, w) => vec![c, h, w],
            Shape::Flat(n) => vec![n],
        }
    }

    fn len(&self) -> usize {
        self.dims().iter().product()
    }
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(format!("manifest field `{path}`: {}", e.inner()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::parameter_count).sum()
    }

    /// Checks every structural rule and returns the output shape of each layer.
    pub fn validate(&self) -> Result<Vec<Shape>> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::config(format!(
                "manifest field `format_version`: unsupported version {}, expected {FORMAT_VERSION}",
                self.format_version
            )));
        }
        let [c, h, w] = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::config(
                "manifest field `input_shape`: dimensions must be positive",
            ));
        }
        if self.class_labels.is_empty() {
            return Err(Error::config(
                "manifest field `class_labels`: at least one label is required",
            ));
        }
        for (i, label) in self.class_labels.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(Error::config(format!(
                    "manifest field `class_labels[{i}]`: label is empty"
                )));
            }
            if self.class_labels[..i].contains(label) {
                return Err(Error::config(format!(
                    "manifest field `class_labels[{i}]`: duplicate label {label:?}"
                )));
            }
        }
        if let Some(norm) = &self.normalization {
            if norm.mean.len() != c || norm.std.len() != c {
                return Err(Error::config(format!(
                    "manifest field `normalization`: mean and std need {c} entries"
                )));
            }
            if let Some(i) = norm.std.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
                return Err(Error::config(format!(
                    "manifest field `normalization.std[{i}]`: must be positive"
                )));
            }
        }
        if self.layers.is_empty() {
            return Err(Error::config("manifest field `layers`: no layers"));
        }

        let mut shape = Shape::Chw(c, h, w);
        let mut shapes = Vec::with_capacity(self.layers.len());
        let positive = |i: usize, field: &str, v: usize| -> Result<()> {
            if v == 0 {
                Err(Error::config(format!(
                    "manifest field `layers[{i}].{field}`: must be positive"
                )))
            } else {
                Ok(())
            }
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let at = |msg: String| Error::config(format!("manifest field `layers[{i}]`: {msg}"));
            shape = match (*layer).clone() {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    positive(i, "in_channels", in_channels)?;
                    positive(i, "out_channels", out_channels)?;
                    positive(i, "kernel", kernel)?;
                    positive(i, "stride", stride)?;
                    let Shape::Chw(c, h, w) = shape else {
                        return Err(at("conv2d needs a [C,H,W] input, got a flat vector".into()));
                    };
                    if c != in_channels {
                        return Err(at(format!(
                            "in_channels is {in_channels} but the incoming activation has {c} channels"
                        )));
                    }
                    match (
                        window_output(h, kernel, stride, padding),
                        window_output(w, kernel, stride, padding),
                    ) {
                        (Some(oh), Some(ow)) => Shape::Chw(out_channels, oh, ow),
                        _ => {
                            return Err(at(format!(
                                "kernel {kernel}, stride {stride}, padding {padding} do not tile a {h}x{w} input"
                            )))
                        }
                    }
                }
                LayerSpec::Relu { .. } => shape,
                LayerSpec::MaxPool { kernel, stride, .. } => {
                    positive(i, "kernel", kernel)?;
                    positive(i, "stride", stride)?;
                    let Shape::Chw(c, h, w) = shape else {
                        return Err(at("maxpool needs a [C,H,W] input, got a flat vector".into()));
                    };
                    match (
                        window_output(h, kernel, stride, 0),
                        window_output(w, kernel, stride, 0),
                    ) {
                        (Some(oh), Some(ow)) => Shape::Chw(c, oh, ow),
                        _ => {
                            return Err(at(format!(
                            "maxpool kernel {kernel}, stride {stride} do not tile a {h}x{w} input"
                        )))
                        }
                    }
                }
                LayerSpec::Flatten { .. } => Shape::Flat(shape.len()),
                LayerSpec::Dense {
                    in_features,
                    out_features,
                    ..
                } => {
                    positive(i, "in_features", in_features)?;
                    positive(i, "out_features", out_features)?;
                    match shape {
                        Shape::Flat(n) if n == in_features => Shape::Flat(out_features),
                        Shape::Flat(n) => {
                            return Err(at(format!(
                            "in_features is {in_features} but the incoming vector has {n} entries"
                        )))
                        }
                        Shape::Chw(..) => {
                            return Err(at("dense needs a flat input; add a flatten layer".into()))
                        }
                    }
                }
                LayerSpec::Softmax { .. } => {
                    if i + 1 != self.layers.len() {
                        return Err(at("softmax is only allowed as the final layer".into()));
                    }
                    shape
                }
            };
            shapes.push(shape);
        }

        match shape {
            Shape::Flat(k) if k == self.class_labels.len() => {}
            other => {
                return Err(Error::config(format!(
                    "manifest field `class_labels`: {} labels but the network outputs {:?}",
                    self.class_labels.len(),
                    other.dims()
                )))
            }
        }
        Ok(shapes)
    }

    fn resolve_target(&self, selector: Option<&LayerSelector>) -> Result<usize> {
        let last_conv = self
            .layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Conv2d { .. }))
            .ok_or_else(|| Error::config("Grad-CAM requires a convolutional layer"))?;
        let Some(sel) = selector else {
            return Ok(last_conv);
        };
        let idx = match sel {
            LayerSelector::Index(i) => *i,
            LayerSelector::Name(n) => self
                .layers
                .iter()
                .position(|l| l.name() == Some(n.as_str()))
                .ok_or_else(|| Error::config(format!("target layer {n:?} not found")))?,
        };
        match self.layers.get(idx) {
            Some(LayerSpec::Conv2d { .. }) => Ok(idx),
            Some(other) => Err(Error::config(format!(
                "target layer {sel} is a {} layer, not conv2d",
                other.kind()
            ))),
            None => Err(Error::config(format!(
                "target layer index {idx} out of range for {} layers",
                self.layers.len()
            ))),
        }
    }
}

/// Little-endian `f32` encoding of a parameter vector.
pub fn encode_weights(weights: &[f32]) -> Vec<u8> {
    weights.iter().flat_map(|w| w.to_le_bytes()).collect()
}

/// Writes a manifest and its weights after checking that they agree.
pub fn write_model(
    manifest: &Manifest,
    weights: &[f32],
    manifest_path: &Path,
    weights_path: &Path,
) -> Result<()> {
    manifest.validate()?;
    if weights.len() != manifest.parameter_count() {
        return Err(Error::config(format!(
            "{} weights given for a manifest with {} parameters",
            weights.len(),
            manifest.parameter_count()
        )));
    }
    fs::write(manifest_path, manifest.to_json()).map_err(|e| Error::io(manifest_path, e))?;
    fs::write(weights_path, encode_weights(weights)).map_err(|e| Error::io(weights_path, e))
}

/// A validated model with `f64` parameters, immutable after construction.
#[derive(Debug, Clone)]
pub struct Model {
    manifest: Manifest,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    target_layer: usize,
}

/// Everything one forward pass produces.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRecord {
    /// Forward cache of every layer, in order.
    pub caches: Vec<LayerCache>,
    pub logits: Tensor,
    pub probabilities: Tensor,
    pub predicted_class: usize,
    pub confidence: f64,
    /// Index of the layer whose output is `target_activation`.
    pub activation_layer: usize,
    pub target_activation: Tensor,
}

impl Model {
    pub fn load(manifest_path: &Path, weights_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest = Manifest::from_json(&text)
            .map_err(|e| Error::config(format!("{}: {e}", manifest_path.display())))?;
        let bytes = fs::read(weights_path).map_err(|e| Error::io(weights_path, e))?;
        Self::from_bytes(manifest, &bytes)
    }

    pub fn from_bytes(manifest: Manifest, bytes: &[u8]) -> Result<Self> {
        let expected = manifest.parameter_count() * 4;
        if bytes.len() != expected {
            return Err(Error::config(format!(
                "weights file size mismatch: expected {expected} bytes ({} parameters), got {} bytes",
                manifest.parameter_count(),
                bytes.len()
            )));
        }
        let weights: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::from_weights(manifest, &weights)
    }

    pub fn from_weights(manifest: Manifest, weights: &[f32]) -> Result<Self> {
        let shapes = manifest.validate()?;
        let target_layer = manifest.resolve_target(manifest.target_layer.as_ref())?;
        if weights.len() != manifest.parameter_count() {
            return Err(Error::config(format!(
                "weights size mismatch: expected {} bytes ({} parameters), got {} bytes",
                manifest.parameter_count() * 4,
                manifest.parameter_count(),
                weights.len() * 4
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::config(format!("weight #{i} is not finite")));
        }

        let mut cursor = weights.iter().map(|&w| f64::from(w));
        let mut take = |shape: Vec<usize>| -> Tensor {
            let n = shape.iter().product();
            Tensor::new(shape, cursor.by_ref().take(n).collect()).expect("length checked above")
        };
        let layers = manifest
            .layers
            .iter()
            .map(|spec| match *spec {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => Layer::Conv2d(Conv2d {
                    weights: take(vec![out_channels, in_channels, kernel, kernel]),
                    bias: take(vec![out_channels]),
                    stride,
                    padding,
                }),
                LayerSpec::Relu { .. } => Layer::Relu,
                LayerSpec::MaxPool { kernel, stride, .. } => Layer::MaxPool { kernel, stride },
                LayerSpec::Flatten { .. } => Layer::Flatten,
                LayerSpec::Dense {
                    in_features,
                    out_features,
                    ..
                } => Layer::Dense(Dense {
                    weights: take(vec![out_features, in_features]),
                    bias: take(vec![out_features]),
                }),
                LayerSpec::Softmax { .. } => Layer::Softmax,
            })
            .collect();

        Ok(Model {
            manifest,
            layers,
            shapes,
            target_layer,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.manifest.input_shape
    }

    pub fn class_labels(&self) -> &[String] {
        &self.manifest.class_labels
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.class_labels.len()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.manifest.class_labels.iter().position(|l| l == label)
    }

    pub fn parameter_count(&self) -> usize {
        self.manifest.parameter_count()
    }

    /// Output shape of every layer as derived from the manifest.
    pub fn layer_shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn target_layer(&self) -> usize {
        self.target_layer
    }

    /// Re-points Grad-CAM at another conv layer.
    pub fn with_target_layer(mut self, selector: &LayerSelector) -> Result<Self> {
        self.target_layer = self.manifest.resolve_target(Some(selector))?;
        Ok(self)
    }

    /// The layer whose output is the Grad-CAM activation: the target conv, or
    /// the ReLU directly after it.
    pub fn activation_layer(&self) -> usize {
        match self.layers.get(self.target_layer + 1) {
            Some(Layer::Relu) => self.target_layer + 1,
            _ => self.target_layer,
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<InferenceRecord> {
        let expected = self.manifest.input_shape;
        if input.shape() != expected {
            return Err(Error::input(format!(
                "input shape {:?} does not match model input {expected:?}",
                input.shape()
            )));
        }
        let (output, caches) = forward_trace(&self.layers, input.clone())?;
        let logits = match self.layers.last() {
            Some(Layer::Softmax) => caches.last().expect("non-empty").input.clone(),
            _ => output,
        };
        let probabilities = softmax(&logits);
        let predicted_class = probabilities.argmax();
        let confidence = probabilities.data()[predicted_class];
        let activation_layer = self.activation_layer();
        let target_activation = caches[activation_layer + 1..]
            .first()
            .map(|c| c.input.clone())
            .unwrap_or_else(|| logits.clone());
        Ok(InferenceRecord {
            caches,
            logits,
            probabilities,
            predicted_class,
            confidence,
            activation_layer,
            target_activation,
        })
    }

    /// Gradient of the pre-softmax logit `class_index` with respect to the
    /// record's target activation.
    pub fn class_score_gradient(
        &self,
        record: &InferenceRecord,
        class_index: usize,
    ) -> Result<Tensor> {
        if class_index >= self.num_classes() {
            return Err(Error::input(format!(
                "class index {class_index} out of range for {} classes",
                self.num_classes()
            )));
        }
        if record.caches.len() != self.layers.len() {
            return Err(Error::usage(
                "inference record does not belong to this model",
            ));
        }
        let start = record.activation_layer + 1;
        backward_to_layer(&self.layers[start..], &record.caches[start..], class_index)
    }

    /// Converts a decoded image into the model's input tensor.
    ///
    /// The image is resized to the model's `H x W` (bilinear, align-corners),
    /// channel counts are adapted (gray is replicated to RGB, RGB is reduced to
    /// BT.601 luma), and each value becomes `pixel / 255`, followed by the
    /// manifest's per-channel `(x - mean) / std` when present.
    pub fn image_to_tensor(&self, image: &Image) -> Result<Tensor> {
        let [c, h, w] = self.manifest.input_shape;
        let adapted = match (image.channels(), c) {
            (1, 1) | (3, 3) => image.clone(),
            (1, 3) => image.to_rgb(),
            (3, 1) => image.to_gray(),
            (ic, mc) => {
                return Err(Error::input(format!(
                    "cannot feed a {ic}-channel image to a {mc}-channel model"
                )))
            }
        };
        let resized = if adapted.width() == w && adapted.height() == h {
            adapted
        } else {
            resize_bilinear(&adapted, w, h)
        };
        let mut data = vec![0.0; c * h * w];
        let px = resized.data();
        for ch in 0..c {
            let (mean, std) = match &self.manifest.normalization {
                Some(n) => (n.mean[ch], n.std[ch]),
                None => (0.0, 1.0),
            };
            for i in 0..h * w {
                let v = f64::from(px[i * c + ch]) / 255.0;
                data[ch * h * w + i] = (v - mean) / std;
            }
        }
        Tensor::new(vec![c, h, w], data)
    }
}
