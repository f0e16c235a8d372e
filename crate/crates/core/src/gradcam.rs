//! Grad-CAM heatmaps.
//!
//! For a class `c` and a conv activation `A` of shape `[K, H, W]`:
//!
//! ```text
//! alpha[k] = mean over (i, j) of d logit_c / d A[k, i, j]
//! raw[i, j] = max(0, sum_k alpha[k] * A[k, i, j])
//! ```
//!
//! `raw` is divided by its maximum, upsampled to the original image size, and
//! rescaled so its peak is exactly 1. An all-zero `raw` yields a degenerate
//! heatmap instead of an error.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::resize_plane;
use crate::model::{InferenceRecord, Model};
use crate::numerics::Tensor;

/// Normalized activation map, values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub sample_id: String,
    pub class_index: usize,
    pub class_label: String,
    pub width: usize,
    pub height: usize,
    /// Maximum of the map before normalization.
    pub raw_max: f64,
    /// Set when the raw map was identically zero; `values` are then all zero.
    pub degenerate: bool,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Total activation mass.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Resamples to a new size and rescales so the peak stays exactly 1.
    pub fn resized(&self, width: usize, height: usize) -> Heatmap {
        let mut values = if width == self.width && height == self.height {
            self.values.clone()
        } else {
            resize_plane(&self.values, self.width, self.height, width, height)
        };
        if !self.degenerate {
            let peak = values.iter().copied().fold(0.0, f64::max);
            if peak > 0.0 && peak != 1.0 {
                for v in &mut values {
                    *v /= peak;
                }
            }
        }
        Heatmap {
            width,
            height,
            values,
            ..self.clone()
        }
    }

    pub fn with_sample_id(mut self, id: impl Into<String>) -> Self {
        self.sample_id = id.into();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("heatmap serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::input(format!("bad heatmap sidecar: {e}")))
    }
}

/// Global-average-pooled gradient per channel.
pub fn channel_weights(gradient: &Tensor) -> Result<Tensor> {
    let (c, h, w) = gradient.dims3()?;
    let area = (h * w) as f64;
    let alpha = gradient
        .data()
        .chunks_exact(h * w)
        .map(|plane| plane.iter().sum::<f64>() / area)
        .collect::<Vec<_>>();
    debug_assert_eq!(alpha.len(), c);
    Ok(Tensor::from_vec(alpha))
}

/// `max(0, sum_k alpha[k] * activation[k])`, shape `[H, W]`.
pub fn cam(activation: &Tensor, alpha: &Tensor) -> Result<Tensor> {
    let (c, h, w) = activation.dims3().map_err(|_| {
        Error::input(format!(
            "activation must be [C,H,W], got {:?}",
            activation.shape()
        ))
    })?;
    if alpha.shape() != [c] {
        return Err(Error::input(format!(
            "{} channel weights for an activation with {c} channels",
            alpha.len()
        )));
    }
    let mut raw = vec![0.0; h * w];
    for (plane, &a) in activation.data().chunks_exact(h * w).zip(alpha.data()) {
        for (r, &v) in raw.iter_mut().zip(plane) {
            *r += a * v;
        }
    }
    for r in &mut raw {
        *r = r.max(0.0);
    }
    Tensor::new(vec![h, w], raw)
}

/// Divides a non-negative `[H, W]` map by its maximum.
pub fn normalize(raw: &Tensor) -> Result<Heatmap> {
    let (h, w) = raw.dims2()?;
    let raw_max = raw.data().iter().copied().fold(0.0, f64::max);
    let degenerate = !(raw_max > 0.0);
    let values = if degenerate {
        vec![0.0; h * w]
    } else {
        raw.data()
            .iter()
            .map(|&v| (v / raw_max).clamp(0.0, 1.0))
            .collect()
    };
    Ok(Heatmap {
        sample_id: String::new(),
        class_index: 0,
        class_label: String::new(),
        width: w,
        height: h,
        raw_max: if degenerate { 0.0 } else { raw_max },
        degenerate,
        values,
    })
}

/// Full Grad-CAM for one inference: weights, cam, normalize, then resample to
/// `out_width x out_height`. `class_index` defaults to the predicted class.
pub fn gradcam_for(
    model: &Model,
    record: &InferenceRecord,
    class_index: Option<usize>,
    out_width: usize,
    out_height: usize,
) -> Result<Heatmap> {
    let class = class_index.unwrap_or(record.predicted_class);
    let gradient = model.class_score_gradient(record, class)?;
    let alpha = channel_weights(&gradient)?;
    let raw = cam(&record.target_activation, &alpha)?;
    let mut map = normalize(&raw)?.resized(out_width, out_height);
    map.class_index = class;
    map.class_label = model.class_labels()[class].clone();
    Ok(map)
}

/// Pixel-wise mean of normalized heatmaps across a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedHeatmap {
    pub width: usize,
    pub height: usize,
    pub sample_count: usize,
    /// Contributing samples, in the order they were summed.
    pub sample_ids: Vec<String>,
    /// Degenerate maps left out of the mean.
    pub excluded: Vec<String>,
    pub values: Vec<f64>,
}

impl CombinedHeatmap {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("combined heatmap serializes")
    }
}

fn sample_order(a: &Heatmap, b: &Heatmap) -> Ordering {
    a.sample_id.cmp(&b.sample_id).then_with(|| {
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Averages the non-degenerate maps. Summation runs in sample-id order, so the
/// result does not depend on the order of `maps`.
pub fn combined(maps: &[Heatmap]) -> Result<CombinedHeatmap> {
    let mut contributing: Vec<&Heatmap> = maps.iter().filter(|m| !m.degenerate).collect();
    let mut excluded: Vec<String> = maps
        .iter()
        .filter(|m| m.degenerate)
        .map(|m| m.sample_id.clone())
        .collect();
    excluded.sort();
    if contributing.is_empty() {
        return Err(Error::input("no valid heatmaps to combine"));
    }
    let (width, height) = (contributing[0].width, contributing[0].height);
    if let Some(m) = contributing
        .iter()
        .find(|m| m.width != width || m.height != height)
    {
        return Err(Error::input(format!(
            "heatmap {:?} is {}x{}, expected {width}x{height}",
            m.sample_id, m.width, m.height
        )));
    }
    contributing.sort_by(|a, b| sample_order(a, b));

    let mut sums = vec![0.0; width * height];
    for m in &contributing {
        for (s, v) in sums.iter_mut().zip(&m.values) {
            *s += v;
        }
    }
    let n = contributing.len() as f64;
    let values = sums.into_iter().map(|s| s / n).collect();
    Ok(CombinedHeatmap {
        width,
        height,
        sample_count: contributing.len(),
        sample_ids: contributing.iter().map(|m| m.sample_id.clone()).collect(),
        excluded,
        values,
    })
}
