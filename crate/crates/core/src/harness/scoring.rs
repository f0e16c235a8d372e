use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcam::Heatmap;
use crate::harness::annotations::{AnnotatedSample, BoundingBox};
use crate::model::InferenceRecord;

pub const REASON_OUTSIDE_REGION: &str = "activation outside ground-truth region";
pub const REASON_DEGENERATE: &str = "all-zero activation map";
pub const REASON_NO_BOXES: &str = "no ground-truth boxes for a non-background label";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    /// Minimum overlap score for PASS.
    pub threshold: f64,
    /// Box scale factor about its center, at least 1.
    pub dilation: f64,
    /// Also FAIL samples whose predicted label differs from the true label.
    pub require_correct_class: bool,
    /// Label judged on classification only; `None` disables the exemption.
    pub background_label: Option<String>,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            threshold: 0.5,
            dilation: 1.0,
            require_correct_class: true,
            background_label: Some("empty".to_string()),
        }
    }
}

impl Policy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if !(self.dilation >= 1.0) || !self.dilation.is_finite() {
            return Err(Error::config(format!(
                "dilation {} must be a finite factor >= 1",
                self.dilation
            )));
        }
        Ok(())
    }

    pub fn is_background(&self, label: &str) -> bool {
        self.background_label.as_deref() == Some(label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub sample_id: String,
    pub true_label: String,
    pub odd_tag: String,
    pub predicted_label: Option<String>,
    pub confidence: Option<f64>,
    pub classification_correct: bool,
    /// Label the heatmap explains.
    pub heatmap_label: Option<String>,
    pub overlap_score: Option<f64>,
    pub status: Status,
    pub reasons: Vec<String>,
    /// Overlay PNG, relative to the output directory.
    pub overlay: Option<String>,
}

impl Verdict {
    /// Verdict for a sample that could not be evaluated at all.
    pub fn unevaluated(sample: &AnnotatedSample, reason: String) -> Self {
        Verdict {
            sample_id: sample.sample_id.clone(),
            true_label: sample.true_label.clone(),
            odd_tag: sample.odd_tag.clone(),
            predicted_label: None,
            confidence: None,
            classification_correct: false,
            heatmap_label: None,
            overlap_score: None,
            status: Status::Inconclusive,
            reasons: vec![reason],
            overlay: None,
        }
    }
}

/// Pixel bounds `[x0, x1) x [y0, y1)` of a box scaled about its center,
/// rounded outward and clamped to the image.
pub fn dilated_bounds(
    b: &BoundingBox,
    dilation: f64,
    width: usize,
    height: usize,
) -> (usize, usize, usize, usize) {
    let scale = |lo: u32, hi: u32, limit: usize| {
        let (lo, hi) = (f64::from(lo), f64::from(hi));
        let center = (lo + hi) / 2.0;
        let half = (hi - lo) / 2.0 * dilation;
        let a = (center - half).floor().max(0.0) as usize;
        let b = ((center + half).ceil() as usize).min(limit);
        (a.min(limit), b)
    };
    let (x0, x1) = scale(b.x_min, b.x_max, width);
    let (y0, y1) = scale(b.y_min, b.y_max, height);
    (x0, x1, y0, y1)
}

/// Fraction of heatmap mass inside the union of the dilated boxes.
///
/// Returns `Ok(None)` for a degenerate map, which callers report as
/// INCONCLUSIVE.
pub fn overlap_score(map: &Heatmap, boxes: &[BoundingBox], dilation: f64) -> Result<Option<f64>> {
    if !(dilation >= 1.0) {
        return Err(Error::config(format!("dilation {dilation} must be >= 1")));
    }
    if let Some(b) = boxes.iter().find(|b| !b.fits(map.width, map.height)) {
        return Err(Error::input(format!(
            "box {:?} exceeds the {}x{} heatmap",
            <[u32; 4]>::from(*b),
            map.width,
            map.height
        )));
    }
    if map.degenerate {
        return Ok(None);
    }
    let mut inside = vec![false; map.width * map.height];
    for b in boxes {
        let (x0, x1, y0, y1) = dilated_bounds(b, dilation, map.width, map.height);
        for y in y0..y1 {
            inside[y * map.width + x0..y * map.width + x1].fill(true);
        }
    }
    let mut total = 0.0;
    let mut in_mass = 0.0;
    for (&v, &m) in map.values.iter().zip(&inside) {
        total += v;
        if m {
            in_mass += v;
        }
    }
    if !(total > 0.0) {
        return Ok(None);
    }
    Ok(Some((in_mass / total).min(1.0)))
}

/// Applies the pass/fail policy to one evaluated sample.
///
/// A low overlap fails the sample even when the class is right. A
/// misclassification additionally fails it when the policy asks for it.
pub fn judge(
    sample: &AnnotatedSample,
    record: &InferenceRecord,
    class_labels: &[String],
    map: &Heatmap,
    policy: &Policy,
) -> Result<Verdict> {
    let predicted = class_labels
        .get(record.predicted_class)
        .ok_or_else(|| Error::usage("record's predicted class is outside the label list"))?
        .clone();
    let correct = predicted == sample.true_label;
    let mut reasons = Vec::new();
    let mut overlap = None;

    let inconclusive = if map.degenerate {
        reasons.push(REASON_DEGENERATE.to_string());
        true
    } else if policy.is_background(&sample.true_label) {
        false
    } else if sample.boxes.is_empty() {
        reasons.push(REASON_NO_BOXES.to_string());
        true
    } else {
        overlap = overlap_score(map, &sample.boxes, policy.dilation)?;
        false
    };

    let mut failed = false;
    if let Some(score) = overlap {
        if score < policy.threshold {
            reasons.push(REASON_OUTSIDE_REGION.to_string());
            failed = true;
        }
    }
    if policy.require_correct_class && !correct {
        reasons.push(format!(
            "misclassified: predicted {predicted:?}, expected {:?}",
            sample.true_label
        ));
        failed = true;
    }

    let status = if inconclusive {
        Status::Inconclusive
    } else if failed {
        Status::Fail
    } else {
        Status::Pass
    };
    Ok(Verdict {
        sample_id: sample.sample_id.clone(),
        true_label: sample.true_label.clone(),
        odd_tag: sample.odd_tag.clone(),
        predicted_label: Some(predicted),
        confidence: Some(record.confidence),
        classification_correct: correct,
        heatmap_label: Some(map.class_label.clone()),
        overlap_score: overlap,
        status,
        reasons,
        overlay: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn uniform_map(w: usize, h: usize) -> Heatmap {
        Heatmap {
            sample_id: "s".into(),
            class_index: 0,
            class_label: "pedestrian".into(),
            width: w,
            height: h,
            raw_max: 1.0,
            degenerate: false,
            values: vec![1.0; w * h],
        }
    }

    fn record(predicted: usize, confidence: f64) -> InferenceRecord {
        InferenceRecord {
            caches: vec![],
            logits: Tensor::zeros(vec![2]),
            probabilities: Tensor::zeros(vec![2]),
            predicted_class: predicted,
            confidence,
            activation_layer: 0,
            target_activation: Tensor::zeros(vec![1, 1, 1]),
        }
    }

    fn sample(label: &str, boxes: Vec<BoundingBox>) -> AnnotatedSample {
        AnnotatedSample {
            sample_id: "s".into(),
            image: "s.png".into(),
            true_label: label.into(),
            odd_tag: "daytime".into(),
            boxes,
            line: 0,
        }
    }

    fn labels() -> Vec<String> {
        vec!["pedestrian".into(), "empty".into()]
    }

    #[test]
    fn all_mass_inside_box_scores_one() {
        let mut m = uniform_map(10, 10);
        m.values.fill(0.0);
        m.values[3 * 10 + 4] = 1.0;
        m.values[4 * 10 + 5] = 0.5;
        let b = BoundingBox::new(4, 3, 6, 5).unwrap();
        assert_eq!(overlap_score(&m, &[b], 1.0).unwrap(), Some(1.0));
    }

    #[test]
    fn uniform_quarter_box() {
        let m = uniform_map(8, 8);
        let b = BoundingBox::new(0, 0, 4, 4).unwrap();
        assert_eq!(overlap_score(&m, &[b], 1.0).unwrap(), Some(0.25));
    }

    #[test]
    fn dilation_scales_about_center_and_clamps() {
        let b = BoundingBox::new(4, 4, 6, 6).unwrap();
        assert_eq!(dilated_bounds(&b, 1.0, 10, 10), (4, 6, 4, 6));
        assert_eq!(dilated_bounds(&b, 2.0, 10, 10), (3, 7, 3, 7));
        assert_eq!(dilated_bounds(&b, 100.0, 10, 10), (0, 10, 0, 10));
    }

    #[test]
    fn degenerate_and_bad_inputs() {
        let mut m = uniform_map(4, 4);
        m.degenerate = true;
        m.values.fill(0.0);
        let b = BoundingBox::new(0, 0, 2, 2).unwrap();
        assert_eq!(overlap_score(&m, &[b], 1.0).unwrap(), None);
        assert!(overlap_score(&uniform_map(4, 4), &[b], 0.5).is_err());
        let big = BoundingBox::new(0, 0, 5, 2).unwrap();
        assert!(overlap_score(&uniform_map(4, 4), &[big], 1.0).is_err());
    }

    #[test]
    fn judge_pass() {
        let mut m = uniform_map(10, 10);
        m.values.fill(0.0);
        for y in 0..5 {
            for x in 0..5 {
                m.values[y * 10 + x] = 1.0;
            }
        }
        m.values[99] = 0.5;
        let s = sample("pedestrian", vec![BoundingBox::new(0, 0, 5, 5).unwrap()]);
        let v = judge(&s, &record(0, 0.95), &labels(), &m, &Policy::default()).unwrap();
        assert_eq!(v.status, Status::Pass);
        assert!(v.overlap_score.unwrap() > 0.9);
        assert!(v.reasons.is_empty());
    }

    #[test]
    fn judge_confident_but_off_box_fails() {
        let mut m = uniform_map(10, 10);
        m.values.fill(0.0);
        m.values[9 * 10 + 9] = 1.0;
        let s = sample("pedestrian", vec![BoundingBox::new(0, 0, 5, 5).unwrap()]);
        let v = judge(&s, &record(0, 0.989), &labels(), &m, &Policy::default()).unwrap();
        assert!(v.classification_correct);
        assert_eq!(v.status, Status::Fail);
        assert_eq!(v.reasons, [REASON_OUTSIDE_REGION]);
    }

    #[test]
    fn judge_degenerate_is_inconclusive() {
        let mut m = uniform_map(4, 4);
        m.degenerate = true;
        m.values.fill(0.0);
        let s = sample("pedestrian", vec![BoundingBox::new(0, 0, 2, 2).unwrap()]);
        let v = judge(&s, &record(0, 0.25), &labels(), &m, &Policy::default()).unwrap();
        assert_eq!(v.status, Status::Inconclusive);
        assert_eq!(v.reasons, [REASON_DEGENERATE]);
        assert_eq!(v.overlap_score, None);
    }

    #[test]
    fn judge_background_on_classification_only() {
        let m = uniform_map(4, 4);
        let s = sample("empty", vec![]);
        let v = judge(&s, &record(1, 0.9), &labels(), &m, &Policy::default()).unwrap();
        assert_eq!(v.status, Status::Pass);
        assert_eq!(v.overlap_score, None);
        let v = judge(&s, &record(0, 0.9), &labels(), &m, &Policy::default()).unwrap();
        assert_eq!(v.status, Status::Fail);
        let lenient = Policy {
            require_correct_class: false,
            ..Policy::default()
        };
        let v = judge(&s, &record(0, 0.9), &labels(), &m, &lenient).unwrap();
        assert_eq!(v.status, Status::Pass);
    }

    #[test]
    fn judge_missing_boxes_is_inconclusive() {
        let m = uniform_map(4, 4);
        let s = sample("pedestrian", vec![]);
        let v = judge(&s, &record(0, 0.9), &labels(), &m, &Policy::default()).unwrap();
        assert_eq!(v.status, Status::Inconclusive);
        assert_eq!(v.reasons, [REASON_NO_BOXES]);
    }

    #[test]
    fn policy_validation() {
        assert!(Policy::default().validate().is_ok());
        for (t, d) in [(1.5, 1.0), (-0.1, 1.0), (0.5, 0.9), (0.5, f64::NAN)] {
            let p = Policy {
                threshold: t,
                dilation: d,
                ..Policy::default()
            };
            assert!(p.validate().is_err());
        }
    }
}
