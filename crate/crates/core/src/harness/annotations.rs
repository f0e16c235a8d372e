//! Annotated test sets, one JSON object per line:
//!
//! ```text
//! {"sample_id": "s01", "image": "images/s01.png", "true_label": "pedestrian",
//!  "odd_tag": "daytime", "boxes": [[120, 40, 168, 130]]}
//! ```
//!
//! Boxes are `[x_min, y_min, x_max, y_max]` in original-image pixels, half-open
//! on the max edges. Relative image paths resolve against the annotation
//! file's directory. Blank lines are ignored.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "[u32; 4]", from = "[u32; 4]")]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl From<[u32; 4]> for BoundingBox {
    fn from([x_min, y_min, x_max, y_max]: [u32; 4]) -> Self {
        BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self> {
        let b = BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.check_geometry()?;
        Ok(b)
    }

    fn check_geometry(&self) -> Result<()> {
        if self.x_min >= self.x_max {
            return Err(Error::config(format!(
                "box x_min {} must be less than x_max {}",
                self.x_min, self.x_max
            )));
        }
        if self.y_min >= self.y_max {
            return Err(Error::config(format!(
                "box y_min {} must be less than y_max {}",
                self.y_min, self.y_max
            )));
        }
        Ok(())
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x_max as usize <= width && self.y_max as usize <= height
    }

    pub fn area(&self) -> u64 {
        u64::from(self.x_max - self.x_min) * u64::from(self.y_max - self.y_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    pub sample_id: String,
    pub image: PathBuf,
    pub true_label: String,
    pub odd_tag: String,
    pub boxes: Vec<BoundingBox>,
    /// 1-based line in the source file; 0 for samples built in code.
    #[serde(skip)]
    pub line: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    sample_id: String,
    image: PathBuf,
    true_label: String,
    #[serde(default)]
    odd_tag: String,
    #[serde(default)]
    boxes: Vec<[i64; 4]>,
}

/// Parses an annotation file and checks per-line structure.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotatedSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_annotations(&text, base).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses annotation text; relative image paths are joined onto `base`.
pub fn parse_annotations(text: &str, base: &Path) -> Result<Vec<AnnotatedSample>> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| Error::config(format!("line {lineno}: {msg}"));
        let raw: RawSample = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        if raw.sample_id.is_empty() {
            return Err(at("sample_id is empty".into()));
        }
        if !seen.insert(raw.sample_id.clone()) {
            return Err(at(format!("duplicate sample_id {:?}", raw.sample_id)));
        }
        let mut boxes = Vec::with_capacity(raw.boxes.len());
        for (bi, b) in raw.boxes.iter().enumerate() {
            if b.iter().any(|&v| v < 0 || v > i64::from(u32::MAX)) {
                return Err(at(format!(
                    "boxes[{bi}] has a coordinate out of range: {b:?}"
                )));
            }
            let bb = BoundingBox::from(b.map(|v| v as u32));
            bb.check_geometry()
                .map_err(|e| at(format!("boxes[{bi}]: {}", strip_prefix(&e))))?;
            boxes.push(bb);
        }
        let image = if raw.image.is_absolute() {
            raw.image
        } else {
            base.join(raw.image)
        };
        samples.push(AnnotatedSample {
            sample_id: raw.sample_id,
            image,
            true_label: raw.true_label,
            odd_tag: raw.odd_tag,
            boxes,
            line: lineno,
        });
    }
    Ok(samples)
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::Input(m) | Error::Usage(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Checks labels against the model and the box requirement for non-background samples.
pub fn validate_samples(
    samples: &[AnnotatedSample],
    class_labels: &[String],
    background_label: Option<&str>,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::config("dataset contains no samples"));
    }
    for s in samples {
        let at = |msg: String| {
            if s.line > 0 {
                Error::config(format!("line {}: {msg}", s.line))
            } else {
                Error::config(format!("sample {:?}: {msg}", s.sample_id))
            }
        };
        if !class_labels.contains(&s.true_label) {
            return Err(at(format!(
                "label {:?} is not one of the model's classes {class_labels:?}",
                s.true_label
            )));
        }
        let is_background = background_label == Some(s.true_label.as_str());
        if s.boxes.is_empty() && !is_background {
            return Err(at(format!(
                "sample {:?} has no boxes but {:?} is not the background label",
                s.sample_id, s.true_label
            )));
        }
    }
    Ok(())
}

/// Serializes samples back to the line format, image paths relative to `base` when possible.
pub fn to_jsonl(samples: &[AnnotatedSample], base: &Path) -> String {
    let mut out = String::new();
    for s in samples {
        let image = s.image.strip_prefix(base).unwrap_or(&s.image);
        let line = serde_json::json!({
            "sample_id": s.sample_id,
            "image": image,
            "true_label": s.true_label,
            "odd_tag": s.odd_tag,
            "boxes": s.boxes,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}
