use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gradcam::{combined, gradcam_for, CombinedHeatmap, Heatmap};
use crate::harness::annotations::{validate_samples, AnnotatedSample};
use crate::harness::junit;
use crate::harness::scoring::{judge, Policy, Status, Verdict};
use crate::imaging::{colorize, decode, superimpose, ColorMap, Image};
use crate::model::{InferenceRecord, Model};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const COMBINED_PNG: &str = "combined.heatmap.png";
pub const COMBINED_SIDECAR: &str = "combined.heatmap.json";

/// Which class each per-image heatmap explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassMode {
    #[default]
    Predicted,
    True,
    Index(usize),
}

impl std::str::FromStr for ClassMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "predicted" => Ok(ClassMode::Predicted),
            "true" => Ok(ClassMode::True),
            other => other
                .parse()
                .map(ClassMode::Index)
                .map_err(|_| format!("expected predicted, true, or a class index, got {other:?}")),
        }
    }
}

/// Everything that shapes a suite run besides the model and the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub policy: Policy,
    pub class_mode: ClassMode,
    pub alpha: f64,
    pub colormap: String,
    /// Whether INCONCLUSIVE verdicts break the build.
    pub inconclusive_fails: bool,
    pub write_sidecars: bool,
    /// Worker count; has no effect on any output.
    #[serde(skip)]
    pub threads: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            policy: Policy::default(),
            class_mode: ClassMode::Predicted,
            alpha: 0.4,
            colormap: "blue-red".to_string(),
            inconclusive_fails: true,
            write_sidecars: false,
            threads: 1,
        }
    }
}

impl SuiteOptions {
    pub fn validate(&self, model: &Model) -> Result<ColorMap> {
        self.policy.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if let ClassMode::Index(i) = self.class_mode {
            if i >= model.num_classes() {
                return Err(Error::config(format!(
                    "class index {i} out of range for {} classes",
                    model.num_classes()
                )));
            }
        }
        ColorMap::by_name(&self.colormap)
    }
}

/// Identifies the inputs a report was produced from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteInfo {
    pub model_hash: String,
    pub dataset_hash: String,
    pub parameter_count: usize,
    pub class_labels: Vec<String>,
    /// The resolved run configuration, echoed verbatim.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub inconclusive: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Mean over samples that have an overlap score.
    pub mean_overlap: Option<f64>,
}

impl Summary {
    pub fn from_verdicts(verdicts: &[Verdict]) -> Self {
        let count = |s: Status| verdicts.iter().filter(|v| v.status == s).count();
        let correct = verdicts.iter().filter(|v| v.classification_correct).count();
        let scores: Vec<f64> = verdicts.iter().filter_map(|v| v.overlap_score).collect();
        Summary {
            total: verdicts.len(),
            passed: count(Status::Pass),
            failed: count(Status::Fail),
            inconclusive: count(Status::Inconclusive),
            correct,
            accuracy: if verdicts.is_empty() {
                0.0
            } else {
                correct as f64 / verdicts.len() as f64
            },
            mean_overlap: if scores.is_empty() {
                None
            } else {
                Some(scores.iter().sum::<f64>() / scores.len() as f64)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedRef {
    pub png: String,
    pub sidecar: String,
    pub width: usize,
    pub height: usize,
    pub sample_count: usize,
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub suite: SuiteInfo,
    pub verdicts: Vec<Verdict>,
    pub summary: Summary,
    pub combined_heatmap: Option<CombinedRef>,
    pub exit_status: i32,
}

impl TestReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::input(format!("bad report: {e}")))
    }
}

/// SHA-256 over the concatenated contents of the given files, hex encoded.
pub fn hash_files(paths: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).map_err(|e| Error::io(*p, e))?;
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// SHA-256 over the annotation file, then each sample id and its image bytes
/// in sample-id order. Unreadable images contribute only their id; the suite
/// reports them as INCONCLUSIVE.
pub fn dataset_hash(annotations: &Path, samples: &[AnnotatedSample]) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(fs::read(annotations).map_err(|e| Error::io(annotations, e))?);
    let mut ordered: Vec<&AnnotatedSample> = samples.iter().collect();
    ordered.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    for s in ordered {
        hasher.update(s.sample_id.as_bytes());
        hasher.update([0]);
        if let Ok(bytes) = fs::read(&s.image) {
            hasher.update(&bytes);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

/// File-name-safe form of a class label.
pub fn label_slug(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// `<sample_id>.<class>.heatmap.png`
pub fn overlay_file_name(sample_id: &str, class_label: &str) -> String {
    format!("{sample_id}.{}.heatmap.png", label_slug(class_label))
}

pub fn sidecar_file_name(sample_id: &str, class_label: &str) -> String {
    format!("{sample_id}.{}.heatmap.json", label_slug(class_label))
}

/// Result of running one image through the model and Grad-CAM.
#[derive(Debug, Clone)]
pub struct Explained {
    pub image: Image,
    pub record: InferenceRecord,
    pub heatmap: Heatmap,
}

/// Decodes, classifies, and explains one image at its original resolution.
pub fn explain_image(
    model: &Model,
    path: &Path,
    sample_id: &str,
    class: Option<usize>,
) -> Result<Explained> {
    let image = decode(path)?;
    let tensor = model.image_to_tensor(&image)?;
    let record = model.forward(&tensor)?;
    let heatmap = gradcam_for(model, &record, class, image.width(), image.height())?
        .with_sample_id(sample_id);
    Ok(Explained {
        image,
        record,
        heatmap,
    })
}

/// Colorizes a heatmap and blends it over its source image.
pub fn render_overlay(
    image: &Image,
    heatmap: &Heatmap,
    cmap: &ColorMap,
    alpha: f64,
) -> Result<Image> {
    let heat = colorize(&heatmap.values, heatmap.width, heatmap.height, cmap);
    superimpose(image, &heat, alpha)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn heatmap_class(model: &Model, sample: &AnnotatedSample, mode: ClassMode) -> Option<usize> {
    match mode {
        ClassMode::Predicted => None,
        ClassMode::True => model.class_index(&sample.true_label),
        ClassMode::Index(i) => Some(i),
    }
}

fn evaluate(
    model: &Model,
    sample: &AnnotatedSample,
    options: &SuiteOptions,
    cmap: &ColorMap,
    output_dir: &Path,
) -> (Verdict, Option<Heatmap>) {
    let class = heatmap_class(model, sample, options.class_mode);
    let explained = match explain_image(model, &sample.image, &sample.sample_id, class) {
        Ok(e) => e,
        Err(e) => {
            return (
                Verdict::unevaluated(sample, format!("cannot evaluate image: {e}")),
                None,
            )
        }
    };
    let Explained {
        image,
        record,
        heatmap,
    } = explained;
    if let Some(b) = sample
        .boxes
        .iter()
        .find(|b| !b.fits(image.width(), image.height()))
    {
        let reason = format!(
            "bounding box {:?} exceeds the {}x{} image",
            <[u32; 4]>::from(*b),
            image.width(),
            image.height()
        );
        return (Verdict::unevaluated(sample, reason), None);
    }
    let mut verdict = match judge(
        sample,
        &record,
        model.class_labels(),
        &heatmap,
        &options.policy,
    ) {
        Ok(v) => v,
        Err(e) => return (Verdict::unevaluated(sample, e.to_string()), None),
    };

    let name = overlay_file_name(&sample.sample_id, &heatmap.class_label);
    let written = render_overlay(&image, &heatmap, cmap, options.alpha)
        .and_then(|overlay| overlay.save_png(&output_dir.join(&name)))
        .and_then(|_| {
            if options.write_sidecars {
                let side = sidecar_file_name(&sample.sample_id, &heatmap.class_label);
                write_file(&output_dir.join(side), heatmap.to_json())
            } else {
                Ok(())
            }
        });
    match written {
        Ok(()) => verdict.overlay = Some(name),
        Err(e) => {
            verdict.status = Status::Inconclusive;
            verdict.reasons.push(format!("cannot write overlay: {e}"));
        }
    }
    (verdict, Some(heatmap))
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

/// Averages the given maps after resampling any that differ in size to the
/// dimensions of the first map in sample-id order.
pub fn combine_aligned(maps: &[Heatmap]) -> Result<CombinedHeatmap> {
    let mut live: Vec<&Heatmap> = maps.iter().filter(|m| !m.degenerate).collect();
    live.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let Some(first) = live.first() else {
        return combined(maps);
    };
    let (w, h) = (first.width, first.height);
    let aligned: Vec<Heatmap> = maps
        .iter()
        .map(|m| {
            if m.degenerate || (m.width == w && m.height == h) {
                m.clone()
            } else {
                m.resized(w, h)
            }
        })
        .collect();
    combined(&aligned)
}

/// Writes the combined map as a colorized PNG and a JSON sidecar.
pub fn write_combined(
    combined: &CombinedHeatmap,
    cmap: &ColorMap,
    output_dir: &Path,
) -> Result<CombinedRef> {
    colorize(&combined.values, combined.width, combined.height, cmap)
        .save_png(&output_dir.join(COMBINED_PNG))?;
    write_file(&output_dir.join(COMBINED_SIDECAR), combined.to_json())?;
    Ok(CombinedRef {
        png: COMBINED_PNG.to_string(),
        sidecar: COMBINED_SIDECAR.to_string(),
        width: combined.width,
        height: combined.height,
        sample_count: combined.sample_count,
        excluded: combined.excluded.clone(),
    })
}

/// Explains every sample in parallel and returns the heatmaps in sample-id
/// order, pairing each failure with its sample id.
pub fn explain_all(
    model: &Model,
    samples: &[AnnotatedSample],
    class_mode: ClassMode,
    threads: usize,
) -> Result<Vec<(String, Result<Explained>)>> {
    let mut ordered: Vec<&AnnotatedSample> = samples.iter().collect();
    ordered.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let pool = thread_pool(threads)?;
    Ok(pool.install(|| {
        ordered
            .par_iter()
            .map(|s| {
                let class = heatmap_class(model, s, class_mode);
                (
                    s.sample_id.clone(),
                    explain_image(model, &s.image, &s.sample_id, class),
                )
            })
            .collect()
    }))
}

/// Runs the full gate: explain and judge every sample, write overlays, the
/// combined map, `report.json`, and `report.xml`.
///
/// Configuration problems abort before any sample is processed. Per-sample
/// failures become INCONCLUSIVE verdicts.
pub fn run_suite(
    model: &Model,
    samples: &[AnnotatedSample],
    options: &SuiteOptions,
    info: SuiteInfo,
    output_dir: &Path,
) -> Result<TestReport> {
    let cmap = options.validate(model)?;
    validate_samples(
        samples,
        model.class_labels(),
        options.policy.background_label.as_deref(),
    )?;
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;

    let mut ordered: Vec<&AnnotatedSample> = samples.iter().collect();
    ordered.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let pool = thread_pool(options.threads)?;
    let outcomes: Vec<(Verdict, Option<Heatmap>)> = pool.install(|| {
        ordered
            .par_iter()
            .map(|s| evaluate(model, s, options, &cmap, output_dir))
            .collect()
    });

    let maps: Vec<Heatmap> = outcomes.iter().filter_map(|(_, m)| m.clone()).collect();
    let combined_heatmap = match combine_aligned(&maps) {
        Ok(c) => Some(write_combined(&c, &cmap, output_dir)?),
        Err(_) => None,
    };

    let verdicts: Vec<Verdict> = outcomes.into_iter().map(|(v, _)| v).collect();
    let summary = Summary::from_verdicts(&verdicts);
    let breaks = summary.failed > 0 || (options.inconclusive_fails && summary.inconclusive > 0);
    let report = TestReport {
        schema_version: REPORT_SCHEMA_VERSION,
        suite: info,
        verdicts,
        summary,
        combined_heatmap,
        exit_status: i32::from(breaks),
    };

    write_file(&output_dir.join("report.json"), report.to_json())?;
    write_file(
        &output_dir.join("report.xml"),
        junit::render(&report, options.inconclusive_fails),
    )?;
    Ok(report)
}

/// Where `run_suite` writes its two report files.
pub fn report_paths(output_dir: &Path) -> (PathBuf, PathBuf) {
    (
        output_dir.join("report.json"),
        output_dir.join("report.xml"),
    )
}
