//! The pipeline gate: annotated samples in, verdicts and reports out.

pub mod annotations;
pub mod junit;
pub mod scoring;
pub mod suite;

pub use annotations::{
    load_annotations, parse_annotations, validate_samples, AnnotatedSample, BoundingBox,
};
pub use scoring::{judge, overlap_score, Policy, Status, Verdict};
pub use suite::{
    combine_aligned, dataset_hash, explain_all, explain_image, hash_files, overlay_file_name,
    render_overlay, report_paths, run_suite, sidecar_file_name, write_combined, ClassMode,
    Explained, SuiteInfo, SuiteOptions, Summary, TestReport,
};
