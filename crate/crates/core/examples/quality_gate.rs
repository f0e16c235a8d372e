//! Runs the heatmap-overlap gate over the constructed 12-sample underpass
//! suite and prints one line per verdict.
//!
//!     cargo run --example quality_gate -- [output-dir]

use std::path::PathBuf;

use gradgate::fixtures::{write_underpass_suite, SuiteVariant};
use gradgate::harness::{hash_files, load_annotations, run_suite, SuiteInfo, SuiteOptions};
use gradgate::model::Model;

fn main() -> gradgate::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gradgate-quality-gate"));
    let suite = write_underpass_suite(&out.join("data"), SuiteVariant::Full)?;
    let model = Model::load(&suite.model.manifest, &suite.model.weights)?;
    let samples = load_annotations(&suite.annotations)?;

    let options = SuiteOptions::default();
    let info = SuiteInfo {
        model_hash: hash_files(&[&suite.model.manifest, &suite.model.weights])?,
        dataset_hash: hash_files(&[&suite.annotations])?,
        parameter_count: model.parameter_count(),
        class_labels: model.class_labels().to_vec(),
        config: serde_json::to_value(&options).expect("options serialize"),
    };
    let report = run_suite(&model, &samples, &options, info, &out.join("report"))?;

    for v in &report.verdicts {
        println!(
            "{:<4} {:<12} {:<12} conf={:<8} overlap={:<8} {:<13} {}",
            v.sample_id,
            v.true_label,
            v.predicted_label.as_deref().unwrap_or("-"),
            v.confidence.map_or("-".into(), |c| format!("{c:.4}")),
            v.overlap_score.map_or("-".into(), |o| format!("{o:.4}")),
            v.status,
            v.reasons.join("; "),
        );
    }
    let s = &report.summary;
    println!(
        "{} passed, {} failed, {} inconclusive; accuracy {:.3}; exit status {}",
        s.passed, s.failed, s.inconclusive, s.accuracy, report.exit_status
    );
    println!("reports in {}", out.join("report").display());
    Ok(())
}
