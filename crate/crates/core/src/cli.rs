//! Command-line front end: `gradgate explain | combined | test`.
//!
//! Every option can come from a flag, from a TOML file given with `--config`,
//! or from its default, in that order of precedence. The output directory may
//! also be set with `GRADGATE_OUTPUT_DIR`, which sits between the flag and the
//! file. Relative paths in a config file resolve against the file's directory.
//!
//! Exit codes: 0 when the gate passes, 1 when it fails, 2 on any configuration
//! or input error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{
    combine_aligned, dataset_hash, explain_all, explain_image, hash_files, load_annotations,
    overlay_file_name, render_overlay, report_paths, run_suite, sidecar_file_name,
    validate_samples, write_combined, AnnotatedSample, ClassMode, Policy, SuiteInfo, SuiteOptions,
    TestReport,
};
use crate::imaging::ColorMap;
use crate::model::{LayerSelector, Model};

pub const OUTPUT_DIR_ENV: &str = "GRADGATE_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "gradgate-out";

#[derive(Debug, Parser)]
#[command(
    name = "gradgate",
    version,
    about = "Grad-CAM heatmaps and a bounding-box overlap gate for CNN image classifiers",
    after_help = "Exit codes: 0 gate passed, 1 gate failed, 2 configuration or input error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one image: write its heatmap overlay and value sidecar, then
    /// print `<label> <confidence> <overlay-path>`
    Explain {
        /// Image to explain (PNG, PPM, or PGM)
        image: PathBuf,
        #[command(flatten)]
        options: ConfigArgs,
    },
    /// Average the heatmaps of every sample in the dataset into one map
    Combined {
        #[command(flatten)]
        options: ConfigArgs,
    },
    /// Run the overlap gate over the dataset and write report.json and report.xml
    Test {
        #[command(flatten)]
        options: ConfigArgs,
    },
}

/// Flags shared by all subcommands, one per [`RunConfig`] field.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML file supplying defaults for any option below
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Model manifest (JSON)
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Raw little-endian f32 weights matching the manifest
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Annotated dataset (JSON lines); required by `combined` and `test`
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Directory for overlays, heatmaps, and reports [default: gradgate-out]
    #[arg(long, value_name = "DIR", env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    /// Minimum overlap score for PASS, in [0, 1] [default: 0.5]
    #[arg(long, value_name = "TAU")]
    pub threshold: Option<f64>,
    /// Scale factor applied to every box about its center, >= 1 [default: 1.0]
    #[arg(long, value_name = "FACTOR")]
    pub dilation: Option<f64>,
    /// Class each heatmap explains: predicted, true, or a class index [default: predicted]
    #[arg(long, value_name = "MODE")]
    pub class_mode: Option<ClassMode>,
    /// Grad-CAM layer as a layer index or name [default: the manifest's choice, else the last conv]
    #[arg(long, value_name = "LAYER")]
    pub target_layer: Option<LayerSelector>,
    /// Heatmap opacity in overlays, in [0, 1] [default: 0.4]
    #[arg(long, value_name = "ALPHA")]
    pub alpha: Option<f64>,
    /// Heatmap palette: blue-red or gray [default: blue-red]
    #[arg(long, value_name = "NAME")]
    pub colormap: Option<String>,
    /// Whether INCONCLUSIVE verdicts fail the gate [default: true]
    #[arg(long, value_name = "BOOL", action = ArgAction::Set)]
    pub inconclusive_fails: Option<bool>,
    /// Whether a misclassified sample fails regardless of overlap [default: true]
    #[arg(long, value_name = "BOOL", action = ArgAction::Set)]
    pub require_correct_class: Option<bool>,
    /// Label judged on classification only; empty disables [default: empty]
    #[arg(long, value_name = "LABEL")]
    pub background_label: Option<String>,
    /// Also write a JSON sidecar with raw heatmap values per sample in `test` [default: false]
    #[arg(long, value_name = "BOOL", action = ArgAction::Set)]
    pub write_sidecars: Option<bool>,
    /// Worker threads [default: available parallelism]
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
}

/// Contents of a `--config` file. Keys match the long flag names with
/// underscores.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    manifest: Option<PathBuf>,
    weights: Option<PathBuf>,
    dataset: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    threshold: Option<f64>,
    dilation: Option<f64>,
    class_mode: Option<String>,
    target_layer: Option<LayerSelector>,
    alpha: Option<f64>,
    colormap: Option<String>,
    inconclusive_fails: Option<bool>,
    require_correct_class: Option<bool>,
    background_label: Option<String>,
    write_sidecars: Option<bool>,
    threads: Option<usize>,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| {
            Error::config(format!("config file {}: {}", path.display(), e.message()))
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.manifest,
            &mut cfg.weights,
            &mut cfg.dataset,
            &mut cfg.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Fully resolved settings for one run.
///
/// Serializes into `report.json` without `output_dir` and `threads`, which
/// cannot change any verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub weights: PathBuf,
    pub dataset: Option<PathBuf>,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub threshold: f64,
    pub dilation: f64,
    pub class_mode: ClassMode,
    pub target_layer: Option<LayerSelector>,
    pub alpha: f64,
    pub colormap: String,
    pub inconclusive_fails: bool,
    pub require_correct_class: bool,
    pub background_label: Option<String>,
    pub write_sidecars: bool,
    #[serde(skip)]
    pub threads: usize,
}

fn require(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.ok_or_else(|| {
        Error::config(format!(
            "missing --{flag} (or `{}` in the config file)",
            flag.replace('-', "_")
        ))
    })
}

fn must_exist(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::config(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

impl RunConfig {
    /// Merges flags over the config file over defaults, then validates.
    pub fn resolve(args: &ConfigArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let class_mode = match (args.class_mode, file.class_mode) {
            (Some(m), _) => m,
            (None, Some(s)) => s
                .parse()
                .map_err(|e| Error::config(format!("config file `class_mode`: {e}")))?,
            (None, None) => ClassMode::default(),
        };
        let defaults = SuiteOptions::default();
        let background_label = args
            .background_label
            .clone()
            .or(file.background_label)
            .or(defaults.policy.background_label)
            .filter(|l| !l.is_empty());
        let cfg = RunConfig {
            manifest: require(args.manifest.clone().or(file.manifest), "manifest")?,
            weights: require(args.weights.clone().or(file.weights), "weights")?,
            dataset: args.dataset.clone().or(file.dataset),
            output_dir: args
                .output_dir
                .clone()
                .or(file.output_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            threshold: args
                .threshold
                .or(file.threshold)
                .unwrap_or(defaults.policy.threshold),
            dilation: args
                .dilation
                .or(file.dilation)
                .unwrap_or(defaults.policy.dilation),
            class_mode,
            target_layer: args.target_layer.clone().or(file.target_layer),
            alpha: args.alpha.or(file.alpha).unwrap_or(defaults.alpha),
            colormap: args
                .colormap
                .clone()
                .or(file.colormap)
                .unwrap_or(defaults.colormap),
            inconclusive_fails: args
                .inconclusive_fails
                .or(file.inconclusive_fails)
                .unwrap_or(defaults.inconclusive_fails),
            require_correct_class: args
                .require_correct_class
                .or(file.require_correct_class)
                .unwrap_or(defaults.policy.require_correct_class),
            background_label,
            write_sidecars: args
                .write_sidecars
                .or(file.write_sidecars)
                .unwrap_or(defaults.write_sidecars),
            threads: args
                .threads
                .or(file.threads)
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.policy().validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.threads == 0 {
            return Err(Error::config("threads must be at least 1"));
        }
        ColorMap::by_name(&self.colormap)?;
        must_exist(&self.manifest, "manifest")?;
        must_exist(&self.weights, "weights file")?;
        if let Some(d) = &self.dataset {
            must_exist(d, "dataset")?;
        }
        Ok(())
    }

    pub fn policy(&self) -> Policy {
        Policy {
            threshold: self.threshold,
            dilation: self.dilation,
            require_correct_class: self.require_correct_class,
            background_label: self.background_label.clone(),
        }
    }

    pub fn suite_options(&self) -> SuiteOptions {
        SuiteOptions {
            policy: self.policy(),
            class_mode: self.class_mode,
            alpha: self.alpha,
            colormap: self.colormap.clone(),
            inconclusive_fails: self.inconclusive_fails,
            write_sidecars: self.write_sidecars,
            threads: self.threads,
        }
    }

    pub fn load_model(&self) -> Result<Model> {
        let model = Model::load(&self.manifest, &self.weights)?;
        match &self.target_layer {
            Some(sel) => model.with_target_layer(sel),
            None => Ok(model),
        }
    }

    fn dataset_path(&self, command: &str) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::config(format!("`{command}` needs --dataset")))
    }

    fn load_dataset(&self, command: &str, model: &Model) -> Result<Vec<AnnotatedSample>> {
        let samples = load_annotations(self.dataset_path(command)?)?;
        validate_samples(
            &samples,
            model.class_labels(),
            self.background_label.as_deref(),
        )?;
        Ok(samples)
    }

    fn create_output_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir).map_err(|e| Error::io(&self.output_dir, e))
    }
}

/// `explain`: returns the exit code.
pub fn cmd_explain(cfg: &RunConfig, image: &Path) -> Result<i32> {
    let model = cfg.load_model()?;
    let cmap = cfg.suite_options().validate(&model)?;
    let class = match cfg.class_mode {
        ClassMode::Predicted => None,
        ClassMode::Index(i) => Some(i),
        ClassMode::True => {
            return Err(Error::config(
                "class mode `true` needs ground truth; use `test` or `combined` with a dataset",
            ))
        }
    };
    let stem = image
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .unwrap_or("image");
    let explained = explain_image(&model, image, stem, class)?;
    cfg.create_output_dir()?;

    let label = &explained.heatmap.class_label;
    let overlay_path = cfg.output_dir.join(overlay_file_name(stem, label));
    render_overlay(&explained.image, &explained.heatmap, &cmap, cfg.alpha)?
        .save_png(&overlay_path)?;
    let sidecar = cfg.output_dir.join(sidecar_file_name(stem, label));
    fs::write(&sidecar, explained.heatmap.to_json()).map_err(|e| Error::io(&sidecar, e))?;

    let rec = &explained.record;
    println!(
        "{} {:.4} {}",
        model.class_labels()[rec.predicted_class],
        rec.confidence,
        overlay_path.display()
    );
    if explained.heatmap.degenerate {
        eprintln!("warning: all-zero activation map for {}", image.display());
    }
    Ok(0)
}

/// `combined`: returns the exit code.
pub fn cmd_combined(cfg: &RunConfig) -> Result<i32> {
    let model = cfg.load_model()?;
    let cmap = cfg.suite_options().validate(&model)?;
    let samples = cfg.load_dataset("combined", &model)?;
    let mut maps = Vec::with_capacity(samples.len());
    for (id, explained) in explain_all(&model, &samples, cfg.class_mode, cfg.threads)? {
        let e = explained.map_err(|e| Error::input(format!("sample {id}: {e}")))?;
        maps.push(e.heatmap);
    }
    let degenerate = maps.iter().filter(|m| m.degenerate).count();
    if degenerate == maps.len() {
        eprintln!("gradgate: no valid heatmaps to combine ({degenerate} degenerate)");
        return Ok(1);
    }
    let combined = combine_aligned(&maps)?;
    cfg.create_output_dir()?;
    let written = write_combined(&combined, &cmap, &cfg.output_dir)?;
    println!(
        "combined {} heatmaps ({} degenerate excluded) -> {}",
        combined.sample_count,
        degenerate,
        cfg.output_dir.join(&written.png).display()
    );
    Ok(0)
}

/// `test`: runs the gate, prints a summary table, and returns the exit code.
pub fn cmd_test(cfg: &RunConfig) -> Result<i32> {
    let report = run_test(cfg)?;
    print_summary(&report, &cfg.output_dir);
    Ok(report.exit_status)
}

/// Runs the gate without printing anything.
pub fn run_test(cfg: &RunConfig) -> Result<TestReport> {
    let model = cfg.load_model()?;
    let samples = cfg.load_dataset("test", &model)?;
    let info = SuiteInfo {
        model_hash: hash_files(&[&cfg.manifest, &cfg.weights])?,
        dataset_hash: dataset_hash(cfg.dataset_path("test")?, &samples)?,
        parameter_count: model.parameter_count(),
        class_labels: model.class_labels().to_vec(),
        config: serde_json::to_value(cfg).expect("RunConfig serializes"),
    };
    run_suite(
        &model,
        &samples,
        &cfg.suite_options(),
        info,
        &cfg.output_dir,
    )
}

fn print_summary(report: &TestReport, output_dir: &Path) {
    println!(
        "{:<16} {:<14} {:<14} {:>10} {:>8}  {:<12} REASONS",
        "SAMPLE", "TRUE", "PREDICTED", "CONFIDENCE", "OVERLAP", "STATUS"
    );
    for v in &report.verdicts {
        println!(
            "{:<16} {:<14} {:<14} {:>10} {:>8}  {:<12} {}",
            v.sample_id,
            v.true_label,
            v.predicted_label.as_deref().unwrap_or("-"),
            v.confidence
                .map_or_else(|| "-".to_string(), |c| format!("{c:.4}")),
            v.overlap_score
                .map_or_else(|| "-".to_string(), |o| format!("{o:.3}")),
            v.status.to_string(),
            v.reasons.join("; ")
        );
    }
    let s = &report.summary;
    println!(
        "\n{} samples: {} passed, {} failed, {} inconclusive; accuracy {:.3}{}",
        s.total,
        s.passed,
        s.failed,
        s.inconclusive,
        s.accuracy,
        s.mean_overlap
            .map_or_else(String::new, |m| format!("; mean overlap {m:.3}"))
    );
    let (json, xml) = report_paths(output_dir);
    println!("reports: {} {}", json.display(), xml.display());
    println!(
        "gate: {}",
        if report.exit_status == 0 {
            "PASSED"
        } else {
            "FAILED"
        }
    );
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Explain { image, options } => {
            RunConfig::resolve(options).and_then(|c| cmd_explain(&c, image))
        }
        Command::Combined { options } => RunConfig::resolve(options).and_then(|c| cmd_combined(&c)),
        Command::Test { options } => RunConfig::resolve(options).and_then(|c| cmd_test(&c)),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("gradgate: {e}");
            2
        }
    }
}
