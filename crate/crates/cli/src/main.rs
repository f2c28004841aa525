//! `subtext` — sub-text fragmentation analysis for scene-text detection.
//!
//! Subcommands: `analyze` (threshold sweep with sub-text frequency and
//! upper-bound substitution), `upper-bound` (compact before/after view),
//! `synth` (synthetic corpus generation), `anchors` (k-means prior fit),
//! `nms` (box suppression), `gradcheck` (finite-difference verification
//! of every backward pass).
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 gradcheck
//! failure.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use subtext_core::anchors::{fit_anchors, BoxShape};
use subtext_core::evalsuite::threshold_sweep;
use subtext_core::geometry::Shape;
use subtext_core::gradcheck;
use subtext_core::pipeline::{
    build_image_evals, ingest_detections, ingest_gt, nms, synth_corpus, AnalysisReport,
    DetectionRecord, Ingested, ReportConfig, ToolConfig, UpperBoundReport,
};
use subtext_core::taxonomy::TaxonomyConfig;

#[derive(Parser)]
#[command(name = "subtext", version, about = "Sub-text fragmentation analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Threshold sweep: metrics, sub-text frequency among bad cases, and
    /// the upper-bound substitution, as a JSON report.
    Analyze(AnalyzeArgs),
    /// Before/after metrics of the upper-bound substitution per
    /// threshold.
    UpperBound(AnalyzeArgs),
    /// Generate a synthetic fragmenting-detector corpus.
    Synth(SynthArgs),
    /// Fit anchor scale and aspect ratios from ground-truth boxes.
    Anchors(AnchorsArgs),
    /// Greedy box non-maximum suppression over detection files.
    Nms(NmsArgs),
    /// Run the finite-difference gradient suites.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Ground-truth file or directory of <image-id>.txt files.
    #[arg(long)]
    gt: PathBuf,
    /// Detection file or directory.
    #[arg(long)]
    det: PathBuf,
    /// IoF lower bound of the sub-text definition.
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated, strictly increasing IoU thresholds in (0, 1).
    #[arg(long)]
    thresholds: Option<String>,
    /// Optional TOML/JSON config supplying defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the sweep as CSV (analyze only).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML/JSON config; the `[synth]` section drives generation.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (gt/ and det/ subdirectories are created).
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AnchorsArgs {
    /// Ground-truth file or directory.
    #[arg(long)]
    gt: PathBuf,
    /// Number of aspect-ratio clusters.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Base anchor stride dividing the median sqrt-area.
    #[arg(long, default_value_t = 1.0)]
    stride: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NmsArgs {
    /// Detection file or directory.
    #[arg(long)]
    det: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Output file (single-file input only).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output directory (directory input only).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seeds per suite.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
}

enum CliError {
    Usage(String),
    Data(String),
    Gradcheck,
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Gradcheck => 3,
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help/--version land here too and must stay exit 0.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Analyze(args) => run_analyze(args, false),
        Command::UpperBound(args) => run_analyze(args, true),
        Command::Synth(args) => run_synth(args),
        Command::Anchors(args) => run_anchors(args),
        Command::Nms(args) => run_nms(args),
        Command::Gradcheck(args) => run_gradcheck(args),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            match &err {
                CliError::Usage(m) => eprintln!("usage error: {m}"),
                CliError::Data(m) => eprintln!("data error: {m}"),
                CliError::Gradcheck => eprintln!("gradcheck failed"),
            }
            std::process::exit(err.code());
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ToolConfig, CliError> {
    match path {
        Some(p) => ToolConfig::load(p).map_err(CliError::Data),
        None => Ok(ToolConfig::default()),
    }
}

fn parse_thresholds(spec: &str) -> Result<Vec<f64>, CliError> {
    let mut values = Vec::new();
    for part in spec.split(',') {
        let v: f64 = part
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad threshold {part:?}")))?;
        values.push(v);
    }
    let increasing = values.windows(2).all(|w| w[0] < w[1]);
    let in_range = values.iter().all(|v| (0.0..1.0).contains(v) && *v > 0.0);
    if values.is_empty() || !increasing || !in_range {
        return Err(CliError::Usage(
            "thresholds must be strictly increasing values in (0, 1)".into(),
        ));
    }
    Ok(values)
}

fn warn_line_errors<T>(what: &str, ingested: &Ingested<T>) {
    for e in &ingested.errors {
        eprintln!("warning: {what} {}:{}: {}", e.image_id, e.line, e.message);
    }
}

fn write_output(path: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            std::io::stdout()
                .flush()
                .map_err(|e| CliError::Data(e.to_string()))
        }
    }
}

fn to_json(value: &impl serde::Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    text
}

fn run_analyze(args: AnalyzeArgs, upper_bound_only: bool) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let taxonomy = TaxonomyConfig {
        beta: args.beta.unwrap_or(config.taxonomy.beta),
        ..config.taxonomy
    };
    taxonomy
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let thresholds = match &args.thresholds {
        Some(spec) => parse_thresholds(spec)?,
        None => config.eval.thresholds.clone(),
    };

    let gt = ingest_gt(&args.gt).map_err(|e| CliError::Data(e.to_string()))?;
    warn_line_errors("gt", &gt);
    let det = ingest_detections(&args.det).map_err(|e| CliError::Data(e.to_string()))?;
    warn_line_errors("det", &det);

    let images = build_image_evals(&gt.records, &det.records);
    let rows = threshold_sweep(&images, &taxonomy, &thresholds)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let report_config = ReportConfig {
        beta: taxonomy.beta,
        iou_low: taxonomy.iou_low,
        iou_mid: taxonomy.iou_mid,
        thresholds,
    };
    if let Some(csv_path) = &args.csv {
        if upper_bound_only {
            return Err(CliError::Usage("--csv only applies to analyze".into()));
        }
        std::fs::write(csv_path, sweep_csv(&rows))
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", csv_path.display())))?;
    }
    let text = if upper_bound_only {
        to_json(&UpperBoundReport::new(report_config, rows))
    } else {
        to_json(&AnalysisReport::new(report_config, rows))
    };
    write_output(&args.out, &text)
}

fn sweep_csv(rows: &[subtext_core::evalsuite::ThresholdAnalysis]) -> String {
    let mut out = String::from(
        "threshold,precision,recall,hmean,true_positives,false_positives,false_negatives,\
         bad_case_count,subtext_count,subtext_frequency,upper_bound_before_hmean,\
         upper_bound_after_hmean\n",
    );
    for row in rows {
        let freq = row
            .subtext
            .frequency
            .map(|f| format!("{f:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{},{},{},{},{},{},{:.6},{:.6}\n",
            row.threshold,
            row.metrics.precision,
            row.metrics.recall,
            row.metrics.hmean,
            row.metrics.true_positives,
            row.metrics.false_positives,
            row.metrics.false_negatives,
            row.subtext.bad_case_count,
            row.subtext.subtext_count,
            freq,
            row.upper_bound.before.hmean,
            row.upper_bound.after.hmean,
        ));
    }
    out
}

fn run_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.synth.seed = seed;
    }
    config.synth.validate().map_err(CliError::Usage)?;
    let corpus = synth_corpus(&config.synth);
    corpus
        .write_to_dir(&args.out_dir)
        .map_err(|e| CliError::Data(format!("cannot write corpus: {e}")))?;
    eprintln!(
        "wrote {} images to {}",
        corpus.ground_truths.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn run_anchors(args: AnchorsArgs) -> Result<(), CliError> {
    let gt = ingest_gt(&args.gt).map_err(|e| CliError::Data(e.to_string()))?;
    warn_line_errors("gt", &gt);
    let mut shapes = Vec::new();
    for records in gt.records.values() {
        for r in records.iter().filter(|r| !r.ignore) {
            let b = r.quad.bounding_box();
            if let Ok(shape) = BoxShape::new(b.width(), b.height()) {
                shapes.push(shape);
            }
        }
    }
    let fit = fit_anchors(&shapes, args.k, args.seed, args.stride)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let config = ToolConfig::default();
    let mut report = AnalysisReport::new(
        ReportConfig {
            beta: config.taxonomy.beta,
            iou_low: config.taxonomy.iou_low,
            iou_mid: config.taxonomy.iou_mid,
            thresholds: vec![],
        },
        vec![],
    );
    report.anchor_fit = Some(fit);
    write_output(&args.out, &to_json(&report))
}

fn format_detection_line(record: &DetectionRecord) -> String {
    let corners: [(f64, f64); 4] = match &record.shape {
        Shape::Quad(q) => {
            let v = q.vertices();
            [(v[0].x, v[0].y), (v[1].x, v[1].y), (v[2].x, v[2].y), (v[3].x, v[3].y)]
        }
        Shape::Box(b) => [
            (b.x_min, b.y_min),
            (b.x_max, b.y_min),
            (b.x_max, b.y_max),
            (b.x_min, b.y_max),
        ],
    };
    format!(
        "{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
        corners[0].0,
        corners[0].1,
        corners[1].0,
        corners[1].1,
        corners[2].0,
        corners[2].1,
        corners[3].0,
        corners[3].1,
        record.score
    )
}

fn run_nms(args: NmsArgs) -> Result<(), CliError> {
    if !(args.iou > 0.0 && args.iou < 1.0) {
        return Err(CliError::Usage("--iou must lie in (0, 1)".into()));
    }
    let det = ingest_detections(&args.det).map_err(|e| CliError::Data(e.to_string()))?;
    warn_line_errors("det", &det);
    let is_dir = args.det.is_dir();
    if is_dir {
        let out_dir = args
            .out_dir
            .as_ref()
            .ok_or_else(|| CliError::Usage("--out-dir is required for directory input".into()))?;
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
        for (image_id, records) in &det.records {
            let kept = nms(records, args.iou);
            let mut text = String::new();
            for record in &kept {
                text.push_str(&format_detection_line(record));
                text.push('\n');
            }
            let path = out_dir.join(format!("{image_id}.txt"));
            std::fs::write(&path, text)
                .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    } else {
        if args.out_dir.is_some() {
            return Err(CliError::Usage("--out-dir only applies to directory input".into()));
        }
        let mut text = String::new();
        for records in det.records.values() {
            for record in &nms(records, args.iou) {
                text.push_str(&format_detection_line(record));
                text.push('\n');
            }
        }
        write_output(&args.out, &text)
    }
}

fn run_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be positive".into()));
    }
    let results = gradcheck::run_all(args.seed, args.seeds);
    let mut all_ok = true;
    for suite in &results {
        let status = if suite.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<24} max rel err {:>12.3e}   (tol {:.0e})  {status}",
            suite.name, suite.max_rel_err, suite.tolerance
        );
        all_ok &= suite.passed();
    }
    if all_ok {
        println!("gradcheck: all {} suites passed", results.len());
        Ok(())
    } else {
        Err(CliError::Gradcheck)
    }
}
