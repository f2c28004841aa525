//! Operational shell: dataset ingestion, synthetic corpus generation,
//! box NMS, configuration, checkpoints, and report serialization.

mod checkpoint;
mod config;
mod ingest;
mod nms;
mod report;
mod synth;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
pub use config::{ContrastiveConfig, EvalConfig, RelationConfig, SynthConfig, ToolConfig};
pub use ingest::{
    ingest_detections, ingest_gt, parse_detection_line, parse_gt_line, AnnotationRecord,
    DetectionRecord, IngestError, Ingested, LineError,
};
pub use nms::nms;
pub use report::{
    build_image_evals, AnalysisReport, ReportConfig, ThresholdEntry, UpperBoundReport,
    UpperBoundRow, REPORT_VERSION,
};
pub use synth::{synth_corpus, SynthCorpus};
