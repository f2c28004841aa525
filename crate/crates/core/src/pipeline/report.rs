//! Versioned JSON report types.
//!
//! Struct field order is the serialization order, so reports are
//! byte-stable for identical inputs. The schema is documented in
//! `docs/report_schema.json`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorFit;
use crate::contrastive::MiningReport;
use crate::evalsuite::{
    Detection, GroundTruth, ImageEval, Metrics, SubTextReport, ThresholdAnalysis, UpperBound,
};
use crate::geometry::Shape;

use super::{AnnotationRecord, DetectionRecord};

/// Schema version stamped into every report.
pub const REPORT_VERSION: u32 = 1;

/// Effective settings echoed into a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub beta: f64,
    pub iou_low: f64,
    pub iou_mid: f64,
    pub thresholds: Vec<f64>,
}

/// One sweep row of the analysis report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub threshold: f64,
    pub metrics: Metrics,
    pub subtext_report: SubTextReport,
    pub upper_bound: UpperBound,
}

impl From<ThresholdAnalysis> for ThresholdEntry {
    fn from(row: ThresholdAnalysis) -> Self {
        Self {
            threshold: row.threshold,
            metrics: row.metrics,
            subtext_report: row.subtext,
            upper_bound: row.upper_bound,
        }
    }
}

/// Full analysis report: sweep rows plus optional mining and anchor
/// sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub config: ReportConfig,
    pub per_threshold: Vec<ThresholdEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mining_report: Option<MiningReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor_fit: Option<AnchorFit>,
}

/// Compact before/after report of the upper-bound substitution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundRow {
    pub threshold: f64,
    pub before: Metrics,
    pub after: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundReport {
    pub schema_version: u32,
    pub config: ReportConfig,
    pub per_threshold: Vec<UpperBoundRow>,
}

impl AnalysisReport {
    pub fn new(config: ReportConfig, rows: Vec<ThresholdAnalysis>) -> Self {
        Self {
            schema_version: REPORT_VERSION,
            config,
            per_threshold: rows.into_iter().map(Into::into).collect(),
            mining_report: None,
            anchor_fit: None,
        }
    }
}

impl UpperBoundReport {
    pub fn new(config: ReportConfig, rows: Vec<ThresholdAnalysis>) -> Self {
        Self {
            schema_version: REPORT_VERSION,
            config,
            per_threshold: rows
                .into_iter()
                .map(|r| UpperBoundRow {
                    threshold: r.threshold,
                    before: r.upper_bound.before,
                    after: r.upper_bound.after,
                })
                .collect(),
        }
    }
}

/// Joins per-image ground truths and detections into evaluation inputs,
/// keyed by the union of image ids (images missing on either side get an
/// empty list there).
pub fn build_image_evals(
    ground_truths: &BTreeMap<String, Vec<AnnotationRecord>>,
    detections: &BTreeMap<String, Vec<DetectionRecord>>,
) -> Vec<ImageEval> {
    let mut ids: Vec<&String> = ground_truths.keys().chain(detections.keys()).collect();
    ids.sort();
    ids.dedup();
    ids.into_iter()
        .map(|id| ImageEval {
            ground_truths: ground_truths
                .get(id)
                .map(|gts| {
                    gts.iter()
                        .map(|g| GroundTruth {
                            shape: Shape::Quad(g.quad),
                            ignore: g.ignore,
                        })
                        .collect()
                })
                .unwrap_or_default(),
            detections: detections
                .get(id)
                .map(|dets| {
                    dets.iter()
                        .map(|d| Detection {
                            shape: d.shape,
                            score: d.score,
                        })
                        .collect()
                })
                .unwrap_or_default(),
        })
        .collect()
}
