//! ICDAR-style detection evaluation: greedy one-to-one matching,
//! precision/recall/hmean, bad-case collection with sub-text frequency,
//! and the upper-bound substitution analysis.
//!
//! Matching protocol: detections are processed in descending score order
//! (ties keep input order); each takes the highest-IoU unmatched,
//! non-ignored ground truth whose IoU reaches the threshold. Unmatched
//! detections that sit mostly (IoF > 0.5) on a don't-care ground truth
//! are ignored and excluded from both precision and recall accounting.
//!
//! "Bad cases" are the unmatched, non-ignored detections. The upper-bound
//! analysis replaces every sub-text detection with its argmax-IoU ground
//! truth (deduplicating replacements that target the same instance,
//! keeping the highest score) and re-evaluates.
//!
//! All per-image computations are pure; corpus aggregation sums counts
//! and is independent of evaluation order.

use serde::{Deserialize, Serialize};

use crate::geometry::{self, Shape};
use crate::taxonomy::{self, Label, Proposal, TaxonomyConfig, TaxonomyError};

/// IoF above which an unmatched detection lying on a don't-care region is
/// ignored. Fixed by common evaluation practice, not configurable.
const IGNORE_IOF: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Detection {
    pub shape: Shape,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub shape: Shape,
    pub ignore: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

/// Outcome of one-to-one matching on a single image.
#[derive(Debug, Clone, Default)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_ground_truths: Vec<usize>,
    pub ignored_detections: Vec<usize>,
    pub ignored_ground_truths: Vec<usize>,
}

impl MatchResult {
    /// (tp, fp, fn) counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        (
            self.pairs.len(),
            self.unmatched_detections.len(),
            self.unmatched_ground_truths.len(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub hmean: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_count: usize) -> Self {
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_count == 0 {
            1.0
        } else {
            tp as f64 / (tp + fn_count) as f64
        };
        Self {
            precision,
            recall,
            hmean: harmonic_mean(precision, recall),
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_count,
        }
    }
}

/// 2PR/(P+R), 0 when both are 0.
pub fn harmonic_mean(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTextReport {
    pub bad_case_count: usize,
    pub subtext_count: usize,
    /// Absent (not 0) when there are no bad cases at all.
    pub frequency: Option<f64>,
}

impl SubTextReport {
    fn from_counts(bad_case_count: usize, subtext_count: usize) -> Self {
        Self {
            bad_case_count,
            subtext_count,
            frequency: if bad_case_count == 0 {
                None
            } else {
                Some(subtext_count as f64 / bad_case_count as f64)
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub before: Metrics,
    pub after: Metrics,
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAnalysis {
    pub threshold: f64,
    pub metrics: Metrics,
    pub subtext: SubTextReport,
    pub upper_bound: UpperBound,
}

/// Greedy score-descending one-to-one matching for a single image.
pub fn match_detections(
    detections: &[Detection],
    ground_truths: &[GroundTruth],
    iou_threshold: f64,
) -> MatchResult {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .partial_cmp(&detections[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut gt_taken = vec![false; ground_truths.len()];
    let mut result = MatchResult::default();
    let mut det_matched = vec![false; detections.len()];
    let mut det_ignored = vec![false; detections.len()];

    for &d in &order {
        let det = &detections[d];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in ground_truths.iter().enumerate() {
            if gt.ignore || gt_taken[g] {
                continue;
            }
            let v = geometry::iou(&det.shape, &gt.shape);
            if v >= iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            gt_taken[g] = true;
            det_matched[d] = true;
            result.pairs.push(MatchedPair {
                detection: d,
                ground_truth: g,
                iou: v,
            });
            continue;
        }
        // Unmatched: ignore the detection when it lies mostly on a
        // don't-care region.
        if det.shape.area() > 0.0 {
            for gt in ground_truths.iter().filter(|g| g.ignore) {
                let v = geometry::iof(&det.shape, &gt.shape).unwrap_or(0.0);
                if v > IGNORE_IOF {
                    det_ignored[d] = true;
                    break;
                }
            }
        }
    }

    for d in 0..detections.len() {
        if det_matched[d] {
            continue;
        }
        if det_ignored[d] {
            result.ignored_detections.push(d);
        } else {
            result.unmatched_detections.push(d);
        }
    }
    for (g, gt) in ground_truths.iter().enumerate() {
        if gt.ignore {
            result.ignored_ground_truths.push(g);
        } else if !gt_taken[g] {
            result.unmatched_ground_truths.push(g);
        }
    }
    result
}

pub fn compute_metrics(result: &MatchResult) -> Metrics {
    let (tp, fp, fn_count) = result.counts();
    Metrics::from_counts(tp, fp, fn_count)
}

/// Classifies the unmatched, non-ignored detections of `result` and
/// reports how many are sub-texts.
pub fn collect_bad_cases(
    result: &MatchResult,
    detections: &[Detection],
    ground_truths: &[GroundTruth],
    config: &TaxonomyConfig,
) -> Result<SubTextReport, TaxonomyError> {
    config.validate()?;
    let live_gts: Vec<Shape> = ground_truths
        .iter()
        .filter(|g| !g.ignore)
        .map(|g| g.shape)
        .collect();
    let mut subtext = 0usize;
    for &d in &result.unmatched_detections {
        if live_gts.is_empty() {
            break; // no ground truth to fragment: every bad case is background
        }
        let p = Proposal::with_score(detections[d].shape, detections[d].score);
        let labeled = taxonomy::classify(&p, &live_gts, config)?;
        if labeled.label == Label::SubText {
            subtext += 1;
        }
    }
    Ok(SubTextReport::from_counts(
        result.unmatched_detections.len(),
        subtext,
    ))
}

/// Replaces every sub-text detection by its argmax-IoU ground truth and
/// re-evaluates. Replacements targeting the same ground truth collapse to
/// the highest-scoring one. Returns (before, after) metrics.
pub fn upper_bound_metrics(
    detections: &[Detection],
    ground_truths: &[GroundTruth],
    config: &TaxonomyConfig,
    iou_threshold: f64,
) -> Result<(Metrics, Metrics), TaxonomyError> {
    let before = compute_metrics(&match_detections(detections, ground_truths, iou_threshold));
    let edited = substitute_subtexts(detections, ground_truths, config)?;
    let after = compute_metrics(&match_detections(&edited, ground_truths, iou_threshold));
    Ok((before, after))
}

/// The edited detection set of the upper-bound analysis.
pub fn substitute_subtexts(
    detections: &[Detection],
    ground_truths: &[GroundTruth],
    config: &TaxonomyConfig,
) -> Result<Vec<Detection>, TaxonomyError> {
    config.validate()?;
    let live: Vec<(usize, Shape)> = ground_truths
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.ignore)
        .map(|(i, g)| (i, g.shape))
        .collect();
    if live.is_empty() {
        return Ok(detections.to_vec());
    }
    let live_shapes: Vec<Shape> = live.iter().map(|(_, s)| *s).collect();

    // For each detection: either itself, or (replacement target, score).
    enum Slot {
        Keep,
        Replace { gt: usize, score: f64 },
    }
    let mut slots = Vec::with_capacity(detections.len());
    for det in detections {
        let p = Proposal::with_score(det.shape, det.score);
        let labeled = taxonomy::classify(&p, &live_shapes, config)?;
        match (labeled.label, labeled.gt_index) {
            (Label::SubText, Some(local)) => slots.push(Slot::Replace {
                gt: live[local].0,
                score: det.score,
            }),
            _ => slots.push(Slot::Keep),
        }
    }

    // Deduplicate replacements per target, keeping the highest score
    // (first occurrence on ties).
    let mut best_for_gt: std::collections::BTreeMap<usize, (usize, f64)> = Default::default();
    for (i, slot) in slots.iter().enumerate() {
        if let Slot::Replace { gt, score } = slot {
            let entry = best_for_gt.entry(*gt).or_insert((i, *score));
            if *score > entry.1 {
                *entry = (i, *score);
            }
        }
    }
    let mut edited = Vec::with_capacity(detections.len());
    for (i, slot) in slots.iter().enumerate() {
        match slot {
            Slot::Keep => edited.push(detections[i].clone()),
            Slot::Replace { gt, score } => {
                if best_for_gt[gt].0 == i {
                    edited.push(Detection {
                        shape: ground_truths[*gt].shape,
                        score: *score,
                    });
                }
            }
        }
    }
    Ok(edited)
}

/// One image of a corpus.
#[derive(Debug, Clone)]
pub struct ImageEval {
    pub detections: Vec<Detection>,
    pub ground_truths: Vec<GroundTruth>,
}

/// Corpus-level evaluation at one threshold: counts are summed over
/// images (micro-average).
pub fn evaluate_corpus(images: &[ImageEval], iou_threshold: f64) -> Metrics {
    let (mut tp, mut fp, mut fn_count) = (0, 0, 0);
    for img in images {
        let (t, f, n) =
            match_detections(&img.detections, &img.ground_truths, iou_threshold).counts();
        tp += t;
        fp += f;
        fn_count += n;
    }
    Metrics::from_counts(tp, fp, fn_count)
}

/// Runs bad-case collection and the upper-bound analysis at each
/// threshold.
///
/// The sub-text definition follows the evaluation setting: at threshold
/// `t` the taxonomy's full-text bound is raised to `max(config.iou_mid,
/// t)`, so a detection counts as a sub-text exactly when it is a mostly
/// contained fragment that fails the evaluation at that setting. Stricter
/// settings therefore see more sub-texts, never fewer.
pub fn threshold_sweep(
    images: &[ImageEval],
    config: &TaxonomyConfig,
    thresholds: &[f64],
) -> Result<Vec<ThresholdAnalysis>, TaxonomyError> {
    config.validate()?;
    let mut out = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let cfg_t = TaxonomyConfig {
            iou_mid: config.iou_mid.max(t),
            ..*config
        };
        let (mut tp_b, mut fp_b, mut fn_b) = (0, 0, 0);
        let (mut tp_a, mut fp_a, mut fn_a) = (0, 0, 0);
        let (mut bad, mut sub) = (0, 0);
        for img in images {
            let matched = match_detections(&img.detections, &img.ground_truths, t);
            let (t1, f1, n1) = matched.counts();
            tp_b += t1;
            fp_b += f1;
            fn_b += n1;
            let report = collect_bad_cases(&matched, &img.detections, &img.ground_truths, &cfg_t)?;
            bad += report.bad_case_count;
            sub += report.subtext_count;
            let edited = substitute_subtexts(&img.detections, &img.ground_truths, &cfg_t)?;
            let (t2, f2, n2) = match_detections(&edited, &img.ground_truths, t).counts();
            tp_a += t2;
            fp_a += f2;
            fn_a += n2;
        }
        let before = Metrics::from_counts(tp_b, fp_b, fn_b);
        let after = Metrics::from_counts(tp_a, fp_a, fn_a);
        out.push(ThresholdAnalysis {
            threshold: t,
            metrics: before,
            subtext: SubTextReport::from_counts(bad, sub),
            upper_bound: UpperBound { before, after },
        });
    }
    Ok(out)
}
