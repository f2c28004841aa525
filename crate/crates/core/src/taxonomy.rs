//! Sub-text / full-text / background classification of detection
//! proposals against a ground-truth set.
//!
//! A proposal is *full-text* when its best IoU against any ground truth
//! reaches `iou_mid`, and *sub-text* when that best IoU sits strictly
//! between `iou_low` and `iou_mid` while the proposal is mostly contained
//! in that same ground truth (IoF above `beta`). Everything else is
//! background. Boundary points are closed as follows: IoU exactly
//! `iou_mid` is full-text, IoU exactly `iou_low` is background, IoF
//! exactly `beta` is background, and IoF 1.0 (a fully contained fragment)
//! is sub-text.
//!
//! IoF is measured against the argmax-IoU ground truth, not the max IoF
//! over all ground truths: the fragment relation is with respect to the
//! instance the proposal best overlaps. Ties in the argmax go to the
//! lowest ground-truth index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError, Shape};

#[derive(Debug, Error, PartialEq)]
pub enum TaxonomyError {
    #[error("ground-truth list is empty")]
    NoGroundTruths,
    #[error("invalid taxonomy thresholds")]
    BadConfig,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Thresholds of the proposal taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyConfig {
    /// IoF lower bound for sub-text.
    pub beta: f64,
    /// IoU below or at this is never sub-text.
    pub iou_low: f64,
    /// IoU at or above this is full-text.
    pub iou_mid: f64,
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        Self {
            beta: 0.7,
            iou_low: 0.1,
            iou_mid: 0.5,
        }
    }
}

impl TaxonomyConfig {
    pub fn new(beta: f64, iou_low: f64, iou_mid: f64) -> Result<Self, TaxonomyError> {
        let cfg = Self {
            beta,
            iou_low,
            iou_mid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TaxonomyError> {
        let ok = (0.0..1.0).contains(&self.iou_low)
            && self.iou_low < self.iou_mid
            && self.iou_mid <= 1.0
            && self.beta > 0.0
            && self.beta < 1.0;
        if ok {
            Ok(())
        } else {
            Err(TaxonomyError::BadConfig)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    SubText,
    FullText,
    Background,
}

/// A detection proposal before classification.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub shape: Shape,
    pub score: Option<f64>,
}

impl Proposal {
    pub fn new(shape: Shape) -> Self {
        Self { shape, score: None }
    }

    pub fn with_score(shape: Shape, score: f64) -> Self {
        Self {
            shape,
            score: Some(score),
        }
    }
}

/// A proposal together with its taxonomy verdict.
#[derive(Debug, Clone)]
pub struct LabeledProposal {
    pub shape: Shape,
    pub score: Option<f64>,
    pub label: Label,
    /// Index of the argmax-IoU ground truth; absent only when the best
    /// IoU is exactly zero.
    pub gt_index: Option<usize>,
    pub iou_max: f64,
    pub iof_max: f64,
}

/// The pure decision rule on (iou_max, iof_max). Exposed so boundary
/// behavior can be pinned independently of any shape construction.
pub fn label_for(iou_max: f64, iof_max: f64, config: &TaxonomyConfig) -> Label {
    if iou_max >= config.iou_mid {
        Label::FullText
    } else if iou_max > config.iou_low && iof_max > config.beta {
        Label::SubText
    } else {
        Label::Background
    }
}

/// Classifies one proposal against the ground-truth set.
pub fn classify(
    proposal: &Proposal,
    ground_truths: &[Shape],
    config: &TaxonomyConfig,
) -> Result<LabeledProposal, TaxonomyError> {
    config.validate()?;
    if ground_truths.is_empty() {
        return Err(TaxonomyError::NoGroundTruths);
    }
    let mut best_iou = f64::NEG_INFINITY;
    let mut best_idx = 0usize;
    for (i, gt) in ground_truths.iter().enumerate() {
        let v = geometry::iou(&proposal.shape, gt);
        if v > best_iou {
            best_iou = v;
            best_idx = i;
        }
    }
    let iof_max = geometry::iof(&proposal.shape, &ground_truths[best_idx])?;
    let label = label_for(best_iou, iof_max, config);
    Ok(LabeledProposal {
        shape: proposal.shape,
        score: proposal.score,
        label,
        gt_index: if best_iou > 0.0 { Some(best_idx) } else { None },
        iou_max: best_iou,
        iof_max,
    })
}

/// Element-wise [`classify`], preserving input order.
pub fn classify_all(
    proposals: &[Proposal],
    ground_truths: &[Shape],
    config: &TaxonomyConfig,
) -> Result<Vec<LabeledProposal>, TaxonomyError> {
    proposals
        .iter()
        .map(|p| classify(p, ground_truths, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AxisBox;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn boxed(x0: f64, y0: f64, x1: f64, y1: f64) -> Shape {
        Shape::Box(AxisBox::new(x0, y0, x1, y1).unwrap())
    }

    fn cfg() -> TaxonomyConfig {
        TaxonomyConfig::default()
    }

    #[test]
    fn rule_matches_published_interval_reading() {
        assert_eq!(label_for(0.6, 0.0, &cfg()), Label::FullText);
        assert_eq!(label_for(0.3, 0.9, &cfg()), Label::SubText);
        assert_eq!(label_for(0.05, 1.0, &cfg()), Label::Background);
    }

    #[test]
    fn boundary_points_are_pinned() {
        let c = cfg();
        let eps = 1e-6;
        assert_eq!(label_for(c.iou_low, 1.0, &c), Label::Background);
        assert_eq!(label_for(c.iou_low - eps, 1.0, &c), Label::Background);
        assert_eq!(label_for(c.iou_low + eps, 1.0, &c), Label::SubText);
        assert_eq!(label_for(c.iou_mid, 0.0, &c), Label::FullText);
        assert_eq!(label_for(c.iou_mid + eps, 0.0, &c), Label::FullText);
        assert_eq!(label_for(c.iou_mid - eps, 1.0, &c), Label::SubText);
        assert_eq!(label_for(0.3, c.beta, &c), Label::Background);
        assert_eq!(label_for(0.3, c.beta + eps, &c), Label::SubText);
    }

    #[test]
    fn contained_fragment_is_subtext() {
        // IoU 40/200 = 0.2, IoF 1.0.
        let p = Proposal::new(boxed(0.0, 0.0, 4.0, 10.0));
        let g = vec![boxed(0.0, 0.0, 20.0, 10.0)];
        let out = classify(&p, &g, &cfg()).unwrap();
        assert!((out.iou_max - 0.2).abs() < 1e-12);
        assert_eq!(out.iof_max, 1.0);
        assert_eq!(out.label, Label::SubText);
        assert_eq!(out.gt_index, Some(0));
    }

    #[test]
    fn empty_ground_truths_error() {
        let p = Proposal::new(boxed(0.0, 0.0, 1.0, 1.0));
        assert_eq!(
            classify(&p, &[], &cfg()).unwrap_err(),
            TaxonomyError::NoGroundTruths
        );
    }

    #[test]
    fn degenerate_proposal_propagates_geometry_error() {
        let p = Proposal::new(boxed(0.0, 0.0, 0.0, 1.0));
        let g = vec![boxed(0.0, 0.0, 1.0, 1.0)];
        assert!(matches!(
            classify(&p, &g, &cfg()),
            Err(TaxonomyError::Geometry(GeometryError::DegenerateForeground))
        ));
    }

    #[test]
    fn no_overlap_leaves_gt_index_absent() {
        let p = Proposal::new(boxed(100.0, 100.0, 110.0, 110.0));
        let g = vec![boxed(0.0, 0.0, 1.0, 1.0)];
        let out = classify(&p, &g, &cfg()).unwrap();
        assert_eq!(out.label, Label::Background);
        assert_eq!(out.gt_index, None);
        assert_eq!(out.iou_max, 0.0);
    }

    #[test]
    fn argmax_tie_breaks_to_lowest_index() {
        let p = Proposal::new(boxed(0.0, 0.0, 10.0, 10.0));
        // Two identical ground truths: both IoU 1.0.
        let g = vec![boxed(0.0, 0.0, 10.0, 10.0), boxed(0.0, 0.0, 10.0, 10.0)];
        let out = classify(&p, &g, &cfg()).unwrap();
        assert_eq!(out.gt_index, Some(0));
    }

    #[test]
    fn classify_all_preserves_order() {
        assert!(classify_all(&[], &[boxed(0.0, 0.0, 1.0, 1.0)], &cfg())
            .unwrap()
            .is_empty());
        let props = vec![
            Proposal::new(boxed(0.0, 0.0, 10.0, 10.0)),
            Proposal::new(boxed(50.0, 50.0, 60.0, 60.0)),
        ];
        let g = vec![boxed(0.0, 0.0, 10.0, 10.0)];
        let out = classify_all(&props, &g, &cfg()).unwrap();
        assert_eq!(out[0].label, Label::FullText);
        assert_eq!(out[1].label, Label::Background);
    }

    #[test]
    fn two_instance_fixture_yields_two_subtexts_two_fulltexts() {
        // Same scene the contrastive mining examples build on: two wide
        // instances, each with one fragment and one near-whole detection.
        let gts = vec![boxed(0.0, 0.0, 100.0, 20.0), boxed(0.0, 50.0, 100.0, 70.0)];
        let props = vec![
            Proposal::new(boxed(0.0, 0.0, 30.0, 20.0)),
            Proposal::new(boxed(0.0, 0.0, 95.0, 20.0)),
            Proposal::new(boxed(10.0, 50.0, 45.0, 70.0)),
            Proposal::new(boxed(0.0, 50.0, 98.0, 70.0)),
        ];
        let out = classify_all(&props, &gts, &cfg()).unwrap();
        let labels: Vec<Label> = out.iter().map(|p| p.label).collect();
        assert_eq!(
            labels,
            vec![Label::SubText, Label::FullText, Label::SubText, Label::FullText]
        );
        let idx: Vec<Option<usize>> = out.iter().map(|p| p.gt_index).collect();
        assert_eq!(idx, vec![Some(0), Some(0), Some(1), Some(1)]);
    }

    #[test]
    fn enlarging_beta_never_promotes_to_fulltext() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..1000 {
            let iou: f64 = rng.gen_range(0.0..1.0);
            let iof: f64 = rng.gen_range(iou..1.0);
            let b1: f64 = rng.gen_range(0.5..0.9);
            let b2: f64 = rng.gen_range(b1..0.9);
            let c1 = TaxonomyConfig::new(b1, 0.1, 0.5).unwrap();
            let c2 = TaxonomyConfig::new(b2, 0.1, 0.5).unwrap();
            let l1 = label_for(iou, iof, &c1);
            let l2 = label_for(iou, iof, &c2);
            match (l1, l2) {
                (Label::SubText, Label::SubText)
                | (Label::SubText, Label::Background)
                | (Label::FullText, Label::FullText)
                | (Label::Background, Label::Background) => {}
                other => panic!("beta monotonicity violated: {other:?}"),
            }
        }
    }

    #[test]
    fn classification_is_deterministic() {
        let props = vec![Proposal::new(boxed(0.0, 0.0, 4.0, 10.0))];
        let g = vec![boxed(0.0, 0.0, 20.0, 10.0)];
        let a = classify_all(&props, &g, &cfg()).unwrap();
        let b = classify_all(&props, &g, &cfg()).unwrap();
        assert_eq!(a[0].iou_max.to_bits(), b[0].iou_max.to_bits());
        assert_eq!(a[0].iof_max.to_bits(), b[0].iof_max.to_bits());
        assert_eq!(a[0].label, b[0].label);
    }
}
