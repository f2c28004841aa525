//! End-to-end library flow over one synthetic scene: classify proposals,
//! inject the ground truths as proposals, run the stacked relation
//! blocks, project into the embedding space, mine pairs, and assemble
//! the overall loss. Exercises the seams between the modules rather than
//! any one of them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use subtext_core::contrastive::{
    inscl_loss, mine_pairs, overall_loss, project, ContrastiveProposal, LossWeights, MinedRole,
    ProjectionHeadParams,
};
use subtext_core::geometry::{AxisBox, Shape};
use subtext_core::numerics::Tensor2D;
use subtext_core::relation::{
    stack_core, GeometryEncodingConfig, ProposalBatch, RelationBlockParams, RelationDims,
};
use subtext_core::taxonomy::{classify_all, Label, Proposal, TaxonomyConfig};

#[test]
fn labeled_scene_flows_through_relation_projection_and_loss() {
    // Two wide instances; each detected as one fragment plus one
    // near-whole box, plus one background detection.
    let gt_boxes = [
        AxisBox::new(0.0, 0.0, 120.0, 20.0).unwrap(),
        AxisBox::new(0.0, 60.0, 140.0, 84.0).unwrap(),
    ];
    let det_boxes = [
        AxisBox::new(0.0, 0.0, 40.0, 20.0).unwrap(),    // fragment of 0
        AxisBox::new(0.0, 0.0, 114.0, 20.0).unwrap(),   // near-whole 0
        AxisBox::new(30.0, 60.0, 80.0, 84.0).unwrap(),  // fragment of 1
        AxisBox::new(2.0, 60.0, 138.0, 84.0).unwrap(),  // near-whole 1
        AxisBox::new(300.0, 300.0, 340.0, 320.0).unwrap(), // background
    ];
    let gts: Vec<Shape> = gt_boxes.iter().map(|b| Shape::Box(*b)).collect();
    let proposals: Vec<Proposal> = det_boxes
        .iter()
        .map(|b| Proposal::with_score(Shape::Box(*b), 0.9))
        .collect();
    let labeled = classify_all(&proposals, &gts, &TaxonomyConfig::default()).unwrap();
    let labels: Vec<Label> = labeled.iter().map(|l| l.label).collect();
    assert_eq!(
        labels,
        vec![
            Label::SubText,
            Label::FullText,
            Label::SubText,
            Label::FullText,
            Label::Background
        ]
    );

    // Proposal pool for the relation stage: ground truths injected first,
    // then the detections, with synthetic appearance features.
    let dims = RelationDims {
        feature_dim: 32,
        num_heads: 4,
        key_dim: 8,
    };
    let geom = GeometryEncodingConfig {
        dim: 16,
        wavelength_base: 1000.0,
    };
    let mut pool_boxes: Vec<AxisBox> = gt_boxes.to_vec();
    pool_boxes.extend(det_boxes.iter().copied());
    let mut rng = ChaCha8Rng::seed_from_u64(424242);
    let appearance =
        Tensor2D::random_uniform(pool_boxes.len(), dims.feature_dim, -1.0, 1.0, &mut rng);
    let batch = ProposalBatch::new(appearance, pool_boxes).unwrap();
    let blocks = vec![
        RelationBlockParams::random(dims, geom, 1).unwrap(),
        RelationBlockParams::random(dims, geom, 2).unwrap(),
    ];
    let features = stack_core(&batch, &blocks).unwrap();
    assert_eq!(features.shape(), (7, dims.feature_dim));

    // Projection and mining over the relation features.
    let head = ProjectionHeadParams::random(dims.feature_dim, 16, 8, 3);
    let (embeddings, _) = project(&features, &head).unwrap();
    let mut scene: Vec<ContrastiveProposal> = Vec::new();
    for (i, _) in gt_boxes.iter().enumerate() {
        scene.push(ContrastiveProposal {
            role: MinedRole::GroundTruth,
            instance: Some(i),
            row: i,
        });
    }
    for (d, l) in labeled.iter().enumerate() {
        scene.push(ContrastiveProposal {
            role: MinedRole::Detection(l.label),
            instance: l.gt_index,
            row: gt_boxes.len() + d,
        });
    }
    let (mined, report) = mine_pairs(&[scene], &embeddings, 0.2).unwrap();
    assert_eq!(report.queries_total, 2);
    assert_eq!(report.queries_retained, 2);
    assert_eq!(report.positives_total, 4);
    // Each query sees the other instance's {GT, sub, full}.
    assert_eq!(report.negatives_total, 6);

    let (loss, grad) = inscl_loss(&mined).unwrap();
    assert!(loss.is_finite() && loss > 0.0);
    assert_eq!(grad.shape(), embeddings.shape());
    // The background row feeds nothing, so its embedding gets no
    // gradient.
    let background_row = gt_boxes.len() + 4;
    assert!(grad.row(background_row).iter().all(|&v| v == 0.0));

    let total = overall_loss(
        &LossWeights {
            lambda: 0.01,
            rpn_loss: 0.8,
            cls_loss: 0.4,
            reg_loss: 0.3,
            mask_loss: 0.2,
        },
        loss,
    );
    assert!((total - (1.7 + 0.01 * loss)).abs() < 1e-12);
}
