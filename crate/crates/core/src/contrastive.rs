//! Instance-wise contrastive objective over labeled text proposals:
//! projection head, pair mining, InfoNCE, the batch-level contrastive
//! loss, and overall loss assembly.
//!
//! Mining takes, per image, the embedded proposals with their taxonomy
//! verdicts. Ground-truth proposals (injected as proposals upstream)
//! become the queries; sub-text and full-text proposals of the same
//! instance are that query's positives; sub-text, full-text and
//! ground-truth proposals of *other* instances in the same image are its
//! negatives. Background proposals appear nowhere. Queries without a
//! positive are dropped and counted in the mining report.
//!
//! The batch loss is the mean of per-(query, positive) InfoNCE terms —
//! the positive mean, since the objective maximizes same-instance
//! agreement — normalized by the total number of pairs so batches with
//! uneven positives per query stay well defined. Negatives are shared
//! across the positives of one query and drawn within-image only.
//!
//! Any positive temperature is accepted. Very small values (0.01 and
//! below) sharpen the softmax enough that training on top of these
//! gradients tends to diverge; 0.2 is the default.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    l2_normalize_rows, l2_normalize_rows_vjp, matmul, relu, relu_vjp, NumericsError, Parameter,
    Tensor2D,
};
use crate::taxonomy::Label;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error, PartialEq)]
pub enum ContrastiveError {
    #[error("temperature must be positive")]
    BadTemperature,
    #[error("embedding row {0} is not L2-normalized")]
    NotNormalized(usize),
    #[error("no ground-truth proposals to use as queries")]
    NoQueries,
    #[error("contrastive batch is empty (every query was dropped)")]
    EmptyBatch,
    #[error("proposal references embedding row {row} outside 0..{rows}")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("sub-/full-text proposal carries no instance index")]
    MissingInstance,
    #[error("loss weights must be finite with non-negative lambda")]
    BadLossWeights,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// 2-layer MLP with ReLU followed by row-wise L2 normalization.
#[derive(Debug, Clone)]
pub struct ProjectionHeadParams {
    /// hidden × in
    pub w1: Parameter,
    /// 1 × hidden
    pub b1: Parameter,
    /// out × hidden
    pub w2: Parameter,
    /// 1 × out
    pub b2: Parameter,
}

impl ProjectionHeadParams {
    /// Entries i.i.d. uniform in [−0.1, 0.1], seeded.
    pub fn random(in_dim: usize, hidden_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            w1: Parameter::new(Tensor2D::random_uniform(hidden_dim, in_dim, -0.1, 0.1, &mut rng)),
            b1: Parameter::new(Tensor2D::random_uniform(1, hidden_dim, -0.1, 0.1, &mut rng)),
            w2: Parameter::new(Tensor2D::random_uniform(out_dim, hidden_dim, -0.1, 0.1, &mut rng)),
            b2: Parameter::new(Tensor2D::random_uniform(1, out_dim, -0.1, 0.1, &mut rng)),
        }
    }

    pub fn zeros(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Self {
            w1: Parameter::new(Tensor2D::zeros(hidden_dim, in_dim)),
            b1: Parameter::new(Tensor2D::zeros(1, hidden_dim)),
            w2: Parameter::new(Tensor2D::zeros(out_dim, hidden_dim)),
            b2: Parameter::new(Tensor2D::zeros(1, out_dim)),
        }
    }

    /// The published configuration: 1024 → 1024 hidden → 128-d embedding.
    pub fn default_shape(seed: u64) -> Self {
        Self::random(1024, 1024, 128, seed)
    }

    pub fn zero_grads(&mut self) {
        self.w1.zero_grad();
        self.b1.zero_grad();
        self.w2.zero_grad();
        self.b2.zero_grad();
    }

    pub fn named_matrices(&self) -> Vec<(String, &Tensor2D)> {
        vec![
            ("projection.w1".into(), &self.w1.value),
            ("projection.b1".into(), &self.b1.value),
            ("projection.w2".into(), &self.w2.value),
            ("projection.b2".into(), &self.b2.value),
        ]
    }
}

/// Intermediates of one projection forward pass.
#[derive(Debug, Clone)]
pub struct ProjectionCache {
    input: Tensor2D,
    pre_relu: Tensor2D,
    hidden: Tensor2D,
    pre_norm: Tensor2D,
}

fn add_row_bias(x: &Tensor2D, bias: &Tensor2D) -> Result<Tensor2D, NumericsError> {
    if bias.rows() != 1 || bias.cols() != x.cols() {
        return Err(NumericsError::ShapeMismatch {
            expected: format!("1x{}", x.cols()),
            got: format!("{}x{}", bias.rows(), bias.cols()),
        });
    }
    Ok(Tensor2D::from_fn(x.rows(), x.cols(), |r, c| {
        x.get(r, c) + bias.get(0, c)
    }))
}

/// Projects features into the normalized embedding space:
/// l2_normalize(relu(x·W1ᵀ + b1)·W2ᵀ + b2) row-wise.
pub fn project(
    features: &Tensor2D,
    params: &ProjectionHeadParams,
) -> Result<(Tensor2D, ProjectionCache), ContrastiveError> {
    let pre_relu = add_row_bias(&matmul(features, &params.w1.value.transpose())?, &params.b1.value)?;
    let hidden = relu(&pre_relu);
    let pre_norm = add_row_bias(&matmul(&hidden, &params.w2.value.transpose())?, &params.b2.value)?;
    let embeddings = l2_normalize_rows(&pre_norm);
    Ok((
        embeddings,
        ProjectionCache {
            input: features.clone(),
            pre_relu,
            hidden,
            pre_norm,
        },
    ))
}

/// Exact vjp of [`project`]; accumulates into `params`, returns the
/// gradient with respect to the input features.
pub fn project_backward(
    cache: &ProjectionCache,
    upstream: &Tensor2D,
    params: &mut ProjectionHeadParams,
) -> Result<Tensor2D, ContrastiveError> {
    if upstream.shape() != (cache.pre_norm.rows(), cache.pre_norm.cols()) {
        return Err(ContrastiveError::Numerics(NumericsError::ShapeMismatch {
            expected: format!("{}x{}", cache.pre_norm.rows(), cache.pre_norm.cols()),
            got: format!("{}x{}", upstream.rows(), upstream.cols()),
        }));
    }
    let grad_pre_norm = l2_normalize_rows_vjp(&cache.pre_norm, upstream);
    // pre_norm = hidden·W2ᵀ + b2
    params
        .w2
        .accumulate(&matmul(&grad_pre_norm.transpose(), &cache.hidden)?)
        .map_err(ContrastiveError::Numerics)?;
    params
        .b2
        .accumulate(&column_sums(&grad_pre_norm))
        .map_err(ContrastiveError::Numerics)?;
    let grad_hidden = matmul(&grad_pre_norm, &params.w2.value)?;
    let grad_pre_relu = relu_vjp(&cache.pre_relu, &grad_hidden);
    // pre_relu = input·W1ᵀ + b1
    params
        .w1
        .accumulate(&matmul(&grad_pre_relu.transpose(), &cache.input)?)
        .map_err(ContrastiveError::Numerics)?;
    params
        .b1
        .accumulate(&column_sums(&grad_pre_relu))
        .map_err(ContrastiveError::Numerics)?;
    Ok(matmul(&grad_pre_relu, &params.w1.value)?)
}

fn column_sums(x: &Tensor2D) -> Tensor2D {
    Tensor2D::from_fn(1, x.cols(), |_, c| (0..x.rows()).map(|r| x.get(r, c)).sum())
}

/// Role of a proposal entering pair mining.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinedRole {
    GroundTruth,
    Detection(Label),
}

/// One embedded proposal of one image.
#[derive(Debug, Clone, Copy)]
pub struct ContrastiveProposal {
    pub role: MinedRole,
    /// Instance (ground-truth) index within the image. Required for
    /// ground-truth proposals and for sub-/full-text detections.
    pub instance: Option<usize>,
    /// Row in the shared embeddings matrix.
    pub row: usize,
}

/// Per-query pairing over rows of the shared embeddings matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub query: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Mined queries with their positives/negatives plus the embeddings they
/// index into.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub embeddings: Tensor2D,
    pub groups: Vec<QueryGroup>,
    pub temperature: f64,
}

impl ContrastiveBatch {
    /// Validates temperature, row bounds, normalization (‖row‖ = 1 ±
    /// 1e-9 for every referenced row) and that every group has at least
    /// one positive.
    pub fn new(
        embeddings: Tensor2D,
        groups: Vec<QueryGroup>,
        temperature: f64,
    ) -> Result<Self, ContrastiveError> {
        if !(temperature > 0.0) {
            return Err(ContrastiveError::BadTemperature);
        }
        let rows = embeddings.rows();
        let mut referenced = vec![false; rows];
        for g in &groups {
            if g.positives.is_empty() {
                return Err(ContrastiveError::EmptyBatch);
            }
            for &r in std::iter::once(&g.query).chain(&g.positives).chain(&g.negatives) {
                if r >= rows {
                    return Err(ContrastiveError::RowOutOfRange { row: r, rows });
                }
                referenced[r] = true;
            }
        }
        for (r, used) in referenced.iter().enumerate() {
            if !used {
                continue;
            }
            let norm: f64 = embeddings.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(ContrastiveError::NotNormalized(r));
            }
        }
        Ok(Self {
            embeddings,
            groups,
            temperature,
        })
    }
}

/// Counts describing one mining pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub queries_total: usize,
    pub queries_retained: usize,
    pub queries_dropped: usize,
    pub positives_total: usize,
    pub negatives_total: usize,
}

/// Builds the contrastive batch from embedded, taxonomy-labeled proposals
/// grouped by image.
pub fn mine_pairs(
    images: &[Vec<ContrastiveProposal>],
    embeddings: &Tensor2D,
    temperature: f64,
) -> Result<(ContrastiveBatch, MiningReport), ContrastiveError> {
    let rows = embeddings.rows();
    let mut groups = Vec::new();
    let mut report = MiningReport {
        queries_total: 0,
        queries_retained: 0,
        queries_dropped: 0,
        positives_total: 0,
        negatives_total: 0,
    };
    let mut any_query = false;
    for proposals in images {
        for p in proposals {
            if p.row >= rows {
                return Err(ContrastiveError::RowOutOfRange { row: p.row, rows });
            }
        }
        // The trainable pool of this image: everything except background.
        let queries: Vec<&ContrastiveProposal> = proposals
            .iter()
            .filter(|p| p.role == MinedRole::GroundTruth)
            .collect();
        if !queries.is_empty() {
            any_query = true;
        }
        for q in queries {
            report.queries_total += 1;
            let q_instance = q.instance.ok_or(ContrastiveError::MissingInstance)?;
            let mut positives = Vec::new();
            let mut negatives = Vec::new();
            for p in proposals {
                match p.role {
                    MinedRole::GroundTruth => {
                        if p.row != q.row && p.instance != Some(q_instance) {
                            negatives.push(p.row);
                        }
                    }
                    MinedRole::Detection(Label::SubText) | MinedRole::Detection(Label::FullText) => {
                        let inst = p.instance.ok_or(ContrastiveError::MissingInstance)?;
                        if inst == q_instance {
                            positives.push(p.row);
                        } else {
                            negatives.push(p.row);
                        }
                    }
                    MinedRole::Detection(Label::Background) => {}
                }
            }
            if positives.is_empty() {
                report.queries_dropped += 1;
                continue;
            }
            report.queries_retained += 1;
            report.positives_total += positives.len();
            report.negatives_total += negatives.len();
            groups.push(QueryGroup {
                query: q.row,
                positives,
                negatives,
            });
        }
    }
    if !any_query {
        return Err(ContrastiveError::NoQueries);
    }
    if groups.is_empty() {
        return Err(ContrastiveError::EmptyBatch);
    }
    let batch = ContrastiveBatch::new(embeddings.clone(), groups, temperature)?;
    Ok((batch, report))
}

/// Gradients of one InfoNCE term with respect to its inputs.
#[derive(Debug, Clone)]
pub struct InfonceGrads {
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// InfoNCE loss for one (query, positive, negatives) triple:
/// −log( exp(q·k⁺/τ) / (exp(q·k⁺/τ) + Σ_j exp(q·k⁻_j/τ)) ),
/// evaluated through a stable log-sum-exp. With no negatives the
/// classification is certain and the loss is 0.
pub fn infonce(
    query: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    temperature: f64,
) -> Result<(f64, InfonceGrads), ContrastiveError> {
    if !(temperature > 0.0) {
        return Err(ContrastiveError::BadTemperature);
    }
    let dim = query.len();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut logits = Vec::with_capacity(negatives.len() + 1);
    logits.push(dot(query, positive) / temperature);
    for neg in negatives {
        logits.push(dot(query, neg) / temperature);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let loss = max + z.ln() - logits[0];

    // Softmax over logits; d loss / d logit_0 = p_0 − 1, else p_j.
    let probs: Vec<f64> = logits.iter().map(|l| (l - max).exp() / z).collect();
    let mut grad_query = vec![0.0; dim];
    let coeff0 = (probs[0] - 1.0) / temperature;
    for (gq, &p) in grad_query.iter_mut().zip(positive) {
        *gq += coeff0 * p;
    }
    let grad_positive: Vec<f64> = query.iter().map(|&q| coeff0 * q).collect();
    let mut grad_negatives = Vec::with_capacity(negatives.len());
    for (j, neg) in negatives.iter().enumerate() {
        let coeff = probs[j + 1] / temperature;
        for (gq, &nv) in grad_query.iter_mut().zip(*neg) {
            *gq += coeff * nv;
        }
        grad_negatives.push(query.iter().map(|&q| coeff * q).collect());
    }
    Ok((
        loss,
        InfonceGrads {
            query: grad_query,
            positive: grad_positive,
            negatives: grad_negatives,
        },
    ))
}

/// Batch contrastive loss: mean of per-(query, positive) InfoNCE terms,
/// i.e. (Σ_i Σ_m L_CL) / (Σ_i M_i). Returns the loss and its gradient
/// with respect to the embeddings matrix.
pub fn inscl_loss(batch: &ContrastiveBatch) -> Result<(f64, Tensor2D), ContrastiveError> {
    if batch.groups.is_empty() {
        return Err(ContrastiveError::EmptyBatch);
    }
    let pair_count: usize = batch.groups.iter().map(|g| g.positives.len()).sum();
    let scale = 1.0 / pair_count as f64;
    let mut total = 0.0;
    let mut grad = Tensor2D::zeros(batch.embeddings.rows(), batch.embeddings.cols());
    let add_row = |grad: &mut Tensor2D, row: usize, values: &[f64], scale: f64| {
        for (c, v) in values.iter().enumerate() {
            let cur = grad.get(row, c);
            grad.set(row, c, cur + scale * v);
        }
    };
    for group in &batch.groups {
        let query = batch.embeddings.row(group.query).to_vec();
        let negatives: Vec<&[f64]> = group
            .negatives
            .iter()
            .map(|&r| batch.embeddings.row(r))
            .collect();
        for &pos in &group.positives {
            let (loss, grads) = infonce(
                &query,
                batch.embeddings.row(pos),
                &negatives,
                batch.temperature,
            )?;
            total += loss;
            add_row(&mut grad, group.query, &grads.query, scale);
            add_row(&mut grad, pos, &grads.positive, scale);
            for (g, &neg_row) in grads.negatives.iter().zip(&group.negatives) {
                add_row(&mut grad, neg_row, g, scale);
            }
        }
    }
    Ok((total * scale, grad))
}

/// λ and the detector losses entering the overall objective. The four
/// detector terms are opaque scalars supplied by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
    pub rpn_loss: f64,
    pub cls_loss: f64,
    pub reg_loss: f64,
    pub mask_loss: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            rpn_loss: 0.0,
            cls_loss: 0.0,
            reg_loss: 0.0,
            mask_loss: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ContrastiveError> {
        let finite = [
            self.lambda,
            self.rpn_loss,
            self.cls_loss,
            self.reg_loss,
            self.mask_loss,
        ]
        .iter()
        .all(|v| v.is_finite());
        if finite && self.lambda >= 0.0 {
            Ok(())
        } else {
            Err(ContrastiveError::BadLossWeights)
        }
    }
}

/// Overall objective: the four detector losses plus λ times the
/// contrastive loss. Affine in `inscl` with slope exactly λ.
pub fn overall_loss(weights: &LossWeights, inscl: f64) -> f64 {
    weights.rpn_loss + weights.cls_loss + weights.reg_loss + weights.mask_loss
        + weights.lambda * inscl
}
