//! Relation block: pairwise relation weights from appearance and
//! geometry, per-head relation features, concatenation and residual add.
//!
//! For proposals with appearance features f^A (N×d) and boxes f^G, head m
//! produces
//!
//!   out_i = f^A_i + Concat_m[ Σ_j w^m_ij · (W^{V_m} f^A_j) ]
//!
//! with
//!
//!   w^m_ij = g^m_ij · exp(s^m_ij) / Σ_k g^m_ik · exp(s^m_ik),
//!   s^m_ij = (W^{Q_m} f^A_i) · (W^{K_m} f^A_j) / √d_k,
//!   g^m_ij = relu(W^{G_m} · E(box_i, box_j)),
//!
//! where E is a sinusoidal embedding of the relative pair geometry
//! (normalized center offsets and log size ratios). Rows whose geometry
//! gate is entirely zero fall back to a uniform 1/N row so normalization
//! never divides by zero; those rows receive zero gradient. The weighted
//! sum runs over all j including the self pair.
//!
//! The backward pass is the exact vector-Jacobian product of the forward
//! map and accumulates into the block's [`Parameter`]s.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::AxisBox;
use crate::numerics::{
    add, concat_cols, concat_cols_vjp, matmul, NumericsError, Parameter, Tensor2D,
};

/// Offset damping inside the log of the relative-position terms.
const GEOM_EPS: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum RelationError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("box has non-positive width or height")]
    DegenerateBox,
    #[error("batch has {boxes} boxes for {rows} appearance rows")]
    BatchMismatch { boxes: usize, rows: usize },
    #[error("cache does not match the given upstream or parameters")]
    CacheMismatch,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Sinusoidal embedding of the 4 relative-geometry terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryEncodingConfig {
    /// Embedding width d_g; must be divisible by 8 (4 terms × sin/cos).
    pub dim: usize,
    pub wavelength_base: f64,
}

impl Default for GeometryEncodingConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            wavelength_base: 1000.0,
        }
    }
}

impl GeometryEncodingConfig {
    fn validate(&self) -> Result<(), RelationError> {
        if self.dim == 0 || self.dim % 8 != 0 {
            return Err(RelationError::BadConfig(format!(
                "geometry embedding dim {} must be a positive multiple of 8",
                self.dim
            )));
        }
        if !(self.wavelength_base > 1.0) {
            return Err(RelationError::BadConfig(
                "wavelength base must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationDims {
    /// Appearance feature width d.
    pub feature_dim: usize,
    /// Number of relation features N_r.
    pub num_heads: usize,
    /// Projection width of the appearance similarity d_k.
    pub key_dim: usize,
}

impl Default for RelationDims {
    fn default() -> Self {
        Self {
            feature_dim: 1024,
            num_heads: 16,
            key_dim: 64,
        }
    }
}

impl RelationDims {
    /// Width of each relation feature; the residual add requires
    /// num_heads · relation_dim = feature_dim.
    pub fn relation_dim(&self) -> usize {
        self.feature_dim / self.num_heads
    }

    fn validate(&self) -> Result<(), RelationError> {
        if self.num_heads == 0 || self.key_dim == 0 || self.feature_dim == 0 {
            return Err(RelationError::BadConfig("dimensions must be positive".into()));
        }
        if self.feature_dim % self.num_heads != 0 {
            return Err(RelationError::BadConfig(format!(
                "feature dim {} not divisible by {} heads",
                self.feature_dim, self.num_heads
            )));
        }
        Ok(())
    }
}

/// Learnable weights of one head.
#[derive(Debug, Clone)]
pub struct RelationHeadParams {
    /// d_k × d
    pub query_proj: Parameter,
    /// d_k × d
    pub key_proj: Parameter,
    /// d_r × d
    pub value_proj: Parameter,
    /// 1 × d_g
    pub geom_proj: Parameter,
}

/// All learnable weights of one relation block.
#[derive(Debug, Clone)]
pub struct RelationBlockParams {
    pub dims: RelationDims,
    pub geometry: GeometryEncodingConfig,
    pub heads: Vec<RelationHeadParams>,
}

impl RelationBlockParams {
    pub fn zeros(dims: RelationDims, geometry: GeometryEncodingConfig) -> Result<Self, RelationError> {
        Self::build(dims, geometry, Tensor2D::zeros)
    }

    /// Entries i.i.d. uniform in [−0.1, 0.1], seeded.
    pub fn random(
        dims: RelationDims,
        geometry: GeometryEncodingConfig,
        seed: u64,
    ) -> Result<Self, RelationError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(dims, geometry, |r, c| {
            Tensor2D::random_uniform(r, c, -0.1, 0.1, &mut rng)
        })
    }

    fn build(
        dims: RelationDims,
        geometry: GeometryEncodingConfig,
        mut make: impl FnMut(usize, usize) -> Tensor2D,
    ) -> Result<Self, RelationError> {
        dims.validate()?;
        geometry.validate()?;
        let d = dims.feature_dim;
        let dr = dims.relation_dim();
        let heads = (0..dims.num_heads)
            .map(|_| RelationHeadParams {
                query_proj: Parameter::new(make(dims.key_dim, d)),
                key_proj: Parameter::new(make(dims.key_dim, d)),
                value_proj: Parameter::new(make(dr, d)),
                geom_proj: Parameter::new(make(1, geometry.dim)),
            })
            .collect();
        Ok(Self {
            dims,
            geometry,
            heads,
        })
    }

    pub fn zero_grads(&mut self) {
        for h in &mut self.heads {
            h.query_proj.zero_grad();
            h.key_proj.zero_grad();
            h.value_proj.zero_grad();
            h.geom_proj.zero_grad();
        }
    }

    /// Named matrices for checkpointing, in a stable order.
    pub fn named_matrices(&self) -> Vec<(String, &Tensor2D)> {
        let mut out = Vec::new();
        for (m, h) in self.heads.iter().enumerate() {
            out.push((format!("head{m}.query_proj"), &h.query_proj.value));
            out.push((format!("head{m}.key_proj"), &h.key_proj.value));
            out.push((format!("head{m}.value_proj"), &h.value_proj.value));
            out.push((format!("head{m}.geom_proj"), &h.geom_proj.value));
        }
        out
    }

    /// Replaces the weights from a named-matrix list (the checkpoint
    /// loader's half of [`named_matrices`]).
    pub fn load_named_matrices(
        &mut self,
        matrices: &[(String, Tensor2D)],
    ) -> Result<(), RelationError> {
        for (m, h) in self.heads.iter_mut().enumerate() {
            for (suffix, param) in [
                ("query_proj", &mut h.query_proj),
                ("key_proj", &mut h.key_proj),
                ("value_proj", &mut h.value_proj),
                ("geom_proj", &mut h.geom_proj),
            ] {
                let name = format!("head{m}.{suffix}");
                let found = matrices
                    .iter()
                    .find(|(n, _)| *n == name)
                    .ok_or_else(|| RelationError::BadConfig(format!("missing matrix {name}")))?;
                if found.1.shape() != param.value.shape() {
                    return Err(RelationError::BadConfig(format!(
                        "matrix {name} has shape {:?}, expected {:?}",
                        found.1.shape(),
                        param.value.shape()
                    )));
                }
                *param = Parameter::new(found.1.clone());
            }
        }
        Ok(())
    }
}

/// N proposals: appearance features plus their boxes.
#[derive(Debug, Clone)]
pub struct ProposalBatch {
    pub appearance: Tensor2D,
    pub boxes: Vec<AxisBox>,
}

impl ProposalBatch {
    pub fn new(appearance: Tensor2D, boxes: Vec<AxisBox>) -> Result<Self, RelationError> {
        if boxes.len() != appearance.rows() {
            return Err(RelationError::BatchMismatch {
                boxes: boxes.len(),
                rows: appearance.rows(),
            });
        }
        Ok(Self { appearance, boxes })
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Pairwise geometry encoding: for every ordered pair (i, j) the 4-vector
///
///   ( ln(|Δx|/w_i + ε), ln(|Δy|/h_i + ε), ln(w_j/w_i), ln(h_j/h_i) )
///
/// sinusoidally embedded to `cfg.dim` columns. Row layout is i·N + j.
/// Invariant under common translation and common uniform scaling.
pub fn encode_pair_geometry(
    boxes: &[AxisBox],
    cfg: &GeometryEncodingConfig,
) -> Result<Tensor2D, RelationError> {
    cfg.validate()?;
    for b in boxes {
        if !(b.width() > 0.0 && b.height() > 0.0) {
            return Err(RelationError::DegenerateBox);
        }
    }
    let n = boxes.len();
    let half = cfg.dim / 8;
    let freqs: Vec<f64> = (0..half)
        .map(|u| cfg.wavelength_base.powf(-(u as f64) / half as f64))
        .collect();
    let mut out = Tensor2D::zeros(n * n, cfg.dim);
    for i in 0..n {
        let bi = &boxes[i];
        let (wi, hi) = (bi.width(), bi.height());
        let ci = bi.center();
        for j in 0..n {
            let bj = &boxes[j];
            let cj = bj.center();
            let terms = [
                ((cj.x - ci.x).abs() / wi + GEOM_EPS).ln(),
                ((cj.y - ci.y).abs() / hi + GEOM_EPS).ln(),
                (bj.width() / wi).ln(),
                (bj.height() / hi).ln(),
            ];
            let row = i * n + j;
            for (t, &v) in terms.iter().enumerate() {
                let base_col = t * 2 * half;
                for (u, &f) in freqs.iter().enumerate() {
                    out.set(row, base_col + u, (v * f).sin());
                    out.set(row, base_col + half + u, (v * f).cos());
                }
            }
        }
    }
    Ok(out)
}

/// Per-head intermediates kept for the backward pass.
#[derive(Debug, Clone)]
struct HeadCache {
    query: Tensor2D,
    key: Tensor2D,
    value: Tensor2D,
    /// exp(s − row max), N×N.
    exp_s: Tensor2D,
    /// Pre-relu geometry gate, N×N.
    gate_pre: Tensor2D,
    /// relu(gate_pre), N×N.
    gate: Tensor2D,
    /// Final relation weights, N×N.
    weights: Tensor2D,
    /// Row sums of gate ⊙ exp_s.
    row_sum: Vec<f64>,
    /// Rows that fell back to the uniform distribution.
    uniform: Vec<bool>,
}

/// Forward intermediates of one relation block evaluation.
#[derive(Debug, Clone)]
pub struct RelationCache {
    appearance: Tensor2D,
    encoding: Tensor2D,
    heads: Vec<HeadCache>,
    dims: RelationDims,
}

fn head_forward(
    appearance: &Tensor2D,
    encoding: &Tensor2D,
    head: &RelationHeadParams,
    n: usize,
) -> Result<HeadCache, RelationError> {
    let dk = head.query_proj.value.rows();
    let query = matmul(appearance, &head.query_proj.value.transpose())?;
    let key = matmul(appearance, &head.key_proj.value.transpose())?;
    let value = matmul(appearance, &head.value_proj.value.transpose())?;
    let scores = matmul(&query, &key.transpose())?;
    let scale = 1.0 / (dk as f64).sqrt();

    let gate_flat = matmul(encoding, &head.geom_proj.value.transpose())?;
    let gate_pre = Tensor2D::from_fn(n, n, |i, j| gate_flat.get(i * n + j, 0));
    let gate = gate_pre.map(|v| v.max(0.0));

    let mut exp_s = Tensor2D::zeros(n, n);
    let mut weights = Tensor2D::zeros(n, n);
    let mut row_sum = vec![0.0; n];
    let mut uniform = vec![false; n];
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in 0..n {
            max = max.max(scores.get(i, j) * scale);
        }
        let mut z = 0.0;
        for j in 0..n {
            let e = (scores.get(i, j) * scale - max).exp();
            exp_s.set(i, j, e);
            z += gate.get(i, j) * e;
        }
        row_sum[i] = z;
        if z > 0.0 {
            for j in 0..n {
                weights.set(i, j, gate.get(i, j) * exp_s.get(i, j) / z);
            }
        } else {
            uniform[i] = true;
            for j in 0..n {
                weights.set(i, j, 1.0 / n as f64);
            }
        }
    }
    Ok(HeadCache {
        query,
        key,
        value,
        exp_s,
        gate_pre,
        gate,
        weights,
        row_sum,
        uniform,
    })
}

fn check_batch(batch: &ProposalBatch, params: &RelationBlockParams) -> Result<(), RelationError> {
    params.dims.validate()?;
    if batch.appearance.cols() != params.dims.feature_dim {
        return Err(RelationError::BadConfig(format!(
            "appearance width {} does not match feature dim {}",
            batch.appearance.cols(),
            params.dims.feature_dim
        )));
    }
    if batch.boxes.len() != batch.appearance.rows() {
        return Err(RelationError::BatchMismatch {
            boxes: batch.boxes.len(),
            rows: batch.appearance.rows(),
        });
    }
    Ok(())
}

/// The N×N row-stochastic relation weights of head `m`.
pub fn relation_weights(
    batch: &ProposalBatch,
    params: &RelationBlockParams,
    m: usize,
) -> Result<Tensor2D, RelationError> {
    check_batch(batch, params)?;
    if m >= params.heads.len() {
        return Err(RelationError::BadConfig(format!(
            "head {m} out of range ({} heads)",
            params.heads.len()
        )));
    }
    let encoding = encode_pair_geometry(&batch.boxes, &params.geometry)?;
    let cache = head_forward(&batch.appearance, &encoding, &params.heads[m], batch.len())?;
    Ok(cache.weights)
}

/// Relation-augmented features: residual add of the concatenated per-head
/// relation features. Returns the output and the cache for backward.
pub fn relation_block_forward(
    batch: &ProposalBatch,
    params: &RelationBlockParams,
) -> Result<(Tensor2D, RelationCache), RelationError> {
    check_batch(batch, params)?;
    let n = batch.len();
    let encoding = encode_pair_geometry(&batch.boxes, &params.geometry)?;
    let mut head_caches = Vec::with_capacity(params.heads.len());
    let mut head_outputs = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let cache = head_forward(&batch.appearance, &encoding, head, n)?;
        head_outputs.push(matmul(&cache.weights, &cache.value)?);
        head_caches.push(cache);
    }
    let refs: Vec<&Tensor2D> = head_outputs.iter().collect();
    let output = add(&batch.appearance, &concat_cols(&refs)?)?;
    Ok((
        output,
        RelationCache {
            appearance: batch.appearance.clone(),
            encoding,
            heads: head_caches,
            dims: params.dims,
        },
    ))
}

/// Exact vector-Jacobian product of [`relation_block_forward`].
///
/// Accumulates parameter gradients into `params` and returns the gradient
/// with respect to the input appearance features. Rows that used the
/// uniform fallback are locally constant in the weights and contribute no
/// gradient through them.
pub fn relation_block_backward(
    cache: &RelationCache,
    upstream: &Tensor2D,
    params: &mut RelationBlockParams,
) -> Result<Tensor2D, RelationError> {
    let n = cache.appearance.rows();
    if upstream.shape() != cache.appearance.shape() {
        return Err(RelationError::CacheMismatch);
    }
    if params.heads.len() != cache.heads.len() || params.dims != cache.dims {
        return Err(RelationError::CacheMismatch);
    }
    let dr = cache.dims.relation_dim();
    let dk = cache.dims.key_dim;
    let scale = 1.0 / (dk as f64).sqrt();

    // Residual path.
    let mut grad_input = upstream.clone();
    let widths = vec![dr; cache.heads.len()];
    let upstream_heads = concat_cols_vjp(upstream, &widths)?;

    for ((head_cache, head_params), u_m) in cache
        .heads
        .iter()
        .zip(params.heads.iter_mut())
        .zip(upstream_heads.iter())
    {
        // head_out = W · V
        let grad_value = matmul(&head_cache.weights.transpose(), u_m)?;
        let grad_weights = matmul(u_m, &head_cache.value.transpose())?;

        // V = x · Wvᵀ
        head_params
            .value_proj
            .accumulate(&matmul(&grad_value.transpose(), &cache.appearance)?)?;
        grad_input = add(&grad_input, &matmul(&grad_value, &head_params.value_proj.value)?)?;

        // w_ij = t_ij / Z_i with t = gate ⊙ exp_s.
        let mut grad_scores = Tensor2D::zeros(n, n);
        let mut grad_gate_pre = Tensor2D::zeros(n, n);
        for i in 0..n {
            if head_cache.uniform[i] {
                continue;
            }
            let z = head_cache.row_sum[i];
            let dot: f64 = (0..n)
                .map(|j| grad_weights.get(i, j) * head_cache.weights.get(i, j))
                .sum();
            for j in 0..n {
                let dt = (grad_weights.get(i, j) - dot) / z;
                let e = head_cache.exp_s.get(i, j);
                let g = head_cache.gate.get(i, j);
                // s enters through exp(s − max); the weights are
                // shift-invariant so this is the exact gradient.
                grad_scores.set(i, j, dt * g * e);
                if head_cache.gate_pre.get(i, j) > 0.0 {
                    grad_gate_pre.set(i, j, dt * e);
                }
            }
        }

        // gate_pre (flattened N²×1) = encoding · Wgᵀ
        let grad_gate_flat =
            Tensor2D::from_fn(n * n, 1, |r, _| grad_gate_pre.get(r / n, r % n));
        head_params
            .geom_proj
            .accumulate(&matmul(&grad_gate_flat.transpose(), &cache.encoding)?)?;

        // s = (Q · Kᵀ) / √d_k
        let grad_query = crate::numerics::scale(&matmul(&grad_scores, &head_cache.key)?, scale);
        let grad_key =
            crate::numerics::scale(&matmul(&grad_scores.transpose(), &head_cache.query)?, scale);

        // Q = x · Wqᵀ, K = x · Wkᵀ
        head_params
            .query_proj
            .accumulate(&matmul(&grad_query.transpose(), &cache.appearance)?)?;
        grad_input = add(&grad_input, &matmul(&grad_query, &head_params.query_proj.value)?)?;
        head_params
            .key_proj
            .accumulate(&matmul(&grad_key.transpose(), &cache.appearance)?)?;
        grad_input = add(&grad_input, &matmul(&grad_key, &head_params.key_proj.value)?)?;
    }
    Ok(grad_input)
}

/// Sequential application of relation blocks (the final features feed
/// proposal classification downstream).
pub fn stack_core(
    batch: &ProposalBatch,
    params_list: &[RelationBlockParams],
) -> Result<Tensor2D, RelationError> {
    let mut features = batch.appearance.clone();
    for params in params_list {
        let staged = ProposalBatch::new(features, batch.boxes.clone())?;
        let (out, _) = relation_block_forward(&staged, params)?;
        features = out;
    }
    Ok(features)
}
