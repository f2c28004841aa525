//! Declarative configuration with full defaulting.
//!
//! Every tunable constant surfaces as a named key with its published
//! default: β = 0.7 and the 0.1/0.5 taxonomy interval, temperature τ =
//! 0.2, loss weight λ = 0.01, 16 relation features of 64 dimensions on
//! 1024-d features, and box NMS at IoU 0.5. Files may be TOML or JSON;
//! any subset of keys can be given.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::taxonomy::TaxonomyConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub taxonomy: TaxonomyConfig,
    pub eval: EvalConfig,
    pub contrastive: ContrastiveConfig,
    pub relation: RelationConfig,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub nms_iou: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![0.5, 0.6, 0.7, 0.8],
            nms_iou: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub lambda: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 0.2,
            lambda: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelationConfig {
    pub feature_dim: usize,
    pub num_relation_features: usize,
    pub key_dim: usize,
    pub geometry_dim: usize,
    pub stacked_blocks: usize,
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self {
            feature_dim: 1024,
            num_relation_features: 16,
            key_dim: 64,
            geometry_dim: 64,
            stacked_blocks: 2,
        }
    }
}

/// Generator of the synthetic fragmenting-detector corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub image_count: usize,
    pub canvas_width: f64,
    pub canvas_height: f64,
    pub instances_per_image: (usize, usize),
    pub height_range: (f64, f64),
    /// Aspect ratio w/h is log-normal with these parameters.
    pub aspect_log_mu: f64,
    pub aspect_log_sigma: f64,
    /// Fragmentation probability is
    /// clamp(intercept + slope·ln(aspect), 0, 1): wider instances break
    /// more often.
    pub frag_prob_intercept: f64,
    pub frag_prob_slope: f64,
    /// Fragments per split; a value of 1 produces a single partial-
    /// coverage detection.
    pub fragments_per_split: (usize, usize),
    /// Long-axis coverage of a single partial detection.
    pub partial_coverage: (f64, f64),
    /// Fraction of each fragment segment trimmed away, so fragments never
    /// tile the instance exactly.
    pub fragment_gap: f64,
    /// Detections are shifted by up to this fraction of their own size.
    pub jitter: f64,
    pub score_range: (f64, f64),
    /// Pure false positives per image.
    pub noise_per_image: (usize, usize),
    pub noise_score_range: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image_count: 200,
            canvas_width: 1280.0,
            canvas_height: 720.0,
            instances_per_image: (3, 7),
            height_range: (20.0, 60.0),
            aspect_log_mu: 1.0,
            aspect_log_sigma: 0.6,
            frag_prob_intercept: 0.15,
            frag_prob_slope: 0.35,
            fragments_per_split: (1, 3),
            partial_coverage: (0.55, 0.9),
            fragment_gap: 0.1,
            jitter: 0.03,
            score_range: (0.55, 0.98),
            noise_per_image: (0, 2),
            noise_score_range: (0.05, 0.45),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        let range_ok = |r: (f64, f64)| r.0 <= r.1 && r.0.is_finite() && r.1.is_finite();
        if self.image_count == 0 {
            return Err("image_count must be positive".into());
        }
        if self.instances_per_image.0 > self.instances_per_image.1
            || self.fragments_per_split.0 > self.fragments_per_split.1
            || self.fragments_per_split.0 == 0
            || self.noise_per_image.0 > self.noise_per_image.1
        {
            return Err("count ranges must be non-empty".into());
        }
        if !range_ok(self.height_range)
            || !range_ok(self.partial_coverage)
            || !range_ok(self.score_range)
            || !range_ok(self.noise_score_range)
        {
            return Err("value ranges must be non-empty and finite".into());
        }
        if self.height_range.0 <= 0.0 {
            return Err("heights must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.fragment_gap) || !(0.0..=1.0).contains(&self.jitter) {
            return Err("fragment_gap and jitter must lie in [0, 1]".into());
        }
        if self.partial_coverage.0 <= 0.0 || self.partial_coverage.1 > 1.0 {
            return Err("partial_coverage must lie in (0, 1]".into());
        }
        for r in [self.score_range, self.noise_score_range] {
            if r.0 < 0.0 || r.1 > 1.0 {
                return Err("scores must lie in [0, 1]".into());
            }
        }
        if self.canvas_width <= 0.0 || self.canvas_height <= 0.0 {
            return Err("canvas must be positive".into());
        }
        Ok(())
    }
}

impl ToolConfig {
    /// Loads TOML (default) or JSON (by `.json` extension).
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let cfg: ToolConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| format!("invalid JSON config: {e}"))?
        } else {
            toml::from_str(&text).map_err(|e| format!("invalid TOML config: {e}"))?
        };
        cfg.taxonomy
            .validate()
            .map_err(|e| format!("invalid taxonomy config: {e}"))?;
        cfg.synth.validate()?;
        Ok(cfg)
    }
}
