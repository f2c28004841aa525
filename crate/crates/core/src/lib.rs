//! Analysis toolkit for the fragmentation failure mode of scene-text
//! detectors ("sub-text" detections that cover only part of a text
//! instance), together with a numerically verified reference
//! implementation of the relation block and instance-wise contrastive
//! loss used to mitigate it.
//!
//! The crate is organised around eight modules:
//!
//! - [`geometry`] — areas, intersections, IoU and IoF for axis-aligned
//!   boxes and convex quadrilaterals, plus a rasterized counting oracle.
//! - [`taxonomy`] — sub-text / full-text / background classification of
//!   detection proposals against a ground-truth set.
//! - [`evalsuite`] — ICDAR-style matching and precision/recall/hmean,
//!   bad-case collection, sub-text frequency, and the upper-bound
//!   substitution analysis.
//! - [`numerics`] — a minimal dense f64 matrix kernel with hand-written
//!   vector-Jacobian products and a finite-difference gradient checker.
//! - [`relation`] — the relation block (pairwise appearance/geometry
//!   attention, per-head relation features, residual add), forward and
//!   backward.
//! - [`contrastive`] — projection head, pair mining, InfoNCE, the
//!   instance-wise contrastive loss, and overall loss assembly.
//! - [`anchors`] — 1-D k-means over log aspect ratios for prior anchor
//!   fitting.
//! - [`pipeline`] — ingestion, synthetic corpus generation, NMS,
//!   configuration, checkpoints, and report serialization.
//!
//! All numeric work is double precision and deterministic for a fixed
//! seed.

pub mod anchors;
pub mod contrastive;
pub mod evalsuite;
pub mod geometry;
pub mod gradcheck;
pub mod numerics;
pub mod pipeline;
pub mod reference;
pub mod relation;
pub mod taxonomy;
