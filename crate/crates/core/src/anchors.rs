//! Prior-anchor fitting: 1-D k-means over log aspect ratios of
//! ground-truth box shapes, plus a single shared scale from the median
//! box area.
//!
//! Clustering runs in log(width/height) space, which is scale-free and
//! symmetric between wide and tall boxes. Lloyd's algorithm with
//! k-means++ seeding, at most 300 iterations, tolerance 1e-6; empty
//! clusters are reseeded at the point farthest from its assigned
//! centroid. The input is canonicalized (sorted) before seeding so the
//! fit does not depend on input order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAX_ITERS: usize = 300;
const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum AnchorError {
    #[error("need at least {k} shapes, got {got}")]
    TooFewShapes { k: usize, got: usize },
    #[error("k must be positive")]
    ZeroClusters,
    #[error("box shape must have positive width and height")]
    BadShape,
    #[error("anchor stride must be positive")]
    BadStride,
}

/// Width and height of one ground-truth box at training resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxShape {
    pub width: f64,
    pub height: f64,
}

impl BoxShape {
    pub fn new(width: f64, height: f64) -> Result<Self, AnchorError> {
        if width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite() {
            Ok(Self { width, height })
        } else {
            Err(AnchorError::BadShape)
        }
    }
}

/// Fitted prior: one shared scale and k sorted aspect ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorFit {
    pub scale: f64,
    pub aspect_ratios: Vec<f64>,
    pub inertia: f64,
}

/// Fits `k` aspect-ratio clusters and the shared scale. `stride` divides
/// the median sqrt-area (the normalization the scale is reported in;
/// default 1).
pub fn fit_anchors(
    shapes: &[BoxShape],
    k: usize,
    seed: u64,
    stride: f64,
) -> Result<AnchorFit, AnchorError> {
    if k == 0 {
        return Err(AnchorError::ZeroClusters);
    }
    if shapes.len() < k {
        return Err(AnchorError::TooFewShapes {
            k,
            got: shapes.len(),
        });
    }
    if !(stride > 0.0) {
        return Err(AnchorError::BadStride);
    }
    let mut points: Vec<f64> = shapes.iter().map(|s| (s.width / s.height).ln()).collect();
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_seed(&points, k, &mut rng);
    let (final_centroids, inertia, _history) = lloyd(&points, centroids.as_mut_slice());

    let mut ratios: Vec<f64> = final_centroids.iter().map(|c| c.exp()).collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut areas: Vec<f64> = shapes.iter().map(|s| (s.width * s.height).sqrt()).collect();
    areas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if areas.len() % 2 == 1 {
        areas[areas.len() / 2]
    } else {
        0.5 * (areas[areas.len() / 2 - 1] + areas[areas.len() / 2])
    };

    Ok(AnchorFit {
        scale: median / stride,
        aspect_ratios: ratios,
        inertia,
    })
}

/// D²-weighted k-means++ seeding over canonicalized (sorted) points.
fn kmeans_pp_seed(points: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())]);
    let mut dist2: Vec<f64> = points
        .iter()
        .map(|p| (p - centroids[0]).powi(2))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a centroid.
            points[rng.gen_range(0..points.len())]
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = points[points.len() - 1];
            for (p, d) in points.iter().zip(&dist2) {
                if target < *d {
                    chosen = *p;
                    break;
                }
                target -= d;
            }
            chosen
        };
        centroids.push(next);
        for (d, p) in dist2.iter_mut().zip(points) {
            *d = d.min((p - next).powi(2));
        }
    }
    centroids
}

/// Lloyd iterations; returns centroids, final inertia and the per-sweep
/// inertia history (non-increasing).
fn lloyd(points: &[f64], centroids: &mut [f64]) -> (Vec<f64>, f64, Vec<f64>) {
    let k = centroids.len();
    let mut assignment = vec![0usize; points.len()];
    let mut history = Vec::new();
    let mut last_inertia = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        // Assign.
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, d2) = centroids
                .iter()
                .enumerate()
                .map(|(c, m)| (c, (p - m).powi(2)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            assignment[i] = best;
            inertia += d2;
        }
        history.push(inertia);
        // Update.
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            sums[a] += p;
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c] / counts[c] as f64;
            } else {
                // Reseed at the point farthest from its assigned centroid.
                let far = points
                    .iter()
                    .enumerate()
                    .max_by(|(i, p), (j, q)| {
                        let da = (*p - centroids[assignment[*i]]).abs();
                        let db = (*q - centroids[assignment[*j]]).abs();
                        da.partial_cmp(&db).unwrap()
                    })
                    .map(|(_, p)| *p)
                    .unwrap();
                centroids[c] = far;
            }
        }
        if (last_inertia - inertia).abs() <= TOLERANCE {
            last_inertia = inertia;
            break;
        }
        last_inertia = inertia;
    }
    (centroids.to_vec(), last_inertia, history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_shapes_single_cluster() {
        let shapes = vec![BoxShape::new(2.0, 1.0).unwrap(); 10];
        let fit = fit_anchors(&shapes, 1, 0, 1.0).unwrap();
        assert!((fit.aspect_ratios[0] - 2.0).abs() < 1e-12);
        assert!((fit.scale - 2.0_f64.sqrt()).abs() < 1e-12);
        assert!(fit.inertia < 1e-12);
    }

    #[test]
    fn well_separated_clusters_recovered() {
        let mut shapes = Vec::new();
        for _ in 0..100 {
            shapes.push(BoxShape::new(0.5, 1.0).unwrap());
            shapes.push(BoxShape::new(4.0, 1.0).unwrap());
        }
        let fit = fit_anchors(&shapes, 2, 3, 1.0).unwrap();
        assert!((fit.aspect_ratios[0] - 0.5).abs() < 1e-6);
        assert!((fit.aspect_ratios[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut shapes = Vec::new();
        for i in 0..60 {
            let w = 1.0 + (i as f64 * 0.37) % 7.0;
            let h = 1.0 + (i as f64 * 0.59) % 3.0;
            shapes.push(BoxShape::new(w, h).unwrap());
        }
        let a = fit_anchors(&shapes, 5, 42, 1.0).unwrap();
        let b = fit_anchors(&shapes, 5, 42, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn permutation_invariant() {
        let mut shapes = Vec::new();
        for i in 0..80 {
            let w = 1.0 + (i as f64 * 0.61) % 9.0;
            let h = 1.0 + (i as f64 * 0.23) % 4.0;
            shapes.push(BoxShape::new(w, h).unwrap());
        }
        let a = fit_anchors(&shapes, 4, 7, 1.0).unwrap();
        shapes.reverse();
        let b = fit_anchors(&shapes, 4, 7, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inertia_is_monotone_across_sweeps() {
        let points: Vec<f64> = (0..200)
            .map(|i| ((i as f64 * 0.773) % 5.0) - 2.5)
            .collect();
        let mut sorted = points.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut centroids = kmeans_pp_seed(&sorted, 4, &mut rng);
        let (_, _, history) = lloyd(&sorted, centroids.as_mut_slice());
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "inertia rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn ratios_are_sorted_ascending() {
        let mut shapes = Vec::new();
        for i in 0..50 {
            shapes.push(BoxShape::new(1.0 + i as f64, 2.0).unwrap());
        }
        let fit = fit_anchors(&shapes, 5, 1, 1.0).unwrap();
        for w in fit.aspect_ratios.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert_eq!(fit.aspect_ratios.len(), 5);
    }

    #[test]
    fn too_few_shapes_errors() {
        let shapes = vec![BoxShape::new(1.0, 1.0).unwrap(); 3];
        assert_eq!(
            fit_anchors(&shapes, 5, 0, 1.0).unwrap_err(),
            AnchorError::TooFewShapes { k: 5, got: 3 }
        );
    }

    #[test]
    fn invalid_inputs_error() {
        assert_eq!(BoxShape::new(0.0, 1.0).unwrap_err(), AnchorError::BadShape);
        let shapes = vec![BoxShape::new(1.0, 1.0).unwrap(); 3];
        assert_eq!(fit_anchors(&shapes, 0, 0, 1.0).unwrap_err(), AnchorError::ZeroClusters);
        assert_eq!(
            fit_anchors(&shapes, 1, 0, 0.0).unwrap_err(),
            AnchorError::BadStride
        );
    }
}
