//! Synthetic fragmenting-detector corpus.
//!
//! Ground-truth boxes are laid out disjointly per image; each instance is
//! then "detected" either whole (with a small jitter shift) or broken
//! along its long axis, with a fragmentation probability that grows with
//! the aspect ratio. A split into k ≥ 2 pieces yields equal segments
//! trimmed by a gap fraction, so every piece is a mostly contained
//! fragment (IoF 1.0, IoU below 1/k); a split into one piece covers a
//! random partial stretch of the long axis, producing the intermediate
//! overlaps that only fail under stricter evaluation thresholds. A few
//! pure false positives per image keep the bad-case pool honest.
//!
//! Generation is a single seeded stream: a fixed seed reproduces the
//! corpus byte for byte.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::evalsuite::{Detection, GroundTruth, ImageEval};
use crate::geometry::{AxisBox, Quad, Shape};

use super::{AnnotationRecord, DetectionRecord, SynthConfig};

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub ground_truths: BTreeMap<String, Vec<AnnotationRecord>>,
    pub detections: BTreeMap<String, Vec<DetectionRecord>>,
}

impl SynthCorpus {
    /// Evaluation view, ordered by image id.
    pub fn image_evals(&self) -> Vec<ImageEval> {
        self.ground_truths
            .iter()
            .map(|(id, gts)| ImageEval {
                ground_truths: gts
                    .iter()
                    .map(|g| GroundTruth {
                        shape: Shape::Quad(g.quad),
                        ignore: g.ignore,
                    })
                    .collect(),
                detections: self
                    .detections
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

    /// Writes `gt/<image-id>.txt` and `det/<image-id>.txt` in the
    /// ingestion formats, coordinates and scores with 3 decimals.
    pub fn write_to_dir(&self, dir: &Path) -> std::io::Result<()> {
        let gt_dir = dir.join("gt");
        let det_dir = dir.join("det");
        std::fs::create_dir_all(&gt_dir)?;
        std::fs::create_dir_all(&det_dir)?;
        for (id, records) in &self.ground_truths {
            let mut out = std::fs::File::create(gt_dir.join(format!("{id}.txt")))?;
            for r in records {
                let v = r.quad.vertices();
                writeln!(
                    out,
                    "{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{},{}",
                    v[0].x,
                    v[0].y,
                    v[1].x,
                    v[1].y,
                    v[2].x,
                    v[2].y,
                    v[3].x,
                    v[3].y,
                    r.script.as_deref().unwrap_or("Latin"),
                    r.transcription
                )?;
            }
        }
        for (id, records) in &self.detections {
            let mut out = std::fs::File::create(det_dir.join(format!("{id}.txt")))?;
            for r in records {
                let b = r.shape.bounding_box();
                writeln!(
                    out,
                    "{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
                    b.x_min, b.y_min, b.x_max, b.y_min, b.x_max, b.y_max, b.x_min, b.y_max, r.score
                )?;
            }
        }
        Ok(())
    }
}

fn boxes_touch(a: &AxisBox, b: &AxisBox, margin: f64) -> bool {
    a.x_min - margin < b.x_max
        && b.x_min - margin < a.x_max
        && a.y_min - margin < b.y_max
        && b.y_min - margin < a.y_max
}

fn quad_of(b: &AxisBox) -> Quad {
    b.to_quad().expect("synth boxes are non-degenerate")
}

/// Generates the corpus for `config`. Deterministic per seed.
pub fn synth_corpus(config: &SynthConfig) -> SynthCorpus {
    config.validate().expect("synth config must be valid");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let aspect_dist = LogNormal::new(config.aspect_log_mu, config.aspect_log_sigma)
        .expect("log-normal parameters are finite");
    let mut ground_truths = BTreeMap::new();
    let mut detections = BTreeMap::new();

    for image_index in 0..config.image_count {
        let image_id = format!("img_{image_index:04}");
        let mut gts: Vec<AxisBox> = Vec::new();
        let mut gt_records = Vec::new();
        let mut det_records: Vec<DetectionRecord> = Vec::new();

        let instance_count =
            rng.gen_range(config.instances_per_image.0..=config.instances_per_image.1);
        for instance in 0..instance_count {
            let height = rng.gen_range(config.height_range.0..=config.height_range.1);
            let aspect: f64 = aspect_dist.sample(&mut rng);
            let aspect = aspect.clamp(0.25, 16.0);
            let width = (height * aspect).min(0.45 * config.canvas_width);
            let aspect = width / height;

            // Disjoint placement with a small margin; give up quietly
            // after a few rejections.
            let mut placed = None;
            for _ in 0..25 {
                let x = rng.gen_range(0.0..(config.canvas_width - width).max(1e-6));
                let y = rng.gen_range(0.0..(config.canvas_height - height).max(1e-6));
                let candidate = AxisBox::new(x, y, x + width, y + height).unwrap();
                if gts.iter().all(|g| !boxes_touch(g, &candidate, 3.0)) {
                    placed = Some(candidate);
                    break;
                }
            }
            let Some(gt_box) = placed else { continue };
            gts.push(gt_box);
            gt_records.push(AnnotationRecord {
                image_id: image_id.clone(),
                quad: quad_of(&gt_box),
                script: Some("Latin".to_string()),
                transcription: format!("txt{instance}"),
                ignore: false,
            });

            let frag_prob = (config.frag_prob_intercept
                + config.frag_prob_slope * aspect.max(1e-9).ln())
            .clamp(0.0, 1.0);
            let fragment: bool = rng.gen_bool(frag_prob);
            let pieces = if fragment {
                rng.gen_range(config.fragments_per_split.0..=config.fragments_per_split.1)
            } else {
                0
            };

            let jitter_shift = |b: &AxisBox, rng: &mut ChaCha8Rng, j: f64| -> AxisBox {
                let dx = rng.gen_range(-j..=j) * b.width();
                let dy = rng.gen_range(-j..=j) * b.height();
                AxisBox::new(b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy).unwrap()
            };

            let mut push_det = |shape: AxisBox, rng: &mut ChaCha8Rng| {
                let score = rng.gen_range(config.score_range.0..=config.score_range.1);
                det_records.push(DetectionRecord {
                    image_id: image_id.clone(),
                    shape: Shape::Box(shape),
                    score,
                });
            };

            let wide = gt_box.width() >= gt_box.height();
            let (long_lo, long_hi) = if wide {
                (gt_box.x_min, gt_box.x_max)
            } else {
                (gt_box.y_min, gt_box.y_max)
            };
            let long_len = long_hi - long_lo;
            let sub_box = |lo_frac: f64, hi_frac: f64| -> AxisBox {
                let a = long_lo + lo_frac * long_len;
                let b = long_lo + hi_frac * long_len;
                if wide {
                    AxisBox::new(a, gt_box.y_min, b, gt_box.y_max).unwrap()
                } else {
                    AxisBox::new(gt_box.x_min, a, gt_box.x_max, b).unwrap()
                }
            };

            match pieces {
                0 => {
                    let d = jitter_shift(&gt_box, &mut rng, config.jitter);
                    push_det(d, &mut rng);
                }
                1 => {
                    // Partial coverage of the long axis: overlaps that
                    // pass a loose evaluation and fail a strict one.
                    let coverage =
                        rng.gen_range(config.partial_coverage.0..=config.partial_coverage.1);
                    let offset = rng.gen_range(0.0..=(1.0 - coverage));
                    let piece = sub_box(offset, offset + coverage);
                    let d = jitter_shift(&piece, &mut rng, config.jitter);
                    push_det(d, &mut rng);
                }
                k => {
                    let trim = config.fragment_gap / 2.0;
                    for p in 0..k {
                        let lo = (p as f64 + trim) / k as f64;
                        let hi = (p as f64 + 1.0 - trim) / k as f64;
                        let piece = sub_box(lo, hi);
                        let d = jitter_shift(&piece, &mut rng, config.jitter);
                        push_det(d, &mut rng);
                    }
                }
            }
        }

        let noise_count = rng.gen_range(config.noise_per_image.0..=config.noise_per_image.1);
        for _ in 0..noise_count {
            let w = rng.gen_range(15.0..150.0);
            let h = rng.gen_range(8.0..60.0);
            let x = rng.gen_range(0.0..(config.canvas_width - w));
            let y = rng.gen_range(0.0..(config.canvas_height - h));
            let score =
                rng.gen_range(config.noise_score_range.0..=config.noise_score_range.1);
            det_records.push(DetectionRecord {
                image_id: image_id.clone(),
                shape: Shape::Box(AxisBox::new(x, y, x + w, y + h).unwrap()),
                score,
            });
        }

        ground_truths.insert(image_id.clone(), gt_records);
        detections.insert(image_id, det_records);
    }

    SynthCorpus {
        ground_truths,
        detections,
    }
}
