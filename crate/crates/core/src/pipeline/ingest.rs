//! Ground-truth and detection file ingestion.
//!
//! Ground-truth lines are `x1,y1,x2,y2,x3,y3,x4,y4,script,transcription`
//! (the transcription may itself contain commas and everything after the
//! script column is taken verbatim); a transcription of `###` marks a
//! don't-care region. Detection lines are the eight coordinates followed
//! by a score. Files are UTF-8 with LF or CRLF endings and may start with
//! a BOM.
//!
//! A path may be a directory of `<image-id>.txt` files or a single file,
//! which is treated as one image named after the file stem. Malformed
//! lines are collected with their line numbers and parsing continues;
//! degenerate (zero-area) or non-convex quads are malformed.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{AxisBox, Quad, Shape};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} is neither a file nor a directory")]
    NotFound { path: String },
}

/// One annotated ground-truth region.
#[derive(Debug, Clone)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub quad: Quad,
    pub script: Option<String>,
    pub transcription: String,
    pub ignore: bool,
}

/// One scored detection.
#[derive(Debug, Clone)]
pub struct DetectionRecord {
    pub image_id: String,
    pub shape: Shape,
    pub score: f64,
}

/// A malformed line, reported but not fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub image_id: String,
    pub line: usize,
    pub message: String,
}

/// Parse outcome: per-image records plus collected line errors.
#[derive(Debug, Clone)]
pub struct Ingested<T> {
    pub records: BTreeMap<String, Vec<T>>,
    pub errors: Vec<LineError>,
}

fn parse_coords(fields: &[&str]) -> Result<[f64; 8], String> {
    let mut coords = [0.0f64; 8];
    for (i, field) in fields.iter().take(8).enumerate() {
        coords[i] = field
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("coordinate {} is not a number: {:?}", i + 1, field))?;
    }
    Ok(coords)
}

/// Builds the shape for a detection, preferring the axis-aligned fast
/// path when the eight coordinates are exactly the four corners of an
/// axis-aligned rectangle.
fn shape_from_coords(coords: [f64; 8]) -> Result<Shape, String> {
    let xs = [coords[0], coords[2], coords[4], coords[6]];
    let ys = [coords[1], coords[3], coords[5], coords[7]];
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x_min < x_max && y_min < y_max {
        let mut corners: Vec<(u64, u64)> = (0..4)
            .map(|i| (xs[i].to_bits(), ys[i].to_bits()))
            .collect();
        corners.sort_unstable();
        let mut expect: Vec<(u64, u64)> = [
            (x_min, y_min),
            (x_min, y_max),
            (x_max, y_min),
            (x_max, y_max),
        ]
        .iter()
        .map(|(x, y)| (x.to_bits(), y.to_bits()))
        .collect();
        expect.sort_unstable();
        if corners == expect {
            return Ok(Shape::Box(
                AxisBox::new(x_min, y_min, x_max, y_max).map_err(|e| e.to_string())?,
            ));
        }
    }
    Quad::from_coords(coords)
        .map(Shape::Quad)
        .map_err(|e| e.to_string())
}

/// Parses one ground-truth line (without trailing newline).
pub fn parse_gt_line(image_id: &str, line: &str) -> Result<AnnotationRecord, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() < 10 {
        return Err(format!("expected 10 comma-separated fields, got {}", fields.len()));
    }
    let coords = parse_coords(&fields)?;
    let quad = Quad::from_coords(coords).map_err(|e| e.to_string())?;
    let script = fields[8].trim();
    let transcription = fields[9..].join(",");
    Ok(AnnotationRecord {
        image_id: image_id.to_string(),
        quad,
        script: if script.is_empty() {
            None
        } else {
            Some(script.to_string())
        },
        ignore: transcription == "###",
        transcription,
    })
}

/// Parses one detection line (without trailing newline).
pub fn parse_detection_line(image_id: &str, line: &str) -> Result<DetectionRecord, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 9 {
        return Err(format!("expected 9 comma-separated fields, got {}", fields.len()));
    }
    let coords = parse_coords(&fields)?;
    let score: f64 = fields[8]
        .trim()
        .parse()
        .map_err(|_| format!("score is not a number: {:?}", fields[8]))?;
    if !(0.0..=1.0).contains(&score) {
        return Err(format!("score {score} outside [0, 1]"));
    }
    Ok(DetectionRecord {
        image_id: image_id.to_string(),
        shape: shape_from_coords(coords)?,
        score,
    })
}

fn image_files(path: &Path) -> Result<Vec<(String, std::path::PathBuf)>, IngestError> {
    if path.is_dir() {
        let mut files = Vec::new();
        let entries = std::fs::read_dir(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        for entry in entries {
            let entry = entry.map_err(|source| IngestError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let p = entry.path();
            if p.extension().is_some_and(|e| e == "txt") {
                let id = p.file_stem().unwrap_or_default().to_string_lossy().to_string();
                files.push((id, p));
            }
        }
        files.sort();
        Ok(files)
    } else if path.is_file() {
        let id = path
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .to_string();
        Ok(vec![(id, path.to_path_buf())])
    } else {
        Err(IngestError::NotFound {
            path: path.display().to_string(),
        })
    }
}

fn ingest_with<T>(
    path: &Path,
    parse: impl Fn(&str, &str) -> Result<T, String>,
) -> Result<Ingested<T>, IngestError> {
    let mut records: BTreeMap<String, Vec<T>> = BTreeMap::new();
    let mut errors = Vec::new();
    for (image_id, file) in image_files(path)? {
        let text = std::fs::read_to_string(&file).map_err(|source| IngestError::Io {
            path: file.display().to_string(),
            source,
        })?;
        let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
        let entry = records.entry(image_id.clone()).or_default();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            match parse(&image_id, line) {
                Ok(record) => entry.push(record),
                Err(message) => errors.push(LineError {
                    image_id: image_id.clone(),
                    line: number + 1,
                    message,
                }),
            }
        }
    }
    Ok(Ingested { records, errors })
}

/// Reads ground-truth annotations from a file or directory.
pub fn ingest_gt(path: &Path) -> Result<Ingested<AnnotationRecord>, IngestError> {
    ingest_with(path, parse_gt_line)
}

/// Reads detections from a file or directory.
pub fn ingest_detections(path: &Path) -> Result<Ingested<DetectionRecord>, IngestError> {
    ingest_with(path, parse_detection_line)
}
