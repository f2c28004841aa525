//! Exact area and overlap computation for axis-aligned boxes and convex
//! quadrilaterals.
//!
//! IoU (intersection over union) and IoF (intersection over foreground,
//! i.e. over the detection proposal's own area) are the two measures the
//! sub-text taxonomy is built on. Axis-aligned pairs take a closed-form
//! min/max fast path; everything else goes through Sutherland–Hodgman
//! clipping followed by the shoelace formula. A rasterized cell-counting
//! oracle is provided for independent verification.
//!
//! All operations are pure value computations and safe to call from any
//! number of threads.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("coordinate is not finite")]
    NonFinite,
    #[error("box extents are inverted (min > max)")]
    InvertedBox,
    #[error("quadrilateral is not convex")]
    NonConvex,
    #[error("quadrilateral has zero area")]
    DegenerateQuad,
    #[error("foreground shape has zero area")]
    DegenerateForeground,
    #[error("rasterization resolution must be positive")]
    BadResolution,
}

/// A 2-D point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned box. Zero-width or zero-height boxes are permitted and
/// have area 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl AxisBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if x_min > x_max || y_min > y_max {
            return Err(GeometryError::InvertedBox);
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    /// Corner list in counter-clockwise order.
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }

    pub fn to_quad(&self) -> Result<Quad, GeometryError> {
        Quad::new(self.corners())
    }
}

/// Convex quadrilateral, vertices stored counter-clockwise.
///
/// Construction normalizes winding (a clockwise input is reversed, first
/// vertex kept first) and rejects non-convex or zero-area inputs rather
/// than repairing them; callers that want a permissive fallback can take
/// the axis-aligned bounding box explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    vertices: [Point; 4],
}

impl Quad {
    pub fn new(vertices: [Point; 4]) -> Result<Self, GeometryError> {
        if !vertices.iter().all(|p| p.x.is_finite() && p.y.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let signed = shoelace_signed(&vertices);
        if signed == 0.0 {
            return Err(GeometryError::DegenerateQuad);
        }
        let mut v = vertices;
        if signed < 0.0 {
            // Reverse winding, keeping the first vertex first.
            v = [v[0], v[3], v[2], v[1]];
        }
        // Convexity: every consecutive edge pair must turn left (or be
        // collinear) once the winding is counter-clockwise.
        let scale = v
            .iter()
            .flat_map(|p| [p.x.abs(), p.y.abs()])
            .fold(1.0_f64, f64::max);
        let tol = -1e-12 * scale * scale;
        for i in 0..4 {
            let a = v[i];
            let b = v[(i + 1) % 4];
            let c = v[(i + 2) % 4];
            let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
            if cross < tol {
                return Err(GeometryError::NonConvex);
            }
        }
        Ok(Self { vertices: v })
    }

    pub fn from_coords(coords: [f64; 8]) -> Result<Self, GeometryError> {
        Self::new([
            Point::new(coords[0], coords[1]),
            Point::new(coords[2], coords[3]),
            Point::new(coords[4], coords[5]),
            Point::new(coords[6], coords[7]),
        ])
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        shoelace_signed(&self.vertices).abs()
    }

    pub fn bounding_box(&self) -> AxisBox {
        let xs = self.vertices.map(|p| p.x);
        let ys = self.vertices.map(|p| p.y);
        AxisBox {
            x_min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            y_min: ys.iter().copied().fold(f64::INFINITY, f64::min),
            x_max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            y_max: ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Either operand of the overlap measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box(AxisBox),
    Quad(Quad),
}

impl Shape {
    pub fn area(&self) -> f64 {
        match self {
            Shape::Box(b) => b.area(),
            Shape::Quad(q) => q.area(),
        }
    }

    pub fn bounding_box(&self) -> AxisBox {
        match self {
            Shape::Box(b) => *b,
            Shape::Quad(q) => q.bounding_box(),
        }
    }

    fn polygon(&self) -> Vec<Point> {
        match self {
            Shape::Box(b) => b.corners().to_vec(),
            Shape::Quad(q) => q.vertices.to_vec(),
        }
    }
}

impl From<AxisBox> for Shape {
    fn from(b: AxisBox) -> Self {
        Shape::Box(b)
    }
}

impl From<Quad> for Shape {
    fn from(q: Quad) -> Self {
        Shape::Quad(q)
    }
}

pub fn area(shape: &Shape) -> f64 {
    shape.area()
}

fn shoelace_signed(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a.x * b.y - a.y * b.x;
    }
    0.5 * acc
}

/// Clip `subject` against the left half-plane of the directed edge a→b.
fn clip_halfplane(subject: &[Point], a: Point, b: Point) -> Vec<Point> {
    let side = |p: Point| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let mut out = Vec::with_capacity(subject.len() + 1);
    let n = subject.len();
    for i in 0..n {
        let s = subject[i];
        let e = subject[(i + 1) % n];
        let sc = side(s);
        let ec = side(e);
        let s_in = sc >= 0.0;
        let e_in = ec >= 0.0;
        match (s_in, e_in) {
            (true, true) => out.push(e),
            (true, false) | (false, true) => {
                let denom = sc - ec;
                if denom.abs() > 0.0 {
                    let t = sc / denom;
                    out.push(Point::new(s.x + (e.x - s.x) * t, s.y + (e.y - s.y) * t));
                }
                if e_in {
                    out.push(e);
                }
            }
            (false, false) => {}
        }
    }
    out
}

fn convex_clip(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let n = clip.len();
    let mut result = subject.to_vec();
    for i in 0..n {
        if result.len() < 3 {
            return Vec::new();
        }
        result = clip_halfplane(&result, clip[i], clip[(i + 1) % n]);
    }
    result
}

/// Area of the convex intersection polygon of two shapes.
///
/// Box/box pairs use the closed-form min/max overlap; mixed or quad
/// pairs are clipped with Sutherland–Hodgman and measured with the
/// shoelace formula. Operands are put in a canonical order first so the
/// result is exactly symmetric. Empty intersections return 0.
pub fn intersection_area(a: &Shape, b: &Shape) -> f64 {
    if let (Shape::Box(ba), Shape::Box(bb)) = (a, b) {
        let w = (ba.x_max.min(bb.x_max) - ba.x_min.max(bb.x_min)).max(0.0);
        let h = (ba.y_max.min(bb.y_max) - ba.y_min.max(bb.y_min)).max(0.0);
        return w * h;
    }
    let pa = a.polygon();
    let pb = b.polygon();
    let key = |poly: &[Point]| -> Vec<(u64, u64)> {
        poly.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect()
    };
    let clipped = if key(&pa) <= key(&pb) {
        convex_clip(&pa, &pb)
    } else {
        convex_clip(&pb, &pa)
    };
    if clipped.len() < 3 {
        return 0.0;
    }
    shoelace_signed(&clipped).abs()
}

/// Intersection over union, in [0, 1]. Returns 0 when the union has zero
/// area (degenerate ground truths are excluded upstream by ingestion).
pub fn iou(a: &Shape, b: &Shape) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Intersection over foreground: overlap area divided by the area of
/// `foreground` (the detection proposal). Asymmetric by definition.
pub fn iof(foreground: &Shape, reference: &Shape) -> Result<f64, GeometryError> {
    let fg = foreground.area();
    if fg <= 0.0 {
        return Err(GeometryError::DegenerateForeground);
    }
    Ok((intersection_area(foreground, reference) / fg).clamp(0.0, 1.0))
}

/// Grid-counting overlap oracle: counts cells of side `resolution` whose
/// centers lie in both shapes and multiplies by the cell area. Exact cell
/// counting (no sampling); converges to `intersection_area` as the
/// resolution shrinks.
///
/// The grid is anchored at the lower-left corner of the intersection of
/// the two bounding boxes. Per row, membership in a convex shape is an
/// x-interval, so the count is accumulated row by row.
pub fn rasterized_overlap_oracle(a: &Shape, b: &Shape, resolution: f64) -> f64 {
    if !(resolution > 0.0) {
        return 0.0;
    }
    let ba = a.bounding_box();
    let bb = b.bounding_box();
    let x0 = ba.x_min.max(bb.x_min);
    let y0 = ba.y_min.max(bb.y_min);
    let x1 = ba.x_max.min(bb.x_max);
    let y1 = ba.y_max.min(bb.y_max);
    if x0 >= x1 || y0 >= y1 {
        return 0.0;
    }
    let poly_a = a.polygon();
    let poly_b = b.polygon();
    let rows = ((y1 - y0) / resolution).ceil() as usize;
    let cols = ((x1 - x0) / resolution).ceil() as usize;
    let mut count: u64 = 0;
    for r in 0..rows {
        let y = y0 + (r as f64 + 0.5) * resolution;
        let ia = row_interval(&poly_a, y);
        let ib = row_interval(&poly_b, y);
        let (lo_a, hi_a) = match ia {
            Some(iv) => iv,
            None => continue,
        };
        let (lo_b, hi_b) = match ib {
            Some(iv) => iv,
            None => continue,
        };
        let lo = lo_a.max(lo_b);
        let hi = hi_a.min(hi_b);
        if lo > hi {
            continue;
        }
        // Cell centers x0 + (c + 0.5)·res inside [lo, hi].
        let c_lo = ((lo - x0) / resolution - 0.5).ceil().max(0.0) as usize;
        let c_hi_f = (hi - x0) / resolution - 0.5;
        if c_hi_f < c_lo as f64 {
            continue;
        }
        let c_hi = (c_hi_f.floor() as usize).min(cols.saturating_sub(1));
        if c_hi >= c_lo {
            count += (c_hi - c_lo + 1) as u64;
        }
    }
    count as f64 * resolution * resolution
}

/// The x-interval of a convex CCW polygon at height `y`, or None if the
/// horizontal line misses it. Closed boundary (points on edges count).
fn row_interval(poly: &[Point], y: f64) -> Option<(f64, f64)> {
    let n = poly.len();
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        // Inside the CCW polygon means left of each directed edge:
        // (b−a) × (p−a) ≥ 0, i.e. dx·(y−a.y) − dy·(x−a.x) ≥ 0.
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let rhs = dx * (y - a.y);
        if dy == 0.0 {
            if rhs < 0.0 {
                return None;
            }
        } else {
            let bound = a.x + rhs / dy;
            if dy > 0.0 {
                // x ≤ bound
                hi = hi.min(bound);
            } else {
                lo = lo.max(bound);
            }
        }
    }
    if lo <= hi {
        Some((lo, hi))
    } else {
        None
    }
}
