//! Normalized board geometry.
//!
//! All positions live in normalized board coordinates: origin top-left,
//! `x` along the long edge, both components in `[0, 1]`. Distances are plain
//! Euclidean distances in those coordinates.

use serde::{Deserialize, Serialize};

/// Decimal places kept for coordinates on the wire.
pub const COORD_DECIMALS: u32 = 6;
/// Decimal places kept for angles on the wire.
pub const ANGLE_DECIMALS: u32 = 3;

/// A point in normalized board coordinates, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, f: f64) -> Point {
        Point {
            x: self.x + (other.x - self.x) * f,
            y: self.y + (other.y - self.y) * f,
        }
    }

    pub fn offset(self, dx: f64, dy: f64) -> Point {
        Point {
            x: self.x + dx,
            y: self.y + dy,
        }
    }

    pub fn clamp_unit(self) -> Point {
        self.clamp_inset(0.0)
    }

    /// Clamps into `[margin, 1 - margin]²`.
    pub fn clamp_inset(self, margin: f64) -> Point {
        let lo = margin.min(0.5);
        let hi = 1.0 - lo;
        Point {
            x: self.x.clamp(lo, hi),
            y: self.y.clamp(lo, hi),
        }
    }

    pub fn in_unit_square(self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    pub fn quantized(self) -> Point {
        Point {
            x: quantize(self.x, COORD_DECIMALS),
            y: quantize(self.y, COORD_DECIMALS),
        }
    }
}

/// Axis-aligned rectangle `[x0, x1) × [y0, y1)` in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    /// Closed containment; board edges belong to the rectangle touching them.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    /// True when the interiors intersect. Shared edges do not count.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    pub fn is_well_formed(&self) -> bool {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        ok(self.x0) && ok(self.x1) && ok(self.y0) && ok(self.y1) && self.x0 < self.x1 && self.y0 < self.y1
    }
}

/// Rounds `v` to `decimals` places. The result is the double nearest to the
/// decimal value, so fixed-precision formatting parses back to the same bits.
pub fn quantize(v: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let q = (v * scale).round() / scale;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

/// Normalizes an angle into `[0, 360)` and quantizes it to wire precision.
pub fn quantize_angle(deg: f64) -> f64 {
    let q = quantize(deg.rem_euclid(360.0), ANGLE_DECIMALS);
    if q >= 360.0 {
        0.0
    } else {
        q
    }
}

/// Andrew's monotone chain. Returns the hull counter-clockwise (in a y-up
/// frame) without repeating the first vertex.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point, a: Point, b: Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
