//! Rotated-rectangle and convex-quadrilateral geometry.
//!
//! Coordinates follow the raster convention: `x` grows to the right and `y`
//! grows downward, so "top" means smaller `y`. A quadrilateral whose corners
//! are listed in visually clockwise order has a positive shoelace sum in this
//! frame.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum accepted quadrilateral area in square pixels.
pub const MIN_BOX_AREA: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate box: area {area:.3e} px^2 is at or below {MIN_BOX_AREA:e}")]
    DegenerateBox { area: f64 },
    #[error("quadrilateral is not convex")]
    NonConvex,
    #[error("non-finite coordinate in box corners")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// z-component of the 2D cross product `self × other`.
    #[inline]
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    #[inline]
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    #[inline]
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Div<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn div(self, rhs: f64) -> Point2 {
        Point2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    #[inline]
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Point2::new(x, y)
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// A convex quadrilateral in canonical form.
///
/// Corners are stored clockwise (in image coordinates) starting from the
/// corner with the smallest `y`, ties broken by the smallest `x`. The only way
/// to build one is through [`canonicalize`], so every value upholds those
/// invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    corners: [Point2; 4],
    center: Point2,
    area: f64,
}

impl OrientedBox {
    #[inline]
    pub fn corners(&self) -> &[Point2; 4] {
        &self.corners
    }

    #[inline]
    pub fn center(&self) -> Point2 {
        self.center
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Axis-aligned box from center and size.
    pub fn axis_aligned(center: Point2, width: f64, height: f64) -> Result<Self, GeometryError> {
        let (hw, hh) = (width / 2.0, height / 2.0);
        canonicalize([
            Point2::new(center.x - hw, center.y - hh),
            Point2::new(center.x + hw, center.y - hh),
            Point2::new(center.x + hw, center.y + hh),
            Point2::new(center.x - hw, center.y + hh),
        ])
    }

    /// Rectangle of size `width × height` rotated by `angle_deg` about its
    /// center. Positive angles rotate visually clockwise on screen.
    pub fn from_rotated_rect(
        center: Point2,
        width: f64,
        height: f64,
        angle_deg: f64,
    ) -> Result<Self, GeometryError> {
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        let (hw, hh) = (width / 2.0, height / 2.0);
        let corner = |dx: f64, dy: f64| {
            Point2::new(center.x + dx * cos - dy * sin, center.y + dx * sin + dy * cos)
        };
        canonicalize([
            corner(-hw, -hh),
            corner(hw, -hh),
            corner(hw, hh),
            corner(-hw, hh),
        ])
    }

    /// `(min, max)` corners of the enclosing axis-aligned box.
    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = self.corners[0];
        let mut hi = self.corners[0];
        for p in &self.corners[1..] {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    /// The enclosing axis-aligned box as an [`OrientedBox`].
    pub fn enclosing_box(&self) -> OrientedBox {
        let (lo, hi) = self.bounds();
        // The enclosing box of a valid box always has at least its area.
        canonicalize([lo, Point2::new(hi.x, lo.y), hi, Point2::new(lo.x, hi.y)])
            .expect("enclosing box of a non-degenerate box is non-degenerate")
    }

    pub fn translated(&self, by: Point2) -> OrientedBox {
        OrientedBox {
            corners: self.corners.map(|p| p + by),
            center: self.center + by,
            area: self.area,
        }
    }

    /// Whether `p` lies inside or on the boundary.
    pub fn contains(&self, p: Point2) -> bool {
        (0..4).all(|i| {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            (b - a).cross(p - a) >= 0.0
        })
    }
}

/// Vectors from a box center to the midpoints of its top, right, bottom and
/// left edges.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BbaVectors {
    pub t: Point2,
    pub r: Point2,
    pub b: Point2,
    pub l: Point2,
}

impl BbaVectors {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            t: self.t * factor,
            r: self.r * factor,
            b: self.b * factor,
            l: self.l * factor,
        }
    }
}

/// Width and height of the enclosing axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbbSize {
    pub w_e: f64,
    pub h_e: f64,
}

fn shoelace(poly: &[Point2]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += poly[i].cross(poly[(i + 1) % n]);
    }
    acc / 2.0
}

/// Put four corners into canonical clockwise order.
///
/// The result does not depend on the order in which the corners are given.
pub fn canonicalize(corners: [Point2; 4]) -> Result<OrientedBox, GeometryError> {
    if !corners.iter().all(|p| p.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let mean = corners.iter().fold(Point2::ZERO, |acc, &p| acc + p) / 4.0;

    let mut ordered = corners;
    // Ascending atan2 sweeps visually clockwise when y points down.
    ordered.sort_by(|a, b| {
        let ta = (a.y - mean.y).atan2(a.x - mean.x);
        let tb = (b.y - mean.y).atan2(b.x - mean.x);
        ta.total_cmp(&tb)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });

    let area = shoelace(&ordered);
    if !(area > MIN_BOX_AREA) {
        return Err(GeometryError::DegenerateBox { area: area.abs() });
    }
    for i in 0..4 {
        let a = ordered[i];
        let b = ordered[(i + 1) % 4];
        let c = ordered[(i + 2) % 4];
        if (b - a).cross(c - b) < 0.0 {
            return Err(GeometryError::NonConvex);
        }
    }

    let start = (0..4)
        .min_by(|&i, &j| {
            ordered[i]
                .y
                .total_cmp(&ordered[j].y)
                .then(ordered[i].x.total_cmp(&ordered[j].x))
        })
        .unwrap_or(0);
    ordered.rotate_left(start);
    // Recomputed in canonical order so the stored values are bit-identical
    // for every permutation of the input.
    let center = ordered.iter().fold(Point2::ZERO, |acc, &p| acc + p) / 4.0;

    Ok(OrientedBox {
        corners: ordered,
        center,
        area: shoelace(&ordered),
    })
}

/// Edge-midpoint vectors of a canonical box.
///
/// `t` is the midpoint vector with the smallest `y`; on an exact tie the one
/// with the larger `x` wins, i.e. the first one met when sweeping clockwise
/// from straight up. `r`, `b`, `l` follow clockwise from `t`.
pub fn bba_vectors(obb: &OrientedBox) -> BbaVectors {
    let c = obb.corners();
    let center = obb.center();
    let mids: [Point2; 4] = std::array::from_fn(|i| (c[i] + c[(i + 1) % 4]) / 2.0 - center);

    let top = (0..4)
        .min_by(|&i, &j| {
            mids[i]
                .y
                .total_cmp(&mids[j].y)
                .then(mids[j].x.total_cmp(&mids[i].x))
        })
        .unwrap_or(0);

    BbaVectors {
        t: mids[top],
        r: mids[(top + 1) % 4],
        b: mids[(top + 2) % 4],
        l: mids[(top + 3) % 4],
    }
}

/// Decode corners `[tl, tr, br, bl]` from a center and its edge vectors.
pub fn corners_from_vectors(center: Point2, v: &BbaVectors) -> [Point2; 4] {
    [
        v.t + v.l + center,
        v.t + v.r + center,
        v.b + v.r + center,
        v.b + v.l + center,
    ]
}

pub fn enclosing_hbb(obb: &OrientedBox) -> HbbSize {
    let (lo, hi) = obb.bounds();
    HbbSize {
        w_e: hi.x - lo.x,
        h_e: hi.y - lo.y,
    }
}

/// Clip a convex polygon against one half plane (left of `a → b`).
fn clip_half_plane(subject: &[Point2], a: Point2, b: Point2, out: &mut Vec<Point2>) {
    out.clear();
    let edge = b - a;
    let side = |p: Point2| edge.cross(p - a);
    let n = subject.len();
    for i in 0..n {
        let cur = subject[i];
        let prev = subject[(i + n - 1) % n];
        let (sc, sp) = (side(cur), side(prev));
        if sc >= 0.0 {
            if sp < 0.0 {
                out.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
            out.push(cur);
        } else if sp >= 0.0 {
            out.push(prev + (cur - prev) * (sp / (sp - sc)));
        }
    }
}

/// Intersection polygon of two convex quadrilaterals (Sutherland–Hodgman).
pub fn intersection_polygon(a: &OrientedBox, b: &OrientedBox) -> Vec<Point2> {
    let mut poly: Vec<Point2> = a.corners().to_vec();
    let mut scratch = Vec::with_capacity(8);
    let clip = b.corners();
    for i in 0..4 {
        if poly.is_empty() {
            break;
        }
        clip_half_plane(&poly, clip[i], clip[(i + 1) % 4], &mut scratch);
        std::mem::swap(&mut poly, &mut scratch);
    }
    poly
}

pub fn intersection_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let poly = intersection_polygon(a, b);
    if poly.len() < 3 {
        return 0.0;
    }
    shoelace(&poly).max(0.0)
}

/// Whether the axis-aligned bounds of two boxes overlap with positive area.
pub fn bounds_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let (alo, ahi) = a.bounds();
    let (blo, bhi) = b.bounds();
    alo.x < bhi.x && blo.x < ahi.x && alo.y < bhi.y && blo.y < ahi.y
}

/// Intersection over union of two oriented boxes, in `[0, 1]`.
///
/// Boxes that only share an edge or a corner have IOU 0.
pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if !bounds_overlap(a, b) {
        return 0.0;
    }
    // Work relative to a's center to keep the clipping well conditioned far
    // from the origin.
    let shift = -a.center();
    let (ta, tb) = (a.translated(shift), b.translated(shift));
    let inter = intersection_area(&ta, &tb);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
