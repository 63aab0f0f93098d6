//! Planar geometry: points, polylines with arc-length bookkeeping, the
//! Frenét (s, d) frame along a polyline, oriented boxes, and the handful of
//! segment/polygon predicates the feature extractors need.
//!
//! Sign convention: `d` is positive to the LEFT of the direction of travel.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

/// Junction points closer than this are merged when lanes are concatenated.
pub const MERGE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn from_heading(h: f64) -> Self {
        Self::new(h.cos(), h.sin())
    }

    /// Left-hand normal of a direction vector.
    pub fn left_normal(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn heading(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Default for Aabb {
    fn default() -> Self {
        Self::empty()
    }
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point::new(f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = Self::empty();
        for p in pts {
            b.include(*p);
        }
        b
    }

    pub fn include(&mut self, p: Point) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }

    /// Euclidean distance from a point to the box (0 inside).
    pub fn distance_to(&self, p: Point) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    pub fn inflate(mut self, r: f64) -> Self {
        self.min = self.min - Point::new(r, r);
        self.max = self.max + Point::new(r, r);
        self
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GeometryError {
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("polyline points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("polyline contains a non-finite coordinate")]
    NonFinite,
}

/// Closest point on segment `a`–`b` to `p`: returns (unclamped t, clamped t).
fn segment_param(p: Point, a: Point, b: Point) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 { (p - a).dot(ab) / len2 } else { 0.0 };
    (t, t.clamp(0.0, 1.0))
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (_, t) = segment_param(p, a, b);
    p.dist(a + (b - a) * t)
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point, in [0, L].
    pub s: f64,
    /// Signed lateral offset (left positive). For points beyond either end
    /// this is the offset from the extended terminal segment.
    pub d: f64,
    pub segment: usize,
    /// Parameter of the foot point on `segment`, unclamped.
    pub t: f64,
    /// Longitudinal distance past the polyline ends: negative before the
    /// start, positive after the end, 0 otherwise.
    pub overshoot: f64,
    /// Euclidean distance from the point to the polyline.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point>,
    cum_s: Vec<f64>,
    bbox: Aabb,
}

impl Polyline {
    pub fn new(points: Vec<Point>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut cum_s = Vec::with_capacity(points.len());
        cum_s.push(0.0);
        for i in 1..points.len() {
            let l = points[i].dist(points[i - 1]);
            if l <= 0.0 {
                return Err(GeometryError::DuplicatePoint(i - 1, i));
            }
            cum_s.push(cum_s[i - 1] + l);
        }
        let bbox = Aabb::from_points(&points);
        Ok(Self { points, cum_s, bbox })
    }

    /// Concatenates centerlines, merging junction points closer than
    /// [`MERGE_EPS`].
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a [Point]>) -> Result<Self, GeometryError> {
        let mut pts: Vec<Point> = Vec::new();
        for part in parts {
            for &p in part {
                if pts.last().is_some_and(|q| q.dist(p) <= MERGE_EPS) {
                    continue;
                }
                pts.push(p);
            }
        }
        Self::new(pts)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn cumulative_s(&self) -> &[f64] {
        &self.cum_s
    }

    pub fn length(&self) -> f64 {
        *self.cum_s.last().unwrap()
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    pub fn num_segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn segment_heading(&self, k: usize) -> f64 {
        (self.points[k + 1] - self.points[k]).heading()
    }

    fn segment_dir(&self, k: usize) -> Point {
        let v = self.points[k + 1] - self.points[k];
        v * (1.0 / v.norm())
    }

    pub fn start_heading(&self) -> f64 {
        self.segment_heading(0)
    }

    pub fn end_heading(&self) -> f64 {
        self.segment_heading(self.num_segments() - 1)
    }

    /// Nearest-point projection. Ties between segments go to the lower index.
    pub fn project(&self, p: Point) -> Projection {
        let mut best_k = 0;
        let mut best_t = 0.0;
        let mut best_tc = 0.0;
        let mut best_d2 = f64::INFINITY;
        for k in 0..self.num_segments() {
            let a = self.points[k];
            let b = self.points[k + 1];
            let (t, tc) = segment_param(p, a, b);
            let foot = a + (b - a) * tc;
            let d = p - foot;
            let d2 = d.dot(d);
            if d2 < best_d2 {
                best_d2 = d2;
                best_k = k;
                best_t = t;
                best_tc = tc;
            }
        }
        let last = self.num_segments() - 1;
        let dir = self.segment_dir(best_k);
        let a = self.points[best_k];
        let seg_len = self.cum_s[best_k + 1] - self.cum_s[best_k];
        let overshoot = if best_k == 0 && best_t < 0.0 {
            best_t * seg_len
        } else if best_k == last && best_t > 1.0 {
            (best_t - 1.0) * seg_len
        } else {
            0.0
        };
        let foot = a + (self.points[best_k + 1] - a) * best_tc;
        let distance = best_d2.sqrt();
        let d = if overshoot != 0.0 {
            // Perpendicular offset from the extended terminal segment.
            dir.cross(p - a)
        } else {
            let off = p - foot;
            let c = dir.cross(off);
            if c == 0.0 {
                0.0
            } else {
                c.signum() * distance
            }
        };
        Projection {
            s: self.cum_s[best_k] + seg_len * best_tc,
            d,
            segment: best_k,
            t: best_t,
            overshoot,
            distance,
        }
    }

    /// Segment containing arc length `s` (clamped to the valid range).
    fn segment_at(&self, s: f64) -> usize {
        let n = self.num_segments();
        if s <= 0.0 {
            return 0;
        }
        // Last k with cum_s[k] <= s.
        let k = self.cum_s.partition_point(|&c| c <= s);
        k.saturating_sub(1).min(n - 1)
    }

    /// Point and tangent heading at arc length `s`. Values outside [0, L]
    /// extend along the terminal tangents.
    pub fn point_at(&self, s: f64) -> (Point, f64) {
        let k = self.segment_at(s);
        let dir = self.segment_dir(k);
        let p = self.points[k] + dir * (s - self.cum_s[k]);
        (p, dir.heading())
    }

    /// Tangent heading at arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        self.segment_heading(self.segment_at(s))
    }
}

/// Curvilinear state along a reference polyline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrenetState {
    /// Arc-length progress, clamped to [0, L] by projection. Extrapolated
    /// states may carry s > L; decoding extends along the terminal tangent.
    pub s: f64,
    pub d: f64,
    /// Longitudinal residual beyond the polyline ends at encode time.
    pub overshoot: f64,
    pub valid: bool,
}

impl FrenetState {
    /// Unclamped progress, `s + overshoot`.
    pub fn progress(&self) -> f64 {
        self.s + self.overshoot
    }
}

/// Cartesian pose produced by decoding a Frenét state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: Point,
    pub heading: f64,
    pub valid: bool,
}

pub fn frenet_encode(track: &[crate::scenario::AgentState], reference: &Polyline) -> Vec<FrenetState> {
    track
        .iter()
        .map(|st| {
            if !st.valid {
                return FrenetState::default();
            }
            let pr = reference.project(st.position());
            FrenetState {
                s: pr.s,
                d: pr.d,
                overshoot: pr.overshoot,
                valid: true,
            }
        })
        .collect()
}

pub fn frenet_decode(traj: &[FrenetState], reference: &Polyline) -> Vec<Pose> {
    traj.iter()
        .map(|f| {
            if !f.valid {
                return Pose::default();
            }
            let (c, h) = reference.point_at(f.progress());
            Pose {
                position: c + Point::from_heading(h).left_normal() * f.d,
                heading: h,
                valid: true,
            }
        })
        .collect()
}

/// Intersection point of closed segments p0–p1 and q0–q1; parallel and
/// collinear segments report no intersection.
pub fn segment_intersection(p0: Point, p1: Point, q0: Point, q1: Point) -> Option<Point> {
    let r = p1 - p0;
    let s = q1 - q0;
    let denom = r.cross(s);
    // Parallel up to rounding (sin of the angle below 1e-9): no crossing.
    if denom.abs() <= 1e-9 * r.norm() * s.norm() {
        return None;
    }
    let qp = q0 - p0;
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        return Some(p0 + r * t);
    }
    // An endpoint touching the other segment up to rounding (shared vertex,
    // near-tangent meeting) still counts.
    const TOUCH: f64 = 1e-6;
    [(p0, q0, q1), (p1, q0, q1), (q0, p0, p1), (q1, p0, p1)]
        .into_iter()
        .find(|&(e, a, b)| point_segment_distance(e, a, b) <= TOUCH)
        .map(|(e, _, _)| e)
}

/// Whether closed segments touch, including collinear overlap.
pub fn segments_touch(p0: Point, p1: Point, q0: Point, q1: Point) -> bool {
    fn orient(a: Point, b: Point, c: Point) -> f64 {
        (b - a).cross(c - a)
    }
    fn on_seg(a: Point, b: Point, c: Point) -> bool {
        c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
    }
    let d1 = orient(q0, q1, p0);
    let d2 = orient(q0, q1, p1);
    let d3 = orient(p0, p1, q0);
    let d4 = orient(p0, p1, q1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_seg(q0, q1, p0))
        || (d2 == 0.0 && on_seg(q0, q1, p1))
        || (d3 == 0.0 && on_seg(p0, p1, q0))
        || (d4 == 0.0 && on_seg(p0, p1, q1))
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Distance from a point to a polygon region (0 inside).
pub fn point_polygon_distance(p: Point, poly: &[Point]) -> f64 {
    if poly.len() >= 3 && point_in_polygon(p, poly) {
        return 0.0;
    }
    let n = poly.len();
    (0..n)
        .map(|i| point_segment_distance(p, poly[i], poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// True when no two non-adjacent edges of the closed polygon touch.
pub fn polygon_is_simple(poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a0, a1) = (poly[i], poly[(i + 1) % n]);
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (b0, b1) = (poly[j], poly[(j + 1) % n]);
            if segments_touch(a0, a1, b0, b1) {
                return false;
            }
        }
    }
    true
}

pub fn polygon_centroid(poly: &[Point]) -> Point {
    let n = poly.len() as f64;
    poly.iter().fold(Point::default(), |acc, p| acc + *p) * (1.0 / n)
}

/// Oriented rectangle: `length` along the heading, `width` across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Point,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Point, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            length,
            width,
        }
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Point; 4] {
        let u = Point::from_heading(self.heading);
        let v = u.left_normal();
        let hl = u * (self.length / 2.0);
        let hw = v * (self.width / 2.0);
        let c = self.center;
        [c + hl - hw, c + hl + hw, c - hl + hw, c - hl - hw]
    }

    pub fn circumradius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }

    /// Separating-axis overlap test; touching boundaries count as overlap.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        if self.center.dist(other.center) > self.circumradius() + other.circumradius() {
            return false;
        }
        let axes = [
            Point::from_heading(self.heading),
            Point::from_heading(self.heading).left_normal(),
            Point::from_heading(other.heading),
            Point::from_heading(other.heading).left_normal(),
        ];
        let ca = self.corners();
        let cb = other.corners();
        for axis in axes {
            let (amin, amax) = project_range(&ca, axis);
            let (bmin, bmax) = project_range(&cb, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
        true
    }
}

fn project_range(pts: &[Point; 4], axis: Point) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in pts {
        let v = p.dot(axis);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn straight() -> Polyline {
        Polyline::new(vec![Point::new(0.0, 0.0), Point::new(100.0, 0.0)]).unwrap()
    }

    fn arc(radius: f64, n: usize) -> Polyline {
        let pts = (0..=n)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 * i as f64 / n as f64;
                Point::new(radius * a.cos(), radius * a.sin())
            })
            .collect();
        Polyline::new(pts).unwrap()
    }

    #[test]
    fn axis_aligned_projection() {
        let pr = straight().project(Point::new(5.0, 1.0));
        assert_abs_diff_eq!(pr.s, 5.0);
        assert_abs_diff_eq!(pr.d, 1.0);
        assert_eq!(pr.segment, 0);
        assert_eq!(pr.overshoot, 0.0);
    }

    #[test]
    fn projection_clamps_before_start() {
        let pr = straight().project(Point::new(-3.0, 0.0));
        assert_eq!(pr.s, 0.0);
        assert_abs_diff_eq!(pr.d, 0.0);
        assert_abs_diff_eq!(pr.overshoot, -3.0);
        assert_abs_diff_eq!(pr.distance, 3.0);
    }

    #[test]
    fn quarter_circle_projection_matches_closed_form() {
        // Counter-clockwise quarter arc; travel direction is CCW so the
        // outside of the curve is to the right.
        let poly = arc(10.0, 2000);
        let a = std::f64::consts::FRAC_PI_4;
        let pr = poly.project(Point::new(11.0 * a.cos(), 11.0 * a.sin()));
        // Chord sagitta of a 2000-segment arc bounds the discretization error.
        let tol = 10.0 * (1.0 - (std::f64::consts::FRAC_PI_2 / 4000.0).cos()) + 1e-9;
        assert!((pr.d + 1.0).abs() < tol + 1e-6, "d = {}", pr.d);
        // Arc length of a polygonal arc is shorter than the circle's by a
        // factor of sin(x)/x per segment.
        let half = std::f64::consts::FRAC_PI_2 / 4000.0;
        let expected = 10.0 * a * half.sin() / half;
        assert_abs_diff_eq!(pr.s, expected, epsilon = 1e-9);
        assert!((pr.s - 7.853981).abs() < 1e-5);
    }

    #[test]
    fn decode_examples() {
        let poly = straight();
        let f = |s, d| FrenetState {
            s,
            d,
            overshoot: 0.0,
            valid: true,
        };
        let out = frenet_decode(&[f(5.0, 0.0), f(5.0, 2.0), f(107.0, 0.0)], &poly);
        assert_abs_diff_eq!(out[0].position.x, 5.0);
        assert_abs_diff_eq!(out[0].position.y, 0.0);
        assert_abs_diff_eq!(out[0].heading, 0.0);
        assert_abs_diff_eq!(out[1].position.y, 2.0);
        assert_abs_diff_eq!(out[2].position.x, 107.0);
        assert_abs_diff_eq!(out[2].position.y, 0.0);
    }

    #[test]
    fn decode_extends_along_bent_terminal_tangent() {
        let poly = Polyline::new(vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(10.0, 10.0)]).unwrap();
        let (p, h) = poly.point_at(27.0);
        assert_abs_diff_eq!(p.x, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 17.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h, std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn concat_merges_junctions() {
        let a = [Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        let b = [Point::new(10.0, 0.0), Point::new(20.0, 0.0)];
        let poly = Polyline::concat([&a[..], &b[..]]).unwrap();
        assert_eq!(poly.points().len(), 3);
        assert_abs_diff_eq!(poly.length(), 20.0);
    }

    #[test]
    fn polyline_rejects_degenerate_input() {
        assert_eq!(Polyline::new(vec![Point::new(0.0, 0.0)]), Err(GeometryError::TooFewPoints(1)));
        assert_eq!(
            Polyline::new(vec![Point::new(0.0, 0.0), Point::new(0.0, 0.0)]),
            Err(GeometryError::DuplicatePoint(0, 1))
        );
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn box_overlap_examples() {
        let a = OrientedBox::new(Point::new(0.0, 0.0), 0.0, 4.0, 2.0);
        assert!(a.overlaps(&OrientedBox::new(Point::new(3.0, 0.0), 0.0, 4.0, 2.0)));
        assert!(!a.overlaps(&OrientedBox::new(Point::new(5.0, 0.0), 0.0, 4.0, 2.0)));
        // Rotated 45°: the corner sits √2 m ahead of the center along −x.
        let r = OrientedBox::new(Point::new(3.2, 0.0), PI / 4.0, 2.0, 2.0);
        assert!(a.overlaps(&r));
        let r = OrientedBox::new(Point::new(3.5, 0.0), PI / 4.0, 2.0, 2.0);
        assert!(!a.overlaps(&r));
    }

    #[test]
    fn simple_polygon_check() {
        let square = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
        assert!(polygon_is_simple(&square));
        let bowtie = [Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!(!polygon_is_simple(&bowtie));
        assert_eq!(point_polygon_distance(Point::new(0.5, 0.5), &square), 0.0);
        assert_abs_diff_eq!(point_polygon_distance(Point::new(3.0, 0.5), &square), 2.0);
    }

    fn random_polyline() -> impl Strategy<Value = Polyline> {
        prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..64).prop_filter_map("degenerate", |v| {
            Polyline::new(v.into_iter().map(|(x, y)| Point::new(x, y)).collect()).ok()
        })
    }

    proptest! {
        #[test]
        fn projection_distance_is_min_segment_distance(poly in random_polyline(), x in -80.0..80.0f64, y in -80.0..80.0f64) {
            let p = Point::new(x, y);
            let brute = poly.points().windows(2)
                .map(|w| point_segment_distance(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min);
            let pr = poly.project(p);
            prop_assert!((pr.distance - brute).abs() < 1e-9);
            prop_assert!(pr.s >= 0.0 && pr.s <= poly.length() + 1e-9);
        }

        #[test]
        fn reflection_flips_d(x in 1.0..99.0f64, y in -10.0..10.0f64) {
            let poly = straight();
            let a = poly.project(Point::new(x, y));
            let b = poly.project(Point::new(x, -y));
            prop_assert!((a.d + b.d).abs() < 1e-12);
            prop_assert!((a.s - b.s).abs() < 1e-12);
        }

        #[test]
        fn sat_is_symmetric(x in -6.0..6.0f64, y in -6.0..6.0f64, h in -3.2..3.2f64) {
            let a = OrientedBox::new(Point::new(0.0, 0.0), 0.3, 4.5, 2.0);
            let b = OrientedBox::new(Point::new(x, y), h, 4.0, 1.8);
            prop_assert_eq!(a.overlaps(&b), b.overlaps(&a));
        }
    }
}
