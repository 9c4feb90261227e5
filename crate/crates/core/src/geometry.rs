//! Pixel-space geometry: polygons, boxes, IoU, simplification and the
//! eight-way direction relation used in scene descriptions.
//!
//! Coordinates are screen coordinates: `x` grows to the right, `y` grows
//! downward, and the image's top-left corner is `(0, 0)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raster grid side used when no image frame is bound to an IoU query.
pub const DEFAULT_GRID: u32 = 512;
/// Upper bound on either raster grid dimension.
pub const MAX_GRID: u32 = 2048;
/// Default RDP tolerance as a fraction of the closed perimeter.
pub const DEFAULT_RDP_EPSILON: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// A simple closed polygon given by its vertices in order. The closing edge
/// from the last vertex back to the first is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Builds a polygon, rejecting fewer than three vertices, non-finite
    /// coordinates and consecutive duplicates (including last == first).
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidGeometry(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "non-finite vertex ({}, {})",
                p.x, p.y
            )));
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(Error::InvalidGeometry(format!(
                    "consecutive duplicate vertex ({}, {})",
                    vertices[i].x, vertices[i].y
                )));
            }
        }
        Ok(Self { vertices })
    }

    /// Like [`Polygon::new`] but first drops consecutive duplicates and an
    /// explicit closing vertex, as produced by contour tracers.
    pub fn normalized(mut vertices: Vec<Point>) -> Result<Self> {
        vertices.dedup();
        while vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        Self::new(vertices)
    }

    pub fn from_coords(coords: &[(f64, f64)]) -> Result<Self> {
        Self::new(coords.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices).abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn bbox(&self) -> BBox {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        BBox {
            x_min: x0,
            y_min: y0,
            x_max: x1,
            y_max: y1,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }

    fn edges(&self) -> impl Iterator<Item = (&Point, &Point)> {
        let n = self.vertices.len();
        (0..n).map(move |i| (&self.vertices[i], &self.vertices[(i + 1) % n]))
    }

    /// Whether the point lies inside under the even-odd rule.
    pub fn contains(&self, p: &Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Minimum distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: &Point) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = Error;

    fn try_from(v: Vec<Point>) -> Result<Self> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

/// Axis-aligned box. `[0, 0, 0, 0]` is the "no answer" sentinel in model
/// output and can never be constructed as a `BBox`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let all_finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidGeometry(format!(
                "degenerate box [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
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
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0.0
    }

    /// Euclidean gap between the two boxes; zero when they touch or overlap.
    pub fn gap(&self, other: &BBox) -> f64 {
        let dx = (self.x_min - other.x_max)
            .max(other.x_min - self.x_max)
            .max(0.0);
        let dy = (self.y_min - other.y_max)
            .max(other.y_min - self.y_max)
            .max(0.0);
        dx.hypot(dy)
    }

    pub fn union_with(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon {
            vertices: vec![
                Point::new(self.x_min, self.y_min),
                Point::new(self.x_max, self.y_min),
                Point::new(self.x_max, self.y_max),
                Point::new(self.x_min, self.y_max),
            ],
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from([a, b, c, d]: [f64; 4]) -> Result<Self> {
        BBox::new(a, b, c, d)
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// A region that can take part in an IoU computation.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Polygon(Polygon),
    BBox(BBox),
}

impl Region {
    pub fn bbox(&self) -> BBox {
        match self {
            Region::Polygon(p) => p.bbox(),
            Region::BBox(b) => *b,
        }
    }

    fn as_polygon(&self) -> std::borrow::Cow<'_, Polygon> {
        match self {
            Region::Polygon(p) => std::borrow::Cow::Borrowed(p),
            Region::BBox(b) => std::borrow::Cow::Owned(b.to_polygon()),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Region::Polygon(p) if p.area() <= 0.0 => Err(Error::InvalidGeometry(
                "zero-area polygon in IoU".to_string(),
            )),
            _ => Ok(()),
        }
    }
}

impl From<Polygon> for Region {
    fn from(p: Polygon) -> Self {
        Region::Polygon(p)
    }
}

impl From<BBox> for Region {
    fn from(b: BBox) -> Self {
        Region::BBox(b)
    }
}

/// Image frame a raster IoU is evaluated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
}

/// Absolute shoelace area. Errors for fewer than three vertices; collinear
/// input yields 0.0 and is left for the caller to reject.
pub fn polygon_area(vertices: &[Point]) -> Result<f64> {
    if vertices.len() < 3 {
        return Err(Error::InvalidGeometry(format!(
            "polygon needs at least 3 vertices, got {}",
            vertices.len()
        )));
    }
    Ok(shoelace(vertices).abs())
}

fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (a, b) = (&v[i], &v[(i + 1) % n]);
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

/// IoU with no image bound. Box pairs are exact; anything involving a
/// polygon is rasterized on a 512x512 grid spanning both regions.
pub fn iou(a: &Region, b: &Region) -> Result<f64> {
    iou_impl(a, b, None)
}

/// IoU rasterized at the frame's resolution (capped at 2048 per side) when a
/// polygon is involved.
pub fn iou_in_frame(a: &Region, b: &Region, frame: Frame) -> Result<f64> {
    if frame.width == 0 || frame.height == 0 {
        return Err(Error::InvalidGeometry("empty image frame".to_string()));
    }
    iou_impl(a, b, Some(frame))
}

fn iou_impl(a: &Region, b: &Region, frame: Option<Frame>) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    if let (Region::BBox(x), Region::BBox(y)) = (a, b) {
        return Ok(bbox_iou(x, y));
    }
    if a == b {
        return Ok(1.0);
    }
    let (ba, bb) = (a.bbox(), b.bbox());
    if !ba.intersects(&bb) {
        return Ok(0.0);
    }
    let grid = match frame {
        Some(f) => Grid {
            x0: 0.0,
            y0: 0.0,
            cell_w: f.width as f64 / f.width.min(MAX_GRID) as f64,
            cell_h: f.height as f64 / f.height.min(MAX_GRID) as f64,
            nx: f.width.min(MAX_GRID) as i64,
            ny: f.height.min(MAX_GRID) as i64,
        },
        None => {
            let u = ba.union_with(&bb);
            Grid {
                x0: u.x_min,
                y0: u.y_min,
                cell_w: u.width() / DEFAULT_GRID as f64,
                cell_h: u.height() / DEFAULT_GRID as f64,
                nx: DEFAULT_GRID as i64,
                ny: DEFAULT_GRID as i64,
            }
        }
    };
    let (pa, pb) = (a.as_polygon(), b.as_polygon());
    let counts = raster_counts(&pa, &pb, &grid);
    let union = counts.a + counts.b - counts.both;
    if union == 0 {
        return Err(Error::InvalidGeometry(
            "regions cover no raster cell centers".to_string(),
        ));
    }
    Ok(counts.both as f64 / union as f64)
}

/// Exact IoU of two axis-aligned boxes.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, Copy)]
struct Grid {
    x0: f64,
    y0: f64,
    cell_w: f64,
    cell_h: f64,
    nx: i64,
    ny: i64,
}

#[derive(Debug, Default, PartialEq, Eq)]
struct Counts {
    a: u64,
    b: u64,
    both: u64,
}

/// Counts grid cells whose centers fall inside each polygon (even-odd rule)
/// and inside both, one scanline per grid row.
fn raster_counts(a: &Polygon, b: &Polygon, g: &Grid) -> Counts {
    let mut out = Counts::default();
    let (ba, bb) = (a.bbox(), b.bbox());
    let y_lo = ba.y_min.min(bb.y_min);
    let y_hi = ba.y_max.max(bb.y_max);
    let first = (((y_lo - g.y0) / g.cell_h) - 0.5).floor().max(0.0) as i64;
    let last = ((((y_hi - g.y0) / g.cell_h) - 0.5).ceil() as i64).min(g.ny - 1);
    let (mut ra, mut rb) = (Vec::new(), Vec::new());
    for row in first..=last {
        let y = g.y0 + (row as f64 + 0.5) * g.cell_h;
        row_cells(a, y, g, &mut ra);
        row_cells(b, y, g, &mut rb);
        out.a += ra.iter().map(|(s, e)| (e - s) as u64).sum::<u64>();
        out.b += rb.iter().map(|(s, e)| (e - s) as u64).sum::<u64>();
        out.both += overlap(&ra, &rb);
    }
    out
}

/// Half-open cell index ranges `[start, end)` of the row whose centers lie
/// inside the polygon.
fn row_cells(p: &Polygon, y: f64, g: &Grid, out: &mut Vec<(i64, i64)>) {
    out.clear();
    let mut xs: Vec<f64> = p
        .edges()
        .filter(|(a, b)| (a.y > y) != (b.y > y))
        .map(|(a, b)| a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y))
        .collect();
    xs.sort_by(|l, r| l.total_cmp(r));
    for pair in xs.chunks_exact(2) {
        let to_cell = |x: f64| {
            let idx = ((x - g.x0) / g.cell_w - 0.5).ceil();
            (idx.max(0.0) as i64).min(g.nx)
        };
        let (s, e) = (to_cell(pair[0]), to_cell(pair[1]));
        if e > s {
            out.push((s, e));
        }
    }
}

fn overlap(a: &[(i64, i64)], b: &[(i64, i64)]) -> u64 {
    let (mut i, mut j, mut total) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        let s = a[i].0.max(b[j].0);
        let e = a[i].1.min(b[j].1);
        if e > s {
            total += (e - s) as u64;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&Point::new(a.x + t * dx, a.y + t * dy))
}

/// Ramer–Douglas–Peucker simplification of a closed polygon with tolerance
/// `epsilon_fraction * perimeter`.
///
/// The ring is split at two anchors that RDP can never drop: the
/// lexicographically smallest vertex and the vertex farthest from it. Both
/// chains between them are simplified as open polylines. Because the
/// anchors survive and the tolerance can only shrink on a second pass, the
/// operation is idempotent.
pub fn simplify_rdp(p: &Polygon, epsilon_fraction: f64) -> Result<Polygon> {
    if !(epsilon_fraction > 0.0 && epsilon_fraction.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "epsilon fraction must be positive, got {epsilon_fraction}"
        )));
    }
    let v = p.vertices();
    let n = v.len();
    let tol = epsilon_fraction * p.perimeter();

    let start = (0..n)
        .min_by(|&i, &j| v[i].x.total_cmp(&v[j].x).then(v[i].y.total_cmp(&v[j].y)))
        .unwrap_or(0);
    let far = (0..n)
        .map(|k| (start + k) % n)
        .fold((start, -1.0), |best, i| {
            let d = v[i].distance(&v[start]);
            if d > best.1 {
                (i, d)
            } else {
                best
            }
        })
        .0;

    let mut keep = vec![false; n];
    keep[start] = true;
    keep[far] = true;
    let ring = |from: usize, to: usize| -> Vec<usize> {
        let mut idx = vec![from];
        let mut i = from;
        while i != to {
            i = (i + 1) % n;
            idx.push(i);
        }
        idx
    };
    for chain in [ring(start, far), ring(far, start)] {
        rdp_mark(v, &chain, tol, &mut keep);
    }

    let out: Vec<Point> = (0..n)
        .map(|k| (start + k) % n)
        .filter(|&i| keep[i])
        .map(|i| v[i])
        .collect();
    if out.len() < 3 {
        return Err(Error::DegenerateResult(out.len()));
    }
    Polygon::new(out)
}

fn rdp_mark(v: &[Point], chain: &[usize], tol: f64, keep: &mut [bool]) {
    if chain.len() < 3 {
        return;
    }
    let (a, b) = (&v[chain[0]], &v[chain[chain.len() - 1]]);
    let mut best = (0, -1.0);
    for (k, &i) in chain.iter().enumerate().take(chain.len() - 1).skip(1) {
        let d = point_segment_distance(&v[i], a, b);
        if d > best.1 {
            best = (k, d);
        }
    }
    if best.1 > tol {
        keep[chain[best.0]] = true;
        rdp_mark(v, &chain[..=best.0], tol, keep);
        rdp_mark(v, &chain[best.0..], tol, keep);
    }
}

/// Area centroid of the polygon.
pub fn centroid(p: &Polygon) -> Result<Point> {
    let v = p.vertices();
    let n = v.len();
    let a = shoelace(v);
    if a.abs() < f64::EPSILON {
        return Err(Error::InvalidGeometry(
            "centroid of a zero-area polygon".to_string(),
        ));
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let (p0, p1) = (&v[i], &v[(i + 1) % n]);
        let cross = p0.x * p1.y - p1.x * p0.y;
        cx += (p0.x + p1.x) * cross;
        cy += (p0.y + p1.y) * cross;
    }
    Ok(Point::new(cx / (6.0 * a), cy / (6.0 * a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    RightOf,
    BottomRightOf,
    Below,
    BottomLeftOf,
    LeftOf,
    TopLeftOf,
    Above,
    TopRightOf,
}

impl Direction {
    /// Sectors in order of increasing screen angle, starting at +x.
    const SECTORS: [Direction; 8] = [
        Direction::RightOf,
        Direction::BottomRightOf,
        Direction::Below,
        Direction::BottomLeftOf,
        Direction::LeftOf,
        Direction::TopLeftOf,
        Direction::Above,
        Direction::TopRightOf,
    ];

    pub fn phrase(&self) -> &'static str {
        match self {
            Direction::LeftOf => "to the left of",
            Direction::RightOf => "to the right of",
            Direction::Above => "above",
            Direction::Below => "below",
            Direction::TopLeftOf => "at the top-left of",
            Direction::TopRightOf => "at the top-right of",
            Direction::BottomLeftOf => "at the bottom-left of",
            Direction::BottomRightOf => "at the bottom-right of",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Direction::LeftOf => "left-of",
            Direction::RightOf => "right-of",
            Direction::Above => "above",
            Direction::Below => "below",
            Direction::TopLeftOf => "top-left-of",
            Direction::TopRightOf => "top-right-of",
            Direction::BottomLeftOf => "bottom-left-of",
            Direction::BottomRightOf => "bottom-right-of",
        }
    }

    /// Bins a screen-space angle in degrees (0 = +x, 90 = down). Angles on a
    /// sector boundary go to the diagonal neighbour.
    pub fn from_angle(degrees: f64) -> Direction {
        let a = degrees.rem_euclid(360.0);
        let half_steps = a / 22.5;
        let nearest = half_steps.round();
        let sector = if (half_steps - nearest).abs() < 1e-9 && (nearest as i64) % 2 == 1 {
            // Boundary between sectors k and k+1: exactly one of them is odd (diagonal).
            let lower = (nearest as i64 - 1) / 2;
            if lower % 2 == 1 {
                lower
            } else {
                lower + 1
            }
        } else {
            ((a + 22.5) / 45.0).floor() as i64
        };
        Self::SECTORS[sector.rem_euclid(8) as usize]
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Position of `to` as seen from `from`, plus the Euclidean distance.
pub fn direction_and_distance(from: &Point, to: &Point) -> Result<(Direction, f64)> {
    let (dx, dy) = (to.x - from.x, to.y - from.y);
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::UndefinedDirection);
    }
    let angle = dy.atan2(dx).to_degrees();
    Ok((Direction::from_angle(angle), dx.hypot(dy)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn poly(c: &[(f64, f64)]) -> Polygon {
        Polygon::from_coords(c).unwrap()
    }

    fn unit_square() -> Polygon {
        poly(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    }

    #[test]
    fn area_examples() {
        assert_eq!(unit_square().area(), 1.0);
        assert_eq!(poly(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)]).area(), 6.0);
        assert_eq!(poly(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).area(), 0.0);
        let pts = [Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
        assert!(matches!(polygon_area(&pts), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn polygon_rejects_duplicates() {
        assert!(Polygon::from_coords(&[(0.0, 0.0), (0.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(Polygon::from_coords(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]).is_err());
        let p = Polygon::normalized(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn bbox_iou_examples() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = BBox::new(2.0, 2.0, 3.0, 3.0).unwrap();
        assert_eq!(iou(&a.into(), &a.into()).unwrap(), 1.0);
        assert_eq!(iou(&a.into(), &b.into()).unwrap(), 0.0);
        let c = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let d = BBox::new(1.0, 1.0, 3.0, 3.0).unwrap();
        assert_abs_diff_eq!(
            iou(&c.into(), &d.into()).unwrap(),
            1.0 / 7.0,
            epsilon = 1e-12
        );
        assert!(BBox::new(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn polygon_iou_rasterized() {
        let sq = Region::Polygon(poly(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]));
        let shifted = Region::Polygon(poly(&[(1.0, 1.0), (3.0, 1.0), (3.0, 3.0), (1.0, 3.0)]));
        assert_eq!(iou(&sq, &sq.clone()).unwrap(), 1.0);
        let v = iou(&sq, &shifted).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 7.0, epsilon = 0.01);
        assert_eq!(v, iou(&shifted, &sq).unwrap());
    }

    #[test]
    fn iou_in_frame_matches_box_formula() {
        let frame = Frame {
            width: 640,
            height: 480,
        };
        let a = poly(&[(10.0, 10.0), (200.0, 10.0), (200.0, 150.0), (10.0, 150.0)]);
        let b = BBox::new(100.0, 50.0, 300.0, 300.0).unwrap();
        let exact = bbox_iou(&a.bbox(), &b);
        let r = iou_in_frame(&a.into(), &b.into(), frame).unwrap();
        assert_abs_diff_eq!(r, exact, epsilon = 0.005);
    }

    #[test]
    fn non_convex_iou() {
        // L-shape covering 3 of 4 unit cells of a 2x2 square.
        let l = poly(&[
            (0.0, 0.0),
            (2.0, 0.0),
            (2.0, 1.0),
            (1.0, 1.0),
            (1.0, 2.0),
            (0.0, 2.0),
        ]);
        let sq = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let r = iou(&l.into(), &sq.into()).unwrap();
        assert_abs_diff_eq!(r, 0.75, epsilon = 0.01);
    }

    #[test]
    fn degenerate_polygon_in_iou() {
        let flat = poly(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        let sq = unit_square();
        assert!(iou(&flat.into(), &sq.into()).is_err());
    }

    #[test]
    fn rdp_removes_collinear_midpoints() {
        let p = poly(&[
            (0.0, 0.0),
            (1.0, 0.0),
            (2.0, 0.0),
            (2.0, 1.0),
            (2.0, 2.0),
            (1.0, 2.0),
            (0.0, 2.0),
            (0.0, 1.0),
        ]);
        let s = simplify_rdp(&p, DEFAULT_RDP_EPSILON).unwrap();
        assert_eq!(
            s.vertices(),
            &[
                Point::new(0.0, 0.0),
                Point::new(2.0, 0.0),
                Point::new(2.0, 2.0),
                Point::new(0.0, 2.0)
            ]
        );
    }

    #[test]
    fn rdp_triangle_fixed_point() {
        let t = poly(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)]);
        assert_eq!(simplify_rdp(&t, DEFAULT_RDP_EPSILON).unwrap(), t);
    }

    #[test]
    fn rdp_collapse_is_an_error() {
        let sliver = poly(&[(0.0, 0.0), (10.0, 0.0), (20.0, 0.01), (10.0, 0.02)]);
        assert!(matches!(
            simplify_rdp(&sliver, 0.02),
            Err(Error::DegenerateResult(_))
        ));
        assert!(simplify_rdp(&sliver, 0.0).is_err());
    }

    #[test]
    fn centroid_examples() {
        let c = centroid(&unit_square()).unwrap();
        assert_abs_diff_eq!(c.x, 0.5);
        assert_abs_diff_eq!(c.y, 0.5);
        let t = centroid(&poly(&[(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)])).unwrap();
        assert_abs_diff_eq!(t.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.y, 1.0, epsilon = 1e-12);
        let m = centroid(&unit_square().translated(10.0, 10.0)).unwrap();
        assert_abs_diff_eq!(m.x, 10.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.y, 10.5, epsilon = 1e-12);
        assert!(centroid(&poly(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])).is_err());
    }

    #[test]
    fn direction_examples() {
        let o = Point::new(0.0, 0.0);
        let (d, dist) = direction_and_distance(&o, &Point::new(10.0, 0.0)).unwrap();
        assert_eq!((d, dist), (Direction::RightOf, 10.0));
        let (d, dist) = direction_and_distance(&o, &Point::new(0.0, 10.0)).unwrap();
        assert_eq!((d, dist), (Direction::Below, 10.0));
        let (d, dist) = direction_and_distance(&o, &Point::new(10.0, 10.0)).unwrap();
        assert_eq!(d, Direction::BottomRightOf);
        assert_abs_diff_eq!(dist, 14.142, epsilon = 1e-3);
        assert!(matches!(
            direction_and_distance(&o, &o),
            Err(Error::UndefinedDirection)
        ));
    }

    #[test]
    fn direction_boundaries_go_diagonal() {
        for k in 0..8 {
            let boundary = 22.5 + 45.0 * k as f64;
            let d = Direction::from_angle(boundary);
            let idx = Direction::SECTORS.iter().position(|s| *s == d).unwrap();
            assert_eq!(idx % 2, 1, "boundary {boundary} -> {d}");
        }
        assert_eq!(Direction::from_angle(-22.5), Direction::TopRightOf);
        assert_eq!(Direction::from_angle(-90.0), Direction::Above);
        assert_eq!(Direction::from_angle(180.0), Direction::LeftOf);
        assert_eq!(Direction::from_angle(22.4), Direction::RightOf);
    }

    #[test]
    fn serde_shapes() {
        let b = BBox::new(1.0, 2.0, 3.0, 4.0).unwrap();
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1.0,2.0,3.0,4.0]");
        assert!(serde_json::from_str::<BBox>("[0,0,0,0]").is_err());
        let p: Polygon = serde_json::from_str("[[0,0],[1,0],[1,1]]").unwrap();
        assert_eq!(p.len(), 3);
        assert!(serde_json::from_str::<Polygon>("[[0,0],[1,0]]").is_err());
        assert_eq!(
            serde_json::to_string(&Direction::BottomLeftOf).unwrap(),
            "\"bottom-left-of\""
        );
    }
}
