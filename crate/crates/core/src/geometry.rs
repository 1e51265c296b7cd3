//! Planar polygon primitives: shoelace area, Sutherland–Hodgman clipping
//! against rectangles and convex polygons, and ear-clipping triangulation.
//!
//! Coordinates are planar (pre-projected); nothing here knows about
//! geodesy. Rings are stored open: the closing vertex is implied.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("invalid cell rectangle: width and height must be positive")]
    InvalidCell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Closed-interval overlap test; touching rectangles intersect.
    pub fn intersects(&self, other: &Rect) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            min_x: self.min_x.min(other.min_x),
            min_y: self.min_y.min(other.min_y),
            max_x: self.max_x.max(other.max_x),
            max_y: self.max_y.max(other.max_y),
        }
    }

    fn of_points(points: &[Point]) -> Rect {
        let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            r.min_x = r.min_x.min(p.x);
            r.min_y = r.min_y.min(p.y);
            r.max_x = r.max_x.max(p.x);
            r.max_y = r.max_y.max(p.y);
        }
        r
    }
}

/// Signed shoelace area of an open vertex list; counter-clockwise is positive.
///
/// Vertices are taken relative to the first one, which keeps the cross
/// products small when coordinates carry a large offset.
pub fn signed_area(points: &[Point]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let o = points[0];
    let mut twice = 0.0;
    for i in 1..points.len() - 1 {
        let a = points[i];
        let b = points[i + 1];
        twice += (a.x - o.x) * (b.y - o.y) - (b.x - o.x) * (a.y - o.y);
    }
    twice * 0.5
}

/// A simple closed ring, stored without the repeated closing vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring {
    points: Vec<Point>,
}

impl Ring {
    /// Normalises the vertex list (drops the closing duplicate and any
    /// consecutive repeats) and requires at least three distinct vertices.
    pub fn new(points: Vec<Point>) -> Result<Ring, GeometryError> {
        let mut out: Vec<Point> = Vec::with_capacity(points.len());
        for p in points {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(GeometryError::Degenerate("non-finite vertex".into()));
            }
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
        while out.len() > 1 && out.first() == out.last() {
            out.pop();
        }
        if out.len() < 3 {
            return Err(GeometryError::Degenerate(format!(
                "ring has {} distinct vertices, need at least 3",
                out.len()
            )));
        }
        Ok(Ring { points: out })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.points)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bbox(&self) -> Rect {
        Rect::of_points(&self.points)
    }

    /// Even-odd point-in-ring test.
    pub fn contains(&self, p: Point) -> bool {
        let pts = &self.points;
        let mut inside = false;
        let mut j = pts.len() - 1;
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    fn map(&self, f: impl Fn(Point) -> Point) -> Ring {
        Ring {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// Exterior ring plus optional holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Ring,
    holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(exterior: Ring, holes: Vec<Ring>) -> Result<Polygon, GeometryError> {
        if exterior.area() <= 0.0 {
            return Err(GeometryError::Degenerate("exterior ring has zero area".into()));
        }
        Ok(Polygon { exterior, holes })
    }

    /// Builds a polygon from raw rings: the first is the exterior, the rest holes.
    pub fn from_rings(rings: Vec<Vec<Point>>) -> Result<Polygon, GeometryError> {
        let mut it = rings.into_iter();
        let exterior = Ring::new(
            it.next()
                .ok_or_else(|| GeometryError::Degenerate("polygon has no rings".into()))?,
        )?;
        let holes = it.map(Ring::new).collect::<Result<Vec<_>, _>>()?;
        Polygon::new(exterior, holes)
    }

    pub fn rect(r: &Rect) -> Polygon {
        let ring = Ring::new(vec![
            Point::new(r.min_x, r.min_y),
            Point::new(r.max_x, r.min_y),
            Point::new(r.max_x, r.max_y),
            Point::new(r.min_x, r.max_y),
        ])
        .expect("rectangle ring");
        Polygon {
            exterior: ring,
            holes: Vec::new(),
        }
    }

    pub fn exterior(&self) -> &Ring {
        &self.exterior
    }

    pub fn holes(&self) -> &[Ring] {
        &self.holes
    }

    /// Rings paired with their contribution sign: +1 exterior, -1 holes.
    pub fn signed_rings(&self) -> impl Iterator<Item = (f64, &Ring)> {
        std::iter::once((1.0, &self.exterior)).chain(self.holes.iter().map(|h| (-1.0, h)))
    }

    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(Ring::area).sum();
        (self.exterior.area() - holes).max(0.0)
    }

    pub fn bbox(&self) -> Rect {
        self.exterior.bbox()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.exterior.contains(p) && !self.holes.iter().any(|h| h.contains(p))
    }

    /// Applies an affine map `(x, y) -> ((x - ox) / sx, (y - oy) / sy)`.
    pub fn to_local(&self, ox: f64, oy: f64, sx: f64, sy: f64) -> Polygon {
        let f = |p: Point| Point::new((p.x - ox) / sx, (p.y - oy) / sy);
        Polygon {
            exterior: self.exterior.map(f),
            holes: self.holes.iter().map(|h| h.map(f)).collect(),
        }
    }
}

/// Area of a polygon given as raw rings (exterior first, then holes).
pub fn polygon_area(rings: &[Vec<Point>]) -> Result<f64, GeometryError> {
    Ok(Polygon::from_rings(rings.to_vec())?.area())
}

/// Sutherland–Hodgman clip of `subject` by one half-plane.
fn clip_half_plane(
    subject: &[Point],
    out: &mut Vec<Point>,
    inside: impl Fn(Point) -> bool,
    cross: impl Fn(Point, Point) -> Point,
) {
    out.clear();
    let Some(&last) = subject.last() else {
        return;
    };
    let mut prev = last;
    let mut prev_in = inside(prev);
    for &cur in subject {
        let cur_in = inside(cur);
        if cur_in {
            if !prev_in {
                out.push(cross(prev, cur));
            }
            out.push(cur);
        } else if prev_in {
            out.push(cross(prev, cur));
        }
        prev = cur;
        prev_in = cur_in;
    }
}

fn at_x(a: Point, b: Point, x: f64) -> Point {
    let t = (x - a.x) / (b.x - a.x);
    Point::new(x, a.y + t * (b.y - a.y))
}

fn at_y(a: Point, b: Point, y: f64) -> Point {
    let t = (y - a.y) / (b.y - a.y);
    Point::new(a.x + t * (b.x - a.x), y)
}

/// Reusable buffers for repeated clipping.
#[derive(Default)]
pub struct ClipScratch {
    a: Vec<Point>,
    b: Vec<Point>,
}

/// Area of `ring ∩ rect` (unsigned).
pub fn ring_rect_overlap(ring: &Ring, rect: &Rect, scratch: &mut ClipScratch) -> f64 {
    let rb = ring.bbox();
    if !rb.intersects(rect) {
        return 0.0;
    }
    // Fully inside: no clipping needed.
    if rb.min_x >= rect.min_x && rb.max_x <= rect.max_x && rb.min_y >= rect.min_y && rb.max_y <= rect.max_y {
        return ring.area();
    }
    let ClipScratch { a, b } = scratch;
    clip_half_plane(ring.points(), a, |p| p.x >= rect.min_x, |p, q| at_x(p, q, rect.min_x));
    clip_half_plane(a, b, |p| p.x <= rect.max_x, |p, q| at_x(p, q, rect.max_x));
    clip_half_plane(b, a, |p| p.y >= rect.min_y, |p, q| at_y(p, q, rect.min_y));
    clip_half_plane(a, b, |p| p.y <= rect.max_y, |p, q| at_y(p, q, rect.max_y));
    signed_area(b).abs()
}

/// Area of `polygon ∩ rect`: clipped exterior minus clipped holes.
pub fn polygon_rect_overlap(polygon: &Polygon, rect: &Rect, scratch: &mut ClipScratch) -> f64 {
    let mut area = 0.0;
    for (sign, ring) in polygon.signed_rings() {
        area += sign * ring_rect_overlap(ring, rect, scratch);
    }
    area.max(0.0)
}

/// Fraction of `cell` covered by `polygon`, in `[0, 1]`.
pub fn cell_coverage(polygon: &Polygon, cell: &Rect) -> Result<f64, GeometryError> {
    let cell_area = cell.area();
    if !(cell.width() > 0.0 && cell.height() > 0.0) {
        return Err(GeometryError::InvalidCell);
    }
    let overlap = polygon_rect_overlap(polygon, cell, &mut ClipScratch::default());
    Ok((overlap / cell_area).clamp(0.0, 1.0))
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle(pub [Point; 3]);

impl Triangle {
    pub fn bbox(&self) -> Rect {
        Rect::of_points(&self.0)
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.0).abs()
    }
}

/// Area of `ring ∩ triangle`, clipping the (possibly concave) ring by the
/// three edges of the convex triangle.
pub fn ring_triangle_overlap(ring: &Ring, tri: &Triangle, scratch: &mut ClipScratch) -> f64 {
    if !ring.bbox().intersects(&tri.bbox()) {
        return 0.0;
    }
    let ClipScratch { a, b } = scratch;
    a.clear();
    a.extend_from_slice(ring.points());
    for k in 0..3 {
        let (p0, p1) = (tri.0[k], tri.0[(k + 1) % 3]);
        let dx = p1.x - p0.x;
        let dy = p1.y - p0.y;
        let side = |p: Point| dx * (p.y - p0.y) - dy * (p.x - p0.x);
        clip_half_plane(
            a,
            b,
            |p| side(p) >= 0.0,
            |p, q| {
                let sp = side(p);
                let sq = side(q);
                let t = sp / (sp - sq);
                Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
            },
        );
        std::mem::swap(a, b);
        if a.is_empty() {
            return 0.0;
        }
    }
    signed_area(a).abs()
}

/// Ear-clipping triangulation of a simple ring. The output triangles are
/// counter-clockwise and tile the ring's interior.
pub fn triangulate(ring: &Ring) -> Vec<Triangle> {
    let mut pts: Vec<Point> = ring.points().to_vec();
    if signed_area(&pts) < 0.0 {
        pts.reverse();
    }
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut tris = Vec::with_capacity(pts.len().saturating_sub(2));

    let mut guard = 0usize;
    while idx.len() > 3 {
        let n = idx.len();
        let mut clipped = false;
        for i in 0..n {
            let (ip, ic, inx) = (idx[(i + n - 1) % n], idx[i], idx[(i + 1) % n]);
            let (a, b, c) = (pts[ip], pts[ic], pts[inx]);
            let turn = cross(a, b, c);
            if turn == 0.0 {
                // collinear vertex contributes nothing
                idx.remove(i);
                clipped = true;
                break;
            }
            if turn < 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                if j == ip || j == ic || j == inx {
                    return false;
                }
                let p = pts[j];
                if p == a || p == b || p == c {
                    return false;
                }
                cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
            });
            if !blocked {
                tris.push(Triangle([a, b, c]));
                idx.remove(i);
                clipped = true;
                break;
            }
        }
        if !clipped {
            // Numerically stuck (self-touching input); force progress on the
            // most convex vertex so the loop terminates.
            let i = (0..n)
                .max_by(|&i, &j| {
                    let t = |k: usize| cross(pts[idx[(k + n - 1) % n]], pts[idx[k]], pts[idx[(k + 1) % n]]);
                    t(i).total_cmp(&t(j))
                })
                .expect("non-empty");
            let (a, b, c) = (pts[idx[(i + n - 1) % n]], pts[idx[i]], pts[idx[(i + 1) % n]]);
            if cross(a, b, c) > 0.0 {
                tris.push(Triangle([a, b, c]));
            }
            idx.remove(i);
        }
        guard += 1;
        if guard > 4 * pts.len() * pts.len() + 16 {
            break;
        }
    }
    if idx.len() == 3 {
        let (a, b, c) = (pts[idx[0]], pts[idx[1]], pts[idx[2]]);
        if cross(a, b, c) > 0.0 {
            tris.push(Triangle([a, b, c]));
        }
    }
    tris
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(pts: &[(f64, f64)]) -> Vec<Point> {
        pts.iter().map(|&p| p.into()).collect()
    }

    #[test]
    fn unit_square_area() {
        let a = polygon_area(&[ring(&[(0., 0.), (1., 0.), (1., 1.), (0., 1.)])]).unwrap();
        assert_eq!(a, 1.0);
    }

    #[test]
    fn triangle_area() {
        let a = polygon_area(&[ring(&[(0., 0.), (1., 0.), (0., 1.)])]).unwrap();
        assert_eq!(a, 0.5);
    }

    #[test]
    fn collinear_is_degenerate() {
        let err = polygon_area(&[ring(&[(0., 0.), (1., 1.), (2., 2.)])]).unwrap_err();
        assert!(matches!(err, GeometryError::Degenerate(_)));
    }

    #[test]
    fn too_few_vertices_is_degenerate() {
        assert!(polygon_area(&[ring(&[(0., 0.), (1., 1.), (0., 0.)])]).is_err());
    }

    #[test]
    fn closing_vertex_is_normalised() {
        let r = Ring::new(ring(&[(0., 0.), (1., 0.), (1., 1.), (0., 0.)])).unwrap();
        assert_eq!(r.points().len(), 3);
    }

    #[test]
    fn hole_is_subtracted() {
        let a = polygon_area(&[
            ring(&[(0., 0.), (4., 0.), (4., 4.), (0., 4.)]),
            ring(&[(1., 1.), (1., 2.), (2., 2.), (2., 1.)]),
        ])
        .unwrap();
        assert_eq!(a, 15.0);
    }

    #[test]
    fn clockwise_ring_has_positive_area() {
        let a = polygon_area(&[ring(&[(0., 0.), (0., 1.), (1., 1.), (1., 0.)])]).unwrap();
        assert_eq!(a, 1.0);
    }

    #[test]
    fn coverage_identical_disjoint_half() {
        let cell = Rect::new(0., 0., 1., 1.);
        let same = Polygon::rect(&cell);
        assert_eq!(cell_coverage(&same, &cell).unwrap(), 1.0);

        let far = Polygon::rect(&Rect::new(5., 5., 6., 6.));
        assert_eq!(cell_coverage(&far, &cell).unwrap(), 0.0);

        let left = Polygon::rect(&Rect::new(-3., -1., 0.5, 2.));
        assert_eq!(cell_coverage(&left, &cell).unwrap(), 0.5);
    }

    #[test]
    fn coverage_rejects_empty_cell() {
        let p = Polygon::rect(&Rect::new(0., 0., 1., 1.));
        assert_eq!(
            cell_coverage(&p, &Rect::new(0., 0., 0., 1.)),
            Err(GeometryError::InvalidCell)
        );
    }

    #[test]
    fn concave_polygon_clip() {
        // U shape: 3x3 square minus the notch (1..2, 1..3)
        let u = Polygon::from_rings(vec![ring(&[
            (0., 0.),
            (3., 0.),
            (3., 3.),
            (2., 3.),
            (2., 1.),
            (1., 1.),
            (1., 3.),
            (0., 3.),
        ])])
        .unwrap();
        assert_eq!(u.area(), 7.0);
        let mut s = ClipScratch::default();
        // the notch cell is empty
        assert_eq!(polygon_rect_overlap(&u, &Rect::new(1., 1., 2., 2.), &mut s), 0.0);
        // a rectangle spanning both arms
        assert_eq!(polygon_rect_overlap(&u, &Rect::new(0.5, 1.5, 2.5, 2.5), &mut s), 1.0);
    }

    #[test]
    fn triangulation_tiles_concave_ring() {
        let r = Ring::new(ring(&[
            (0., 0.),
            (3., 0.),
            (3., 3.),
            (2., 3.),
            (2., 1.),
            (1., 1.),
            (1., 3.),
            (0., 3.),
        ]))
        .unwrap();
        let tris = triangulate(&r);
        assert_eq!(tris.len(), 6);
        let total: f64 = tris.iter().map(Triangle::area).sum();
        assert!((total - 7.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_clip_matches_rect_clip() {
        let r = Ring::new(ring(&[(0., 0.), (2., 0.), (2., 2.), (0., 2.)])).unwrap();
        let tri = Triangle([Point::new(1., 1.), Point::new(5., 1.), Point::new(1., 5.)]);
        let mut s = ClipScratch::default();
        // ring ∩ tri is the unit square (1..2, 1..2) minus nothing: the
        // hypotenuse x + y = 6 lies outside the ring.
        assert!((ring_triangle_overlap(&r, &tri, &mut s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_in_polygon_with_hole() {
        let p = Polygon::from_rings(vec![
            ring(&[(0., 0.), (4., 0.), (4., 4.), (0., 4.)]),
            ring(&[(1., 1.), (1., 2.), (2., 2.), (2., 1.)]),
        ])
        .unwrap();
        assert!(p.contains(Point::new(3., 3.)));
        assert!(!p.contains(Point::new(1.5, 1.5)));
        assert!(!p.contains(Point::new(5., 1.)));
    }
}
