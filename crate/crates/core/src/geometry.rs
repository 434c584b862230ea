//! Domains, boundary distance and graded meshes.
//!
//! All shapes are star-shaped about [`DomainSpec::center`], which lets the
//! exterior `Ω^c` be parametrised in polar form `z = c + (ρ_b(θ) + t) e(θ)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A point in one or two dimensions. One-dimensional points keep `y = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new1(x: f64) -> Self {
        Point { x, y: 0.0 }
    }

    pub const fn new2(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn add(&self, other: &Point) -> Point {
        Point::new2(self.x + other.x, self.y + other.y)
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point::new2(self.x - other.x, self.y - other.y)
    }

    pub fn scale(&self, f: f64) -> Point {
        Point::new2(self.x * f, self.y * f)
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Unit vector at angle `theta`.
    pub fn polar(theta: f64) -> Point {
        Point::new2(theta.cos(), theta.sin())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Interval { a: f64, b: f64 },
    /// `(0, ∞)` in one dimension.
    HalfLine,
    Disc { center: Point, radius: f64 },
    Rectangle { min: Point, max: Point },
}

/// Geometry of `Ω` plus the radius at which exterior integrals are truncated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    shape: Shape,
    truncation_radius: f64,
}

/// Default truncation radius in units of the domain diameter.
pub const DEFAULT_TRUNCATION_FACTOR: f64 = 1.0e6;

impl DomainSpec {
    pub fn new(shape: Shape, truncation_radius: Option<f64>) -> Result<Self> {
        match &shape {
            Shape::Interval { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::InvalidDomain(format!(
                        "interval requires a < b, got ({a}, {b})"
                    )));
                }
            }
            Shape::HalfLine => {}
            Shape::Disc { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0 && center.is_finite()) {
                    return Err(Error::InvalidDomain(format!(
                        "disc radius must be positive, got {radius}"
                    )));
                }
            }
            Shape::Rectangle { min, max } => {
                if !(min.is_finite() && max.is_finite() && min.x < max.x && min.y < max.y) {
                    return Err(Error::InvalidDomain(
                        "rectangle corners must satisfy min < max componentwise".into(),
                    ));
                }
            }
        }
        let mut domain = DomainSpec {
            shape,
            truncation_radius: f64::INFINITY,
        };
        let diameter = domain.diameter();
        let radius = match truncation_radius {
            Some(r) => r,
            None if diameter.is_finite() => DEFAULT_TRUNCATION_FACTOR * diameter,
            None => 1.0e12,
        };
        if diameter.is_finite() && !(radius >= 3.0 * diameter) {
            return Err(Error::InvalidDomain(format!(
                "truncation radius {radius} must be at least 3 x diameter ({diameter})"
            )));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidDomain("truncation radius must be positive".into()));
        }
        domain.truncation_radius = radius;
        Ok(domain)
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(Shape::Interval { a, b }, None)
    }

    pub fn half_line() -> Self {
        Self::new(Shape::HalfLine, None).expect("half-line is always valid")
    }

    pub fn disc(center: Point, radius: f64) -> Result<Self> {
        Self::new(Shape::Disc { center, radius }, None)
    }

    pub fn rectangle(min: Point, max: Point) -> Result<Self> {
        Self::new(Shape::Rectangle { min, max }, None)
    }

    pub fn with_truncation(self, radius: f64) -> Result<Self> {
        Self::new(self.shape, Some(radius))
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Interval { .. } | Shape::HalfLine => 1,
            Shape::Disc { .. } | Shape::Rectangle { .. } => 2,
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => b - a,
            Shape::HalfLine => f64::INFINITY,
            Shape::Disc { radius, .. } => 2.0 * radius,
            Shape::Rectangle { min, max } => min.dist(max),
        }
    }

    /// Lebesgue measure `|Ω|`.
    pub fn measure(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => b - a,
            Shape::HalfLine => f64::INFINITY,
            Shape::Disc { radius, .. } => PI * radius * radius,
            Shape::Rectangle { min, max } => (max.x - min.x) * (max.y - min.y),
        }
    }

    pub fn center(&self) -> Point {
        match &self.shape {
            Shape::Interval { a, b } => Point::new1(0.5 * (a + b)),
            Shape::HalfLine => Point::new1(0.0),
            Shape::Disc { center, .. } => *center,
            Shape::Rectangle { min, max } => Point::new2(0.5 * (min.x + max.x), 0.5 * (min.y + max.y)),
        }
    }

    /// Open-set membership.
    pub fn contains(&self, p: &Point) -> bool {
        match &self.shape {
            Shape::Interval { a, b } => p.x > *a && p.x < *b,
            Shape::HalfLine => p.x > 0.0,
            Shape::Disc { center, radius } => p.dist(center) < *radius,
            Shape::Rectangle { min, max } => p.x > min.x && p.x < max.x && p.y > min.y && p.y < max.y,
        }
    }

    /// Closure membership.
    pub fn contains_closed(&self, p: &Point) -> bool {
        self.contains(p) || self.distance(p) == 0.0
    }

    /// Unsigned Euclidean distance to `∂Ω`, valid inside and outside.
    pub fn distance(&self, p: &Point) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => (p.x - a).abs().min((b - p.x).abs()),
            Shape::HalfLine => p.x.abs(),
            Shape::Disc { center, radius } => (p.dist(center) - radius).abs(),
            Shape::Rectangle { min, max } => {
                if self.contains(p) {
                    (p.x - min.x).min(max.x - p.x).min(p.y - min.y).min(max.y - p.y)
                } else {
                    // projection onto the closed rectangle; corners fall out as nearest vertex
                    let cx = p.x.clamp(min.x, max.x);
                    let cy = p.y.clamp(min.y, max.y);
                    let d = (p.x - cx).hypot(p.y - cy);
                    if d > 0.0 {
                        d
                    } else {
                        // on the boundary itself
                        0.0
                    }
                }
            }
        }
    }

    /// `d_{x,y} = min(d(x), d(y))`.
    pub fn d_pair(&self, x: &Point, y: &Point) -> f64 {
        self.distance(x).min(self.distance(y))
    }

    /// Distance from [`Self::center`] to `∂Ω` along direction `theta` (2D only).
    pub fn boundary_radius(&self, theta: f64) -> f64 {
        match &self.shape {
            Shape::Disc { radius, .. } => *radius,
            Shape::Rectangle { min, max } => {
                let hx = 0.5 * (max.x - min.x);
                let hy = 0.5 * (max.y - min.y);
                let (c, s) = (theta.cos().abs(), theta.sin().abs());
                let rx = if c > 0.0 { hx / c } else { f64::INFINITY };
                let ry = if s > 0.0 { hy / s } else { f64::INFINITY };
                rx.min(ry)
            }
            _ => f64::NAN,
        }
    }

    /// Angles (about the center) of corners of the boundary, where the polar
    /// boundary parametrisation loses smoothness.
    pub fn corner_angles(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Rectangle { min, max } => {
                let c = self.center();
                [
                    Point::new2(max.x, max.y),
                    Point::new2(min.x, max.y),
                    Point::new2(min.x, min.y),
                    Point::new2(max.x, min.y),
                ]
                .iter()
                .map(|v| normalize_angle((v.y - c.y).atan2(v.x - c.x)))
                .collect()
            }
            _ => Vec::new(),
        }
    }

    /// Parameter interval `(r_in, r_out)` of the chord `origin + r·dir`, `r ≥ 0`,
    /// inside the (convex) 2D domain. `dir` must be a unit vector.
    pub fn chord(&self, origin: &Point, dir: &Point) -> Option<(f64, f64)> {
        match &self.shape {
            Shape::Disc { center, radius } => {
                let w = origin.sub(center);
                let b = w.dot(dir);
                let c = w.dot(&w) - radius * radius;
                let disc = b * b - c;
                if disc <= 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                // numerically stable roots of r^2 + 2br + c = 0
                let q = -b - b.signum() * sq;
                let (mut r1, mut r2) = if q != 0.0 { (q, c / q) } else { (-sq, sq) };
                if r1 > r2 {
                    std::mem::swap(&mut r1, &mut r2);
                }
                if r2 <= 0.0 {
                    return None;
                }
                Some((r1.max(0.0), r2))
            }
            Shape::Rectangle { min, max } => {
                let mut lo = 0.0f64;
                let mut hi = f64::INFINITY;
                for (o, d, l, h) in [(origin.x, dir.x, min.x, max.x), (origin.y, dir.y, min.y, max.y)] {
                    if d.abs() < 1e-300 {
                        if o < l || o > h {
                            return None;
                        }
                    } else {
                        let (mut t1, mut t2) = ((l - o) / d, (h - o) / d);
                        if t1 > t2 {
                            std::mem::swap(&mut t1, &mut t2);
                        }
                        lo = lo.max(t1);
                        hi = hi.min(t2);
                    }
                }
                if hi > lo {
                    Some((lo, hi))
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Inward unit normal at a boundary point.
    pub fn inward_normal(&self, z: &Point) -> Result<Point> {
        if self.distance(z) > 1e-12 * self.diameter().min(1.0).max(1e-300) {
            return Err(Error::OutsideDomain {
                point: z.as_array(),
                reason: "not on the boundary".into(),
            });
        }
        Ok(match &self.shape {
            Shape::Interval { a, b } => {
                if (z.x - a).abs() <= (z.x - b).abs() {
                    Point::new1(1.0)
                } else {
                    Point::new1(-1.0)
                }
            }
            Shape::HalfLine => Point::new1(1.0),
            Shape::Disc { center, .. } => {
                let v = center.sub(z);
                v.scale(1.0 / v.norm())
            }
            Shape::Rectangle { min, max } => {
                let cand = [
                    ((z.x - min.x).abs(), Point::new2(1.0, 0.0)),
                    ((z.x - max.x).abs(), Point::new2(-1.0, 0.0)),
                    ((z.y - min.y).abs(), Point::new2(0.0, 1.0)),
                    ((z.y - max.y).abs(), Point::new2(0.0, -1.0)),
                ];
                cand.iter()
                    .min_by(|p, q| p.0.total_cmp(&q.0))
                    .map(|c| c.1)
                    .unwrap()
            }
        })
    }
}

pub(crate) fn normalize_angle(t: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let r = t.rem_euclid(two_pi);
    if r >= two_pi {
        0.0
    } else {
        r
    }
}

/// Mesh grading that equidistributes the interpolation error of `d^{2s-1}`:
/// `2/(2s-1)` clamped to `[1, 6]` for `s > 1/2`, else `2`.
pub fn default_grading(s: f64) -> f64 {
    if s > 0.5 {
        (2.0 / (2.0 * s - 1.0)).clamp(1.0, 6.0)
    } else {
        2.0
    }
}

/// Cells of a mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Cells {
    Segments(Vec<[usize; 2]>),
    Triangles(Vec<[usize; 3]>),
}

/// Conforming mesh with piecewise-linear nodal basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    nodes: Vec<Point>,
    cells: Cells,
    grading: f64,
    boundary: Vec<bool>,
}

impl Mesh {
    /// Builds a mesh from raw parts and checks the mesh invariants.
    pub fn from_parts(nodes: Vec<Point>, cells: Cells, grading: f64, boundary: Vec<bool>) -> Result<Self> {
        let mesh = Mesh {
            nodes,
            cells,
            grading,
            boundary,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.len() < 3 {
            return Err(Error::InvalidMesh(format!("need at least 3 nodes, got {}", self.nodes.len())));
        }
        if self.boundary.len() != self.nodes.len() {
            return Err(Error::InvalidMesh("boundary flags do not match node count".into()));
        }
        if !(self.grading >= 1.0) {
            return Err(Error::InvalidMesh(format!("grading must be >= 1, got {}", self.grading)));
        }
        match &self.cells {
            Cells::Segments(segs) => {
                for (e, s) in segs.iter().enumerate() {
                    let (a, b) = (self.nodes[s[0]].x, self.nodes[s[1]].x);
                    if !(b > a) {
                        return Err(Error::InvalidMesh(format!("segment {e} has non-positive length")));
                    }
                    if e > 0 && segs[e - 1][1] != s[0] {
                        return Err(Error::InvalidMesh(format!("segment {e} does not abut its predecessor")));
                    }
                }
            }
            Cells::Triangles(tris) => {
                for (e, t) in tris.iter().enumerate() {
                    if t.iter().any(|&i| i >= self.nodes.len()) {
                        return Err(Error::InvalidMesh(format!("triangle {e} references a missing node")));
                    }
                    let area = tri_area(&self.nodes[t[0]], &self.nodes[t[1]], &self.nodes[t[2]]);
                    if !(area > 0.0) {
                        return Err(Error::InvalidMesh(format!("triangle {e} is not positively oriented")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.cells {
            Cells::Segments(_) => 1,
            Cells::Triangles(_) => 2,
        }
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn cells(&self) -> &Cells {
        &self.cells
    }

    pub fn element_count(&self) -> usize {
        match &self.cells {
            Cells::Segments(s) => s.len(),
            Cells::Triangles(t) => t.len(),
        }
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.boundary[i]).collect()
    }

    /// Node coordinates of a 1D mesh (ascending).
    pub fn coords_1d(&self) -> Vec<f64> {
        self.nodes.iter().map(|p| p.x).collect()
    }

    /// Element node indices, as a vector of length 2 or 3.
    pub fn element(&self, e: usize) -> Vec<usize> {
        match &self.cells {
            Cells::Segments(s) => s[e].to_vec(),
            Cells::Triangles(t) => t[e].to_vec(),
        }
    }

    pub fn element_measure(&self, e: usize) -> f64 {
        match &self.cells {
            Cells::Segments(s) => self.nodes[s[e][1]].x - self.nodes[s[e][0]].x,
            Cells::Triangles(t) => tri_area(&self.nodes[t[e][0]], &self.nodes[t[e][1]], &self.nodes[t[e][2]]),
        }
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.element_count()).map(|e| self.element_measure(e)).sum()
    }

    /// Smallest element diameter.
    pub fn min_size(&self) -> f64 {
        (0..self.element_count())
            .map(|e| self.element_diameter(e))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_size(&self) -> f64 {
        (0..self.element_count())
            .map(|e| self.element_diameter(e))
            .fold(0.0, f64::max)
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        match &self.cells {
            Cells::Segments(_) => self.element_measure(e),
            Cells::Triangles(t) => {
                let [a, b, c] = t[e];
                let (p, q, r) = (&self.nodes[a], &self.nodes[b], &self.nodes[c]);
                p.dist(q).max(q.dist(r)).max(r.dist(p))
            }
        }
    }

    /// Evaluates the piecewise-linear interpolant with nodal values `values` at `p`.
    /// Returns `None` outside the mesh.
    pub fn interpolate(&self, values: &[f64], p: &Point) -> Option<f64> {
        match &self.cells {
            Cells::Segments(segs) => {
                let x = p.x;
                let first = self.nodes[segs[0][0]].x;
                let last = self.nodes[segs[segs.len() - 1][1]].x;
                if x < first || x > last {
                    return None;
                }
                let e = self.locate_1d(x);
                let [i, j] = segs[e];
                let (xa, xb) = (self.nodes[i].x, self.nodes[j].x);
                let t = (x - xa) / (xb - xa);
                Some(values[i] + t * (values[j] - values[i]))
            }
            Cells::Triangles(tris) => {
                for t in tris {
                    let (a, b, c) = (&self.nodes[t[0]], &self.nodes[t[1]], &self.nodes[t[2]]);
                    let l = barycentric(a, b, c, p);
                    let tol = -1e-12;
                    if l[0] >= tol && l[1] >= tol && l[2] >= tol {
                        return Some(l[0] * values[t[0]] + l[1] * values[t[1]] + l[2] * values[t[2]]);
                    }
                }
                None
            }
        }
    }

    /// Index of the segment containing `x` (clamped to the mesh).
    pub fn locate_1d(&self, x: f64) -> usize {
        let n = self.element_count();
        let xs = &self.nodes;
        // nodes are stored in ascending order for 1D meshes
        let idx = xs.partition_point(|p| p.x <= x);
        idx.saturating_sub(1).min(n - 1)
    }
}

pub(crate) fn tri_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

pub(crate) fn barycentric(a: &Point, b: &Point, c: &Point, p: &Point) -> [f64; 3] {
    let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    let l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
    let l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Symmetric grading map of `[0,1]` onto itself, clustered at both ends.
fn graded_unit(t: f64, mu: f64) -> f64 {
    if t <= 0.5 {
        0.5 * (2.0 * t).powf(mu)
    } else {
        1.0 - 0.5 * (2.0 * (1.0 - t)).powf(mu)
    }
}

fn check_mesh_args(n: usize, mu: f64) -> Result<()> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("element count must be >= 4, got {n}")));
    }
    if !(mu >= 1.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("grading must be >= 1, got {mu}")));
    }
    Ok(())
}

/// Graded node coordinates on `[a, b]`, clustered toward both endpoints.
pub fn graded_nodes(a: f64, b: f64, n: usize, mu: f64) -> Vec<f64> {
    let l = b - a;
    (0..=n)
        .map(|i| {
            if i == 0 {
                a
            } else if i == n {
                b
            } else {
                let t = i as f64 / n as f64;
                if t <= 0.5 {
                    a + l * graded_unit(t, mu)
                } else {
                    // measure from the right end so small elements keep relative accuracy
                    b - l * 0.5 * (2.0 * (1.0 - t)).powf(mu)
                }
            }
        })
        .collect()
}

/// Builds a mesh of `n` elements (per direction, or rings for a disc) graded with
/// power `mu` toward the boundary. `mu = 1` is uniform.
pub fn build_graded_mesh(domain: &DomainSpec, n: usize, mu: f64) -> Result<Mesh> {
    check_mesh_args(n, mu)?;
    match domain.shape() {
        Shape::Interval { a, b } => mesh_from_coords(graded_nodes(*a, *b, n, mu), mu),
        Shape::HalfLine => Err(Error::InvalidDomain("cannot mesh an unbounded domain".into())),
        Shape::Rectangle { min, max } => {
            let xs = graded_nodes(min.x, max.x, n, mu);
            let ys = graded_nodes(min.y, max.y, n, mu);
            let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
            let mut boundary = Vec::with_capacity((n + 1) * (n + 1));
            for (j, &y) in ys.iter().enumerate() {
                for (i, &x) in xs.iter().enumerate() {
                    nodes.push(Point::new2(x, y));
                    boundary.push(i == 0 || j == 0 || i == n || j == n);
                }
            }
            let id = |i: usize, j: usize| j * (n + 1) + i;
            let mut tris = Vec::with_capacity(2 * n * n);
            for j in 0..n {
                for i in 0..n {
                    let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                    // alternate the diagonal by quadrant so the mesh is symmetric about the center
                    if (i < n / 2) == (j < n / 2) {
                        tris.push([p00, p10, p11]);
                        tris.push([p00, p11, p01]);
                    } else {
                        tris.push([p00, p10, p01]);
                        tris.push([p10, p11, p01]);
                    }
                }
            }
            Mesh::from_parts(nodes, Cells::Triangles(tris), mu, boundary)
        }
        Shape::Disc { center, radius } => {
            // ring k (k = 1..n) at radius R (1 - (1 - k/n)^mu), carrying 6k nodes
            let mut nodes = vec![*center];
            let mut boundary = vec![false];
            let mut rings: Vec<Vec<(f64, usize)>> = vec![vec![(0.0, 0)]];
            for k in 1..=n {
                let r = radius * (1.0 - (1.0 - k as f64 / n as f64).powf(mu));
                let m = 6 * k;
                let mut ring = Vec::with_capacity(m);
                for j in 0..m {
                    let theta = 2.0 * PI * (j as f64) / m as f64;
                    ring.push((theta, nodes.len()));
                    nodes.push(center.add(&Point::polar(theta).scale(r)));
                    boundary.push(k == n);
                }
                rings.push(ring);
            }
            let mut tris = Vec::new();
            for k in 1..=n {
                stitch_rings(&rings[k - 1], &rings[k], &nodes, &mut tris);
            }
            Mesh::from_parts(nodes, Cells::Triangles(tris), mu, boundary)
        }
    }
}

/// One-sided grading `x_i = a + (b-a)(i/n)^mu`, clustered toward `a` only.
pub fn build_one_sided_mesh(domain: &DomainSpec, n: usize, mu: f64) -> Result<Mesh> {
    check_mesh_args(n, mu)?;
    match domain.shape() {
        Shape::Interval { a, b } => {
            let coords = (0..=n)
                .map(|i| {
                    if i == n {
                        *b
                    } else {
                        a + (b - a) * (i as f64 / n as f64).powf(mu)
                    }
                })
                .collect();
            mesh_from_coords(coords, mu)
        }
        _ => Err(Error::InvalidDomain("one-sided grading is only defined on intervals".into())),
    }
}

/// 1D mesh from ascending node coordinates.
pub fn mesh_from_coords(coords: Vec<f64>, grading: f64) -> Result<Mesh> {
    let n = coords.len();
    if n < 3 {
        return Err(Error::InvalidMesh(format!("need at least 3 nodes, got {n}")));
    }
    let nodes: Vec<Point> = coords.into_iter().map(Point::new1).collect();
    let segs = (0..n - 1).map(|i| [i, i + 1]).collect();
    let mut boundary = vec![false; n];
    boundary[0] = true;
    boundary[n - 1] = true;
    Mesh::from_parts(nodes, Cells::Segments(segs), grading, boundary)
}

/// Triangulates the annulus between two rings of nodes sorted by angle.
fn stitch_rings(inner: &[(f64, usize)], outer: &[(f64, usize)], nodes: &[Point], tris: &mut Vec<[usize; 3]>) {
    let (ni, no) = (inner.len(), outer.len());
    if ni == 1 {
        let c = inner[0].1;
        for j in 0..no {
            tris.push([c, outer[j].1, outer[(j + 1) % no].1]);
        }
        return;
    }
    let (mut i, mut j) = (0usize, 0usize);
    let angle = |ring: &[(f64, usize)], k: usize| {
        let len = ring.len();
        ring[k % len].0 + 2.0 * PI * (k / len) as f64
    };
    while i < ni || j < no {
        let advance_outer = if i >= ni {
            true
        } else if j >= no {
            false
        } else {
            angle(outer, j + 1) <= angle(inner, i + 1)
        };
        let a = inner[i % ni].1;
        let b = outer[j % no].1;
        if advance_outer {
            let c = outer[(j + 1) % no].1;
            push_oriented(tris, nodes, a, b, c);
            j += 1;
        } else {
            let c = inner[(i + 1) % ni].1;
            push_oriented(tris, nodes, a, b, c);
            i += 1;
        }
    }
}

fn push_oriented(tris: &mut Vec<[usize; 3]>, nodes: &[Point], a: usize, b: usize, c: usize) {
    if tri_area(&nodes[a], &nodes[b], &nodes[c]) > 0.0 {
        tris.push([a, b, c]);
    } else {
        tris.push([a, c, b]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn distance_examples() {
        let unit = DomainSpec::interval(0.0, 1.0).unwrap();
        assert_eq!(unit.distance(&Point::new1(0.3)), 0.3);
        assert_eq!(unit.distance(&Point::new1(-0.25)), 0.25);
        let disc = DomainSpec::disc(Point::new2(0.0, 0.0), 1.0).unwrap();
        assert_eq!(disc.distance(&Point::new2(0.0, 0.0)), 1.0);
        assert_relative_eq!(disc.distance(&Point::new2(2.0, 0.0)), 1.0);
    }

    #[test]
    fn rectangle_distance_inside_outside_and_corner() {
        let r = DomainSpec::rectangle(Point::new2(0.0, 0.0), Point::new2(2.0, 1.0)).unwrap();
        assert_relative_eq!(r.distance(&Point::new2(0.5, 0.4)), 0.4);
        assert_relative_eq!(r.distance(&Point::new2(1.0, -0.3)), 0.3);
        assert_relative_eq!(r.distance(&Point::new2(3.0, 2.0)), 2f64.sqrt());
        assert_eq!(r.distance(&Point::new2(2.0, 0.5)), 0.0);
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(DomainSpec::interval(1.0, 1.0).is_err());
        assert!(DomainSpec::disc(Point::new2(0.0, 0.0), -1.0).is_err());
        assert!(DomainSpec::interval(0.0, 1.0).unwrap().with_truncation(2.0).is_err());
        assert!(DomainSpec::interval(0.0, 1.0).unwrap().with_truncation(3.0).is_ok());
    }

    #[test]
    fn uniform_and_graded_nodes() {
        let unit = DomainSpec::interval(0.0, 1.0).unwrap();
        let m = build_graded_mesh(&unit, 4, 1.0).unwrap();
        assert_eq!(m.coords_1d(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let one = build_one_sided_mesh(&unit, 4, 2.0).unwrap();
        assert_eq!(one.coords_1d(), vec![0.0, 1.0 / 16.0, 0.25, 9.0 / 16.0, 1.0]);
        let sym = build_graded_mesh(&unit, 4, 2.0).unwrap();
        assert_eq!(sym.coords_1d(), vec![0.0, 0.125, 0.5, 0.875, 1.0]);
        assert!(matches!(build_graded_mesh(&unit, 2, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn graded_refinement_is_nested() {
        let unit = DomainSpec::interval(0.0, 1.0).unwrap();
        let coarse = build_graded_mesh(&unit, 16, 3.0).unwrap().coords_1d();
        let fine = build_graded_mesh(&unit, 32, 3.0).unwrap().coords_1d();
        for (i, x) in coarse.iter().enumerate() {
            assert_eq!(*x, fine[2 * i]);
        }
    }

    #[test]
    fn default_grading_values() {
        assert_eq!(default_grading(0.75), 4.0);
        assert_eq!(default_grading(0.6), 6.0);
        assert_eq!(default_grading(0.3), 2.0);
        assert_relative_eq!(default_grading(0.95), 2.0 / 0.9);
    }

    #[test]
    fn two_dimensional_meshes_cover_domain() {
        let rect = DomainSpec::rectangle(Point::new2(0.0, 0.0), Point::new2(2.0, 1.0)).unwrap();
        let m = build_graded_mesh(&rect, 6, 2.0).unwrap();
        assert_relative_eq!(m.total_measure(), 2.0, epsilon = 1e-12);
        assert_eq!(m.element_count(), 72);

        let disc = DomainSpec::disc(Point::new2(0.0, 0.0), 1.0).unwrap();
        let d = build_graded_mesh(&disc, 5, 1.5).unwrap();
        // inscribed polygon: area below pi, converging with ring count
        let area = d.total_measure();
        assert!(area < PI && area > 0.95 * PI, "area {area}");
        assert_eq!(d.boundary_nodes().len(), 30);
    }

    #[test]
    fn interpolation_reproduces_linears() {
        let rect = DomainSpec::rectangle(Point::new2(0.0, 0.0), Point::new2(1.0, 1.0)).unwrap();
        let m = build_graded_mesh(&rect, 4, 1.0).unwrap();
        let vals: Vec<f64> = m.nodes().iter().map(|p| 2.0 * p.x - p.y + 0.5).collect();
        let v = m.interpolate(&vals, &Point::new2(0.3, 0.7)).unwrap();
        assert_relative_eq!(v, 0.6 - 0.7 + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn chords_through_convex_domains() {
        let disc = DomainSpec::disc(Point::new2(0.0, 0.0), 1.0).unwrap();
        let (r1, r2) = disc.chord(&Point::new2(-2.0, 0.0), &Point::new2(1.0, 0.0)).unwrap();
        assert_relative_eq!(r1, 1.0, epsilon = 1e-14);
        assert_relative_eq!(r2, 3.0, epsilon = 1e-14);
        assert!(disc.chord(&Point::new2(-2.0, 0.0), &Point::new2(0.0, 1.0)).is_none());
        let rect = DomainSpec::rectangle(Point::new2(0.0, 0.0), Point::new2(1.0, 1.0)).unwrap();
        let (a, b) = rect.chord(&Point::new2(-1.0, 0.5), &Point::new2(1.0, 0.0)).unwrap();
        assert_relative_eq!(a, 1.0);
        assert_relative_eq!(b, 2.0);
    }

    #[test]
    fn rectangle_boundary_radius() {
        let rect = DomainSpec::rectangle(Point::new2(0.0, 0.0), Point::new2(2.0, 2.0)).unwrap();
        assert_relative_eq!(rect.boundary_radius(0.0), 1.0);
        assert_relative_eq!(rect.boundary_radius(PI / 4.0), 2f64.sqrt(), epsilon = 1e-12);
    }
}
