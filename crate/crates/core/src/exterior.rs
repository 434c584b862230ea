//! Exterior extension `ū(z) = ∫_Ω u(y)|z−y|^{−N−2s} dy / D(z)`, which makes the
//! nonlocal normal derivative vanish, and numerical checks of the identities
//! that tie the full-space form to the form restricted to `Ω × Ω`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::assembly::{assemble_aux, assemble_fractional};
use crate::error::{Error, Result};
use crate::field::{NodalField, ScalarField};
use crate::geometry::{Cells, DomainSpec, Mesh, Point, Shape};
use crate::kernels::{KernelSpec, Variant};
use crate::quadrature::gauss_legendre;
use crate::quadrature::pv::{eval_pointwise_with, PvOptions};

/// Interior moments `∫ψ, ∫uψ, ∫vψ, ∫uvψ` with `ψ = |z − y|^{−β}`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Moments {
    m0: f64,
    mu: f64,
    mv: f64,
    muv: f64,
}

impl Moments {
    fn add(&mut self, w: f64, u: f64, v: f64) {
        self.m0 += w;
        self.mu += w * u;
        self.mv += w * v;
        self.muv += w * u * v;
    }
}

fn check_bounded(domain: &DomainSpec, mesh: &Mesh, values: &[f64]) -> Result<()> {
    if matches!(domain.shape(), Shape::HalfLine) {
        return Err(Error::InvalidDomain("extension needs a bounded domain".into()));
    }
    if mesh.dim() != domain.dim() {
        return Err(Error::InvalidMesh("mesh and domain dimensions differ".into()));
    }
    if values.len() != mesh.node_count() {
        return Err(Error::InvalidArgument(format!(
            "{} nodal values for {} nodes",
            values.len(),
            mesh.node_count()
        )));
    }
    Ok(())
}

/// `∫_{ra}^{rb} (r − ra)^k r^{−β} dr` for `k = 0, 1, 2`.
fn radial_moments(ra: f64, rb: f64, beta: f64) -> [f64; 3] {
    let j = |m: f64| {
        let e = m + 1.0 - beta;
        if e.abs() < 1e-12 {
            (rb / ra).ln()
        } else {
            (rb.powf(e) - ra.powf(e)) / e
        }
    };
    let (j0, j1, j2) = (j(0.0), j(1.0), j(2.0));
    [j0, j1 - ra * j0, j2 - 2.0 * ra * j1 + ra * ra * j0]
}

fn moments_1d(x: &[f64], u: &[f64], v: &[f64], z: f64, beta: f64) -> Moments {
    let (gx, gw) = gauss_legendre(8);
    let mut m = Moments::default();
    for k in 0..x.len() - 1 {
        let (y0, y1) = (x[k], x[k + 1]);
        let h = y1 - y0;
        // orient so that r runs from ra (near end) to rb
        let (ra, ua, ub, va, vb) = if z < y0 {
            (y0 - z, u[k], u[k + 1], v[k], v[k + 1])
        } else {
            (z - y1, u[k + 1], u[k], v[k + 1], v[k])
        };
        if ra >= 4.0 * h {
            for (&t, &w) in gx.iter().zip(gw) {
                let l = 0.5 * (t + 1.0);
                let r = ra + h * l;
                let ww = 0.5 * h * w * r.powf(-beta);
                m.add(ww, ua + (ub - ua) * l, va + (vb - va) * l);
            }
        } else {
            let [i0, i1, i2] = radial_moments(ra, ra + h, beta);
            let (du, dv) = ((ub - ua) / h, (vb - va) / h);
            m.m0 += i0;
            m.mu += ua * i0 + du * i1;
            m.mv += va * i0 + dv * i1;
            m.muv += ua * va * i0 + (ua * dv + va * du) * i1 + du * dv * i2;
        }
    }
    m
}

const MAX_TRI_DEPTH: usize = 40;

#[allow(clippy::too_many_arguments)]
fn moments_tri(p: [Point; 3], u: [f64; 3], v: [f64; 3], z: &Point, beta: f64, depth: usize, rule: &[(f64, f64, f64)], m: &mut Moments) {
    let centroid = Point::new2((p[0].x + p[1].x + p[2].x) / 3.0, (p[0].y + p[1].y + p[2].y) / 3.0);
    let diam = p[0].dist(&p[1]).max(p[1].dist(&p[2])).max(p[2].dist(&p[0]));
    if centroid.dist(z) - diam < 2.0 * diam && depth < MAX_TRI_DEPTH {
        let mid = |a: usize, b: usize| (p[a].add(&p[b]).scale(0.5), 0.5 * (u[a] + u[b]), 0.5 * (v[a] + v[b]));
        let (m01, u01, v01) = mid(0, 1);
        let (m12, u12, v12) = mid(1, 2);
        let (m20, u20, v20) = mid(2, 0);
        let kids = [
            ([p[0], m01, m20], [u[0], u01, u20], [v[0], v01, v20]),
            ([m01, p[1], m12], [u01, u[1], u12], [v01, v[1], v12]),
            ([m20, m12, p[2]], [u20, u12, u[2]], [v20, v12, v[2]]),
            ([m01, m12, m20], [u01, u12, u20], [v01, v12, v20]),
        ];
        for (kp, ku, kv) in kids {
            moments_tri(kp, ku, kv, z, beta, depth + 1, rule, m);
        }
        return;
    }
    let area = 0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y)).abs();
    for &(l1, l2, w) in rule {
        let l0 = 1.0 - l1 - l2;
        let y = Point::new2(
            l0 * p[0].x + l1 * p[1].x + l2 * p[2].x,
            l0 * p[0].y + l1 * p[1].y + l2 * p[2].y,
        );
        let ww = area * w * y.dist(z).powf(-beta);
        m.add(ww, l0 * u[0] + l1 * u[1] + l2 * u[2], l0 * v[0] + l1 * v[1] + l2 * v[2]);
    }
}

/// Reference-triangle rule `(λ1, λ2, weight)` with weights summing to 1.
fn unit_triangle_rule() -> Vec<(f64, f64, f64)> {
    let (a, b, c) = (Point::new2(0.0, 0.0), Point::new2(1.0, 0.0), Point::new2(0.0, 1.0));
    crate::quadrature::triangle_rule(&a, &b, &c, 4)
        .into_iter()
        .map(|(p, w)| (p.x, p.y, 2.0 * w))
        .collect()
}

/// Interior moment evaluator shared by the extension and the form checks.
#[derive(Clone, Debug)]
struct InteriorGrid {
    coords: Vec<f64>,
    tris: Vec<[usize; 3]>,
    nodes: Vec<Point>,
    rule: Vec<(f64, f64, f64)>,
    beta: f64,
}

impl InteriorGrid {
    fn new(mesh: &Mesh, beta: f64) -> Self {
        match mesh.cells() {
            Cells::Segments(_) => InteriorGrid {
                coords: mesh.coords_1d(),
                tris: Vec::new(),
                nodes: Vec::new(),
                rule: Vec::new(),
                beta,
            },
            Cells::Triangles(t) => InteriorGrid {
                coords: Vec::new(),
                tris: t.clone(),
                nodes: mesh.nodes().to_vec(),
                rule: unit_triangle_rule(),
                beta,
            },
        }
    }

    fn moments(&self, u: &[f64], v: &[f64], z: &Point) -> Moments {
        if self.tris.is_empty() {
            return moments_1d(&self.coords, u, v, z.x, self.beta);
        }
        let mut m = Moments::default();
        for t in &self.tris {
            let p = [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]];
            moments_tri(p, [u[t[0]], u[t[1]], u[t[2]]], [v[t[0]], v[t[1]], v[t[2]]], z, self.beta, 0, &self.rule, &mut m);
        }
        m
    }
}

/// A cached exterior sample of an extension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExteriorSample {
    pub z: [f64; 2],
    pub value: f64,
    /// `∫_Ω |z − y|^{−N−2s} dy` on the interior grid.
    pub denom: f64,
}

/// Nodal function on `Ω` together with its exterior extension.
#[derive(Clone, Debug)]
pub struct ExtendedFunction {
    mesh: Mesh,
    values: Vec<f64>,
    domain: DomainSpec,
    spec: KernelSpec,
    grid: InteriorGrid,
    cache: Vec<ExteriorSample>,
}

/// Extends nodal values `values` outside `Ω` so that `N_s u = 0`.
pub fn extend(mesh: &Mesh, values: &[f64], domain: &DomainSpec, spec: &KernelSpec) -> Result<ExtendedFunction> {
    check_bounded(domain, mesh, values)?;
    let mut ext = ExtendedFunction {
        mesh: mesh.clone(),
        values: values.to_vec(),
        domain: domain.clone(),
        spec: spec.with_variant(Variant::FullNeumann),
        grid: InteriorGrid::new(mesh, spec.beta()),
        cache: Vec::new(),
    };
    ext.cache = sample_points(domain)
        .into_iter()
        .map(|z| {
            let (value, m0, _) = ext.shifted_moments(&z);
            ExteriorSample {
                z: z.as_array(),
                value,
                denom: m0,
            }
        })
        .collect();
    Ok(ext)
}

fn sample_points(domain: &DomainSpec) -> Vec<Point> {
    let diam = domain.diameter();
    let ts: Vec<f64> = (0..=36).map(|k| diam * 10f64.powf(-6.0 + k as f64 / 4.0)).collect();
    match domain.shape() {
        Shape::Interval { a, b } => ts
            .iter()
            .flat_map(|t| [Point::new1(a - t), Point::new1(b + t)])
            .collect(),
        _ => {
            let c = domain.center();
            (0..16)
                .flat_map(|k| {
                    let th = 2.0 * PI * (k as f64 + 0.5) / 16.0;
                    let e = Point::polar(th);
                    let rb = domain.boundary_radius(th);
                    ts.iter().map(move |t| c.add(&e.scale(rb + t))).collect::<Vec<_>>()
                })
                .collect()
        }
    }
}

impl ExtendedFunction {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    /// Exterior samples computed at construction.
    pub fn cache(&self) -> &[ExteriorSample] {
        &self.cache
    }

    /// `(min, max)` of the interior nodal values.
    pub fn interior_range(&self) -> (f64, f64) {
        NodalField::new(&self.mesh, &self.values).range()
    }

    fn check_exterior(&self, z: &Point) -> Result<()> {
        if self.domain.contains_closed(z) || !z.is_finite() {
            return Err(Error::OutsideDomain {
                point: z.as_array(),
                reason: "exterior value requested at a point of the closed domain".into(),
            });
        }
        Ok(())
    }

    /// `ū(z)` for `z ∈ Ω^c`.
    pub fn exterior_value(&self, z: &Point) -> Result<f64> {
        self.check_exterior(z)?;
        Ok(self.shifted_moments(z).0)
    }

    /// Extension value, `∫_Ω |z−y|^{−β}` and `∫_Ω (u − u_0)|z−y|^{−β}`,
    /// with `u_0` the first nodal value so that constants extend exactly.
    fn shifted_moments(&self, z: &Point) -> (f64, f64, f64) {
        let base = self.values[0];
        let shifted: Vec<f64> = self.values.iter().map(|v| v - base).collect();
        let m = self.grid.moments(&shifted, &shifted, z);
        (base + m.mu / m.m0, m.m0, m.mu)
    }

    /// `N_s u(z) = c ∫_Ω (ū(z) − u(y))|z − y|^{−N−2s} dy` on the grid used by
    /// the extension.
    pub fn eval_ns(&self, z: &Point) -> Result<f64> {
        self.check_exterior(z)?;
        let (ext, m0, mu) = self.shifted_moments(z);
        Ok(self.spec.c_ns * ((ext - self.values[0]) * m0 - mu))
    }

    /// `N_s u(z)` with an independent interior rule (adaptive Gauss–Kronrod in
    /// 1D, doubly refined triangles in 2D), measuring discretisation error.
    pub fn eval_ns_independent(&self, z: &Point) -> Result<f64> {
        self.check_exterior(z)?;
        let ext = self.exterior_value(z)?;
        let beta = self.spec.beta();
        let shifted: Vec<f64> = self.values.iter().map(|v| ext - v).collect();
        let field = NodalField::new(&self.mesh, &shifted);
        let value = match self.mesh.cells() {
            Cells::Segments(_) => {
                let xs = self.mesh.coords_1d();
                crate::quadrature::adaptive_breaks(
                    |y| field.value(&Point::new1(y)) * (y - z.x).abs().powf(-beta),
                    &xs,
                    crate::quadrature::AdaptiveOptions::rel(1e-12),
                )
                .value
            }
            Cells::Triangles(_) => {
                let mut fine = self.grid.clone();
                let (a, b, c) = (Point::new2(0.0, 0.0), Point::new2(1.0, 0.0), Point::new2(0.0, 1.0));
                fine.rule = crate::quadrature::triangle_rule(&a, &b, &c, 8)
                    .into_iter()
                    .map(|(p, w)| (p.x, p.y, 2.0 * w))
                    .collect();
                fine.moments(&shifted, &shifted, z).mu
            }
        };
        Ok(self.spec.c_ns * value)
    }

    /// Linear combination `a·self + b·other` of two extensions on the same mesh.
    pub fn combine(&self, a: f64, other: &ExtendedFunction, b: f64) -> Result<ExtendedFunction> {
        if self.mesh != other.mesh {
            return Err(Error::InvalidMesh("extensions live on different meshes".into()));
        }
        let values: Vec<f64> = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        extend(&self.mesh, &values, &self.domain, &self.spec)
    }
}

impl ScalarField for ExtendedFunction {
    fn value(&self, p: &Point) -> f64 {
        if self.domain.contains_closed(p) {
            self.mesh.interpolate(&self.values, p).unwrap_or(f64::NAN)
        } else {
            self.exterior_value(p).unwrap_or(f64::NAN)
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        if self.mesh.dim() == 1 {
            self.mesh.coords_1d()
        } else {
            Vec::new()
        }
    }
}

/// Quadrature nodes `(z, weight)` on the truncated exterior.
///
/// `level` refines the geometric panels in the distance to the boundary:
/// the panel ratio is `2^{3−level}` (at least 2) and each panel carries
/// `3 + level` Gauss points.
pub fn exterior_grid(domain: &DomainSpec, mesh: &Mesh, level: usize) -> Result<Vec<(Point, f64)>> {
    let ratio = 2f64.powi(3 - level.min(2) as i32);
    let order = 3 + level;
    let (gx, gw) = gauss_legendre(order);
    let h_min = mesh.min_size();
    let t0 = 1e-6 * h_min;
    let r_trunc = domain.truncation_radius();
    let panels = |t_top: f64| {
        let mut out = vec![(0.0, t0.min(t_top))];
        let mut a = t0;
        while a < t_top {
            let b = (ratio * a).min(t_top);
            out.push((a, b));
            a = b;
        }
        out
    };
    let mut zs = Vec::new();
    match domain.shape() {
        Shape::Interval { a, b } => {
            let t_top = r_trunc - 0.5 * (b - a);
            for (ta, tb) in panels(t_top) {
                for (&q, &w) in gx.iter().zip(gw) {
                    let t = 0.5 * (ta + tb) + 0.5 * (tb - ta) * q;
                    let wt = 0.5 * (tb - ta) * w;
                    zs.push((Point::new1(a - t), wt));
                    zs.push((Point::new1(b + t), wt));
                }
            }
        }
        Shape::HalfLine => return Err(Error::InvalidDomain("exterior grid needs a bounded domain".into())),
        _ => {
            let c0 = domain.center();
            let mut sectors = vec![0.0, 2.0 * PI];
            sectors.extend(domain.corner_angles());
            sectors.sort_by(f64::total_cmp);
            sectors.dedup();
            let h_b = mesh.max_size();
            let perimeter = match domain.shape() {
                Shape::Disc { radius, .. } => 2.0 * PI * radius,
                Shape::Rectangle { min, max } => 2.0 * ((max.x - min.x) + (max.y - min.y)),
                _ => unreachable!(),
            };
            for (ta, tb) in panels(r_trunc - 0.5 * domain.diameter()) {
                let n_theta = ((perimeter / (ta + h_b)).ceil() as usize * (level + 1)).clamp(8, 4096);
                for wsec in sectors.windows(2) {
                    let span = wsec[1] - wsec[0];
                    let k = ((n_theta as f64 * span / (2.0 * PI)).ceil() as usize).max(1);
                    for p in 0..k {
                        let a0 = wsec[0] + span * p as f64 / k as f64;
                        let a1 = wsec[0] + span * (p + 1) as f64 / k as f64;
                        for (&qa, &wa) in gx.iter().zip(gw) {
                            let th = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * qa;
                            let e = Point::polar(th);
                            let rb = domain.boundary_radius(th);
                            for (&qt, &wt) in gx.iter().zip(gw) {
                                let t = 0.5 * (ta + tb) + 0.5 * (tb - ta) * qt;
                                let rho = rb + t;
                                zs.push((c0.add(&e.scale(rho)), 0.25 * wa * wt * (a1 - a0) * (tb - ta) * rho));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(zs)
}

/// Result of comparing the full-space and restricted forms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormEquivalence {
    /// `½ ∫∫_{ℝ^{2N} ∖ (Ω^c)²} (u(x)−u(y))(v(x)−v(y)) c|x−y|^{−N−2s}` with extended `u`, `v`.
    pub b_full: f64,
    /// `½ ∫_Ω∫_Ω (u(x)−u(y))(v(x)−v(y)) K_Ω(x, y)`.
    pub b_restricted: f64,
    /// `|b_full − b_restricted| / |b_restricted|`.
    pub gap: f64,
    /// Bound on the exterior contribution beyond the truncation radius.
    pub tail_bound: f64,
    pub level: usize,
}

/// Assembled matrices reused across several equivalence checks on one mesh.
#[derive(Clone, Debug)]
pub struct EquivalenceContext {
    mesh: Mesh,
    domain: DomainSpec,
    spec: KernelSpec,
    a_frac: DMatrix<f64>,
    a_aux: DMatrix<f64>,
    grid: InteriorGrid,
}

impl EquivalenceContext {
    pub fn new(mesh: &Mesh, domain: &DomainSpec, spec: &KernelSpec) -> Result<Self> {
        check_bounded(domain, mesh, &vec![0.0; mesh.node_count()])?;
        let spec = spec.with_variant(Variant::FullNeumann);
        Ok(EquivalenceContext {
            mesh: mesh.clone(),
            domain: domain.clone(),
            a_frac: assemble_fractional(mesh, &spec)?,
            a_aux: assemble_aux(mesh, domain, &spec)?,
            grid: InteriorGrid::new(mesh, spec.beta()),
            spec,
        })
    }

    /// Cross term `c ∫_{Ω^c} ∫_Ω (u(x)−ū(z))(v(x)−v̄(z))|x−z|^{−N−2s} dx dz`.
    fn cross_term(&self, u: &[f64], v: &[f64], level: usize) -> Result<f64> {
        let zs = exterior_grid(&self.domain, &self.mesh, level)?;
        let mut total = 0.0;
        let mut su = vec![0.0; u.len()];
        let mut sv = vec![0.0; v.len()];
        for (z, w) in zs {
            let m = self.grid.moments(u, v, &z);
            let (ub, vb) = (m.mu / m.m0, m.mv / m.m0);
            for k in 0..u.len() {
                su[k] = u[k] - ub;
                sv[k] = v[k] - vb;
            }
            let ms = self.grid.moments(&su, &sv, &z);
            // ∫(u−ū)(v−v̄)ψ with the residual means removed once more
            total += w * (ms.muv - ms.mu * ms.mv / ms.m0);
        }
        Ok(self.spec.c_ns * total)
    }

    /// Compares the two forms for nodal functions `u`, `v`.
    pub fn check(&self, u: &[f64], v: &[f64], level: usize) -> Result<FormEquivalence> {
        check_bounded(&self.domain, &self.mesh, u)?;
        check_bounded(&self.domain, &self.mesh, v)?;
        let (du, dv) = (DVector::from_column_slice(u), DVector::from_column_slice(v));
        let interior = du.dot(&(&self.a_frac * &dv));
        let b_restricted = interior + du.dot(&(&self.a_aux * &dv));
        let b_full = interior + self.cross_term(u, v, level)?;
        let osc = |x: &[f64]| {
            let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
            hi - lo
        };
        let s = self.spec.s;
        let meas = self.mesh.total_measure();
        let t_top = self.domain.truncation_radius() - 0.5 * self.domain.diameter();
        let tail_bound = self.spec.c_ns * osc(u) * osc(v) * meas * match self.domain.dim() {
            1 => 2.0 * t_top.powf(-2.0 * s) / (2.0 * s),
            _ => 2.0 * PI * t_top.powf(-2.0 * s) / (2.0 * s),
        };
        let gap = if b_restricted != 0.0 {
            (b_full - b_restricted).abs() / b_restricted.abs()
        } else {
            (b_full - b_restricted).abs()
        };
        Ok(FormEquivalence {
            b_full,
            b_restricted,
            gap,
            tail_bound,
            level,
        })
    }

    /// Checks at exterior refinement levels `0..levels`.
    pub fn ladder(&self, u: &[f64], v: &[f64], levels: usize) -> Result<Vec<FormEquivalence>> {
        (0..levels).map(|l| self.check(u, v, l)).collect()
    }
}

/// One-shot form comparison at the finest ladder level.
pub fn check_form_equivalence(
    mesh: &Mesh,
    u: &[f64],
    v: &[f64],
    domain: &DomainSpec,
    spec: &KernelSpec,
) -> Result<FormEquivalence> {
    EquivalenceContext::new(mesh, domain, spec)?.check(u, v, 2)
}

/// Defects of the integration-by-parts identity `∫_Ω (−Δ)^s u = −∫_{Ω^c} N_s u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpDefect {
    /// `|1ᵀ A u| / (‖A‖ ‖u‖)`.
    pub discrete: f64,
    /// `|∫_{Ω^c} N_s u| / ∫_{Ω^c} c ‖u‖_∞ D` on the exterior grid.
    pub exterior_flux: f64,
}

impl IbpDefect {
    pub fn total(&self) -> f64 {
        self.discrete + self.exterior_flux
    }
}

pub fn check_ibp_constant(mesh: &Mesh, values: &[f64], domain: &DomainSpec, spec: &KernelSpec) -> Result<IbpDefect> {
    let ext = extend(mesh, values, domain, spec)?;
    let spec = spec.with_variant(Variant::FullNeumann);
    let mut a = assemble_fractional(mesh, &spec)?;
    a += assemble_aux(mesh, domain, &spec)?;
    let u = DVector::from_column_slice(values);
    let au = &a * &u;
    let scale = a.norm() * u.norm();
    let discrete = if scale > 0.0 { au.sum().abs() / scale } else { au.sum().abs() };
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut flux, mut norm) = (0.0, 0.0);
    for (z, w) in exterior_grid(domain, mesh, 1)? {
        let m = ext.grid.moments(values, values, &z);
        flux += w * ext.eval_ns(&z)?;
        norm += w * spec.c_ns * sup * m.m0;
    }
    let exterior_flux = if norm > 0.0 { flux.abs() / norm } else { flux.abs() };
    Ok(IbpDefect { discrete, exterior_flux })
}

/// `|∫_Ω L u − 1ᵀ A u| / ‖A u‖_1` with `∫_Ω L u` from pointwise evaluations
/// on graded Gauss rules in each element (1D only).
pub fn pointwise_ibp_defect(mesh: &Mesh, values: &[f64], domain: &DomainSpec, spec: &KernelSpec) -> Result<f64> {
    check_bounded(domain, mesh, values)?;
    if mesh.dim() != 1 {
        return Err(Error::InvalidMesh("pointwise defect is available in 1D".into()));
    }
    let eval = crate::kernels::KernelEvaluator::new(domain, spec)?;
    let a = crate::assembly::assemble_stiffness(mesh, domain, spec)?;
    let au = &a * DVector::from_column_slice(values);
    let field = NodalField::new(mesh, values);
    let xs = mesh.coords_1d();
    let q = 1.0 / (2.0 - 2.0 * spec.s);
    let (gx, gw) = gauss_legendre(12);
    let mut integral = 0.0;
    for w in xs.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        for (end, dir) in [(w[0], 1.0), (w[1], -1.0)] {
            // x = end ± half·v^q clusters points at the element ends
            for (&t, &wt) in gx.iter().zip(gw) {
                let v = 0.5 * (t + 1.0);
                let x = end + dir * half * v.powf(q);
                let jac = half * q * v.powf(q - 1.0);
                let lu = eval_pointwise_with(&field, &Point::new1(x), &eval, PvOptions { rel_tol: 1e-8, ..PvOptions::default() })?;
                integral += 0.5 * wt * jac * lu.value;
            }
        }
    }
    let scale = au.iter().map(|v| v.abs()).sum::<f64>();
    Ok((integral - au.sum()).abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_graded_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> DomainSpec {
        DomainSpec::interval(0.0, 1.0).unwrap()
    }

    fn spec(s: f64) -> KernelSpec {
        KernelSpec::new(Variant::FullNeumann, s, 1).unwrap()
    }

    fn random_values(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn radial_moments_match_gauss() {
        let (gx, gw) = gauss_legendre(30);
        let (ra, rb, beta) = (0.3, 0.7, 2.5);
        let m = radial_moments(ra, rb, beta);
        for (k, mk) in m.iter().enumerate() {
            let r: f64 = gx
                .iter()
                .zip(gw)
                .map(|(&t, &w)| {
                    let r = 0.5 * (ra + rb) + 0.5 * (rb - ra) * t;
                    0.5 * (rb - ra) * w * (r - ra).powi(k as i32) * r.powf(-beta)
                })
                .sum();
            assert!((mk - r).abs() < 1e-13 * r.abs(), "k={k}");
        }
        let log = radial_moments(0.5, 1.0, 2.0);
        assert!((log[1] - (2f64.ln() - 0.5 * 1.0)).abs() < 1e-14);
    }

    #[test]
    fn constants_extend_exactly() {
        let mesh = build_graded_mesh(&unit(), 16, 1.5).unwrap();
        let c = vec![-1.3; 17];
        let e = extend(&mesh, &c, &unit(), &spec(0.75)).unwrap();
        assert!(e.cache().iter().all(|s| s.value == -1.3));
        for z in [-1e-7, -0.3, 2.0, 1e5] {
            assert_eq!(e.exterior_value(&Point::new1(z)).unwrap(), -1.3);
        }
    }

    #[test]
    fn denominator_matches_closed_form() {
        let mesh = build_graded_mesh(&unit(), 16, 1.5).unwrap();
        let e = extend(&mesh, &[0.0; 17], &unit(), &spec(0.75)).unwrap();
        for s in e.cache() {
            let t = (s.z[0] - 1.0).max(-s.z[0]);
            let exact = crate::kernels::denom_1d(0.75, Some(1.0), t);
            assert!((s.denom - exact).abs() < 1e-9 * exact, "{s:?}");
        }
    }

    #[test]
    fn range_is_contained_and_extension_linear() {
        let mesh = build_graded_mesh(&unit(), 20, 2.0).unwrap();
        let u = random_values(21, 1);
        let v = random_values(21, 2);
        let eu = extend(&mesh, &u, &unit(), &spec(0.6)).unwrap();
        let ev = extend(&mesh, &v, &unit(), &spec(0.6)).unwrap();
        let (lo, hi) = eu.interior_range();
        assert!(eu.cache().iter().all(|s| s.value >= lo - 1e-12 && s.value <= hi + 1e-12));
        let comb = eu.combine(2.0, &ev, -3.0).unwrap();
        for (a, (b, c)) in comb.cache().iter().zip(eu.cache().iter().zip(ev.cache())) {
            assert!((a.value - (2.0 * b.value - 3.0 * c.value)).abs() < 1e-10);
        }
        let again = extend(&mesh, comb.values(), &unit(), &spec(0.6)).unwrap();
        assert_eq!(again.cache(), comb.cache());
    }

    #[test]
    fn normal_derivative_vanishes_after_extension() {
        let mesh = build_graded_mesh(&unit(), 32, 2.0).unwrap();
        let xs = mesh.coords_1d();
        let u: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin() + x * x).collect();
        let sp = spec(0.75);
        let e = extend(&mesh, &u, &unit(), &sp).unwrap();
        let sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for z in [-1e-4, -0.01, -0.5, -3.0, -100.0, 1.0 + 1e-5, 1.1, 1.7, 12.0, 1e4] {
            let p = Point::new1(z);
            let d = crate::kernels::denom_1d(0.75, Some(1.0), (z - 1.0).max(-z));
            let ns = e.eval_ns(&p).unwrap();
            assert!(ns.abs() <= 1e-8 * sp.c_ns * sup * d, "z={z} ns={ns}");
            let ind = e.eval_ns_independent(&p).unwrap();
            assert!(ind.abs() <= 1e-6 * sp.c_ns * sup * d, "z={z} independent={ind}");
        }
        assert!(e.eval_ns(&Point::new1(0.5)).is_err());
        assert!(e.eval_ns(&Point::new1(1.0)).is_err());
    }

    #[test]
    fn nearest_node_extension_is_not_neumann() {
        let mesh = build_graded_mesh(&unit(), 16, 1.0).unwrap();
        let xs = mesh.coords_1d();
        let u: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let sp = spec(0.75);
        // constant continuation by the boundary value
        let z = -0.2f64;
        let r = crate::quadrature::adaptive_breaks(
            |y| (u[0] - mesh.interpolate(&u, &Point::new1(y)).unwrap()) * (y - z).powf(-sp.beta()),
            &xs,
            crate::quadrature::AdaptiveOptions::rel(1e-10),
        );
        assert!(r.value.abs() > 1e-3);
    }

    #[test]
    fn forms_agree_for_hat_and_vanish_for_constants() {
        let mesh = build_graded_mesh(&unit(), 16, 1.0).unwrap();
        let ctx = EquivalenceContext::new(&mesh, &unit(), &spec(0.75)).unwrap();
        let mut hat = vec![0.0; 17];
        hat[8] = 1.0;
        let r = ctx.check(&hat, &hat, 2).unwrap();
        assert!(r.gap <= 1e-3, "{r:?}");
        let ones = vec![1.0; 17];
        let c = ctx.check(&ones, &ones, 2).unwrap();
        assert!(c.b_full.abs() < 1e-10 && c.b_restricted.abs() < 1e-10, "{c:?}");
        let twice: Vec<f64> = hat.iter().map(|v| 2.0 * v).collect();
        let d = ctx.check(&twice, &hat, 2).unwrap();
        assert!((d.b_full - 2.0 * r.b_full).abs() < 1e-10 * r.b_full.abs());
        assert!((d.b_restricted - 2.0 * r.b_restricted).abs() < 1e-10 * r.b_restricted.abs());
    }

    #[test]
    fn equivalence_gap_decreases_on_ladder() {
        let mesh = build_graded_mesh(&unit(), 24, 2.0).unwrap();
        let ctx = EquivalenceContext::new(&mesh, &unit(), &spec(0.75)).unwrap();
        for seed in 0..3 {
            let u = random_values(25, seed);
            let ladder = ctx.ladder(&u, &u, 3).unwrap();
            let gaps: Vec<f64> = ladder.iter().map(|r| r.gap).collect();
            assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
            assert!(gaps[2] <= 1e-3, "{gaps:?}");
        }
    }

    #[test]
    fn ibp_defects_are_small() {
        let mesh = build_graded_mesh(&unit(), 16, 1.5).unwrap();
        let sp = spec(0.75);
        let ones = vec![1.0; 17];
        assert!(check_ibp_constant(&mesh, &ones, &unit(), &sp).unwrap().total() <= 1e-10);
        let u = random_values(17, 7);
        let d = check_ibp_constant(&mesh, &u, &unit(), &sp).unwrap();
        assert!(d.discrete <= 1e-10 && d.exterior_flux <= 1e-10, "{d:?}");
    }

    #[test]
    fn pointwise_ibp_for_hat() {
        let mesh = build_graded_mesh(&unit(), 8, 1.0).unwrap();
        let mut hat = vec![0.0; 9];
        hat[4] = 1.0;
        let sp = KernelSpec::new(Variant::Regional, 0.75, 1).unwrap();
        let d = pointwise_ibp_defect(&mesh, &hat, &unit(), &sp).unwrap();
        assert!(d <= 1e-3, "{d}");
    }

    #[test]
    fn disc_extension_preserves_constants() {
        let disc = DomainSpec::disc(Point::new2(0.0, 0.0), 1.0).unwrap();
        let mesh = build_graded_mesh(&disc, 4, 1.0).unwrap();
        let n = mesh.node_count();
        let sp = KernelSpec::new(Variant::FullNeumann, 0.75, 2).unwrap();
        let e = extend(&mesh, &vec![2.0; n], &disc, &sp).unwrap();
        assert!(e.cache().iter().all(|s| (s.value - 2.0).abs() < 1e-10));
        let u: Vec<f64> = mesh.nodes().iter().map(|p| p.x).collect();
        let e = extend(&mesh, &u, &disc, &sp).unwrap();
        let z = Point::new2(1.5, 0.0);
        assert!(e.eval_ns(&z).unwrap().abs() < 1e-10);
        let v = e.exterior_value(&z).unwrap();
        assert!(v > 0.0 && v < 1.0);
    }
}
