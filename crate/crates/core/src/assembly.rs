//! Galerkin matrices for piecewise-linear elements: stiffness of the
//! nonlocal form, mass, reaction and load.
//!
//! The stiffness matrix is `A_ij = ½ B(φ_i, φ_j)` with
//! `B(u, v) = ∫_Ω∫_Ω (u(x) − u(y))(v(x) − v(y)) K(x, y) dx dy`, so that
//! `Au = F` is the Galerkin form of `L u = f`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::beta::beta as beta_fn;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{barycentric, normalize_angle, tri_area, Cells, DomainSpec, Mesh, Point, Shape};
use crate::kernels::{exterior_weight_1d, KernelEvaluator, KernelSpec, Variant};
use crate::quadrature::{adaptive_breaks, gauss_legendre, triangle_rule, AdaptiveOptions};

/// Assembled linear system of the (possibly reaction-perturbed) Neumann problem.
#[derive(Clone, Debug)]
pub struct StiffnessSystem {
    pub a: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub f: DVector<f64>,
    /// `R_ij = ∫ μ φ_i φ_j` when a reaction coefficient is present.
    pub mu_term: Option<DMatrix<f64>>,
    /// `∫_Ω f`.
    pub compat_residual: f64,
    /// `‖f‖_{L^q}` for the exponent used at assembly.
    pub f_lq_norm: f64,
}

impl StiffnessSystem {
    pub fn build(mesh: &Mesh, domain: &DomainSpec, spec: &KernelSpec, f: &dyn ScalarField, q_exponent: f64) -> Result<Self> {
        let a = assemble_stiffness(mesh, domain, spec)?;
        Ok(Self::from_matrix(mesh, a, f, q_exponent))
    }

    /// System with a precomputed stiffness matrix.
    pub fn from_matrix(mesh: &Mesh, a: DMatrix<f64>, f: &dyn ScalarField, q_exponent: f64) -> Self {
        let load = assemble_load(mesh, f, q_exponent);
        StiffnessSystem {
            a,
            m: assemble_mass(mesh),
            f: load.vector,
            mu_term: None,
            compat_residual: load.compat_residual,
            f_lq_norm: load.lq_norm,
        }
    }

    pub fn with_reaction(mut self, mesh: &Mesh, mu: &dyn ScalarField) -> Self {
        self.mu_term = Some(assemble_reaction(mesh, mu));
        self
    }

    pub fn size(&self) -> usize {
        self.a.nrows()
    }
}

/// Load vector with its compatibility residual and `L^q` norm of the datum.
#[derive(Clone, Debug)]
pub struct Load {
    pub vector: DVector<f64>,
    pub compat_residual: f64,
    pub lq_norm: f64,
}

/// Stiffness matrix of the full Neumann or regional form.
pub fn assemble_stiffness(mesh: &Mesh, domain: &DomainSpec, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.check_domain(domain)?;
    if spec.variant == Variant::HalfLine1D || matches!(domain.shape(), Shape::HalfLine) {
        return Err(Error::InvalidKernel("assembly needs a bounded domain".into()));
    }
    if mesh.dim() != domain.dim() {
        return Err(Error::InvalidMesh("mesh and domain dimensions differ".into()));
    }
    let mut a = assemble_fractional(mesh, spec)?;
    if spec.has_aux() {
        a += assemble_aux(mesh, domain, spec)?;
    }
    mirror_upper(&mut a);
    Ok(a)
}

/// Regional part `½ c ∫_Ω∫_Ω (φ_i(x)−φ_i(y))(φ_j(x)−φ_j(y))|x−y|^{−N−2s}`.
pub fn assemble_fractional(mesh: &Mesh, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let mut a = match mesh.cells() {
        Cells::Segments(_) => frac_1d(&sorted_coords(mesh)?, spec.s)?,
        Cells::Triangles(t) => frac_2d(mesh.nodes(), t, spec.s)?,
    };
    a *= spec.c_ns;
    mirror_upper(&mut a);
    Ok(a)
}

/// Exterior correction part `½ ∫_Ω∫_Ω (φ_i(x)−φ_i(y))(φ_j(x)−φ_j(y)) k_Ω(x, y)`.
pub fn assemble_aux(mesh: &Mesh, domain: &DomainSpec, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let eval = KernelEvaluator::new(domain, &spec.with_variant(Variant::FullNeumann))?;
    let mut a = match mesh.cells() {
        Cells::Segments(_) => aux_1d(&sorted_coords(mesh)?, &eval)?,
        Cells::Triangles(t) => aux_2d(mesh, t, &eval)?,
    };
    mirror_upper(&mut a);
    Ok(a)
}

fn mirror_upper(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

fn sorted_coords(mesh: &Mesh) -> Result<Vec<f64>> {
    let x = mesh.coords_1d();
    if let Cells::Segments(seg) = mesh.cells() {
        if seg.iter().enumerate().any(|(e, s)| s[0] != e || s[1] != e + 1) || x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMesh("1D assembly expects increasing nodes with consecutive segments".into()));
        }
    }
    Ok(x)
}

/// `∫_0^1 p(τ) dτ` for a function with a nearby singularity at `τ = −alpha`.
fn near_singular_unit<F: FnMut(f64) -> f64>(alpha: f64, mut f: F) -> f64 {
    let (xs, ws) = gauss_legendre(12);
    let mut panel = |a: f64, b: f64| {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        xs.iter().zip(ws).map(|(&x, &w)| w * f(c + h * x)).sum::<f64>() * h
    };
    if alpha >= 1.0 {
        return panel(0.0, 1.0);
    }
    let mut total = panel(0.0, alpha);
    let mut a = alpha;
    while a < 1.0 {
        let b = (2.0 * a).min(1.0);
        total += panel(a, b);
        a = b;
    }
    total
}

fn frac_1d(x: &[f64], s: f64) -> Result<DMatrix<f64>> {
    let n = x.len();
    let ne = n - 1;
    let beta = 1.0 + 2.0 * s;
    let same = 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s));
    let radial = 1.0 / (3.0 - 2.0 * s);
    let a = (0..ne)
        .into_par_iter()
        .fold(
            || DMatrix::<f64>::zeros(n, n),
            |mut acc, e| {
                let h = x[e + 1] - x[e];
                // identical element, halved
                let v = 0.5 * same * h.powf(3.0 - 2.0 * s) / (h * h);
                acc[(e, e)] += v;
                acc[(e + 1, e + 1)] += v;
                acc[(e, e + 1)] -= v;
                acc[(e + 1, e)] -= v;
                if e + 1 < ne {
                    let local = touching_1d(h, x[e + 2] - x[e + 1], beta, radial);
                    let idx = [e, e + 1, e + 2];
                    for i in 0..3 {
                        for j in 0..3 {
                            acc[(idx[i], idx[j])] += local[i][j];
                        }
                    }
                }
                for f in e + 2..ne {
                    let mut local = [[0.0; 4]; 4];
                    separated_1d((x[e], x[e + 1]), (x[e], x[e + 1]), (x[f], x[f + 1]), (x[f], x[f + 1]), beta, &mut local, 0);
                    let idx = [e, e + 1, f, f + 1];
                    for i in 0..4 {
                        for j in 0..4 {
                            acc[(idx[i], idx[j])] += local[i][j];
                        }
                    }
                }
                acc
            },
        )
        .reduce(|| DMatrix::zeros(n, n), |a, b| a + b);
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature(0, 0, "non-finite fractional stiffness entry".into()));
    }
    Ok(a)
}

/// Adjacent elements `[m − hl, m]`, `[m, m + hr]`: Duffy split at the shared
/// node with the radial integral done exactly.
fn touching_1d(hl: f64, hr: f64, beta: f64, radial: f64) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let r1 = near_singular_unit(hl / hr, |t| {
                let v = [1.0, t - 1.0, -t];
                v[i] * v[j] * (hl / hr + t).powf(-beta)
            }) * hr.powf(-beta);
            let r2 = near_singular_unit(hr / hl, |t| {
                let v = [t, 1.0 - t, -1.0];
                v[i] * v[j] * (hr / hl + t).powf(-beta)
            }) * hl.powf(-beta);
            let val = hl * hr * radial * (r1 + r2);
            out[i][j] = val;
            out[j][i] = val;
        }
    }
    out
}

/// Disjoint elements: tensor Gauss with bisection of the larger piece while
/// the gap is smaller than the piece size.
fn separated_1d(
    ex: (f64, f64),
    px: (f64, f64),
    ey: (f64, f64),
    py: (f64, f64),
    beta: f64,
    out: &mut [[f64; 4]; 4],
    depth: usize,
) {
    let gap = (py.0 - px.1).max(px.0 - py.1);
    let (lx, ly) = (px.1 - px.0, py.1 - py.0);
    let size = lx.max(ly);
    if gap < size && depth < 64 {
        if lx >= ly {
            let m = 0.5 * (px.0 + px.1);
            separated_1d(ex, (px.0, m), ey, py, beta, out, depth + 1);
            separated_1d(ex, (m, px.1), ey, py, beta, out, depth + 1);
        } else {
            let m = 0.5 * (py.0 + py.1);
            separated_1d(ex, px, ey, (py.0, m), beta, out, depth + 1);
            separated_1d(ex, px, ey, (m, py.1), beta, out, depth + 1);
        }
        return;
    }
    let ratio = gap / size;
    let g = if ratio < 2.0 {
        8
    } else if ratio < 8.0 {
        6
    } else {
        4
    };
    let (ts, ws) = gauss_legendre(g);
    let (hx, hy) = (ex.1 - ex.0, ey.1 - ey.0);
    let (cx, rx) = (0.5 * (px.0 + px.1), 0.5 * lx);
    let (cy, ry) = (0.5 * (py.0 + py.1), 0.5 * ly);
    for (&s, &wsx) in ts.iter().zip(ws) {
        let xq = cx + rx * s;
        let phx = [(ex.1 - xq) / hx, (xq - ex.0) / hx];
        for (&t, &wty) in ts.iter().zip(ws) {
            let yq = cy + ry * t;
            let phy = [(ey.1 - yq) / hy, (yq - ey.0) / hy];
            let w = wsx * wty * rx * ry * (yq - xq).abs().powf(-beta);
            let a = [phx[0], phx[1], -phy[0], -phy[1]];
            for i in 0..4 {
                for j in i..4 {
                    out[i][j] += w * a[i] * a[j];
                }
            }
        }
    }
    for i in 0..4 {
        for j in 0..i {
            out[i][j] = out[j][i];
        }
    }
}

/// `h ∫_0^1 ξ^k (P + hξ)^{−β} dξ` for `k = 0, 1, 2`.
fn element_moments(p: f64, h: f64, beta: f64) -> [f64; 3] {
    let r = h / p;
    if r <= 0.5 {
        let (xs, ws) = gauss_legendre(10);
        let mut m = [0.0; 3];
        for (&x, &w) in xs.iter().zip(ws) {
            let xi = 0.5 * (x + 1.0);
            let v = 0.5 * w * (1.0 + r * xi).powf(-beta);
            m[0] += v;
            m[1] += v * xi;
            m[2] += v * xi * xi;
        }
        let scale = h * p.powf(-beta);
        return [m[0] * scale, m[1] * scale, m[2] * scale];
    }
    // w = 1 + rξ: ∫_1^{1+r} w^{j−β} dw
    let j = |e: f64| {
        let a = e + 1.0 - beta;
        if a.abs() < 1e-12 {
            r.ln_1p()
        } else {
            (a * r.ln_1p()).exp_m1() / a
        }
    };
    let (j0, j1, j2) = (j(0.0), j(1.0), j(2.0));
    let scale = h * p.powf(-beta);
    [
        scale * j0 / r,
        scale * (j1 - j0) / (r * r),
        scale * (j2 - 2.0 * j1 + j0) / (r * r * r),
    ]
}

fn aux_1d(x: &[f64], eval: &KernelEvaluator) -> Result<DMatrix<f64>> {
    let spec = eval.spec();
    let (s, c) = (spec.s, spec.c_ns);
    let beta = spec.beta();
    let n = x.len();
    let (a, b) = (x[0], x[n - 1]);
    if let Shape::Interval { a: da, b: db } = eval.domain().shape() {
        let tol = 1e-12 * (db - da);
        if (a - da).abs() > tol || (b - db).abs() > tol {
            return Err(Error::InvalidMesh("mesh does not span the interval".into()));
        }
    }
    let len = b - a;
    let h_min = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let t_hi = eval.t_max_1d();
    let t_lo = 1e-4 * h_min;
    let (gx, gw) = gauss_legendre(8);
    let mut ts = Vec::new();
    let push_panel = |lo: f64, hi: f64, ts: &mut Vec<(f64, f64)>| {
        let (cm, hm) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (&q, &w) in gx.iter().zip(gw) {
            ts.push((cm + hm * q, w * hm));
        }
    };
    push_panel(0.0, t_lo, &mut ts);
    let mut lo = t_lo;
    while lo < t_hi {
        let hi = (2.0 * lo).min(t_hi);
        push_panel(lo, hi, &mut ts);
        lo = hi;
    }
    let nt = ts.len();
    // columns: weighted moment vectors for both sides
    let mut svecs = DMatrix::<f64>::zeros(n, 2 * nt);
    let mut mass_acc = DMatrix::<f64>::zeros(n, n);
    for side in 0..2 {
        for (k, &(t, w)) in ts.iter().enumerate() {
            let wg = w * exterior_weight_1d(s, Some(len), t);
            let mut s0 = 0.0;
            let mut sv = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut off = vec![0.0; n - 1];
            for e in 0..n - 1 {
                let h = x[e + 1] - x[e];
                // near node is the one closer to the active boundary end
                let (near, far, p) = if side == 0 { (e, e + 1, x[e] - a + t) } else { (e + 1, e, b - x[e + 1] + t) };
                let m = element_moments(p, h, beta);
                s0 += m[0];
                sv[near] += m[0] - m[1];
                sv[far] += m[1];
                diag[near] += m[0] - 2.0 * m[1] + m[2];
                diag[far] += m[2];
                off[e] += m[1] - m[2];
            }
            let scale = wg * s0;
            for i in 0..n {
                mass_acc[(i, i)] += scale * diag[i];
            }
            for e in 0..n - 1 {
                mass_acc[(e, e + 1)] += scale * off[e];
                mass_acc[(e + 1, e)] += scale * off[e];
            }
            let sq = wg.sqrt();
            for i in 0..n {
                svecs[(i, side * nt + k)] = sq * sv[i];
            }
        }
    }
    let mut a_aux = mass_acc - &svecs * svecs.transpose();
    // far field: ψ_t ≈ t^{−β} on Ω, g(t) ≈ t^β/L
    let mass = assemble_mass_1d(x);
    let ones = DVector::from_element(n, 1.0);
    let mvec = &mass * ones;
    let tail = t_hi.powf(-2.0 * s) / (2.0 * s * len);
    a_aux += 2.0 * tail * (&mass * len - &mvec * mvec.transpose());
    a_aux *= c;
    if a_aux.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature(0, 0, "non-finite exterior stiffness entry".into()));
    }
    Ok(a_aux)
}

fn assemble_mass_1d(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut m = DMatrix::zeros(n, n);
    for e in 0..n - 1 {
        let h = x[e + 1] - x[e];
        m[(e, e)] += h / 3.0;
        m[(e + 1, e + 1)] += h / 3.0;
        m[(e, e + 1)] += h / 6.0;
        m[(e + 1, e)] += h / 6.0;
    }
    m
}

/// Barycentric gradients of a triangle.
fn gradients(p: [Point; 3]) -> [Point; 3] {
    let det = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y);
    let mut g = [Point::new2(0.0, 0.0); 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = Point::new2((p[j].y - p[k].y) / det, (p[k].x - p[j].x) / det);
    }
    g
}

/// Length of the longest segment of direction `e` inside the triangle.
fn triangle_width(p: [Point; 3], e: Point) -> f64 {
    let mut best = 0.0f64;
    let nrm = Point::new2(-e.y, e.x);
    for v in 0..3 {
        // line through vertex v: intersect with the opposite edge
        let (a, b) = (p[(v + 1) % 3], p[(v + 2) % 3]);
        let da = a.sub(&p[v]).dot(&nrm);
        let db = b.sub(&p[v]).dot(&nrm);
        if da * db <= 0.0 && da != db {
            let t = da / (da - db);
            let q = a.add(&b.sub(&a).scale(t));
            best = best.max(q.sub(&p[v]).norm());
        }
    }
    best
}

/// Identical-triangle block: `|T| B(2−2s, 3) ∫ (g_i·e)(g_j·e) w(θ)^{2−2s} dθ`,
/// using that `T ∩ (T + h)` is a homothetic copy of `T`.
fn identical_triangle(p: [Point; 3], s: f64) -> [[f64; 3]; 3] {
    let g = gradients(p);
    let area = tri_area(&p[0], &p[1], &p[2]);
    let bf = beta_fn(2.0 - 2.0 * s, 3.0);
    let mut breaks = vec![0.0, PI];
    for i in 0..3 {
        let d = p[(i + 1) % 3].sub(&p[i]);
        let ang = normalize_angle(d.y.atan2(d.x));
        breaks.push(if ang >= PI { ang - PI } else { ang });
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = adaptive_breaks(
                |th| {
                    let e = Point::polar(th);
                    g[i].dot(&e) * g[j].dot(&e) * triangle_width(p, e).powf(2.0 - 2.0 * s)
                },
                &breaks,
                AdaptiveOptions::rel(1e-12),
            )
            .value;
            // θ over [0, π) covers half the directions; the integral over the
            // full circle is twice that
            out[i][j] = 2.0 * v * area * bf;
            out[j][i] = out[i][j];
        }
    }
    out
}

fn split4(p: [Point; 3]) -> [[Point; 3]; 4] {
    let m01 = p[0].add(&p[1]).scale(0.5);
    let m12 = p[1].add(&p[2]).scale(0.5);
    let m20 = p[2].add(&p[0]).scale(0.5);
    [[p[0], m01, m20], [m01, p[1], m12], [m20, m12, p[2]], [m01, m12, m20]]
}

fn diam3(p: &[Point; 3]) -> f64 {
    p[0].dist(&p[1]).max(p[1].dist(&p[2])).max(p[2].dist(&p[0]))
}

fn tri_gap(p: &[Point; 3], q: &[Point; 3]) -> f64 {
    let cp = p[0].add(&p[1]).add(&p[2]).scale(1.0 / 3.0);
    let cq = q[0].add(&q[1]).add(&q[2]).scale(1.0 / 3.0);
    let rp = p.iter().map(|v| v.dist(&cp)).fold(0.0, f64::max);
    let rq = q.iter().map(|v| v.dist(&cq)).fold(0.0, f64::max);
    (cp.dist(&cq) - rp - rq).max(0.0)
}

const MAX_TRI_DEPTH: usize = 2;

/// Pair of distinct triangles (parents `tp`, `tq`) restricted to sub-triangles
/// `sp ⊂ tp`, `sq ⊂ tq`; accumulates the 6×6 local block over node slots
/// `[tp nodes, tq nodes]`.
fn pair_2d(tp: &[Point; 3], sp: [Point; 3], tq: &[Point; 3], sq: [Point; 3], beta: f64, out: &mut [[f64; 6]; 6], depth: usize) {
    let gap = tri_gap(&sp, &sq);
    let size = diam3(&sp).max(diam3(&sq));
    if gap < size && depth < MAX_TRI_DEPTH {
        for a in split4(sp) {
            for b in split4(sq) {
                pair_2d(tp, a, tq, b, beta, out, depth + 1);
            }
        }
        return;
    }
    let order = if gap >= 2.0 * size { 2 } else { 3 };
    let rp = triangle_rule(&sp[0], &sp[1], &sp[2], order);
    let rq = triangle_rule(&sq[0], &sq[1], &sq[2], order);
    for (x, wx) in &rp {
        let bx = barycentric(&tp[0], &tp[1], &tp[2], x);
        for (y, wy) in &rq {
            let by = barycentric(&tq[0], &tq[1], &tq[2], y);
            let w = wx * wy * x.dist(y).powf(-beta);
            let a = [bx[0], bx[1], bx[2], -by[0], -by[1], -by[2]];
            for i in 0..6 {
                for j in i..6 {
                    out[i][j] += w * a[i] * a[j];
                }
            }
        }
    }
}

fn frac_2d(nodes: &[Point], tris: &[[usize; 3]], s: f64) -> Result<DMatrix<f64>> {
    let n = nodes.len();
    let nt = tris.len();
    let beta = 2.0 + 2.0 * s;
    let pts = |t: usize| [nodes[tris[t][0]], nodes[tris[t][1]], nodes[tris[t][2]]];
    let a = (0..nt)
        .into_par_iter()
        .fold(
            || DMatrix::<f64>::zeros(n, n),
            |mut acc, e| {
                let pe = pts(e);
                let loc = identical_triangle(pe, s);
                for i in 0..3 {
                    for j in 0..3 {
                        acc[(tris[e][i], tris[e][j])] += 0.5 * loc[i][j];
                    }
                }
                for f in e + 1..nt {
                    let pf = pts(f);
                    let mut local = [[0.0; 6]; 6];
                    pair_2d(&pe, pe, &pf, pf, beta, &mut local, 0);
                    let idx = [tris[e][0], tris[e][1], tris[e][2], tris[f][0], tris[f][1], tris[f][2]];
                    for i in 0..6 {
                        for j in i..6 {
                            acc[(idx[i], idx[j])] += local[i][j];
                            if i != j {
                                acc[(idx[j], idx[i])] += local[i][j];
                            }
                        }
                    }
                }
                acc
            },
        )
        .reduce(|| DMatrix::zeros(n, n), |a, b| a + b);
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature(0, 0, "non-finite fractional stiffness entry".into()));
    }
    Ok(a)
}

/// Exterior correction in 2D from the separable representation
/// `k(x, y) = c ∫_{Ω^c} |x−z|^{−β}|y−z|^{−β} / D(z) dz` on a polar exterior grid.
fn aux_2d(mesh: &Mesh, tris: &[[usize; 3]], eval: &KernelEvaluator) -> Result<DMatrix<f64>> {
    let domain = eval.domain();
    let spec = eval.spec();
    let (s, c, beta) = (spec.s, spec.c_ns, spec.beta());
    let nodes = mesh.nodes();
    let n = nodes.len();
    let c0 = domain.center();
    let r_trunc = domain.truncation_radius();
    let nb = mesh.boundary_nodes().len().max(8);
    let perimeter = match domain.shape() {
        Shape::Disc { radius, .. } => 2.0 * PI * radius,
        Shape::Rectangle { min, max } => 2.0 * ((max.x - min.x) + (max.y - min.y)),
        _ => unreachable!(),
    };
    let h_b = perimeter / nb as f64;
    let mut sectors = vec![0.0, 2.0 * PI];
    sectors.extend(domain.corner_angles());
    sectors.sort_by(f64::total_cmp);
    sectors.dedup();
    let (gx, gw) = gauss_legendre(4);
    // exterior quadrature nodes (z, weight)
    let mut zs: Vec<(Point, f64)> = Vec::new();
    let mut t_panels = vec![(0.0, 0.01 * h_b)];
    let mut lo = 0.01 * h_b;
    while lo < r_trunc {
        let hi = 2.0 * lo;
        t_panels.push((lo, hi));
        lo = hi;
    }
    for &(ta, tb) in &t_panels {
        let n_theta = ((perimeter / (ta + h_b)).ceil() as usize).clamp(8, 4 * nb);
        for w in sectors.windows(2) {
            let span = w[1] - w[0];
            let k = ((n_theta as f64 * span / (2.0 * PI)).ceil() as usize).max(1);
            for p in 0..k {
                let (a0, a1) = (w[0] + span * p as f64 / k as f64, w[0] + span * (p + 1) as f64 / k as f64);
                for (&qa, &wa) in gx.iter().zip(gw) {
                    let th = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * qa;
                    let e = Point::polar(th);
                    let rb = domain.boundary_radius(th);
                    let t_top = (r_trunc - rb).max(0.0);
                    let (t0, t1) = (ta.min(t_top), tb.min(t_top));
                    if t1 <= t0 {
                        continue;
                    }
                    for (&qt, &wt) in gx.iter().zip(gw) {
                        let t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * qt;
                        let rho = rb + t;
                        let wz = 0.25 * wa * wt * (a1 - a0) * (t1 - t0) * rho;
                        zs.push((c0.add(&e.scale(rho)), wz));
                    }
                }
            }
        }
    }
    let elems: Vec<([Point; 3], f64)> = tris
        .iter()
        .map(|t| {
            let p = [nodes[t[0]], nodes[t[1]], nodes[t[2]]];
            let d = diam3(&p);
            (p, d)
        })
        .collect();
    let rules_far: Vec<Vec<(Point, f64, [f64; 3])>> = elems
        .iter()
        .map(|(p, _)| tagged_rule(p, 3))
        .collect();
    let rules_near: Vec<Vec<(Point, f64, [f64; 3])>> = elems
        .iter()
        .map(|(p, _)| {
            split4(*p)
                .iter()
                .flat_map(|sp| {
                    triangle_rule(&sp[0], &sp[1], &sp[2], 4)
                        .into_iter()
                        .map(|(x, w)| (x, w, barycentric(&p[0], &p[1], &p[2], &x)))
                        .collect::<Vec<_>>()
                })
                .collect()
        })
        .collect();
    let per_z: Vec<(f64, DVector<f64>, Vec<(usize, usize, f64)>)> = zs
        .par_iter()
        .map(|(z, wz)| -> Result<_> {
            let dz = eval.denom(z)?;
            let wg = wz / dz;
            let mut s0 = 0.0;
            let mut sv = DVector::zeros(n);
            let mut mtr = Vec::with_capacity(6 * tris.len());
            for (e, t) in tris.iter().enumerate() {
                let (p, d) = &elems[e];
                let near = tri_gap(p, &[*z, *z, *z]) < *d;
                let rule = if near { &rules_near[e] } else { &rules_far[e] };
                let mut loc = [[0.0; 3]; 3];
                for (x, w, b) in rule {
                    let psi = w * x.dist(z).powf(-beta);
                    s0 += psi;
                    for i in 0..3 {
                        sv[t[i]] += psi * b[i];
                        for j in i..3 {
                            loc[i][j] += psi * b[i] * b[j];
                        }
                    }
                }
                for i in 0..3 {
                    for j in i..3 {
                        mtr.push((t[i], t[j], loc[i][j]));
                    }
                }
            }
            Ok((wg * s0, sv * wg.sqrt(), mtr))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut a_aux = DMatrix::<f64>::zeros(n, n);
    let mut svecs = DMatrix::<f64>::zeros(n, per_z.len());
    for (k, (scale, sv, mtr)) in per_z.into_iter().enumerate() {
        for (i, j, v) in mtr {
            a_aux[(i, j)] += scale * v;
            if i != j {
                a_aux[(j, i)] += scale * v;
            }
        }
        svecs.set_column(k, &sv);
    }
    a_aux -= &svecs * svecs.transpose();
    let mass = assemble_mass(mesh);
    let mvec = &mass * DVector::from_element(n, 1.0);
    let meas = mesh.total_measure();
    let tail = 2.0 * PI * r_trunc.powf(-2.0 * s) / (2.0 * s * meas);
    a_aux += tail * (&mass * meas - &mvec * mvec.transpose());
    a_aux *= c;
    if a_aux.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature(0, 0, "non-finite exterior stiffness entry".into()));
    }
    Ok(a_aux)
}

fn tagged_rule(p: &[Point; 3], order: usize) -> Vec<(Point, f64, [f64; 3])> {
    triangle_rule(&p[0], &p[1], &p[2], order)
        .into_iter()
        .map(|(x, w)| (x, w, barycentric(&p[0], &p[1], &p[2], &x)))
        .collect()
}

/// Consistent mass matrix `M_ij = ∫ φ_i φ_j`.
pub fn assemble_mass(mesh: &Mesh) -> DMatrix<f64> {
    let n = mesh.node_count();
    let mut m = DMatrix::zeros(n, n);
    match mesh.cells() {
        Cells::Segments(seg) => {
            for (e, sg) in seg.iter().enumerate() {
                let h = mesh.element_measure(e);
                let [i, j] = *sg;
                m[(i, i)] += h / 3.0;
                m[(j, j)] += h / 3.0;
                m[(i, j)] += h / 6.0;
                m[(j, i)] += h / 6.0;
            }
        }
        Cells::Triangles(tris) => {
            for (e, t) in tris.iter().enumerate() {
                let area = mesh.element_measure(e);
                for i in 0..3 {
                    for j in 0..3 {
                        m[(t[i], t[j])] += area * if i == j { 1.0 / 6.0 } else { 1.0 / 12.0 };
                    }
                }
            }
        }
    }
    m
}

/// Quadrature nodes per element as `(element, point, weight, local shape values)`.
fn element_rule(mesh: &Mesh, e: usize, breaks: &[f64]) -> Vec<(Point, f64, Vec<(usize, f64)>)> {
    match mesh.cells() {
        Cells::Segments(seg) => {
            let [i, j] = seg[e];
            let (xa, xb) = (mesh.nodes()[i].x, mesh.nodes()[j].x);
            let (lo, hi) = (xa.min(xb), xa.max(xb));
            let mut cuts = vec![lo];
            cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
            cuts.push(hi);
            let (gx, gw) = gauss_legendre(8);
            let mut out = Vec::new();
            for w in cuts.windows(2) {
                let (c, r) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                for (&q, &wq) in gx.iter().zip(gw) {
                    let x = c + r * q;
                    let li = (xb - x) / (xb - xa);
                    out.push((Point::new1(x), wq * r, vec![(i, li), (j, 1.0 - li)]));
                }
            }
            out
        }
        Cells::Triangles(tris) => {
            let t = tris[e];
            let p = [mesh.nodes()[t[0]], mesh.nodes()[t[1]], mesh.nodes()[t[2]]];
            tagged_rule(&p, 5)
                .into_iter()
                .map(|(x, w, b)| (x, w, vec![(t[0], b[0]), (t[1], b[1]), (t[2], b[2])]))
                .collect()
        }
    }
}

/// `F_i = ∫ f φ_i`, `∫ f`, and `‖f‖_{L^q}` (`q = ∞` allowed).
pub fn assemble_load(mesh: &Mesh, f: &dyn ScalarField, q_exponent: f64) -> Load {
    let n = mesh.node_count();
    let mut vector = DVector::zeros(n);
    let mut total = 0.0;
    let mut lq = 0.0f64;
    let breaks = f.breakpoints();
    for e in 0..mesh.element_count() {
        for (x, w, shape) in element_rule(mesh, e, &breaks) {
            let fx = f.value(&x);
            total += w * fx;
            if q_exponent.is_infinite() {
                lq = lq.max(fx.abs());
            } else {
                lq += w * fx.abs().powf(q_exponent);
            }
            for (i, phi) in shape {
                vector[i] += w * fx * phi;
            }
        }
    }
    if q_exponent.is_finite() {
        lq = lq.powf(1.0 / q_exponent);
    }
    Load {
        vector,
        compat_residual: total,
        lq_norm: lq,
    }
}

/// `R_ij = ∫ μ φ_i φ_j`.
pub fn assemble_reaction(mesh: &Mesh, mu: &dyn ScalarField) -> DMatrix<f64> {
    let n = mesh.node_count();
    let mut r = DMatrix::zeros(n, n);
    let breaks = mu.breakpoints();
    for e in 0..mesh.element_count() {
        for (x, w, shape) in element_rule(mesh, e, &breaks) {
            let m = mu.value(&x);
            for &(i, pi) in &shape {
                for &(j, pj) in &shape {
                    r[(i, j)] += w * m * pi * pj;
                }
            }
        }
    }
    r
}

/// Writes a dense matrix in coordinate matrix-market format.
pub fn write_matrix_market(a: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    let nnz = a.iter().filter(|v| **v != 0.0).count();
    writeln!(out, "{} {} {}", a.nrows(), a.ncols(), nnz)?;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v != 0.0 {
                writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ConstField, Fn1};
    use crate::geometry::build_graded_mesh;
    use approx::assert_relative_eq;

    fn unit() -> DomainSpec {
        DomainSpec::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn moments_agree_between_branches() {
        let beta = 2.5;
        for (p, h) in [(1.0, 0.3), (1.0, 0.7), (0.01, 1.0), (1e-6, 1e-3)] {
            let m = element_moments(p, h, beta);
            let (xs, ws) = gauss_legendre(64);
            for k in 0..3 {
                // graded reference in ξ = u^3
                let r: f64 = xs
                    .iter()
                    .zip(ws)
                    .map(|(&x, &w)| {
                        let u = 0.5 * (x + 1.0);
                        let xi = u * u * u;
                        0.5 * w * 3.0 * u * u * xi.powi(k) * (p + h * xi).powf(-beta)
                    })
                    .sum::<f64>()
                    * h;
                assert_relative_eq!(m[k as usize], r, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn row_sums_vanish_and_symmetric() {
        let mesh = build_graded_mesh(&unit(), 32, 2.0).unwrap();
        for variant in [Variant::Regional, Variant::FullNeumann] {
            let spec = KernelSpec::new(variant, 0.75, 1).unwrap();
            let a = assemble_stiffness(&mesh, &unit(), &spec).unwrap();
            let norm = a.norm();
            let r = &a * DVector::from_element(a.nrows(), 1.0);
            assert!(r.norm() <= 1e-10 * norm, "{}", r.norm() / norm);
            assert_eq!(a, a.transpose());
        }
    }

    #[test]
    fn uniform_mesh_energy_of_linear_function() {
        // B(x, x) over (0,1)² with the regional kernel: c∫∫|x−y|^{1−2s} = 2c/((2−2s)(3−2s))
        let s = 0.6;
        let spec = KernelSpec::new(Variant::Regional, s, 1).unwrap();
        let mesh = build_graded_mesh(&unit(), 16, 1.0).unwrap();
        let a = assemble_stiffness(&mesh, &unit(), &spec).unwrap();
        let u = DVector::from_vec(mesh.coords_1d());
        let e = u.dot(&(&a * &u));
        let exact = 0.5 * spec.c_ns * 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s));
        assert_relative_eq!(e, exact, max_relative = 1e-9);
    }

    #[test]
    fn aux_matrix_is_psd_and_increases_form() {
        let mesh = build_graded_mesh(&unit(), 16, 1.5).unwrap();
        let spec = KernelSpec::new(Variant::FullNeumann, 0.75, 1).unwrap();
        let aux = assemble_aux(&mesh, &unit(), &spec).unwrap();
        let eig = aux.clone().symmetric_eigen().eigenvalues;
        let norm = aux.norm();
        assert!(eig.iter().all(|&l| l >= -1e-10 * norm));
        for i in 0..aux.nrows() {
            assert!(aux[(i, i)] >= 0.0);
        }
    }

    #[test]
    fn aux_energy_matches_pointwise_kernel() {
        // ½∫∫(u(x)−u(y))² k for u(x) = x against a direct tensor quadrature of k
        let mesh = build_graded_mesh(&unit(), 8, 1.0).unwrap();
        let spec = KernelSpec::new(Variant::FullNeumann, 0.75, 1).unwrap();
        let aux = assemble_aux(&mesh, &unit(), &spec).unwrap();
        let u = DVector::from_vec(mesh.coords_1d());
        let e = u.dot(&(&aux * &u));
        let ev = KernelEvaluator::new(&unit(), &spec).unwrap();
        let mut r = 0.0;
        let q = crate::quadrature::gauss_legendre(24);
        let pts: Vec<(f64, f64)> = {
            // graded in both halves toward the endpoints
            let mut v = Vec::new();
            for (lo, hi, left) in [(0.0, 0.5, true), (0.5, 1.0, false)] {
                for (&x, &w) in q.0.iter().zip(q.1) {
                    let t = 0.5 * (x + 1.0);
                    let g = t * t;
                    let y = if left { lo + (hi - lo) * g } else { hi - (hi - lo) * g };
                    v.push((y, 0.5 * w * 2.0 * t * (hi - lo)));
                }
            }
            v
        };
        for &(x, wx) in &pts {
            for &(y, wy) in &pts {
                r += wx * wy * (x - y) * (x - y) * ev.aux_1d(x, y);
            }
        }
        assert_relative_eq!(e, 0.5 * r, max_relative = 1e-3);
    }

    #[test]
    fn load_and_reaction_identities() {
        let mesh = build_graded_mesh(&unit(), 16, 2.0).unwrap();
        let zero = assemble_load(&mesh, &ConstField(0.0), 2.0);
        assert_eq!(zero.compat_residual, 0.0);
        let one = assemble_load(&mesh, &ConstField(1.0), 2.0);
        assert_relative_eq!(one.compat_residual, 1.0, epsilon = 1e-12);
        let sin = assemble_load(&mesh, &Fn1::new(|x: f64| (2.0 * PI * x).sin()), 2.0);
        assert!(sin.compat_residual.abs() < 1e-10);
        let m = assemble_mass(&mesh);
        let r = assemble_reaction(&mesh, &ConstField(1.0));
        assert!((&m - &r).amax() < 1e-14);
        let rn = assemble_reaction(&mesh, &ConstField(-1.0));
        assert!((&m + &rn).amax() < 1e-14);
        assert_eq!(assemble_reaction(&mesh, &ConstField(0.0)).amax(), 0.0);
    }

    #[test]
    fn identical_triangle_matches_ray_oracle() {
        // ∫_T F(x) dx with F(x) = ∫ (g_i·e)(g_j·e) R(x, e)^{2−2s}/(2−2s) dθ
        let p = [Point::new2(0.0, 0.0), Point::new2(1.0, 0.0), Point::new2(0.2, 0.8)];
        let s = 0.4;
        let exact = identical_triangle(p, s);
        let g = gradients(p);
        let exit = |x: &Point, e: &Point| {
            let mut t_min = f64::INFINITY;
            for k in 0..3 {
                let (a, b) = (p[k], p[(k + 1) % 3]);
                let ab = b.sub(&a);
                let det = e.x * (-ab.y) - e.y * (-ab.x);
                if det.abs() < 1e-300 {
                    continue;
                }
                let r = a.sub(x);
                let t = (r.x * (-ab.y) - r.y * (-ab.x)) / det;
                let u = (e.x * r.y - e.y * r.x) / det;
                if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
                    t_min = t_min.min(t);
                }
            }
            t_min
        };
        let mut tris = vec![p];
        for _ in 0..3 {
            tris = tris.iter().flat_map(|t| split4(*t)).collect();
        }
        let mut oracle = [[0.0; 3]; 3];
        for t in &tris {
            for (x, w) in triangle_rule(&t[0], &t[1], &t[2], 6) {
                let mut breaks = vec![0.0, 2.0 * PI];
                breaks.extend(p.iter().map(|v| normalize_angle((v.y - x.y).atan2(v.x - x.x))));
                breaks.sort_by(f64::total_cmp);
                for i in 0..3 {
                    for j in i..3 {
                        let f = adaptive_breaks(
                            |th| {
                                let e = Point::polar(th);
                                g[i].dot(&e) * g[j].dot(&e) * exit(&x, &e).powf(2.0 - 2.0 * s)
                            },
                            &breaks,
                            AdaptiveOptions::rel(1e-10),
                        );
                        oracle[i][j] += w * f.value / (2.0 - 2.0 * s);
                    }
                }
            }
        }
        for i in 0..3 {
            for j in i..3 {
                assert_relative_eq!(exact[i][j], oracle[i][j], max_relative = 1e-4, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn disc_stiffness_has_constant_kernel() {
        let disc = DomainSpec::disc(Point::new2(0.0, 0.0), 1.0).unwrap();
        let mesh = build_graded_mesh(&disc, 4, 1.0).unwrap();
        let spec = KernelSpec::new(Variant::Regional, 0.5, 2).unwrap();
        let a = assemble_stiffness(&mesh, &disc, &spec).unwrap();
        let r = &a * DVector::from_element(a.nrows(), 1.0);
        assert!(r.norm() <= 1e-10 * a.norm());
        let eig = a.symmetric_eigen().eigenvalues;
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-10 * ev[ev.len() - 1]);
        assert!(ev[1] > 0.0);
    }
}
