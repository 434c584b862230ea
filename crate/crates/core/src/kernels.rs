//! Kernels of the Neumann problem: the fractional kernel, the exterior
//! interaction correction `k_Ω`, the transformed kernel `K_Ω`, the regional
//! kernel and the half-line kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, DomainSpec, Point, Shape};
use crate::quadrature::{adaptive_breaks, gauss_legendre, AdaptiveOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `K_Ω = c|x−y|^{−N−2s} + k_Ω`.
    FullNeumann,
    /// `c|x−y|^{−N−2s}` restricted to `Ω × Ω`.
    Regional,
    /// `K_Ω` on `Ω = (0, ∞)`.
    #[serde(rename = "halfline1d", alias = "half_line1d", alias = "half_line")]
    HalfLine1D,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "fullneumann" | "full" | "neumann" => Ok(Variant::FullNeumann),
            "regional" => Ok(Variant::Regional),
            "halfline1d" | "halfline" => Ok(Variant::HalfLine1D),
            _ => Err(Error::InvalidKernel(format!("unknown kernel variant `{s}`"))),
        }
    }
}

/// Which operator, with its fractional order and normalisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub variant: Variant,
    pub s: f64,
    pub dim: usize,
    pub c_ns: f64,
}

/// `c_{N,s} = 4^s s Γ(N/2 + s) / (π^{N/2} Γ(1 − s))`.
pub fn normalization_constant(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    4f64.powf(s) * s * gamma(0.5 * n + s) / (PI.powf(0.5 * n) * gamma(1.0 - s))
}

impl KernelSpec {
    pub fn new(variant: Variant, s: f64, dim: usize) -> Result<Self> {
        Self::with_constant(variant, s, dim, normalization_constant(dim, s))
    }

    pub fn with_constant(variant: Variant, s: f64, dim: usize, c_ns: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidKernel(format!("s must lie in (0, 1), got {s}")));
        }
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidKernel(format!("dimension must be 1 or 2, got {dim}")));
        }
        if variant == Variant::HalfLine1D && dim != 1 {
            return Err(Error::InvalidKernel("HalfLine1D requires N = 1".into()));
        }
        if !(c_ns > 0.0 && c_ns.is_finite()) {
            return Err(Error::InvalidKernel(format!("c_Ns must be positive, got {c_ns}")));
        }
        Ok(KernelSpec {
            variant,
            s,
            dim,
            c_ns,
        })
    }

    /// Singularity order `N + 2s`.
    pub fn beta(&self) -> f64 {
        self.dim as f64 + 2.0 * self.s
    }

    /// Whether the kernel carries the exterior correction `k_Ω`.
    pub fn has_aux(&self) -> bool {
        self.variant != Variant::Regional
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        KernelSpec { variant, ..*self }
    }

    pub(crate) fn check_domain(&self, domain: &DomainSpec) -> Result<()> {
        if domain.dim() != self.dim {
            return Err(Error::InvalidKernel(format!(
                "kernel dimension {} does not match domain dimension {}",
                self.dim,
                domain.dim()
            )));
        }
        if self.variant == Variant::HalfLine1D && !matches!(domain.shape(), Shape::HalfLine) {
            return Err(Error::InvalidKernel("HalfLine1D requires the half-line domain".into()));
        }
        Ok(())
    }
}

/// Kernel value split into its two parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    pub fractional_part: f64,
    pub aux_part: f64,
}

/// `c_{N,s}|x − y|^{−N−2s}`.
pub fn frac_kernel(spec: &KernelSpec, x: &Point, y: &Point) -> Result<f64> {
    let r = x.dist(y);
    if r == 0.0 {
        return Err(Error::Singularity(x.as_array()));
    }
    Ok(spec.c_ns * r.powf(-spec.beta()))
}

/// `∫_Ω |z − w|^{−N−2s} dw` for exterior `z`.
pub fn denom_integral(domain: &DomainSpec, spec: &KernelSpec, z: &Point) -> Result<f64> {
    KernelEvaluator::new(domain, spec)?.denom(z)
}

/// Exterior interaction correction `k_Ω(x, y)`.
pub fn aux_kernel(domain: &DomainSpec, spec: &KernelSpec, x: &Point, y: &Point) -> Result<f64> {
    KernelEvaluator::new(domain, spec)?.aux(x, y)
}

/// `K_Ω(x, y)` with its parts.
pub fn full_kernel(domain: &DomainSpec, spec: &KernelSpec, x: &Point, y: &Point) -> Result<KernelValue> {
    KernelEvaluator::new(domain, spec)?.full(x, y)
}

const GL_PANEL: usize = 8;

/// Weight `1/D(t)` of the 1D exterior integral at distance `t` from an endpoint.
/// `length = None` is the half-line.
pub(crate) fn exterior_weight_1d(s: f64, length: Option<f64>, t: f64) -> f64 {
    let two_s = 2.0 * s;
    match length {
        None => two_s * t.powf(two_s),
        Some(l) => two_s * t.powf(two_s) / (-(-two_s * (l / t).ln_1p()).exp_m1()),
    }
}

/// `D(t) = ∫_Ω |z − w|^{−1−2s} dw` for `z` at distance `t` outside an endpoint.
pub(crate) fn denom_1d(s: f64, length: Option<f64>, t: f64) -> f64 {
    1.0 / exterior_weight_1d(s, length, t)
}

/// One side of the 1D aux kernel: `∫_0^T g(t)(p+t)^{−β}(q+t)^{−β} dt` plus tail.
fn aux_side_1d(s: f64, length: Option<f64>, p: f64, q: f64, t_hi: f64) -> f64 {
    let beta = 1.0 + 2.0 * s;
    let (x, w) = gauss_legendre(GL_PANEL);
    if p.min(q) <= 0.0 {
        return f64::INFINITY;
    }
    let integrand = |t: f64| {
        let w = exterior_weight_1d(s, length, t);
        if w == 0.0 {
            return 0.0;
        }
        w * (-beta * ((p + t).ln() + (q + t).ln())).exp()
    };
    let panel = |a: f64, b: f64| {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        x.iter().zip(w).map(|(&xi, &wi)| wi * integrand(c + h * xi)).sum::<f64>() * h
    };
    let t_lo = (1e-3 * p.min(q)).min(t_hi);
    let mut total = panel(0.0, t_lo);
    let mut a = t_lo;
    while a < t_hi {
        let b = (2.0 * a).min(t_hi);
        total += panel(a, b);
        a = b;
    }
    total + aux_tail_1d(s, length, t_hi)
}

fn aux_tail_1d(s: f64, length: Option<f64>, t_hi: f64) -> f64 {
    let two_s = 2.0 * s;
    match length {
        Some(l) => t_hi.powf(-two_s) / (two_s * l),
        None => two_s * t_hi.powf(-1.0 - two_s) / (1.0 + two_s),
    }
}

/// Cached `D(t)` for a disc as a function of the distance `t` to the circle,
/// interpolated in log–log coordinates.
#[derive(Clone, Debug)]
struct RadialTable {
    log_t0: f64,
    step: f64,
    log_d: Vec<f64>,
    s: f64,
}

const TABLE_PER_DECADE: usize = 40;

impl RadialTable {
    fn build(domain: &DomainSpec, s: f64, t_max: f64) -> Self {
        let (center, radius) = match domain.shape() {
            Shape::Disc { center, radius } => (*center, *radius),
            _ => unreachable!("radial table only for discs"),
        };
        let t0 = 1e-10 * radius;
        let step = std::f64::consts::LN_10 / TABLE_PER_DECADE as f64;
        let count = ((t_max / t0).ln() / step).ceil() as usize + 4;
        let log_t0 = t0.ln();
        let log_d = (0..count)
            .into_par_iter()
            .map(|i| {
                let t = (log_t0 + step * i as f64).exp();
                let z = center.add(&Point::new2(radius + t, 0.0));
                denom_2d_direct(domain, s, &z).ln()
            })
            .collect();
        RadialTable { log_t0, step, log_d, s }
    }

    fn eval(&self, t: f64) -> Option<f64> {
        let u = (t.ln() - self.log_t0) / self.step;
        let n = self.log_d.len();
        if u < 0.0 {
            // half-plane regime: D ~ C t^{-2s}
            let scale = (-2.0 * self.s * (t.ln() - self.log_t0)).exp();
            return Some(self.log_d[0].exp() * scale);
        }
        if u > (n - 3) as f64 {
            return None;
        }
        let i = (u.floor() as usize).clamp(1, n - 3);
        let f = u - i as f64;
        // cubic Lagrange on nodes i-1..i+2
        let (y0, y1, y2, y3) = (self.log_d[i - 1], self.log_d[i], self.log_d[i + 1], self.log_d[i + 2]);
        let l0 = -f * (f - 1.0) * (f - 2.0) / 6.0;
        let l1 = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
        let l2 = -(f + 1.0) * f * (f - 2.0) / 2.0;
        let l3 = (f + 1.0) * f * (f - 1.0) / 6.0;
        Some((l0 * y0 + l1 * y1 + l2 * y2 + l3 * y3).exp())
    }
}

/// `D(z)` in 2D by ray casting: `∫ dφ (r_in^{−2s} − r_out^{−2s})/(2s)` over
/// directions hitting `Ω`, adaptive in the angle.
pub(crate) fn denom_2d_direct(domain: &DomainSpec, s: f64, z: &Point) -> f64 {
    let two_s = 2.0 * s;
    let to_center = domain.center().sub(z);
    let base = to_center.y.atan2(to_center.x);
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    let mut breaks = vec![0.0];
    match domain.shape() {
        Shape::Disc { radius, .. } => {
            let half = (radius / to_center.norm()).clamp(-1.0, 1.0).asin();
            lo = -half;
            hi = half;
        }
        Shape::Rectangle { min, max } => {
            for c in [*min, Point::new2(max.x, min.y), *max, Point::new2(min.x, max.y)] {
                let v = c.sub(z);
                let mut a = v.y.atan2(v.x) - base;
                a = (a + PI).rem_euclid(2.0 * PI) - PI;
                lo = lo.min(a);
                hi = hi.max(a);
                breaks.push(a);
            }
            // direction of the nearest boundary point
            let cx = z.x.clamp(min.x, max.x);
            let cy = z.y.clamp(min.y, max.y);
            let mut a = (cy - z.y).atan2(cx - z.x) - base;
            a = (a + PI).rem_euclid(2.0 * PI) - PI;
            breaks.push(a);
        }
        _ => unreachable!("2D domains only"),
    }
    breaks.push(lo);
    breaks.push(hi);
    breaks.retain(|b| *b >= lo && *b <= hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let f = |phi: f64| {
        let dir = Point::polar(base + phi);
        match domain.chord(z, &dir) {
            Some((r1, r2)) if r1 > 0.0 => (r1.powf(-two_s) - r2.powf(-two_s)) / two_s,
            _ => 0.0,
        }
    };
    adaptive_breaks(f, &breaks, AdaptiveOptions::rel(1e-10)).value
}

/// Kernel evaluator with exterior caches built once per `(domain, spec)`.
#[derive(Clone, Debug)]
pub struct KernelEvaluator {
    domain: DomainSpec,
    spec: KernelSpec,
    radial: Option<RadialTable>,
}

impl KernelEvaluator {
    pub fn new(domain: &DomainSpec, spec: &KernelSpec) -> Result<Self> {
        spec.check_domain(domain)?;
        let radial = match domain.shape() {
            Shape::Disc { radius, .. } if spec.has_aux() => {
                Some(RadialTable::build(domain, spec.s, domain.truncation_radius() - radius))
            }
            _ => None,
        };
        Ok(KernelEvaluator {
            domain: domain.clone(),
            spec: *spec,
            radial,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn frac(&self, x: &Point, y: &Point) -> Result<f64> {
        frac_kernel(&self.spec, x, y)
    }

    /// Interval length, or `None` on the half-line.
    pub(crate) fn length_1d(&self) -> Option<f64> {
        match self.domain.shape() {
            Shape::Interval { a, b } => Some(b - a),
            _ => None,
        }
    }

    /// Exterior `t`-range on each side of a 1D domain.
    pub(crate) fn t_max_1d(&self) -> f64 {
        match self.domain.shape() {
            Shape::Interval { a, b } => self.domain.truncation_radius() - 0.5 * (b - a),
            _ => self.domain.truncation_radius(),
        }
    }

    pub fn denom(&self, z: &Point) -> Result<f64> {
        if self.domain.contains_closed(z) {
            return Err(Error::OutsideDomain {
                point: z.as_array(),
                reason: "denominator requires an exterior point".into(),
            });
        }
        let s = self.spec.s;
        Ok(match self.domain.shape() {
            Shape::Interval { .. } | Shape::HalfLine => denom_1d(s, self.length_1d(), self.domain.distance(z)),
            Shape::Disc { center, radius } => {
                let t = z.dist(center) - radius;
                match self.radial.as_ref().and_then(|r| r.eval(t)) {
                    Some(d) => d,
                    None => denom_2d_direct(&self.domain, s, z),
                }
            }
            Shape::Rectangle { .. } => denom_2d_direct(&self.domain, s, z),
        })
    }

    fn check_interior(&self, p: &Point) -> Result<f64> {
        let d = self.domain.distance(p);
        if !self.domain.contains(p) || d == 0.0 {
            return Err(Error::OutsideDomain {
                point: p.as_array(),
                reason: "kernel arguments must lie in the open domain".into(),
            });
        }
        Ok(d)
    }

    /// `k_Ω(x, y)`; zero for the regional kernel.
    pub fn aux(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_interior(x)?;
        self.check_interior(y)?;
        if !self.spec.has_aux() {
            return Ok(0.0);
        }
        Ok(match self.domain.shape() {
            Shape::Interval { .. } | Shape::HalfLine => self.aux_1d(x.x, y.x),
            _ => self.aux_2d(x, y),
        })
    }

    /// 1D `k_Ω` without argument checks.
    pub(crate) fn aux_1d(&self, x: f64, y: f64) -> f64 {
        let s = self.spec.s;
        let len = self.length_1d();
        let t_hi = self.t_max_1d();
        match self.domain.shape() {
            Shape::Interval { a, b } => {
                self.spec.c_ns
                    * (aux_side_1d(s, len, x - a, y - a, t_hi) + aux_side_1d(s, len, b - x, b - y, t_hi))
            }
            _ => self.spec.c_ns * aux_side_1d(s, None, x, y, t_hi),
        }
    }

    fn aux_2d(&self, x: &Point, y: &Point) -> f64 {
        let beta = self.spec.beta();
        let c0 = self.domain.center();
        let r_trunc = self.domain.truncation_radius();
        let d_min = self.domain.distance(x).min(self.domain.distance(y));
        let angle = |p: &Point| {
            let v = p.sub(&c0);
            normalize_angle(v.y.atan2(v.x))
        };
        let mut breaks = vec![0.0, 2.0 * PI, angle(x), angle(y)];
        breaks.extend(self.domain.corner_angles().into_iter().map(normalize_angle));
        // the angular profile concentrates on a width ~ d/ρ around x and y
        let rho_min = self.domain.diameter() * 0.5;
        for p in [x, y] {
            let th = angle(p);
            let mut w = 0.25 * self.domain.distance(p) / rho_min;
            while w < PI {
                for b in [th - w, th + w] {
                    breaks.push(normalize_angle(b));
                }
                w *= 4.0;
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let outer = |theta: f64| {
            let e = Point::polar(theta);
            let rho_b = self.domain.boundary_radius(theta);
            let t_top = r_trunc - rho_b;
            let inner = |t: f64| {
                let rho = rho_b + t;
                let z = c0.add(&e.scale(rho));
                let dz = match self.denom(&z) {
                    Ok(d) => d,
                    Err(_) => return 0.0,
                };
                (-0.5 * beta * (x.sub(&z).dot(&x.sub(&z)).ln() + y.sub(&z).dot(&y.sub(&z)).ln())).exp() * rho / dz
            };
            let mut tb = vec![0.0];
            let mut t = 1e-3 * d_min;
            while t < t_top {
                tb.push(t);
                t *= 4.0;
            }
            tb.push(t_top);
            adaptive_breaks(inner, &tb, AdaptiveOptions::rel(1e-9)).value
        };
        let body = adaptive_breaks(outer, &breaks, AdaptiveOptions::rel(1e-7)).value;
        let tail = 2.0 * PI * r_trunc.powf(-2.0 * self.spec.s) / (2.0 * self.spec.s * self.domain.measure());
        self.spec.c_ns * (body + tail)
    }

    /// `K(x, y)` for the configured variant, with parts.
    pub fn full(&self, x: &Point, y: &Point) -> Result<KernelValue> {
        let fractional_part = self.frac(x, y)?;
        let aux_part = self.aux(x, y)?;
        Ok(KernelValue {
            value: fractional_part + aux_part,
            fractional_part,
            aux_part,
        })
    }
}

/// Right-hand side of the two-sided estimate for `k_Ω`.
pub fn estimate_rhs(beta: f64, d_pair: f64, dist: f64) -> f64 {
    if d_pair >= dist {
        d_pair.powf(-beta)
    } else {
        (1.0 + (d_pair / dist).ln().abs()) * dist.powf(-beta)
    }
}

/// One sampled pair of an [`EstimateReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateSample {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub d_pair: f64,
    pub dist: f64,
    pub aux: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// 1: `d_pair ≤ |x − y|` (log regime), 2: `d_pair ≥ |x − y|`.
    pub regime: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub count: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Outcome of [`validate_estimates`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub s: f64,
    pub dim: usize,
    pub bound: f64,
    pub log_regime: RegimeSummary,
    pub interior_regime: RegimeSummary,
    pub pass: bool,
    pub samples: Vec<EstimateSample>,
}

/// Comparability constant used by the estimate verdict.
pub const ESTIMATE_BOUND: f64 = 50.0;

fn summarize(samples: &[EstimateSample], regime: u8) -> RegimeSummary {
    let it = samples.iter().filter(|s| s.regime == regime);
    RegimeSummary {
        count: it.clone().count(),
        min_ratio: it.clone().map(|s| s.ratio).fold(f64::INFINITY, f64::min),
        max_ratio: it.map(|s| s.ratio).fold(f64::NEG_INFINITY, f64::max),
    }
}

fn sample_pair(domain: &DomainSpec, rng: &mut ChaCha8Rng, log_regime: bool) -> Option<(Point, Point)> {
    let diam = domain.diameter();
    let inner = match domain.shape() {
        Shape::Interval { a, b } => 0.5 * (b - a),
        Shape::Disc { radius, .. } => *radius,
        Shape::Rectangle { min, max } => 0.5 * (max.x - min.x).min(max.y - min.y),
        Shape::HalfLine => return None,
    };
    // distances spread over several decades
    let dx = inner * 10f64.powf(-rng.random_range(0.0..5.0)) * rng.random_range(0.2..1.0);
    let r = if log_regime {
        dx * 10f64.powf(rng.random_range(0.0..3.0))
    } else {
        dx * 10f64.powf(-rng.random_range(0.0..3.0))
    }
    .min(0.9 * diam);
    let x = match domain.shape() {
        Shape::Interval { a, b } => {
            if rng.random_bool(0.5) {
                Point::new1(a + dx)
            } else {
                Point::new1(b - dx)
            }
        }
        Shape::Disc { center, radius } => {
            let th = rng.random_range(0.0..2.0 * PI);
            center.add(&Point::polar(th).scale(radius - dx))
        }
        Shape::Rectangle { min, max } => {
            let side = rng.random_range(0..4);
            let u = rng.random_range(0.0..1.0);
            let (w, h) = (max.x - min.x, max.y - min.y);
            let p = match side {
                0 => Point::new2(min.x + u * w, min.y + dx),
                1 => Point::new2(min.x + u * w, max.y - dx),
                2 => Point::new2(min.x + dx, min.y + u * h),
                _ => Point::new2(max.x - dx, min.y + u * h),
            };
            if !domain.contains(&p) || (domain.distance(&p) - dx).abs() > 1e-12 * diam {
                return None;
            }
            p
        }
        Shape::HalfLine => unreachable!(),
    };
    let y = if domain.dim() == 1 {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        Point::new1(x.x + sign * r)
    } else {
        x.add(&Point::polar(rng.random_range(0.0..2.0 * PI)).scale(r))
    };
    if !domain.contains(&y) || x.dist(&y) == 0.0 {
        return None;
    }
    let d = domain.d_pair(&x, &y);
    let in_log = d <= x.dist(&y);
    (in_log == log_regime).then_some((x, y))
}

/// Samples pairs in both regimes of the two-sided estimate of `k_Ω` and
/// reports the ratio `k_Ω / (c_{N,s} RHS)` per regime, the normalisation
/// carried by `k_Ω` appearing on both sides. Pass iff all ratios lie in
/// `[1/ESTIMATE_BOUND, ESTIMATE_BOUND]`.
pub fn validate_estimates(domain: &DomainSpec, spec: &KernelSpec, sample_count: usize, seed: u64) -> Result<EstimateReport> {
    if !spec.has_aux() {
        return Err(Error::InvalidKernel("estimates concern the full Neumann kernel".into()));
    }
    if matches!(domain.shape(), Shape::HalfLine) {
        return Err(Error::InvalidDomain("estimate sampling needs a bounded domain".into()));
    }
    let eval = KernelEvaluator::new(domain, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(sample_count);
    let half = sample_count / 2;
    let mut attempts = 0usize;
    for k in 0..sample_count {
        let log_regime = k < half;
        loop {
            attempts += 1;
            if attempts > 1000 * sample_count.max(1) {
                return Err(Error::InvalidArgument("could not sample enough admissible pairs".into()));
            }
            if let Some(p) = sample_pair(domain, &mut rng, log_regime) {
                pairs.push((p, log_regime));
                break;
            }
        }
    }
    let beta = spec.beta();
    let samples = pairs
        .par_iter()
        .map(|&((x, y), log_regime)| {
            let aux = eval.aux(&x, &y)?;
            let d_pair = domain.d_pair(&x, &y);
            let dist = x.dist(&y);
            let rhs = spec.c_ns * estimate_rhs(beta, d_pair, dist);
            Ok(EstimateSample {
                x: x.as_array(),
                y: y.as_array(),
                d_pair,
                dist,
                aux,
                rhs,
                ratio: aux / rhs,
                regime: if log_regime { 1 } else { 2 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let log_regime = summarize(&samples, 1);
    let interior_regime = summarize(&samples, 2);
    let within = |r: &RegimeSummary| {
        r.count == 0 || (r.min_ratio >= 1.0 / ESTIMATE_BOUND && r.max_ratio <= ESTIMATE_BOUND)
    };
    Ok(EstimateReport {
        s: spec.s,
        dim: spec.dim,
        bound: ESTIMATE_BOUND,
        pass: within(&log_regime) && within(&interior_regime),
        log_regime,
        interior_regime,
        samples,
    })
}
