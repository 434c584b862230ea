//! Quadrature rules and singular-integral engines.
//!
//! * [`gauss_legendre`]: cached Gauss–Legendre tables.
//! * [`adaptive`]: global adaptive Gauss–Kronrod (7/15) with error estimate.
//! * [`singular`]: element-pair integration of weakly singular kernels.
//! * [`pv`]: pointwise evaluation of principal-value operators.

use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::geometry::Point;

pub mod pv;
pub mod singular;

pub use pv::{eval_pointwise_operator, PVEvaluation};
pub use singular::{integrate_pair_singular, DiagonalBehaviour, Segment};

/// Coordinate transform applied before the tensor rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    None,
    DuffySplit,
    DiagonalGraded,
}

/// A one-dimensional rule on a reference element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadRule {
    pub points: Vec<(f64, f64)>,
    pub order: usize,
    pub transform: Transform,
}

impl QuadRule {
    /// Gauss–Legendre rule with `n` points on `[0, 1]`.
    pub fn gauss_unit(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        QuadRule {
            points: x.iter().zip(w).map(|(&x, &w)| (0.5 * (x + 1.0), 0.5 * w)).collect(),
            order: 2 * n - 1,
            transform: Transform::None,
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = b - a;
        self.points.iter().map(|&(x, w)| w * f(a + h * x)).sum::<f64>() * h
    }
}

const MAX_TABLE: usize = 64;

fn table() -> &'static Vec<(Vec<f64>, Vec<f64>)> {
    static TABLE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=MAX_TABLE).map(compute_gauss_legendre).collect())
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (&'static [f64], &'static [f64]) {
    assert!((1..=MAX_TABLE).contains(&n), "Gauss-Legendre order {n} out of table range");
    let (x, w) = &table()[n];
    (x, w)
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x[0] = 0.0;
            w[0] = 2.0;
            break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Fixed Gauss–Legendre integral of `f` over `[a, b]` with `n` points.
pub fn gauss<F: FnMut(f64) -> f64>(n: usize, a: f64, b: f64, mut f: F) -> f64 {
    let (x, w) = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(w).map(|(&xi, &wi)| wi * f(c + h * xi)).sum::<f64>() * h
}

/// Fixed rule with error estimate from comparison against the `n + 2` point rule.
pub fn gauss_two_level<F: FnMut(f64) -> f64>(n: usize, a: f64, b: f64, mut f: F) -> Estimate {
    let coarse = gauss(n, a, b, &mut f);
    let fine = gauss(n + 2, a, b, &mut f);
    Estimate {
        value: fine,
        error: (fine - coarse).abs(),
        evaluations: 2 * n + 2,
    }
}

/// Panels `[lo, lo·r], [lo·r, lo·r²], …` covering `[lo, hi]` geometrically.
pub fn geometric_panels(lo: f64, hi: f64, ratio: f64) -> Vec<(f64, f64)> {
    assert!(lo > 0.0 && hi > lo && ratio > 1.0);
    let mut out = Vec::new();
    let mut a = lo;
    while a < hi {
        let b = (a * ratio).min(hi);
        if b >= hi * (1.0 - 1e-12) {
            out.push((a, hi));
            break;
        }
        out.push((a, b));
        a = b;
    }
    out
}

/// Integral value with absolute error estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, o: Estimate) -> Estimate {
        Estimate {
            value: self.value + o.value,
            error: self.error + o.error,
            evaluations: self.evaluations + o.evaluations,
        }
    }
}

impl std::iter::Sum for Estimate {
    fn sum<I: Iterator<Item = Estimate>>(iter: I) -> Estimate {
        iter.fold(Estimate::default(), |a, b| a + b)
    }
}

/// Tolerances for [`adaptive`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_intervals: 2000,
        }
    }
}

impl AdaptiveOptions {
    pub fn rel(rel_tol: f64) -> Self {
        AdaptiveOptions {
            rel_tol,
            ..Default::default()
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gaussv = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gaussv += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gaussv) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Global adaptive Gauss–Kronrod integration over `[a, b]`.
pub fn adaptive<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, opts: AdaptiveOptions) -> Estimate {
    adaptive_breaks(f, &[a, b], opts)
}

/// Adaptive integration over the union of `[breaks[i], breaks[i+1]]`; the
/// break points seed the initial partition (kinks, peaks, singular endpoints).
pub fn adaptive_breaks<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], opts: AdaptiveOptions) -> Estimate {
    let mut heap = BinaryHeap::new();
    let mut evals = 0usize;
    let mut total = 0.0;
    let mut err = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (v, e) = gk15(&mut f, a, b);
        evals += 15;
        total += v;
        err += e;
        heap.push(Piece { a, b, value: v, error: e });
    }
    while heap.len() < opts.max_intervals {
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // interval exhausted at machine resolution
            heap.push(Piece { error: 0.0, ..worst });
            err -= worst.error;
            continue;
        }
        let (v1, e1) = gk15(&mut f, worst.a, m);
        let (v2, e2) = gk15(&mut f, m, worst.b);
        evals += 30;
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: worst.b, value: v2, error: e2 });
    }
    // re-sum for a clean total
    let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Estimate {
        value,
        error,
        evaluations: evals,
    }
}

/// Integral over `[0, hi]` with geometric initial panels clustering toward 0.
/// Suited for integrands with an integrable endpoint singularity or a
/// structure at scale `lo` near zero.
pub fn adaptive_toward_zero<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64, opts: AdaptiveOptions) -> Estimate {
    let mut breaks = vec![0.0];
    if lo < hi {
        for (a, _) in geometric_panels(lo, hi, 4.0) {
            breaks.push(a);
        }
    }
    breaks.push(hi);
    adaptive_breaks(f, &breaks, opts)
}

/// Collapsed (Duffy) tensor Gauss rule on a triangle. Returns `(point, weight)`
/// pairs with weights summing to the triangle area.
pub fn triangle_rule(a: &Point, b: &Point, c: &Point, n: usize) -> Vec<(Point, f64)> {
    let (x, w) = gauss_legendre(n);
    let area2 = ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let u = 0.5 * (x[i] + 1.0);
        for j in 0..n {
            let v = 0.5 * (x[j] + 1.0);
            // (u, v) in the unit square -> barycentric (1-u, u(1-v), uv)
            let l1 = u * (1.0 - v);
            let l2 = u * v;
            let l0 = 1.0 - u;
            let p = Point::new2(
                l0 * a.x + l1 * b.x + l2 * c.x,
                l0 * a.y + l1 * b.y + l2 * c.y,
            );
            out.push((p, 0.25 * w[i] * w[j] * u * area2));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_weights_sum_and_exactness() {
        for n in [1, 2, 5, 8, 16, 33, 64] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            assert!(w.iter().all(|&wi| wi > 0.0));
            let deg = 2 * n - 1;
            let val: f64 = x.iter().zip(w).map(|(&xi, &wi)| wi * xi.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert_relative_eq!(val, exact, epsilon = 1e-12);
        }
        let rule = QuadRule::gauss_unit(6);
        assert_relative_eq!(rule.weight_sum(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularities() {
        let e = adaptive(|x: f64| x.powf(-0.5), 0.0, 1.0, AdaptiveOptions::rel(1e-10));
        assert_relative_eq!(e.value, 2.0, epsilon = 1e-8);
        let l = adaptive_toward_zero(|x: f64| x.ln(), 1e-12, 1.0, AdaptiveOptions::rel(1e-12));
        assert_relative_eq!(l.value, -1.0, epsilon = 1e-10);
    }

    #[test]
    fn two_level_error_bounds_true_error() {
        let e = gauss_two_level(4, 0.0, 2.0, |x: f64| x.exp());
        let exact = 2f64.exp() - 1.0;
        assert!((e.value - exact).abs() <= e.error);
    }

    #[test]
    fn triangle_rule_integrates_polynomials() {
        let (a, b, c) = (Point::new2(0.0, 0.0), Point::new2(2.0, 0.0), Point::new2(0.0, 1.0));
        let r = triangle_rule(&a, &b, &c, 4);
        let area: f64 = r.iter().map(|p| p.1).sum();
        assert_relative_eq!(area, 1.0, epsilon = 1e-14);
        // ∫ x dA over the triangle = area · centroid_x = 2/3
        let mx: f64 = r.iter().map(|(p, w)| w * p.x).sum();
        assert_relative_eq!(mx, 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn geometric_panels_cover_range() {
        let p = geometric_panels(1e-3, 1.0, 2.0);
        assert_eq!(p.first().unwrap().0, 1e-3);
        assert_eq!(p.last().unwrap().1, 1.0);
        for w in p.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }
}
