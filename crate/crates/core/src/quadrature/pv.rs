//! Pointwise evaluation of `L u(x) = PV ∫_Ω (u(x) − u(y)) K(x, y) dy`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{adaptive, adaptive_breaks, AdaptiveOptions, Estimate};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{normalize_angle, DomainSpec, Point, Shape};
use crate::kernels::{KernelEvaluator, KernelSpec};

/// Value of the operator at a point, split at the ball `B_{d(x)/2}(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PVEvaluation {
    pub value: f64,
    pub near_part: f64,
    pub far_part: f64,
    pub error_estimate: f64,
}

/// Accuracy controls for [`eval_pointwise_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PvOptions {
    pub rel_tol: f64,
    /// Ratio of the geometric panels clustering toward the boundary and infinity.
    pub panel_ratio: f64,
    /// Upper integration limit on the half-line, as a multiple of `x`.
    pub far_factor: f64,
}

impl Default for PvOptions {
    fn default() -> Self {
        PvOptions {
            rel_tol: 1e-10,
            panel_ratio: 4.0,
            far_factor: 1e10,
        }
    }
}

pub fn eval_pointwise_operator(
    u: &dyn ScalarField,
    x: &Point,
    domain: &DomainSpec,
    spec: &KernelSpec,
) -> Result<PVEvaluation> {
    let eval = KernelEvaluator::new(domain, spec)?;
    eval_pointwise_with(u, x, &eval, PvOptions::default())
}

/// As [`eval_pointwise_operator`] with a prepared kernel evaluator.
pub fn eval_pointwise_with(
    u: &dyn ScalarField,
    x: &Point,
    eval: &KernelEvaluator,
    opts: PvOptions,
) -> Result<PVEvaluation> {
    let domain = eval.domain();
    let d = domain.distance(x);
    if !domain.contains(x) || d <= 0.0 {
        return Err(Error::OutsideDomain {
            point: x.as_array(),
            reason: "operator evaluated at a point not in the open domain".into(),
        });
    }
    let ux = u.value(x);
    if !ux.is_finite() {
        return Err(Error::OutsideDomain {
            point: x.as_array(),
            reason: "field is not defined at the evaluation point".into(),
        });
    }
    let out = match domain.dim() {
        1 => eval_1d(u, x.x, ux, d, eval, opts),
        _ => eval_2d(u, x, ux, d, eval, opts),
    }?;
    if !out.value.is_finite() {
        return Err(Error::OutsideDomain {
            point: x.as_array(),
            reason: "field is not defined on the integration region".into(),
        });
    }
    Ok(out)
}

fn opts_rel(opts: &PvOptions) -> AdaptiveOptions {
    AdaptiveOptions {
        rel_tol: opts.rel_tol,
        abs_tol: 1e-300,
        max_intervals: 4000,
    }
}

/// `c ∫_0^ρ D2(h) h^{−1−2s} dh` with `h = ρ v^q`, `q = 1/(2 − 2s)`, which
/// turns the integrand into `q ρ^{2−2s} D2(h)/h²`.
fn near_second_difference<F: FnMut(f64) -> f64>(mut d2: F, rho: f64, s: f64, kinks: &[f64], opts: AdaptiveOptions) -> Estimate {
    let q = 1.0 / (2.0 - 2.0 * s);
    let scale = q * rho.powf(2.0 - 2.0 * s);
    let mut breaks = vec![0.0, 1.0];
    breaks.extend(kinks.iter().filter(|&&h| h > 0.0 && h < rho).map(|h| (h / rho).powf(1.0 / q)));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    // d2(h)/h² is even in h; below h_floor it is frozen to avoid cancellation
    let first_kink = kinks.iter().copied().filter(|&h| h > 0.0).fold(f64::INFINITY, f64::min);
    let h_floor = (1e-3 * rho).min(0.5 * first_kink);
    let f = |v: f64| {
        let h = (rho * v.powf(q)).max(h_floor);
        scale * d2(h) / (h * h)
    };
    adaptive_breaks(f, &breaks, opts)
}

fn geometric_toward(from: f64, to: f64, ratio: f64, levels: usize) -> Vec<f64> {
    // points to − (to − from)·ratio^{−k}
    let mut out = Vec::with_capacity(levels);
    let len = to - from;
    let mut r = 1.0;
    for _ in 0..levels {
        out.push(to - len * r);
        r /= ratio;
    }
    out
}

fn eval_1d(u: &dyn ScalarField, x: f64, ux: f64, d: f64, eval: &KernelEvaluator, opts: PvOptions) -> Result<PVEvaluation> {
    let spec = eval.spec();
    let (s, c, beta) = (spec.s, spec.c_ns, spec.beta());
    let aopts = opts_rel(&opts);
    let rho = 0.5 * d;
    let uv = |y: f64| u.value(&Point::new1(y));
    let kinks: Vec<f64> = u.breakpoints().iter().map(|b| (b - x).abs()).collect();
    let has_aux = spec.has_aux();

    let near_frac = near_second_difference(|h| 2.0 * ux - uv(x + h) - uv(x - h), rho, s, &kinks, aopts);
    let near_aux = if has_aux {
        let mut br = vec![0.0, rho];
        br.extend(kinks.iter().filter(|&&h| h > 0.0 && h < rho));
        br.sort_by(f64::total_cmp);
        br.dedup();
        adaptive_breaks(
            |h| (ux - uv(x + h)) * eval.aux_1d(x, x + h) + (ux - uv(x - h)) * eval.aux_1d(x, x - h),
            &br,
            AdaptiveOptions { rel_tol: opts.rel_tol.max(1e-9), ..aopts },
        )
    } else {
        Estimate::default()
    };
    let near = Estimate {
        value: c * near_frac.value + near_aux.value,
        error: c * near_frac.error + near_aux.error,
        evaluations: near_frac.evaluations + near_aux.evaluations,
    };

    let integrand = |y: f64| {
        let du = ux - uv(y);
        if du == 0.0 || !eval.domain().contains(&Point::new1(y)) {
            return 0.0;
        }
        let kf = c * (y - x).abs().powf(-beta);
        let ka = if has_aux { eval.aux_1d(x, y) } else { 0.0 };
        du * (kf + ka)
    };
    let field_breaks = u.breakpoints();
    let (left, right, y_hi) = match eval.domain().shape() {
        Shape::Interval { a, b } => {
            let mut l = geometric_toward(x - rho, *a, opts.panel_ratio, 20);
            l.push(*a);
            let mut r = geometric_toward(x + rho, *b, opts.panel_ratio, 20);
            r.push(*b);
            (l, r, *b)
        }
        _ => {
            let mut l = geometric_toward(x - rho, 0.0, opts.panel_ratio, 20);
            l.push(0.0);
            let y_hi = opts.far_factor * x;
            let mut r = vec![x + rho];
            let mut t = 2.0 * rho;
            while x + t < y_hi {
                r.push(x + t);
                t *= opts.panel_ratio;
            }
            r.push(y_hi);
            (l, r, y_hi)
        }
    };
    let with_field = |mut v: Vec<f64>, lo: f64, hi: f64| {
        v.extend(field_breaks.iter().copied().filter(|&b| b > lo && b < hi));
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let lo = *left.last().unwrap();
    let left = with_field(left, lo, x - rho);
    let right = with_field(right, x + rho, y_hi);
    let far_l = adaptive_breaks(integrand, &left, aopts);
    let far_r = adaptive_breaks(integrand, &right, aopts);
    let mut far = far_l + far_r;

    if matches!(eval.domain().shape(), Shape::HalfLine) {
        let (tail, bound) = half_line_tail(u, x, ux, y_hi, s, c, beta, has_aux)?;
        far.value += tail;
        far.error += bound;
    }
    Ok(PVEvaluation {
        value: near.value + far.value,
        near_part: near.value,
        far_part: far.value,
        error_estimate: near.error + far.error,
    })
}

/// `∫_Y^∞ (u(x) − u(y)) K(x, y) dy` on the half-line: exact for the
/// fractional part when `u` is a sum of powers beyond `Y`, and a bound for
/// the exterior correction.
#[allow(clippy::too_many_arguments)]
fn half_line_tail(
    u: &dyn ScalarField,
    x: f64,
    ux: f64,
    y: f64,
    s: f64,
    c: f64,
    beta: f64,
    has_aux: bool,
) -> Result<(f64, f64)> {
    let two_s = 2.0 * s;
    let mut tail = c * ux * (y - x).powf(-two_s) / two_s;
    let mut bound = 0.0;
    let uy = u.value(&Point::new1(y));
    if u.far_start() <= y {
        for (coef, p) in u.far_terms() {
            if p >= two_s {
                return Err(Error::NonIntegrable(format!(
                    "growth x^{p} is not integrable against the half-line kernel"
                )));
            }
            // (y − x)^{−β} = y^{−β} Σ_k binom(β+k−1, k) (x/y)^k
            let mut binom = 1.0;
            let mut sum = 0.0;
            for k in 0..6 {
                let kf = k as f64;
                if k > 0 {
                    binom *= (beta + kf - 1.0) / kf;
                }
                sum += binom * x.powi(k) * y.powf(p - beta - kf + 1.0) / (beta + kf - p - 1.0);
            }
            tail -= c * coef * sum;
        }
    } else {
        bound += c * uy.abs() * (y - x).powf(-two_s) / two_s;
    }
    if has_aux {
        // k(x, y) ≲ 2s c y^{−β}(1 + log(y/x)) for y ≫ x
        let scale = ux.abs().max(uy.abs());
        bound += scale * c * y.powf(-two_s) * (1.0 + (y / x).ln());
    }
    Ok((tail, bound))
}

fn eval_2d(u: &dyn ScalarField, x: &Point, ux: f64, d: f64, eval: &KernelEvaluator, opts: PvOptions) -> Result<PVEvaluation> {
    let spec = eval.spec();
    if spec.has_aux() {
        return Err(Error::InvalidKernel(
            "pointwise evaluation in 2D is available for the regional kernel".into(),
        ));
    }
    let (s, c) = (spec.s, spec.c_ns);
    let domain = eval.domain();
    let rho = 0.5 * d;
    let two_s = 2.0 * s;
    let inner_opts = AdaptiveOptions {
        rel_tol: (opts.rel_tol * 10.0).max(1e-10),
        abs_tol: 1e-300,
        max_intervals: 400,
    };
    let outer_opts = AdaptiveOptions {
        rel_tol: opts.rel_tol.max(1e-9),
        abs_tol: 1e-300,
        max_intervals: 400,
    };
    let mut near_err = 0.0;
    let near = adaptive(
        |theta: f64| {
            let e = Point::polar(theta);
            let est = near_second_difference(
                |r| 2.0 * ux - u.value(&x.add(&e.scale(r))) - u.value(&x.sub(&e.scale(r))),
                rho,
                s,
                &[],
                inner_opts,
            );
            near_err += est.error;
            est.value
        },
        0.0,
        PI,
        outer_opts,
    );
    let mut breaks = vec![0.0, 2.0 * PI];
    if let Shape::Rectangle { min, max } = domain.shape() {
        for v in [*min, Point::new2(max.x, min.y), *max, Point::new2(min.x, max.y)] {
            breaks.push(normalize_angle((v.y - x.y).atan2(v.x - x.x)));
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let far = adaptive_breaks(
        |theta: f64| {
            let e = Point::polar(theta);
            let Some((_, r_exit)) = domain.chord(x, &e) else {
                return 0.0;
            };
            if r_exit <= rho {
                return 0.0;
            }
            let mut rb = geometric_toward(rho, r_exit, opts.panel_ratio, 16);
            rb.push(r_exit);
            adaptive_breaks(
                |r| (ux - u.value(&x.add(&e.scale(r)))) * r.powf(-1.0 - two_s),
                &rb,
                inner_opts,
            )
            .value
        },
        &breaks,
        outer_opts,
    );
    let near_v = c * near.value;
    let far_v = c * far.value;
    Ok(PVEvaluation {
        value: near_v + far_v,
        near_part: near_v,
        far_part: far_v,
        error_estimate: c * (near.error + far.error) + c * near_err / 15.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Combination, ConstField, Fn1, PowerField};
    use crate::kernels::Variant;

    fn unit() -> DomainSpec {
        DomainSpec::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn constants_are_annihilated() {
        for variant in [Variant::FullNeumann, Variant::Regional] {
            let spec = KernelSpec::new(variant, 0.75, 1).unwrap();
            let v = eval_pointwise_operator(&ConstField(3.0), &Point::new1(0.3), &unit(), &spec).unwrap();
            assert!(v.value.abs() < 1e-12);
        }
    }

    #[test]
    fn half_line_power_is_null() {
        let spec = KernelSpec::new(Variant::HalfLine1D, 0.75, 1).unwrap();
        let u = PowerField { coef: 1.0, exponent: 0.5 };
        let x = 0.5f64;
        let v = eval_pointwise_operator(&u, &Point::new1(x), &DomainSpec::half_line(), &spec).unwrap();
        assert!(v.value.abs() * x.powf(1.5) < 1e-4, "{v:?}");
    }

    #[test]
    fn linear_growth_is_not_null() {
        let spec = KernelSpec::new(Variant::HalfLine1D, 0.75, 1).unwrap();
        let u = PowerField { coef: 1.0, exponent: 1.0 };
        let x = 0.5f64;
        let v = eval_pointwise_operator(&u, &Point::new1(x), &DomainSpec::half_line(), &spec).unwrap();
        assert!(v.value.abs() * x.powf(1.5) > 1e-2, "{v:?}");
    }

    #[test]
    fn operator_is_linear() {
        let spec = KernelSpec::new(Variant::FullNeumann, 0.6, 1).unwrap();
        let f = Fn1::new(|x: f64| (PI * x).cos());
        let g = Fn1::new(|x: f64| x * x);
        let comb = Combination { a: 2.0, u: &f, b: -3.0, v: &g };
        let x = Point::new1(0.37);
        let e = KernelEvaluator::new(&unit(), &spec).unwrap();
        let o = PvOptions::default();
        let lf = eval_pointwise_with(&f, &x, &e, o).unwrap().value;
        let lg = eval_pointwise_with(&g, &x, &e, o).unwrap().value;
        let lc = eval_pointwise_with(&comb, &x, &e, o).unwrap().value;
        assert!((lc - (2.0 * lf - 3.0 * lg)).abs() <= 1e-8 * lc.abs().max(1.0));
    }

    #[test]
    fn odd_part_does_not_enter_near_part() {
        let spec = KernelSpec::new(Variant::Regional, 0.75, 1).unwrap();
        let odd = Fn1::new(|x: f64| (x - 0.5).powi(3));
        let v = eval_pointwise_operator(&odd, &Point::new1(0.5), &unit(), &spec).unwrap();
        assert!(v.near_part.abs() < 1e-13);
    }

    #[test]
    fn points_outside_are_rejected() {
        let spec = KernelSpec::new(Variant::Regional, 0.75, 1).unwrap();
        assert!(eval_pointwise_operator(&ConstField(1.0), &Point::new1(0.0), &unit(), &spec).is_err());
        assert!(eval_pointwise_operator(&ConstField(1.0), &Point::new1(1.5), &unit(), &spec).is_err());
    }

    #[test]
    fn regional_disc_constant_and_symmetry() {
        let spec = KernelSpec::new(Variant::Regional, 0.75, 2).unwrap();
        let disc = DomainSpec::disc(Point::new2(0.0, 0.0), 1.0).unwrap();
        let c = eval_pointwise_operator(&ConstField(1.0), &Point::new2(0.1, 0.2), &disc, &spec).unwrap();
        assert!(c.value.abs() < 1e-12);
        let radial = crate::field::Fn2(|x: f64, y: f64| x * x + y * y);
        let a = eval_pointwise_operator(&radial, &Point::new2(0.3, 0.0), &disc, &spec).unwrap();
        let b = eval_pointwise_operator(&radial, &Point::new2(0.0, -0.3), &disc, &spec).unwrap();
        assert!((a.value - b.value).abs() < 1e-6 * a.value.abs());
    }
}
