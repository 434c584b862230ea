//! Named analytic data with exact integrals where they exist.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{DomainSpec, Point, Shape};

pub const CATALOG_NAMES: [&str; 7] = ["zero", "one", "cos_pi", "sin_2pi", "sign_half", "power(p)", "bump"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CatalogFn {
    Zero,
    One,
    CosPi,
    Sin2Pi,
    SignHalf,
    /// `max(x, 0)^p`, `p ≥ 0`.
    Power(f64),
    /// `exp(−1/(1 − r²))` with `r = |x − center| / radius`.
    Bump { center: Point, radius: f64 },
}

impl ScalarField for CatalogFn {
    fn value(&self, p: &Point) -> f64 {
        match *self {
            CatalogFn::Zero => 0.0,
            CatalogFn::One => 1.0,
            CatalogFn::CosPi => (PI * p.x).cos(),
            CatalogFn::Sin2Pi => (2.0 * PI * p.x).sin(),
            CatalogFn::SignHalf => {
                if p.x > 0.5 {
                    1.0
                } else if p.x < 0.5 {
                    -1.0
                } else {
                    0.0
                }
            }
            CatalogFn::Power(e) => {
                if p.x > 0.0 {
                    p.x.powf(e)
                } else if e == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            CatalogFn::Bump { center, radius } => {
                let r = p.dist(&center) / radius;
                if r < 1.0 {
                    (-1.0 / (1.0 - r * r)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match *self {
            CatalogFn::SignHalf => vec![0.5],
            CatalogFn::Power(_) => vec![0.0],
            CatalogFn::Bump { center, radius } => vec![center.x - radius, center.x + radius],
            _ => Vec::new(),
        }
    }
}

fn parse_power(name: &str) -> Option<Result<f64>> {
    let inner = name.strip_prefix("power(")?.strip_suffix(')')?;
    Some(
        inner
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::UnknownExpression(name.to_string()))
            .and_then(|p| {
                if p >= 0.0 && p.is_finite() {
                    Ok(p)
                } else {
                    Err(Error::UnknownExpression(format!("{name}: exponent must be finite and nonnegative")))
                }
            }),
    )
}

/// Function named `name` on `domain`, with `∫_Ω f` when known in closed form.
pub fn catalog_lookup(name: &str, domain: &DomainSpec) -> Result<(CatalogFn, Option<f64>)> {
    let key = name.trim();
    let f = match key {
        "zero" => CatalogFn::Zero,
        "one" => CatalogFn::One,
        "cos_pi" => CatalogFn::CosPi,
        "sin_2pi" => CatalogFn::Sin2Pi,
        "sign_half" => CatalogFn::SignHalf,
        "bump" => CatalogFn::Bump {
            center: domain.center(),
            radius: 0.25 * domain.diameter(),
        },
        _ => match parse_power(key) {
            Some(p) => CatalogFn::Power(p?),
            None => return Err(Error::UnknownExpression(name.to_string())),
        },
    };
    Ok((f, exact_integral(&f, domain)))
}

fn exact_integral(f: &CatalogFn, domain: &DomainSpec) -> Option<f64> {
    match (f, domain.shape()) {
        (CatalogFn::Zero, _) => Some(0.0),
        (CatalogFn::One, Shape::HalfLine) => None,
        (CatalogFn::One, _) => Some(domain.measure()),
        (_, Shape::Interval { a, b }) => {
            let (a, b) = (*a, *b);
            match *f {
                CatalogFn::CosPi => Some(((PI * b).sin() - (PI * a).sin()) / PI),
                CatalogFn::Sin2Pi => Some(((2.0 * PI * a).cos() - (2.0 * PI * b).cos()) / (2.0 * PI)),
                CatalogFn::SignHalf => {
                    let c = 0.5f64.clamp(a, b);
                    Some((b - c) - (c - a))
                }
                CatalogFn::Power(p) => Some((b.max(0.0).powf(p + 1.0) - a.max(0.0).powf(p + 1.0)) / (p + 1.0)),
                _ => None,
            }
        }
        (CatalogFn::Sin2Pi, Shape::Rectangle { min, max }) => {
            Some(((2.0 * PI * min.x).cos() - (2.0 * PI * max.x).cos()) / (2.0 * PI) * (max.y - min.y))
        }
        (CatalogFn::CosPi, Shape::Rectangle { min, max }) => {
            Some(((PI * max.x).sin() - (PI * min.x).sin()) / PI * (max.y - min.y))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> DomainSpec {
        DomainSpec::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn closed_form_integrals() {
        assert_eq!(catalog_lookup("cos_pi", &unit()).unwrap().1.unwrap().abs() < 1e-15, true);
        assert_eq!(catalog_lookup("one", &unit()).unwrap().1, Some(1.0));
        let p = catalog_lookup("power(0.5)", &unit()).unwrap().1.unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
        assert!(catalog_lookup("sign_half", &unit()).unwrap().1.unwrap().abs() < 1e-15);
        assert!(catalog_lookup("sin_2pi", &unit()).unwrap().1.unwrap().abs() < 1e-15);
        assert_eq!(catalog_lookup("bump", &unit()).unwrap().1, None);
    }

    #[test]
    fn integrals_match_quadrature() {
        let d = DomainSpec::interval(-0.3, 1.7).unwrap();
        for name in ["cos_pi", "sin_2pi", "sign_half", "power(1.5)", "one"] {
            let (f, exact) = catalog_lookup(name, &d).unwrap();
            let mut breaks = vec![-0.3, 1.7];
            breaks.extend(f.breakpoints().into_iter().filter(|b| *b > -0.3 && *b < 1.7));
            breaks.sort_by(f64::total_cmp);
            let q = crate::quadrature::adaptive_breaks(
                |x| f.value(&Point::new1(x)),
                &breaks,
                crate::quadrature::AdaptiveOptions::rel(1e-12),
            );
            assert!((q.value - exact.unwrap()).abs() < 1e-10, "{name}");
        }
    }

    #[test]
    fn unknown_names_rejected() {
        for bad in ["cos", "power(x)", "power(-1)", "power(0.5"] {
            assert!(matches!(catalog_lookup(bad, &unit()), Err(Error::UnknownExpression(_))), "{bad}");
        }
        let (b, _) = catalog_lookup("bump", &unit()).unwrap();
        assert!(b.value(&Point::new1(0.5)) > 0.0);
        assert_eq!(b.value(&Point::new1(0.8)), 0.0);
    }
}
