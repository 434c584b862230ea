//! Scalar functions fed to pointwise operators and extensions.

use crate::geometry::{Mesh, Point};

pub trait ScalarField: Sync {
    fn value(&self, p: &Point) -> f64;

    /// Kinks and support edges (1D abscissae) that integration should respect.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Power terms `(coef, exponent)` with `u(x) = Σ coef·x^exponent` for
    /// `x ≥ far_start()` on unbounded domains; empty means vanishing.
    fn far_terms(&self) -> Vec<(f64, f64)> {
        Vec::new()
    }

    /// Abscissa beyond which [`Self::far_terms`] describes the field exactly.
    fn far_start(&self) -> f64 {
        f64::INFINITY
    }
}

/// A 1D closure `f(x)` with optional break points.
pub struct Fn1<F> {
    f: F,
    breaks: Vec<f64>,
}

impl<F: Fn(f64) -> f64 + Sync> Fn1<F> {
    pub fn new(f: F) -> Self {
        Fn1 { f, breaks: Vec::new() }
    }

    pub fn with_breaks(f: F, breaks: Vec<f64>) -> Self {
        Fn1 { f, breaks }
    }
}

impl<F: Fn(f64) -> f64 + Sync> ScalarField for Fn1<F> {
    fn value(&self, p: &Point) -> f64 {
        (self.f)(p.x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }
}

/// A 2D closure `f(x, y)`.
pub struct Fn2<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Sync> ScalarField for Fn2<F> {
    fn value(&self, p: &Point) -> f64 {
        (self.0)(p.x, p.y)
    }
}

/// `coef · x^p` on the half-line.
#[derive(Clone, Copy, Debug)]
pub struct PowerField {
    pub coef: f64,
    pub exponent: f64,
}

impl ScalarField for PowerField {
    fn value(&self, p: &Point) -> f64 {
        if p.x <= 0.0 {
            if self.exponent == 0.0 {
                self.coef
            } else {
                0.0
            }
        } else {
            self.coef * p.x.powf(self.exponent)
        }
    }

    fn far_terms(&self) -> Vec<(f64, f64)> {
        vec![(self.coef, self.exponent)]
    }

    fn far_start(&self) -> f64 {
        0.0
    }
}

/// Constant field.
#[derive(Clone, Copy, Debug)]
pub struct ConstField(pub f64);

impl ScalarField for ConstField {
    fn value(&self, _p: &Point) -> f64 {
        self.0
    }

    fn far_terms(&self) -> Vec<(f64, f64)> {
        vec![(self.0, 0.0)]
    }

    fn far_start(&self) -> f64 {
        0.0
    }
}

/// Continuous piecewise-linear function given by nodal values on a mesh.
#[derive(Clone, Copy, Debug)]
pub struct NodalField<'a> {
    pub mesh: &'a Mesh,
    pub values: &'a [f64],
}

impl<'a> NodalField<'a> {
    pub fn new(mesh: &'a Mesh, values: &'a [f64]) -> Self {
        assert_eq!(mesh.node_count(), values.len(), "nodal vector length mismatch");
        NodalField { mesh, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

impl ScalarField for NodalField<'_> {
    fn value(&self, p: &Point) -> f64 {
        self.mesh.interpolate(self.values, p).unwrap_or(f64::NAN)
    }

    fn breakpoints(&self) -> Vec<f64> {
        if self.mesh.dim() == 1 {
            self.mesh.coords_1d()
        } else {
            Vec::new()
        }
    }
}

/// `a·u + b·v`.
pub struct Combination<'a> {
    pub a: f64,
    pub u: &'a dyn ScalarField,
    pub b: f64,
    pub v: &'a dyn ScalarField,
}

impl ScalarField for Combination<'_> {
    fn value(&self, p: &Point) -> f64 {
        self.a * self.u.value(p) + self.b * self.v.value(p)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.u.breakpoints();
        b.extend(self.v.breakpoints());
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn far_terms(&self) -> Vec<(f64, f64)> {
        let mut t: Vec<(f64, f64)> = self.u.far_terms().into_iter().map(|(c, p)| (self.a * c, p)).collect();
        t.extend(self.v.far_terms().into_iter().map(|(c, p)| (self.b * c, p)));
        t
    }

    fn far_start(&self) -> f64 {
        self.u.far_start().max(self.v.far_start())
    }
}
