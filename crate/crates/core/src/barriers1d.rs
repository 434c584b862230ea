//! Barriers on the half-line: the null power `x^{2s−1}`, the supersolution
//! `η x^{2s−1}` and the subsolution `η x^{2s−1} + Mζ`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{PowerField, ScalarField};
use crate::geometry::{DomainSpec, Point};
use crate::kernels::{KernelEvaluator, KernelSpec, Variant};
use crate::quadrature::pv::{eval_pointwise_with, PvOptions};

/// Positivity floor for the supersolution verdict.
pub const POSITIVITY_FLOOR: f64 = 1e-8;
/// Largest amplitude tried by [`find_subsolution_m`].
pub const MAX_AMPLITUDE: f64 = 1e6;

/// Cutoff profile multiplying the power.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// 1 on `[0, r0]`, `exp(1 − 1/(1−t²))` with `t = (x−r0)/r0` on `(r0, 2r0)`, 0 beyond.
    Smooth,
    /// `η ≡ 1`.
    None,
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub s: f64,
    pub r0: f64,
    pub eta: Cutoff,
    /// Bump amplitude `M`.
    pub m: f64,
    pub c_target: f64,
    /// `HalfLine1D` for the log-improved bounds, `Regional` for the plain ones.
    pub variant: Variant,
}

impl BarrierSpec {
    pub fn new(s: f64, r0: f64, variant: Variant) -> Result<Self> {
        let b = BarrierSpec {
            s,
            r0,
            eta: Cutoff::Smooth,
            m: 0.0,
            c_target: 0.0,
            variant,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.5 && self.s < 1.0) {
            return Err(Error::InvalidArgument(format!("barriers need s in (1/2, 1), got {}", self.s)));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::InvalidArgument(format!("r0 must be positive, got {}", self.r0)));
        }
        if !(self.m >= 0.0 && self.c_target >= 0.0) {
            return Err(Error::InvalidArgument("M and c_target must be nonnegative".into()));
        }
        match self.variant {
            Variant::HalfLine1D | Variant::Regional => Ok(()),
            Variant::FullNeumann => Err(Error::InvalidKernel(
                "half-line barriers use HalfLine1D or Regional".into(),
            )),
        }
    }

    pub fn eta(&self, x: f64) -> f64 {
        match self.eta {
            Cutoff::None => 1.0,
            Cutoff::Smooth if x <= self.r0 => 1.0,
            Cutoff::Smooth => bump((x - self.r0) / self.r0),
        }
    }

    /// Bump on `(r0, 2r0)` with maximum 1 at `1.5 r0`.
    pub fn zeta(&self, x: f64) -> f64 {
        bump((x - 1.5 * self.r0) / (0.5 * self.r0))
    }

    fn kernel(&self) -> Result<(DomainSpec, KernelEvaluator)> {
        let domain = DomainSpec::half_line();
        let spec = KernelSpec::new(self.variant, self.s, 1)?;
        let eval = KernelEvaluator::new(&domain, &spec)?;
        Ok((domain, eval))
    }

    /// `1 + log⁻(x/r0)` for the log-improved variant, 1 otherwise.
    pub fn weight(&self, x: f64) -> f64 {
        match self.variant {
            Variant::HalfLine1D => 1.0 + (x / self.r0).ln().min(0.0).abs(),
            _ => 1.0,
        }
    }

    /// Checks ranges, supports and a bounded second difference on a
    /// 1000-point grid over `[0, 3r0]`.
    pub fn validate_profiles(&self) -> Result<()> {
        let n = 1000;
        let h = 3.0 * self.r0 / n as f64;
        let xs: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let mut zmax: f64 = 0.0;
        for &x in &xs {
            let (e, z) = (self.eta(x), self.zeta(x));
            if !(0.0..=1.0).contains(&e) || !(0.0..=1.0).contains(&z) {
                return Err(Error::InvalidArgument(format!("profile out of range at x = {x}")));
            }
            if self.eta == Cutoff::Smooth && ((x <= self.r0 && e != 1.0) || (x >= 2.0 * self.r0 && e != 0.0)) {
                return Err(Error::InvalidArgument(format!("cutoff support violated at x = {x}")));
            }
            if (x <= self.r0 || x >= 2.0 * self.r0) && z != 0.0 {
                return Err(Error::InvalidArgument(format!("bump support violated at x = {x}")));
            }
            zmax = zmax.max(z);
        }
        if zmax < 0.99 {
            return Err(Error::InvalidArgument("bump is not normalised".into()));
        }
        // max |ζ''| ≈ 84/r0², max |η''| ≈ 21/r0²
        let bound = 100.0 / (self.r0 * self.r0);
        for w in xs.windows(3) {
            for f in [self.eta(w[0]) - 2.0 * self.eta(w[1]) + self.eta(w[2]), self.zeta(w[0]) - 2.0 * self.zeta(w[1]) + self.zeta(w[2])] {
                if (f / (h * h)).abs() > bound {
                    return Err(Error::InvalidArgument(format!("profile second difference too large near x = {}", w[1])));
                }
            }
        }
        Ok(())
    }
}

/// `η(x) x^{2s−1} + M ζ(x)` for `x > 0`.
struct Barrier<'a> {
    spec: &'a BarrierSpec,
    power: f64,
    m: f64,
    with_power: bool,
}

impl ScalarField for Barrier<'_> {
    fn value(&self, p: &Point) -> f64 {
        let x = p.x;
        if x <= 0.0 {
            return 0.0;
        }
        let base = if self.with_power { self.spec.eta(x) * x.powf(self.power) } else { 0.0 };
        base + self.m * self.spec.zeta(x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![self.spec.r0, 2.0 * self.spec.r0]
    }

    fn far_terms(&self) -> Vec<(f64, f64)> {
        match (self.spec.eta, self.with_power) {
            (Cutoff::None, true) => vec![(1.0, self.power)],
            _ => Vec::new(),
        }
    }

    fn far_start(&self) -> f64 {
        match (self.spec.eta, self.with_power) {
            (Cutoff::None, true) => 0.0,
            _ => 2.0 * self.spec.r0,
        }
    }
}

/// Pointwise certificate `(x, L φ(x), L φ(x) / weight(x))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub x: f64,
    pub value: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerNullReport {
    pub s: f64,
    pub variant: Variant,
    /// `|L x^{2s−1}| · x^{2s}` per sample.
    pub defects: Vec<(f64, f64)>,
    pub max_defect: f64,
}

fn check_samples(xs: &[f64], hi: f64) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("no sample points".into()));
    }
    for &x in xs {
        if !(x > 0.0 && x < hi) {
            return Err(Error::InvalidArgument(format!("sample {x} outside (0, {hi})")));
        }
    }
    Ok(())
}

/// Dimensionless defect of `L(x^{2s−1}) = 0` on the half-line.
pub fn check_power_null(s: f64, x_samples: &[f64], variant: Variant) -> Result<PowerNullReport> {
    check_samples(x_samples, f64::INFINITY)?;
    let domain = DomainSpec::half_line();
    let spec = KernelSpec::new(variant, s, 1)?;
    let eval = KernelEvaluator::new(&domain, &spec)?;
    let u = PowerField {
        coef: 1.0,
        exponent: 2.0 * s - 1.0,
    };
    let defects = x_samples
        .iter()
        .map(|&x| {
            let v = eval_pointwise_with(&u, &Point::new1(x), &eval, PvOptions::default())?;
            Ok((x, v.value.abs() * x.powf(2.0 * s)))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_defect = defects.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok(PowerNullReport {
        s,
        variant,
        defects,
        max_defect,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionReport {
    pub spec: BarrierSpec,
    pub certificates: Vec<Certificate>,
    pub min_ratio: f64,
    pub pass: bool,
}

fn evaluate(spec: &BarrierSpec, eval: &KernelEvaluator, xs: &[f64], m: f64, with_power: bool) -> Result<Vec<f64>> {
    let field = Barrier {
        spec,
        power: 2.0 * spec.s - 1.0,
        m,
        with_power,
    };
    xs.iter()
        .map(|&x| Ok(eval_pointwise_with(&field, &Point::new1(x), eval, PvOptions::default())?.value))
        .collect()
}

/// `L φ̄ ≥ c̄ (1 + log⁻(x/r0))` on `(0, r0)`: reports the smallest ratio.
pub fn check_supersolution(spec: &BarrierSpec, x_samples: &[f64]) -> Result<SupersolutionReport> {
    spec.validate()?;
    check_samples(x_samples, spec.r0)?;
    let (_, eval) = spec.kernel()?;
    let values = evaluate(spec, &eval, x_samples, 0.0, true)?;
    let certificates: Vec<Certificate> = x_samples
        .iter()
        .zip(values)
        .map(|(&x, value)| Certificate {
            x,
            value,
            ratio: value / spec.weight(x),
        })
        .collect();
    let min_ratio = certificates.iter().map(|c| c.ratio).fold(f64::INFINITY, f64::min);
    Ok(SupersolutionReport {
        spec: *spec,
        certificates,
        min_ratio,
        pass: min_ratio > POSITIVITY_FLOOR,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionReport {
    pub spec: BarrierSpec,
    pub m_star: f64,
    /// Amplitudes tried in order, with whether each met the bound.
    pub trials: Vec<(f64, bool)>,
    /// Certificates at `M = m_star`.
    pub certificates: Vec<Certificate>,
}

/// Smallest tested `M` with `L(φ̄ + Mζ) ≤ −c_target·weight` at every sample.
///
/// Uses linearity: `L φ̄` and `L ζ` are evaluated once, then `M` is doubled
/// from 1 until the bound holds and refined by bisection to relative width 1e-3.
pub fn find_subsolution_m(spec: &BarrierSpec, c_target: f64, x_samples: &[f64]) -> Result<SubsolutionReport> {
    spec.validate()?;
    if !(c_target >= 0.0) {
        return Err(Error::InvalidArgument(format!("c_target must be nonnegative, got {c_target}")));
    }
    check_samples(x_samples, spec.r0)?;
    let (_, eval) = spec.kernel()?;
    let lphi = evaluate(spec, &eval, x_samples, 0.0, true)?;
    let lzeta = evaluate(spec, &eval, x_samples, 1.0, false)?;
    let ok = |m: f64| {
        x_samples
            .iter()
            .enumerate()
            .all(|(i, &x)| lphi[i] + m * lzeta[i] <= -c_target * spec.weight(x))
    };
    let mut trials = Vec::new();
    let mut hi = 0.0;
    let mut lo = 0.0;
    let mut found = ok(0.0);
    trials.push((0.0, found));
    if !found {
        let mut m = 1.0;
        while m <= MAX_AMPLITUDE {
            let pass = ok(m);
            trials.push((m, pass));
            if pass {
                hi = m;
                found = true;
                break;
            }
            lo = m;
            m *= 2.0;
        }
        if !found {
            return Err(Error::SearchFailed(MAX_AMPLITUDE));
        }
        while hi - lo > 1e-3 * hi {
            let mid = 0.5 * (lo + hi);
            let pass = ok(mid);
            trials.push((mid, pass));
            if pass {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let certificates = x_samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let value = lphi[i] + hi * lzeta[i];
            Certificate {
                x,
                value,
                ratio: value / spec.weight(x),
            }
        })
        .collect();
    Ok(SubsolutionReport {
        spec: BarrierSpec { m: hi, c_target, ..*spec },
        m_star: hi,
        trials,
        certificates,
    })
}

/// Writes certificates as CSV with columns `x,value,ratio`.
pub fn write_certificates(path: &Path, certificates: &[Certificate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    for c in certificates {
        w.serialize(c).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_is_null_for_both_variants() {
        for variant in [Variant::HalfLine1D, Variant::Regional] {
            let r = check_power_null(0.6, &[0.1, 1.0, 10.0], variant).unwrap();
            assert!(r.max_defect <= 1e-4, "{r:?}");
        }
        let r = check_power_null(0.75, &[0.5], Variant::HalfLine1D).unwrap();
        assert!(r.max_defect <= 1e-4, "{r:?}");
        assert!(check_power_null(0.75, &[0.0], Variant::HalfLine1D).is_err());
    }

    #[test]
    fn profiles_are_valid() {
        for r0 in [0.5, 1.0, 3.0] {
            BarrierSpec::new(0.75, r0, Variant::HalfLine1D).unwrap().validate_profiles().unwrap();
        }
        assert!(BarrierSpec::new(0.5, 1.0, Variant::HalfLine1D).is_err());
    }

    #[test]
    fn supersolution_is_positive() {
        let spec = BarrierSpec::new(0.75, 1.0, Variant::HalfLine1D).unwrap();
        let r = check_supersolution(&spec, &[0.05, 0.2, 0.5, 0.9]).unwrap();
        assert!(r.pass && r.min_ratio > 0.0, "{r:?}");
        let at = r.certificates[0];
        assert!(at.ratio < at.value);
        assert!(check_supersolution(&spec, &[1.5]).is_err());
    }

    #[test]
    fn pure_power_is_not_a_strict_supersolution() {
        let spec = BarrierSpec {
            eta: Cutoff::None,
            ..BarrierSpec::new(0.75, 1.0, Variant::Regional).unwrap()
        };
        let r = check_supersolution(&spec, &[0.2, 0.5]).unwrap();
        assert!(!r.pass, "{r:?}");
    }

    #[test]
    fn subsolution_amplitude_is_found_and_monotone() {
        let spec = BarrierSpec::new(0.75, 1.0, Variant::HalfLine1D).unwrap();
        let xs = [0.05, 0.2, 0.5, 0.9];
        let m0 = find_subsolution_m(&spec, 0.0, &xs).unwrap();
        let m1 = find_subsolution_m(&spec, 1.0, &xs).unwrap();
        assert!(m0.m_star > 0.0 && m0.m_star.is_finite());
        assert!(m1.m_star >= m0.m_star);
        assert_eq!(m0.trials[0], (0.0, false));
        assert!(m1.certificates.iter().all(|c| c.ratio <= -1.0));
    }

    #[test]
    fn rescaling_follows_inverse_law() {
        let a = BarrierSpec::new(0.75, 1.0, Variant::Regional).unwrap();
        let b = BarrierSpec { r0: 2.0, ..a };
        let va = check_supersolution(&a, &[0.3]).unwrap().certificates[0].value;
        let vb = check_supersolution(&b, &[0.6]).unwrap().certificates[0].value;
        assert!((vb - va / 2.0).abs() < 1e-6 * va.abs(), "{va} {vb}");
    }

    #[test]
    fn certificates_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cert.csv");
        let c = [Certificate { x: 0.5, value: 1.0, ratio: 0.5 }];
        write_certificates(&path, &c).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "x,value,ratio\n0.5,1.0,0.5\n");
    }
}
