//! Regularity diagnostics for nodal solutions: oscillation-based Hölder
//! fits, boundary growth, the fractional normal quotient and the Dirichlet
//! contrast solve.

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_load, assemble_stiffness};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{DomainSpec, Mesh, Point};
use crate::kernels::{KernelSpec, Variant};
use crate::solver::{Gauge, Solution};

/// Fewest scales a fit accepts.
pub const MIN_SCALES: usize = 5;
/// Oscillations at or below this level are reported as flat.
pub const FLAT_LEVEL: f64 = 1e-14;
/// RMS log-residual above which a fit is flagged as not a clean power law.
pub const RESIDUAL_FLAG: f64 = 5e-3;

/// Least-squares power-law fit `value ≈ C r^slope`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub flat: bool,
    pub flagged: bool,
    /// `(r, value)` at every scale, coarsest first.
    pub table: Vec<(f64, f64)>,
    /// Scales left out of the fit window (coarsest and finest).
    pub excluded: Vec<f64>,
}

/// `count` dyadic scales `r_max, r_max/2, …`.
pub fn dyadic_scales(r_max: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| r_max * 0.5f64.powi(k as i32)).collect()
}

fn check_scales(scales: &[f64]) -> Result<()> {
    if scales.len() < MIN_SCALES {
        return Err(Error::InsufficientScales {
            needed: MIN_SCALES,
            got: scales.len(),
        });
    }
    if scales.windows(2).any(|w| !(w[1] < w[0])) || scales.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument("scales must be positive and strictly decreasing".into()));
    }
    Ok(())
}

fn fit_table(table: Vec<(f64, f64)>) -> ExponentFit {
    let excluded = vec![table[0].0, table[table.len() - 1].0];
    let window = &table[1..table.len() - 1];
    if window.iter().all(|&(_, v)| v <= FLAT_LEVEL) {
        return ExponentFit {
            slope: 0.0,
            intercept: 0.0,
            residual: 0.0,
            flat: true,
            flagged: false,
            table,
            excluded,
        };
    }
    let pts: Vec<(f64, f64)> = window
        .iter()
        .filter(|&&(_, v)| v > FLAT_LEVEL)
        .map(|&(r, v)| (r.ln(), v.ln()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    ExponentFit {
        slope,
        intercept,
        residual,
        flat: false,
        flagged: residual > RESIDUAL_FLAG,
        table,
        excluded,
    }
}

/// Ball `B_radius(center)`; an interval in 1D.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Point,
    pub radius: f64,
}

fn element_size_near(mesh: &Mesh, center: &Point, radius: f64) -> f64 {
    (0..mesh.element_count())
        .filter(|&e| mesh.element(e).iter().any(|&i| mesh.nodes()[i].dist(center) <= radius))
        .map(|e| mesh.element_diameter(e))
        .fold(0.0, f64::max)
}

/// Slope of `log osc(r)` against `log r`, where `osc(r)` is the largest
/// nodal oscillation over balls of radius `r` centred at nodes of `region`.
pub fn fit_holder(mesh: &Mesh, values: &[f64], region: &Region, scales: &[f64]) -> Result<ExponentFit> {
    check_scales(scales)?;
    if values.len() != mesh.node_count() {
        return Err(Error::InvalidArgument("nodal vector length mismatch".into()));
    }
    let r_min = scales[scales.len() - 1];
    let h = element_size_near(mesh, &region.center, region.radius + r_min);
    if h > 0.25 * r_min {
        return Err(Error::MeshTooCoarse(format!(
            "element size {h:e} does not resolve scale {r_min:e} with 4 elements"
        )));
    }
    let nodes = mesh.nodes();
    let centers: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].dist(&region.center) <= region.radius).collect();
    if centers.is_empty() {
        return Err(Error::InvalidArgument("region contains no nodes".into()));
    }
    let table = scales
        .iter()
        .map(|&r| {
            let osc = centers
                .iter()
                .map(|&c| {
                    let (lo, hi) = nodes
                        .iter()
                        .zip(values)
                        .filter(|(p, _)| p.dist(&nodes[c]) <= r)
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| (lo.min(v), hi.max(v)));
                    hi - lo
                })
                .fold(0.0, f64::max);
            (r, osc)
        })
        .collect();
    Ok(fit_table(table))
}

fn boundary_samples(mesh: &Mesh, values: &[f64], domain: &DomainSpec, z: &Point, ts: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    if values.len() != mesh.node_count() {
        return Err(Error::InvalidArgument("nodal vector length mismatch".into()));
    }
    let nu = domain.inward_normal(z)?;
    let h = element_size_near(mesh, z, 1e-12 * domain.diameter());
    let t_min = ts.iter().copied().fold(f64::INFINITY, f64::min);
    if t_min < h {
        return Err(Error::MeshTooCoarse(format!(
            "distance {t_min:e} is below the boundary element size {h:e}"
        )));
    }
    let uz = mesh
        .interpolate(values, z)
        .ok_or_else(|| Error::OutsideDomain {
            point: z.as_array(),
            reason: "boundary point not covered by the mesh".into(),
        })?;
    let rows = ts
        .iter()
        .map(|&t| {
            let p = z.add(&nu.scale(t));
            let v = mesh.interpolate(values, &p).ok_or_else(|| Error::OutsideDomain {
                point: p.as_array(),
                reason: "sample along the normal left the mesh".into(),
            })?;
            Ok((t, v - uz))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((uz, rows))
}

/// Fit of `|u(z + tν) − u(z)|` against `t` along the inward normal.
pub fn boundary_growth(mesh: &Mesh, values: &[f64], domain: &DomainSpec, z: &Point, ts: &[f64]) -> Result<ExponentFit> {
    check_scales(ts)?;
    let (_, rows) = boundary_samples(mesh, values, domain, z, ts)?;
    Ok(fit_table(rows.into_iter().map(|(t, d)| (t, d.abs())).collect()))
}

/// Quotients `(u(z+tν) − u(z)) / t^{2s−1}` with their verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientSequence {
    pub s: f64,
    pub entries: Vec<(f64, f64)>,
    pub threshold: f64,
    /// `|q|` decreases over the last three entries and ends at or below the threshold.
    pub pass: bool,
}

impl QuotientSequence {
    pub fn initial(&self) -> f64 {
        self.entries[0].1
    }

    pub fn last(&self) -> f64 {
        self.entries[self.entries.len() - 1].1
    }
}

/// Default decay factor applied to the first quotient when no threshold is given.
pub const QUOTIENT_DECAY: f64 = 0.2;

pub fn fractional_normal_quotient(
    mesh: &Mesh,
    values: &[f64],
    domain: &DomainSpec,
    z: &Point,
    s: f64,
    ts: &[f64],
    threshold: Option<f64>,
) -> Result<QuotientSequence> {
    if !(s > 0.5 && s < 1.0) {
        return Err(Error::InvalidArgument(format!("the quotient needs s in (1/2, 1), got {s}")));
    }
    if ts.len() < 3 || ts.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("need at least three strictly decreasing distances".into()));
    }
    let (_, rows) = boundary_samples(mesh, values, domain, z, ts)?;
    let entries: Vec<(f64, f64)> = rows.into_iter().map(|(t, d)| (t, d / t.powf(2.0 * s - 1.0))).collect();
    let threshold = threshold.unwrap_or(QUOTIENT_DECAY * entries[0].1.abs());
    let k = entries.len();
    let decreasing = entries[k - 3..].windows(2).all(|w| w[1].1.abs() < w[0].1.abs());
    let pass = decreasing && entries[k - 1].1.abs() <= threshold;
    Ok(QuotientSequence {
        s,
        entries,
        threshold,
        pass,
    })
}

/// Regional Dirichlet problem with zero boundary values, used as the
/// contrast case for boundary regularity.
pub fn dirichlet_reference_solve(mesh: &Mesh, domain: &DomainSpec, f: &dyn ScalarField, s: f64) -> Result<Solution> {
    if !(s > 0.5 && s < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "the regional Dirichlet problem needs s in (1/2, 1), got {s}"
        )));
    }
    let spec = KernelSpec::new(Variant::Regional, s, domain.dim())?;
    let a = assemble_stiffness(mesh, domain, &spec)?;
    let load = assemble_load(mesh, f, 2.0);
    let free: Vec<usize> = (0..mesh.node_count()).filter(|&i| !mesh.is_boundary(i)).collect();
    let a_ii = a.select_rows(&free).select_columns(&free);
    let f_i = load.vector.select_rows(&free);
    let chol = Cholesky::new(a_ii).ok_or_else(|| Error::SingularSystem("Dirichlet block is not positive definite".into()))?;
    let ui = chol.solve(&f_i);
    let mut u = DVector::zeros(mesh.node_count());
    for (k, &i) in free.iter().enumerate() {
        u[i] = ui[k];
    }
    let au = &a * &u;
    let res = (&au - &load.vector).select_rows(&free).norm();
    let fnorm = f_i.norm();
    Ok(Solution {
        energy: 0.5 * u.dot(&au) - load.vector.dot(&u),
        residual_norm: if fnorm > 0.0 { res / fnorm } else { res },
        coefficients: u,
        gauge: Gauge::None,
    })
}

/// Summary of the regularity diagnostics for one solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub alpha_global: Option<ExponentFit>,
    pub boundary_exponent: ExponentFit,
    pub quotient_sequence: QuotientSequence,
    pub verdicts: std::collections::BTreeMap<String, Verdict>,
}

/// Named check with its tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub rule: String,
}

/// Margin by which the boundary exponent must exceed `2s − 1`.
pub const EXPONENT_MARGIN: f64 = 0.05;

/// Boundary diagnostics at `z` over the distances `ts`, with an optional
/// interior Hölder fit over `region`.
pub fn regularity_report(
    mesh: &Mesh,
    values: &[f64],
    domain: &DomainSpec,
    z: &Point,
    s: f64,
    ts: &[f64],
    interior: Option<(&Region, &[f64])>,
) -> Result<RegularityReport> {
    let boundary_exponent = boundary_growth(mesh, values, domain, z, ts)?;
    let quotient_sequence = fractional_normal_quotient(mesh, values, domain, z, s, ts, None)?;
    let alpha_global = interior.map(|(r, sc)| fit_holder(mesh, values, r, sc)).transpose()?;
    let mut verdicts = std::collections::BTreeMap::new();
    let floor = 2.0 * s - 1.0 + EXPONENT_MARGIN;
    verdicts.insert(
        "boundary_exponent".to_string(),
        Verdict {
            pass: boundary_exponent.slope >= floor,
            value: boundary_exponent.slope,
            tolerance: floor,
            rule: "slope >= 2s-1+margin".into(),
        },
    );
    verdicts.insert(
        "normal_quotient".to_string(),
        Verdict {
            pass: quotient_sequence.pass,
            value: quotient_sequence.last().abs(),
            tolerance: quotient_sequence.threshold,
            rule: "|q| decreasing over the last three distances and final <= threshold".into(),
        },
    );
    Ok(RegularityReport {
        alpha_global,
        boundary_exponent,
        quotient_sequence,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ConstField, Fn1};
    use crate::geometry::{build_graded_mesh, mesh_from_coords};
    use crate::solver::{solve_stationary, SolveOptions};
    use crate::assembly::StiffnessSystem;

    fn unit() -> DomainSpec {
        DomainSpec::interval(0.0, 1.0).unwrap()
    }

    fn geometric_mesh(levels: usize) -> Mesh {
        // nodes 0, 2^{-levels}, …, then uniform: fine near 0
        let mut xs = vec![0.0];
        for k in (1..=levels).rev() {
            let a = 0.5f64.powi(k as i32);
            for j in 0..8 {
                xs.push(a * (1.0 + j as f64 / 8.0));
            }
        }
        xs.push(1.0);
        mesh_from_coords(xs, 1.0).unwrap()
    }

    fn sample(mesh: &Mesh, f: impl Fn(f64) -> f64) -> Vec<f64> {
        mesh.coords_1d().into_iter().map(f).collect()
    }

    #[test]
    fn holder_fit_recovers_square_root() {
        let mesh = geometric_mesh(24);
        let u = sample(&mesh, |x: f64| x.sqrt());
        let region = Region { center: Point::new1(0.0), radius: 1e-6 };
        let fit = fit_holder(&mesh, &u, &region, &dyadic_scales(0.01, 7)).unwrap();
        assert!((fit.slope - 0.5).abs() < 0.05, "{fit:?}");
        let shifted: Vec<f64> = u.iter().map(|v| 3.0 * v - 7.0).collect();
        let g = fit_holder(&mesh, &shifted, &region, &dyadic_scales(0.01, 7)).unwrap();
        assert!((g.slope - fit.slope).abs() < 1e-10);
    }

    #[test]
    fn holder_fit_flags_log_correction() {
        let mesh = geometric_mesh(40);
        let u = sample(&mesh, |x: f64| if x > 0.0 { x * x.ln().abs() } else { 0.0 });
        let region = Region { center: Point::new1(0.0), radius: 1e-12 };
        let fit = fit_holder(&mesh, &u, &region, &dyadic_scales(1e-6, 12)).unwrap();
        assert!(fit.slope > 0.9 && fit.slope < 1.0, "{fit:?}");
        assert!(fit.flagged, "{fit:?}");
    }

    #[test]
    fn constants_are_flat_and_few_scales_rejected() {
        let mesh = build_graded_mesh(&unit(), 512, 1.0).unwrap();
        let u = vec![2.0; 513];
        let region = Region { center: Point::new1(0.5), radius: 0.1 };
        let fit = fit_holder(&mesh, &u, &region, &dyadic_scales(0.2, 5)).unwrap();
        assert!(fit.flat);
        assert!(matches!(
            fit_holder(&mesh, &u, &region, &dyadic_scales(0.2, 4)),
            Err(Error::InsufficientScales { .. })
        ));
        assert!(matches!(
            fit_holder(&mesh, &u, &region, &dyadic_scales(0.01, 5)),
            Err(Error::MeshTooCoarse(_))
        ));
    }

    #[test]
    fn boundary_growth_of_distance_power() {
        let mesh = geometric_mesh(24);
        let u = sample(&mesh, |x: f64| x.sqrt());
        let fit = boundary_growth(&mesh, &u, &unit(), &Point::new1(0.0), &dyadic_scales(1e-2, 8)).unwrap();
        assert!((fit.slope - 0.5).abs() < 0.03, "{fit:?}");
        assert!(boundary_growth(&mesh, &u, &unit(), &Point::new1(1.0), &dyadic_scales(1e-2, 8)).is_err());
    }

    #[test]
    fn quotient_of_powers() {
        let mesh = geometric_mesh(24);
        let ts = dyadic_scales(0.1, 8);
        let p = sample(&mesh, |x: f64| x.sqrt());
        let q = fractional_normal_quotient(&mesh, &p, &unit(), &Point::new1(0.0), 0.75, &ts, None).unwrap();
        assert!(q.entries.iter().all(|e| (e.1 - 1.0).abs() < 0.02));
        assert!(!q.pass);
        let d = sample(&mesh, |x: f64| x);
        let q = fractional_normal_quotient(&mesh, &d, &unit(), &Point::new1(0.0), 0.75, &ts, None).unwrap();
        assert!(q.pass, "{q:?}");
        assert!(q.entries.iter().all(|&(t, v)| (v - t.sqrt()).abs() < 1e-12));
    }

    #[test]
    fn dirichlet_reference_properties() {
        let mesh = build_graded_mesh(&unit(), 32, 2.0).unwrap();
        let one = dirichlet_reference_solve(&mesh, &unit(), &ConstField(1.0), 0.75).unwrap();
        for i in 0..33 {
            if mesh.is_boundary(i) {
                assert_eq!(one.coefficients[i], 0.0);
            } else {
                assert!(one.coefficients[i] > 0.0);
            }
        }
        let zero = dirichlet_reference_solve(&mesh, &unit(), &ConstField(0.0), 0.75).unwrap();
        assert_eq!(zero.coefficients.amax(), 0.0);
        assert!(dirichlet_reference_solve(&mesh, &unit(), &ConstField(1.0), 0.5).is_err());
    }

    #[test]
    fn neumann_grows_faster_than_dirichlet() {
        let s = 0.75;
        let mesh = build_graded_mesh(&unit(), 128, crate::geometry::default_grading(s)).unwrap();
        let f = Fn1::new(|x: f64| (std::f64::consts::PI * x).cos());
        let spec = KernelSpec::new(Variant::FullNeumann, s, 1).unwrap();
        let sys = StiffnessSystem::build(&mesh, &unit(), &spec, &f, 2.0).unwrap();
        let un = solve_stationary(&sys, SolveOptions::default()).unwrap();
        let ud = dirichlet_reference_solve(&mesh, &unit(), &f, s).unwrap();
        let ts = dyadic_scales(0.05, 7);
        let z = Point::new1(0.0);
        let gn = boundary_growth(&mesh, un.coefficients.as_slice(), &unit(), &z, &ts).unwrap();
        let gd = boundary_growth(&mesh, ud.coefficients.as_slice(), &unit(), &z, &ts).unwrap();
        assert!(gn.slope >= gd.slope + 0.05, "{} {}", gn.slope, gd.slope);
        let qd = fractional_normal_quotient(&mesh, ud.coefficients.as_slice(), &unit(), &z, s, &ts, None).unwrap();
        assert!(!qd.pass);
    }
}
