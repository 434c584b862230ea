//! Stationary solves with gauge fixing and the implicit-Euler heat flow.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::StiffnessSystem;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{DomainSpec, Point, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    /// `1ᵀ M u = 0`.
    MeanZero,
    /// `u_i = 0`.
    PinnedNode(usize),
    /// No gauge; the operator is invertible (reaction term present).
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub coefficients: DVector<f64>,
    pub gauge: Gauge,
    /// `‖A u − F‖ / ‖F‖` with `F` projected onto the range of `A`.
    pub residual_norm: f64,
    /// `½ uᵀ A u − Fᵀ u`.
    pub energy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    /// Relative compatibility tolerance: `|∫f| ≤ compat_tol · ‖F‖`.
    pub compat_tol: f64,
    pub gauge: Gauge,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            compat_tol: 1e-8,
            gauge: Gauge::MeanZero,
        }
    }
}

fn energy(a: &DMatrix<f64>, f: &DVector<f64>, u: &DVector<f64>) -> f64 {
    0.5 * u.dot(&(a * u)) - f.dot(u)
}

fn relative(r: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

/// Minimises the discrete energy. Without reaction term the data must be
/// compatible and the solution is gauge-fixed; with a reaction term
/// `(A − R) u = F` is solved directly.
pub fn solve_stationary(sys: &StiffnessSystem, opts: SolveOptions) -> Result<Solution> {
    let n = sys.size();
    if let Some(r) = &sys.mu_term {
        let op = &sys.a - r;
        let lu = LU::new(op.clone());
        check_pivots(&lu)?;
        let u = lu
            .solve(&sys.f)
            .ok_or_else(|| Error::SingularSystem("reaction operator is not invertible".into()))?;
        let res = (&op * &u - &sys.f).norm();
        return Ok(Solution {
            energy: 0.5 * u.dot(&(&op * &u)) - sys.f.dot(&u),
            residual_norm: relative(res, sys.f.norm()),
            coefficients: u,
            gauge: Gauge::None,
        });
    }
    let fnorm = sys.f.norm();
    let tolerance = opts.compat_tol * fnorm;
    if sys.compat_residual.abs() > tolerance && sys.compat_residual.abs() > 1e-300 {
        return Err(Error::IncompatibleData {
            residual: sys.compat_residual,
            tolerance,
        });
    }
    let ones = DVector::from_element(n, 1.0);
    let w = &sys.m * &ones;
    let pf = &sys.f - &w * (sys.f.sum() / w.sum());
    let u = match opts.gauge {
        Gauge::MeanZero | Gauge::None => {
            let scale = sys.a.diagonal().amax().max(1e-300) / w.amax().powi(2);
            let aug = &sys.a + scale * &w * w.transpose();
            let u = solve_spd(aug, &pf)?;
            // remove the roundoff component along constants
            let shift = w.dot(&u) / w.sum();
            u - ones * shift
        }
        Gauge::PinnedNode(i) => {
            if i >= n {
                return Err(Error::InvalidArgument(format!("pinned node {i} out of range")));
            }
            let keep: Vec<usize> = (0..n).filter(|&k| k != i).collect();
            let sub = sys.a.select_rows(&keep).select_columns(&keep);
            let rhs = pf.select_rows(&keep);
            let v = solve_spd(sub, &rhs)?;
            let mut u = DVector::zeros(n);
            for (k, &idx) in keep.iter().enumerate() {
                u[idx] = v[k];
            }
            u
        }
    };
    let res = (&sys.a * &u - &pf).norm();
    let residual_norm = relative(res, pf.norm());
    if residual_norm > opts.tol.max(1e-6) {
        return Err(Error::SingularSystem(format!("solve residual {residual_norm:e} above tolerance")));
    }
    Ok(Solution {
        energy: energy(&sys.a, &sys.f, &u),
        residual_norm,
        coefficients: u,
        gauge: opts.gauge,
    })
}

fn check_pivots(lu: &LU<f64, Dyn, Dyn>) -> Result<()> {
    let u = lu.u();
    let d = u.diagonal();
    let max = d.amax();
    let min = d.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::SingularSystem(format!(
            "pivot ratio {:e} indicates a singular operator",
            if max > 0.0 { min / max } else { 0.0 }
        )));
    }
    Ok(())
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    match Cholesky::new(a.clone()) {
        Some(ch) => Ok(ch.solve(b)),
        None => {
            let lu = LU::new(a);
            check_pivots(&lu)?;
            lu.solve(b)
                .ok_or_else(|| Error::SingularSystem("gauge-fixed system is singular".into()))
        }
    }
}

/// Implicit-Euler trajectory of the homogeneous Neumann heat flow.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `1ᵀ M u_k`.
    pub masses: Vec<f64>,
    /// `½ u_kᵀ A u_k`.
    pub energies: Vec<f64>,
}

impl HeatTrajectory {
    /// Largest relative deviation of the mass from its initial value.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.masses[0];
        let scale = m0.abs().max(f64::MIN_POSITIVE);
        self.masses.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max) / scale
    }

    pub fn energy_monotone(&self) -> bool {
        self.energies
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300)
    }
}

/// `(M + dt A) u_{k+1} = M u_k`, with the diagonal of `A` shifted so that `A 1 = 0`
/// holds to roundoff.
pub fn heat_step(sys: &StiffnessSystem, u0: &DVector<f64>, dt: f64, steps: usize) -> Result<HeatTrajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if u0.len() != sys.size() {
        return Err(Error::InvalidArgument("initial state has the wrong length".into()));
    }
    let ones = DVector::from_element(sys.size(), 1.0);
    // remove the quadrature defect of the row sums so constants stay exactly stationary
    let mut a = sys.a.clone();
    let rows = &a * &ones;
    for i in 0..a.nrows() {
        a[(i, i)] -= rows[i];
    }
    let op = &sys.m + &a * dt;
    let ch = Cholesky::new(op).ok_or_else(|| Error::SingularSystem("M + dt A is not positive definite".into()))?;
    let mw = &sys.m * &ones;
    let record = |u: &DVector<f64>| (mw.dot(u), 0.5 * u.dot(&(&a * u)));
    let mut traj = HeatTrajectory {
        times: vec![0.0],
        states: vec![u0.clone()],
        masses: vec![],
        energies: vec![],
    };
    let (m0, e0) = record(u0);
    traj.masses.push(m0);
    traj.energies.push(e0);
    let mut u = u0.clone();
    for k in 1..=steps {
        u = ch.solve(&(&sys.m * &u));
        let (m, e) = record(&u);
        traj.times.push(k as f64 * dt);
        traj.masses.push(m);
        traj.energies.push(e);
        traj.states.push(u.clone());
    }
    Ok(traj)
}

/// One entry of an L∞ probe: norms of a solution and of its datum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeCase {
    pub sup_norm: f64,
    pub l2_norm: f64,
    pub f_lq_norm: f64,
}

impl ProbeCase {
    pub fn new(sol: &Solution, sys: &StiffnessSystem) -> Self {
        let u = &sol.coefficients;
        ProbeCase {
            sup_norm: u.amax(),
            l2_norm: u.dot(&(&sys.m * u)).max(0.0).sqrt(),
            f_lq_norm: sys.f_lq_norm,
        }
    }

    /// `‖u‖_∞ / (‖u‖_{L²} + ‖f‖_{L^q})`, zero for the trivial case.
    pub fn ratio(&self) -> f64 {
        let den = self.l2_norm + self.f_lq_norm;
        if den > 0.0 {
            self.sup_norm / den
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinfReport {
    pub ratios: Vec<f64>,
    pub max: f64,
    pub median: f64,
    /// `max < 2 · median`.
    pub stable: bool,
}

pub fn linf_bound_probe(cases: &[ProbeCase]) -> LinfReport {
    let ratios: Vec<f64> = cases.iter().map(|c| c.ratio()).collect();
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let max = sorted.last().copied().unwrap_or(0.0);
    LinfReport {
        stable: max < 2.0 * median || max == 0.0,
        ratios,
        max,
        median,
    }
}

/// `f(x) = Σ_k a_k cos(kπ(x − a)/L)`, mean zero on `(a, a + L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineSeries {
    pub a: f64,
    pub length: f64,
    pub coefs: Vec<f64>,
}

impl ScalarField for CosineSeries {
    fn value(&self, p: &Point) -> f64 {
        let t = std::f64::consts::PI * (p.x - self.a) / self.length;
        self.coefs
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * t).cos())
            .sum()
    }
}

/// Seeded corpus of mean-zero cosine series on an interval.
pub fn random_mean_zero_data(domain: &DomainSpec, count: usize, terms: usize, seed: u64) -> Result<Vec<CosineSeries>> {
    let Shape::Interval { a, b } = domain.shape() else {
        return Err(Error::InvalidDomain("random mean-zero data is generated on intervals".into()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| CosineSeries {
            a: *a,
            length: b - a,
            coefs: (0..terms).map(|k| rng.random_range(-1.0..1.0) / (k + 1) as f64).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_stiffness;
    use crate::field::{ConstField, Fn1};
    use crate::geometry::build_graded_mesh;
    use crate::kernels::{KernelSpec, Variant};

    fn system(f: &dyn ScalarField, variant: Variant) -> (crate::geometry::Mesh, StiffnessSystem) {
        let dom = DomainSpec::interval(0.0, 1.0).unwrap();
        let mesh = build_graded_mesh(&dom, 32, 2.0).unwrap();
        let spec = KernelSpec::new(variant, 0.75, 1).unwrap();
        let a = assemble_stiffness(&mesh, &dom, &spec).unwrap();
        let sys = StiffnessSystem::from_matrix(&mesh, a, f, 2.0);
        (mesh, sys)
    }

    #[test]
    fn zero_data_gives_zero() {
        let (_, sys) = system(&ConstField(0.0), Variant::Regional);
        let sol = solve_stationary(&sys, SolveOptions::default()).unwrap();
        assert_eq!(sol.coefficients.amax(), 0.0);
        assert_eq!(sol.energy, 0.0);
    }

    #[test]
    fn incompatible_data_rejected() {
        let (_, sys) = system(&ConstField(1.0), Variant::FullNeumann);
        assert!(matches!(
            solve_stationary(&sys, SolveOptions::default()),
            Err(Error::IncompatibleData { .. })
        ));
    }

    #[test]
    fn odd_data_gives_odd_solution() {
        let f = Fn1::with_breaks(|x: f64| if x < 0.5 { -1.0 } else if x > 0.5 { 1.0 } else { 0.0 }, vec![0.5]);
        let (mesh, sys) = system(&f, Variant::Regional);
        let sol = solve_stationary(&sys, SolveOptions::default()).unwrap();
        let u = &sol.coefficients;
        let n = u.len();
        let x = mesh.coords_1d();
        for i in 0..n {
            assert!((x[i] + x[n - 1 - i] - 1.0).abs() < 1e-14);
            assert!((u[i] + u[n - 1 - i]).abs() < 1e-6);
        }
        let mean = (&sys.m * DVector::from_element(n, 1.0)).dot(u);
        assert!(mean.abs() < 1e-10);
    }

    #[test]
    fn gauges_agree_up_to_constants() {
        let f = Fn1::new(|x: f64| (std::f64::consts::PI * x).cos());
        let (_, sys) = system(&f, Variant::FullNeumann);
        let a = solve_stationary(&sys, SolveOptions::default()).unwrap();
        let b = solve_stationary(&sys, SolveOptions { gauge: Gauge::PinnedNode(0), ..Default::default() }).unwrap();
        let d = &a.coefficients - &b.coefficients;
        assert!((d.max() - d.min()).abs() < 1e-8 * a.coefficients.amax());
        // stationarity along mean-zero directions
        let g = &sys.a * &a.coefficients - &sys.f;
        let w = &sys.m * DVector::from_element(g.len(), 1.0);
        let pg = &g - &w * (g.sum() / w.sum());
        assert!(pg.norm() <= 1e-8 * sys.f.norm());
    }

    #[test]
    fn reaction_system_and_singularity() {
        let f = Fn1::new(|x: f64| x);
        let (mesh, sys) = system(&f, Variant::Regional);
        let with = sys.clone().with_reaction(&mesh, &ConstField(-1.0));
        let sol = solve_stationary(&with, SolveOptions::default()).unwrap();
        assert!(sol.residual_norm < 1e-10);
        let zero = sys.with_reaction(&mesh, &ConstField(0.0));
        assert!(matches!(solve_stationary(&zero, SolveOptions::default()), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn heat_conserves_mass_and_decays() {
        let f = ConstField(0.0);
        let (mesh, sys) = system(&f, Variant::FullNeumann);
        let u0 = DVector::from_iterator(mesh.node_count(), mesh.coords_1d().into_iter().map(|x| x * x));
        let tr = heat_step(&sys, &u0, 0.01, 100).unwrap();
        assert!(tr.mass_drift() < 1e-10);
        assert!(tr.energy_monotone());
        let c = DVector::from_element(mesh.node_count(), 2.5);
        let tc = heat_step(&sys, &c, 0.1, 5).unwrap();
        let drift = tc.states.iter().map(|u| (u - &c).amax()).fold(0.0, f64::max);
        assert!(drift < 1e-10, "{drift}");
        assert!(heat_step(&sys, &u0, 0.0, 1).is_err());
    }

    #[test]
    fn probe_ratio_is_scale_invariant() {
        let data = random_mean_zero_data(&DomainSpec::interval(0.0, 1.0).unwrap(), 2, 4, 42).unwrap();
        let (_, sys1) = system(&data[0], Variant::FullNeumann);
        let scaled = CosineSeries {
            coefs: data[0].coefs.iter().map(|c| 10.0 * c).collect(),
            ..data[0].clone()
        };
        let (_, sys10) = system(&scaled, Variant::FullNeumann);
        let r1 = ProbeCase::new(&solve_stationary(&sys1, SolveOptions::default()).unwrap(), &sys1).ratio();
        let r10 = ProbeCase::new(&solve_stationary(&sys10, SolveOptions::default()).unwrap(), &sys10).ratio();
        assert!((r1 - r10).abs() <= 1e-8 * r1);
        let zero = ProbeCase { sup_norm: 0.0, l2_norm: 0.0, f_lq_norm: 0.0 };
        assert_eq!(zero.ratio(), 0.0);
        assert!(linf_bound_probe(&[zero]).stable);
    }
}
