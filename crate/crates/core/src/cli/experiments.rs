use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use super::config::{ExperimentConfig, MeshParams, Plan};
use super::{CatalogFn, Outcome, Table};
use crate::assembly::{assemble_stiffness, StiffnessSystem};
use crate::barriers1d::{check_power_null, check_supersolution, find_subsolution_m, BarrierSpec, Certificate};
use crate::error::{Error, Result};
use crate::exterior::{extend, EquivalenceContext};
use crate::field::ScalarField;
use crate::geometry::{build_graded_mesh, default_grading, DomainSpec, Mesh, Point, Shape};
use crate::kernels::{denom_integral, validate_estimates, KernelSpec, Variant};
use crate::quadrature::{adaptive_breaks, AdaptiveOptions};
use crate::regularity::{
    boundary_growth, dirichlet_reference_solve, dyadic_scales, fractional_normal_quotient, regularity_report,
    QuotientSequence,
};
use crate::solver::{heat_step, solve_stationary, Gauge, SolveOptions};

pub(super) fn dispatch(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    match &cfg.plan {
        Plan::Solve { mesh, f, f_name, integral } => solve(cfg, mesh, f, f_name, *integral, out),
        Plan::KernelCheck { samples } => kernel_check(cfg, *samples, out),
        Plan::EquivalenceCheck { mesh, count, levels, points } => equivalence(cfg, mesh, *count, *levels, *points, out),
        Plan::BarrierCheck { r0, c_targets, power_x, x } => barrier(cfg, *r0, c_targets, power_x, x, out),
        Plan::RegularityReport { ladder, mu, f, t_max, scales } => regularity(cfg, ladder, *mu, f, *t_max, *scales, out),
        Plan::HeatMass { mesh, f, dt, steps } => heat(cfg, mesh, f, *dt, *steps, out),
        Plan::SLimitSweep { n, f, s_values, variant } => s_limit(cfg, *n, f, s_values, *variant, out),
    }
}

fn spec(cfg: &ExperimentConfig) -> Result<KernelSpec> {
    KernelSpec::new(cfg.variant, cfg.s, cfg.domain.dim())
}

fn null_space_ratio(a: &nalgebra::DMatrix<f64>) -> f64 {
    let ones = DVector::from_element(a.nrows(), 1.0);
    (a * &ones).norm() / a.norm()
}

fn nodal_table(name: &str, mesh: &Mesh, values: &[f64]) -> Table {
    let mut t = Table::new(name, &["x", "y", "u"]);
    for (p, v) in mesh.nodes().iter().zip(values) {
        t.push(&[p.x, p.y, *v]);
    }
    t
}

fn solve(
    cfg: &ExperimentConfig,
    mp: &MeshParams,
    f: &CatalogFn,
    f_name: &str,
    integral: Option<f64>,
    out: &mut Outcome,
) -> Result<()> {
    let tol = &cfg.tolerances;
    let mesh = build_graded_mesh(&cfg.domain, mp.n, mp.mu)?;
    let a = assemble_stiffness(&mesh, &cfg.domain, &spec(cfg)?)?;
    let ratio = null_space_ratio(&a);
    out.metric("nodes", mesh.node_count() as f64);
    out.metric("null_space_ratio", ratio);
    out.verdict("null_space", ratio <= tol.null_space, ratio, tol.null_space, "|A 1| <= tol |A|");
    if let Some(i) = integral {
        out.metric("exact_integral", i);
    }
    let sys = StiffnessSystem::from_matrix(&mesh, a, f, 2.0);
    out.metric("load_integral", sys.compat_residual);
    out.detail("f", &f_name);
    let opts = SolveOptions {
        tol: tol.residual,
        compat_tol: tol.compat,
        gauge: Gauge::MeanZero,
    };
    match solve_stationary(&sys, opts) {
        Err(Error::IncompatibleData { residual, tolerance }) => {
            out.verdict(
                "compatibility",
                false,
                residual.abs(),
                tolerance,
                "|integral of f| <= compat |F|: solutions exist iff f has zero mean",
            );
            Ok(())
        }
        Err(e) => Err(e),
        Ok(sol) => {
            let fnorm = sys.f.norm();
            out.verdict(
                "compatibility",
                true,
                sys.compat_residual.abs(),
                tol.compat * fnorm,
                "|integral of f| <= compat |F|: solutions exist iff f has zero mean",
            );
            out.verdict("residual", sol.residual_norm <= tol.residual, sol.residual_norm, tol.residual, "|Au - PF| / |PF| <= tol");
            out.metric("residual", sol.residual_norm);
            out.metric("energy", sol.energy);
            out.metric("sup_norm", sol.coefficients.amax());
            out.tables.push(nodal_table("solution", &mesh, sol.coefficients.as_slice()));
            Ok(())
        }
    }
}

fn kernel_check(cfg: &ExperimentConfig, samples: usize, out: &mut Outcome) -> Result<()> {
    let tol = cfg.tolerances.estimate_bound;
    let rep = validate_estimates(&cfg.domain, &spec(cfg)?, samples, cfg.seed)?;
    for (name, r) in [("log_regime", &rep.log_regime), ("interior_regime", &rep.interior_regime)] {
        let worst = r.max_ratio.max(1.0 / r.min_ratio);
        out.metric(format!("{name}_min_ratio"), r.min_ratio);
        out.metric(format!("{name}_max_ratio"), r.max_ratio);
        out.metric(format!("{name}_count"), r.count as f64);
        out.verdict(name, r.count > 0 && worst <= tol, worst, tol, "every ratio within [1/bound, bound]");
    }
    let mut t = Table::new("estimates", &["regime", "x0", "x1", "y0", "y1", "d_pair", "dist", "aux", "rhs", "ratio"]);
    for s in &rep.samples {
        t.push(&[s.regime as f64, s.x[0], s.x[1], s.y[0], s.y[1], s.d_pair, s.dist, s.aux, s.rhs, s.ratio]);
    }
    out.tables.push(t);
    out.detail("estimate_report", &rep);
    Ok(())
}

/// Exterior probe points at distances spread over several decades.
fn exterior_points(domain: &DomainSpec, count: usize) -> Vec<Point> {
    let diam = domain.diameter();
    let dist = |k: usize| diam * 10f64.powf(-4.0 + 6.0 * k as f64 / count.max(2).saturating_sub(1) as f64);
    match domain.shape() {
        Shape::Interval { a, b } => (0..count)
            .map(|k| if k % 2 == 0 { Point::new1(a - dist(k)) } else { Point::new1(b + dist(k)) })
            .collect(),
        _ => {
            let c = domain.center();
            (0..count)
                .map(|k| {
                    let th = 2.0 * PI * (k as f64 + 0.3) / count as f64;
                    c.add(&Point::polar(th).scale(domain.boundary_radius(th) + dist(k)))
                })
                .collect()
        }
    }
}

fn equivalence(
    cfg: &ExperimentConfig,
    mp: &MeshParams,
    count: usize,
    levels: usize,
    points: usize,
    out: &mut Outcome,
) -> Result<()> {
    let tol = &cfg.tolerances;
    let mesh = build_graded_mesh(&cfg.domain, mp.n, mp.mu)?;
    let sp = spec(cfg)?.with_variant(Variant::FullNeumann);
    let ctx = EquivalenceContext::new(&mesh, &cfg.domain, &sp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let funcs: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..mesh.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut t = Table::new("equivalence", &["function", "level", "b_full", "b_restricted", "gap", "tail_bound"]);
    let (mut worst_gap, mut monotone) = (0.0f64, true);
    let mut ladders = Vec::new();
    for (i, u) in funcs.iter().enumerate() {
        let ladder = ctx.ladder(u, u, levels)?;
        for r in &ladder {
            t.push(&[i as f64, r.level as f64, r.b_full, r.b_restricted, r.gap, r.tail_bound]);
        }
        monotone &= ladder.windows(2).all(|w| w[1].gap < w[0].gap);
        worst_gap = worst_gap.max(ladder[ladder.len() - 1].gap);
        ladders.push(ladder);
    }
    out.tables.push(t);
    out.detail("ladders", &ladders);
    out.metric("max_final_gap", worst_gap);
    out.verdict("gap", worst_gap <= tol.gap, worst_gap, tol.gap, "relative form gap at the finest level <= tol");
    out.verdict(
        "gap_monotone",
        monotone,
        if monotone { 1.0 } else { 0.0 },
        1.0,
        "gap strictly decreasing along the refinement ladder",
    );

    let u = &funcs[0];
    let ext = extend(&mesh, u, &cfg.domain, &sp)?;
    let sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut et = Table::new("extension", &["x", "y", "value", "ns", "ns_independent", "denom"]);
    let (mut worst_ns, mut worst_ind) = (0.0f64, 0.0f64);
    for z in exterior_points(&cfg.domain, points) {
        let d = denom_integral(&cfg.domain, &sp, &z)?;
        let scale = sp.c_ns * sup * d;
        let ns = ext.eval_ns(&z)?;
        let ind = ext.eval_ns_independent(&z)?;
        worst_ns = worst_ns.max(ns.abs() / scale);
        worst_ind = worst_ind.max(ind.abs() / scale);
        et.push(&[z.x, z.y, ext.exterior_value(&z)?, ns, ind, d]);
    }
    out.tables.push(et);
    out.metric("ns_independent_ratio", worst_ind);
    out.verdict("normal_derivative", worst_ns <= tol.ns, worst_ns, tol.ns, "|N_s u| <= tol c |u|_inf D(z)");

    let level = 2.5;
    let cst = extend(&mesh, &vec![level; mesh.node_count()], &cfg.domain, &sp)?;
    let err = cst.cache().iter().map(|c| (c.value - level).abs()).fold(0.0, f64::max) / level;
    out.verdict("constant_extension", err == 0.0, err, 0.0, "constants extend to themselves exactly");

    let (lo, hi) = ext.interior_range();
    let slack = 1e-12 * (hi - lo).abs().max(1.0);
    let escape = ext
        .cache()
        .iter()
        .map(|c| (lo - c.value).max(c.value - hi).max(0.0))
        .fold(0.0, f64::max);
    out.verdict("range_containment", escape <= slack, escape, slack, "exterior values lie in the interior range");
    Ok(())
}

fn certificate_table(name: String, certs: &[Certificate]) -> Table {
    let mut t = Table::new(name, &["x", "value", "ratio"]);
    for c in certs {
        t.push(&[c.x, c.value, c.ratio]);
    }
    t
}

fn barrier(cfg: &ExperimentConfig, r0: f64, c_targets: &[f64], power_x: &[f64], x: &[f64], out: &mut Outcome) -> Result<()> {
    let tol = &cfg.tolerances;
    let pn = check_power_null(cfg.s, power_x, cfg.variant)?;
    let mut t = Table::new("power_null", &["x", "defect"]);
    for d in &pn.defects {
        t.push(&[d.0, d.1]);
    }
    out.tables.push(t);
    out.verdict(
        "power_null",
        pn.max_defect <= tol.power_null,
        pn.max_defect,
        tol.power_null,
        "|L x^(2s-1)| x^(2s) <= tol",
    );
    let xs: Vec<f64> = x.iter().map(|v| v * r0).collect();
    let spec = BarrierSpec::new(cfg.s, r0, cfg.variant)?;
    let sup = check_supersolution(&spec, &xs)?;
    out.tables.push(certificate_table("supersolution".into(), &sup.certificates));
    out.metric("supersolution_min_ratio", sup.min_ratio);
    out.verdict(
        "supersolution",
        sup.pass,
        sup.min_ratio,
        crate::barriers1d::POSITIVITY_FLOOR,
        "min L(phi)/weight > floor",
    );
    for &c in c_targets {
        let key = format!("subsolution_c{c}");
        match find_subsolution_m(&BarrierSpec { c_target: c, ..spec }, c, &xs) {
            Ok(rep) => {
                out.metric(format!("m_star_c{c}"), rep.m_star);
                out.tables.push(certificate_table(key.clone(), &rep.certificates));
                out.verdict(
                    key,
                    rep.m_star.is_finite(),
                    rep.m_star,
                    crate::barriers1d::MAX_AMPLITUDE,
                    "finite amplitude M with L(phi + M zeta) <= -c weight",
                );
            }
            Err(Error::SearchFailed(m)) => out.verdict(
                key,
                false,
                f64::INFINITY,
                m,
                "finite amplitude M with L(phi + M zeta) <= -c weight",
            ),
            Err(e) => return Err(e),
        }
    }
    out.detail("power_null", &pn);
    Ok(())
}

fn judge(q: &QuotientSequence, decay: f64) -> bool {
    let k = q.entries.len();
    let decreasing = q.entries[k - 3..].windows(2).all(|w| w[1].1.abs() < w[0].1.abs());
    decreasing && q.last().abs() <= decay * q.initial().abs()
}

fn regularity(
    cfg: &ExperimentConfig,
    ladder: &[usize],
    mu: f64,
    f: &CatalogFn,
    t_max: f64,
    scales: usize,
    out: &mut Outcome,
) -> Result<()> {
    let tol = &cfg.tolerances;
    let s = cfg.s;
    let sp = spec(cfg)?;
    let z = match cfg.domain.shape() {
        Shape::Interval { a, .. } => Point::new1(*a),
        _ => return Err(Error::InvalidDomain("regularity-report runs on intervals".into())),
    };
    let ts = dyadic_scales(t_max, scales);
    let (mut all_q, mut all_dq_fail) = (true, true);
    let mut finest = (f64::NAN, f64::NAN);
    let mut reports = Vec::new();
    for &n in ladder {
        let mesh = build_graded_mesh(&cfg.domain, n, mu)?;
        let sys = StiffnessSystem::build(&mesh, &cfg.domain, &sp, f, 2.0)?;
        let un = solve_stationary(&sys, SolveOptions::default())?;
        let ud = dirichlet_reference_solve(&mesh, &cfg.domain, f, s)?;
        let (un, ud) = (un.coefficients.as_slice(), ud.coefficients.as_slice());
        let rep = regularity_report(&mesh, un, &cfg.domain, &z, s, &ts, None)?;
        let gd = boundary_growth(&mesh, ud, &cfg.domain, &z, &ts)?;
        let qd = fractional_normal_quotient(&mesh, ud, &cfg.domain, &z, s, &ts, None)?;
        let qn = &rep.quotient_sequence;
        let q_pass = judge(qn, tol.decay);
        let qd_pass = judge(&qd, tol.decay);
        all_q &= q_pass;
        all_dq_fail &= !qd_pass;
        finest = (rep.boundary_exponent.slope, gd.slope);
        out.metric(format!("neumann_exponent_n{n}"), rep.boundary_exponent.slope);
        out.metric(format!("dirichlet_exponent_n{n}"), gd.slope);
        out.metric(format!("neumann_quotient_ratio_n{n}"), qn.last() / qn.initial());
        out.metric(format!("dirichlet_quotient_ratio_n{n}"), qd.last() / qd.initial());
        let mut t = Table::new(
            format!("regularity_n{n}"),
            &["t", "neumann_increment", "neumann_quotient", "dirichlet_increment", "dirichlet_quotient"],
        );
        for (k, &tv) in ts.iter().enumerate() {
            t.push(&[
                tv,
                rep.boundary_exponent.table[k].1,
                qn.entries[k].1,
                gd.table[k].1,
                qd.entries[k].1,
            ]);
        }
        out.tables.push(t);
        reports.push(serde_json::json!({ "n": n, "neumann": rep, "dirichlet_growth": gd, "dirichlet_quotient": qd }));
    }
    out.detail("levels", &reports);
    let floor = 2.0 * s - 1.0 + tol.margin;
    out.verdict("boundary_exponent", finest.0 >= floor, finest.0, floor, "Neumann growth exponent >= 2s-1+margin on the finest mesh");
    out.verdict(
        "normal_quotient",
        all_q,
        if all_q { 1.0 } else { 0.0 },
        tol.decay,
        "Neumann quotient decreasing with final <= decay x initial on every mesh",
    );
    let dev = (finest.1 - (2.0 * s - 1.0)).abs();
    out.verdict(
        "dirichlet_exponent",
        dev <= tol.dirichlet_window,
        finest.1,
        tol.dirichlet_window,
        "|Dirichlet growth exponent - (2s-1)| <= window on the finest mesh",
    );
    out.verdict(
        "dirichlet_quotient_fails",
        all_dq_fail,
        if all_dq_fail { 1.0 } else { 0.0 },
        tol.decay,
        "Dirichlet quotient fails the decay test on every mesh",
    );
    Ok(())
}

fn heat(cfg: &ExperimentConfig, mp: &MeshParams, f: &CatalogFn, dt: f64, steps: usize, out: &mut Outcome) -> Result<()> {
    let tol = &cfg.tolerances;
    let mesh = build_graded_mesh(&cfg.domain, mp.n, mp.mu)?;
    let a = assemble_stiffness(&mesh, &cfg.domain, &spec(cfg)?)?;
    let ratio = null_space_ratio(&a);
    out.verdict("null_space", ratio <= tol.null_space, ratio, tol.null_space, "|A 1| <= tol |A|");
    let sys = StiffnessSystem::from_matrix(&mesh, a, &CatalogFn::Zero, 2.0);
    let u0 = DVector::from_iterator(mesh.node_count(), mesh.nodes().iter().map(|p| f.value(p)));
    let traj = heat_step(&sys, &u0, dt, steps)?;
    let drift = traj.mass_drift();
    out.metric("initial_mass", traj.masses[0]);
    out.metric("mass_drift", drift);
    out.verdict("mass_conservation", drift <= tol.mass, drift, tol.mass, "max |1'Mu_k - 1'Mu_0| / |1'Mu_0| <= tol");
    let mono = traj.energy_monotone();
    out.verdict("energy_decay", mono, if mono { 1.0 } else { 0.0 }, 1e-12, "energy non-increasing up to relative 1e-12");
    let mut t = Table::new("heat", &["step", "time", "mass", "energy"]);
    for k in 0..traj.times.len() {
        t.push(&[k as f64, traj.times[k], traj.masses[k], traj.energies[k]]);
    }
    out.tables.push(t);
    Ok(())
}

/// Mean-free solution of `−u'' = f`, `u'(a) = u'(b) = 0`, up to a constant:
/// `u(x) = −∫_a^x (x − t) f(t) dt`.
fn classical_neumann(f: &CatalogFn, a: f64, x: f64) -> f64 {
    if x <= a {
        return 0.0;
    }
    let mut breaks = vec![a, x];
    breaks.extend(f.breakpoints().into_iter().filter(|b| *b > a && *b < x));
    breaks.sort_by(f64::total_cmp);
    -adaptive_breaks(|t| (x - t) * f.value(&Point::new1(t)), &breaks, AdaptiveOptions::rel(1e-12)).value
}

fn s_limit(cfg: &ExperimentConfig, n: usize, f: &CatalogFn, s_values: &[f64], variant: Variant, out: &mut Outcome) -> Result<()> {
    let Shape::Interval { a, .. } = cfg.domain.shape() else {
        return Err(Error::InvalidDomain("s-limit-sweep runs on intervals".into()));
    };
    let mut t = Table::new("s_limit", &["s", "error"]);
    let mut errors = Vec::new();
    for &s in s_values {
        let mesh = build_graded_mesh(&cfg.domain, n, default_grading(s))?;
        let sp = KernelSpec::new(variant, s, 1)?;
        let sys = StiffnessSystem::build(&mesh, &cfg.domain, &sp, f, 2.0)?;
        let u = solve_stationary(&sys, SolveOptions::default())?.coefficients;
        let reference = DVector::from_iterator(mesh.node_count(), mesh.coords_1d().into_iter().map(|x| classical_neumann(f, *a, x)));
        let diff = &u - &reference;
        let w = &sys.m * DVector::from_element(u.len(), 1.0);
        let shift = w.dot(&diff) / w.sum();
        let err = diff.iter().map(|d| (d - shift).abs()).fold(0.0, f64::max);
        out.metric(format!("error_s{s}"), err);
        t.push(&[s, err]);
        errors.push(err);
    }
    out.tables.push(t);
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    out.verdict(
        "strictly_decreasing",
        decreasing,
        errors[errors.len() - 1],
        0.0,
        "max-norm error against the classical Neumann solution strictly decreasing in s",
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_reference_for_cosine() {
        for x in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let u = classical_neumann(&CatalogFn::CosPi, 0.0, x);
            let exact = ((PI * x).cos() - 1.0) / (PI * PI);
            assert!((u - exact).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn exterior_points_are_exterior() {
        for d in [DomainSpec::interval(0.0, 1.0).unwrap(), DomainSpec::disc(Point::new2(0.0, 0.0), 1.0).unwrap()] {
            let ps = exterior_points(&d, 10);
            assert_eq!(ps.len(), 10);
            assert!(ps.iter().all(|p| !d.contains_closed(p)));
        }
    }
}
