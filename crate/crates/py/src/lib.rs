//! Python bindings for the fracneumann lab.

use fracneumann::assembly::{assemble_stiffness, StiffnessSystem};
use fracneumann::barriers1d::{check_power_null, check_supersolution, find_subsolution_m, BarrierSpec};
use fracneumann::cli::{catalog_lookup, execute, CatalogFn, Experiment, ExperimentConfig};
use fracneumann::exterior::{extend, ExtendedFunction};
use fracneumann::field::{NodalField, ScalarField};
use fracneumann::geometry::{build_graded_mesh, DomainSpec, Mesh, Point};
use fracneumann::kernels::{validate_estimates, KernelSpec, Variant};
use fracneumann::solver::{heat_step, solve_stationary, Gauge, SolveOptions};
use nalgebra::DVector;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: fracneumann::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point(c: &[f64]) -> PyResult<Point> {
    match c {
        [x] => Ok(Point::new1(*x)),
        [x, y] => Ok(Point::new2(*x, *y)),
        _ => Err(PyValueError::new_err(format!("point needs 1 or 2 coordinates, got {}", c.len()))),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Domain", frozen, module = "fracneumann_py")]
struct PyDomain(DomainSpec);

#[pymethods]
impl PyDomain {
    #[staticmethod]
    fn interval(a: f64, b: f64) -> PyResult<Self> {
        DomainSpec::interval(a, b).map(PyDomain).map_err(err)
    }

    #[staticmethod]
    fn half_line() -> Self {
        PyDomain(DomainSpec::half_line())
    }

    #[staticmethod]
    fn disc(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        DomainSpec::disc(point(&center)?, radius).map(PyDomain).map_err(err)
    }

    #[staticmethod]
    fn rectangle(min: Vec<f64>, max: Vec<f64>) -> PyResult<Self> {
        DomainSpec::rectangle(point(&min)?, point(&max)?).map(PyDomain).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn diameter(&self) -> f64 {
        self.0.diameter()
    }

    #[getter]
    fn measure(&self) -> f64 {
        self.0.measure()
    }

    fn contains(&self, p: Vec<f64>) -> PyResult<bool> {
        Ok(self.0.contains(&point(&p)?))
    }

    /// Distance to the boundary.
    fn distance(&self, p: Vec<f64>) -> PyResult<f64> {
        Ok(self.0.distance(&point(&p)?))
    }

    fn __repr__(&self) -> String {
        format!("Domain({:?})", self.0.shape())
    }
}

#[pyclass(name = "Kernel", frozen, module = "fracneumann_py")]
struct PyKernel(KernelSpec);

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (s, dim = 1, variant = "full_neumann"))]
    fn new(s: f64, dim: usize, variant: &str) -> PyResult<Self> {
        let v: Variant = variant.parse().map_err(err)?;
        KernelSpec::new(v, s, dim).map(PyKernel).map_err(err)
    }

    #[getter]
    fn s(&self) -> f64 {
        self.0.s
    }

    #[getter]
    fn c_ns(&self) -> f64 {
        self.0.c_ns
    }

    /// `(total, fractional part, auxiliary part)` of the kernel at `(x, y)`.
    fn evaluate(&self, domain: &PyDomain, x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64)> {
        let k = fracneumann::kernels::full_kernel(&domain.0, &self.0, &point(&x)?, &point(&y)?).map_err(err)?;
        Ok((k.value, k.fractional_part, k.aux_part))
    }

    fn __repr__(&self) -> String {
        format!("Kernel(s={}, dim={}, variant={:?})", self.0.s, self.0.dim, self.0.variant)
    }
}

#[pyclass(name = "Mesh", frozen, module = "fracneumann_py")]
struct PyMesh(Mesh);

#[pymethods]
impl PyMesh {
    /// Boundary-graded mesh with `n` cells per direction and grading exponent `mu`.
    #[staticmethod]
    #[pyo3(signature = (domain, n, mu = 1.0))]
    fn graded(domain: &PyDomain, n: usize, mu: f64) -> PyResult<Self> {
        build_graded_mesh(&domain.0, n, mu).map(PyMesh).map_err(err)
    }

    #[getter]
    fn nodes(&self) -> Vec<Vec<f64>> {
        let d = self.0.dim();
        self.0.nodes().iter().map(|p| p.as_array()[..d].to_vec()).collect()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.0.node_count()
    }

    #[getter]
    fn element_count(&self) -> usize {
        self.0.element_count()
    }

    fn boundary_nodes(&self) -> Vec<usize> {
        self.0.boundary_nodes()
    }

    fn interpolate(&self, values: Vec<f64>, p: Vec<f64>) -> PyResult<Option<f64>> {
        if values.len() != self.0.node_count() {
            return Err(PyValueError::new_err("one value per node required"));
        }
        Ok(self.0.interpolate(&values, &point(&p)?))
    }
}

fn data(mesh: &Mesh, domain: &DomainSpec, f: &Bound<'_, PyAny>) -> PyResult<DVector<f64>> {
    if let Ok(name) = f.extract::<String>() {
        let (cf, _): (CatalogFn, _) = catalog_lookup(&name, domain).map_err(err)?;
        return Ok(DVector::from_iterator(mesh.node_count(), mesh.nodes().iter().map(|p| cf.value(p))));
    }
    let v: Vec<f64> = f.extract()?;
    if v.len() != mesh.node_count() {
        return Err(PyValueError::new_err("one value per node required"));
    }
    Ok(DVector::from_vec(v))
}

/// Assembled stiffness, mass and load for one mesh, domain and kernel.
#[pyclass(name = "System", module = "fracneumann_py")]
struct PySystem {
    mesh: Mesh,
    domain: DomainSpec,
    sys: StiffnessSystem,
}

#[pymethods]
impl PySystem {
    /// `f` is a catalog name (`"cos_pi"`, ...) or a list of nodal values.
    #[new]
    #[pyo3(signature = (mesh, domain, kernel, f = None))]
    fn new(py: Python<'_>, mesh: &PyMesh, domain: &PyDomain, kernel: &PyKernel, f: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let m = mesh.0.clone();
        let d = domain.0.clone();
        let spec = kernel.0;
        let catalog = match f.map(|f| f.extract::<String>()) {
            Some(Ok(name)) => Some(catalog_lookup(&name, &d).map_err(err)?.0),
            _ => None,
        };
        let values: Vec<f64> = match (f, &catalog) {
            (Some(f), None) => data(&m, &d, f)?.iter().copied().collect(),
            _ => vec![0.0; m.node_count()],
        };
        let sys = py
            .detach(|| {
                let a = assemble_stiffness(&m, &d, &spec)?;
                Ok(match &catalog {
                    Some(cf) => StiffnessSystem::from_matrix(&m, a, cf, 2.0),
                    None => StiffnessSystem::from_matrix(&m, a, &NodalField::new(&m, &values), 2.0),
                })
            })
            .map_err(err)?;
        Ok(PySystem { mesh: m, domain: d, sys })
    }

    #[getter]
    fn size(&self) -> usize {
        self.sys.size()
    }

    fn stiffness(&self) -> Vec<Vec<f64>> {
        self.sys.a.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn mass(&self) -> Vec<Vec<f64>> {
        self.sys.m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn load(&self) -> Vec<f64> {
        self.sys.f.iter().copied().collect()
    }

    /// `max |A 1| / max |A|`.
    fn null_space_ratio(&self) -> f64 {
        let a = &self.sys.a;
        let row = (a * DVector::from_element(a.ncols(), 1.0)).amax();
        row / a.amax().max(f64::MIN_POSITIVE)
    }

    /// Mean-zero solution; raises `ValueError` for incompatible data.
    #[pyo3(signature = (tol = 1e-8, compat_tol = 1e-8))]
    fn solve<'py>(&self, py: Python<'py>, tol: f64, compat_tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let opts = SolveOptions {
            tol,
            compat_tol,
            gauge: Gauge::MeanZero,
        };
        let sol = py.detach(|| solve_stationary(&self.sys, opts)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("values", sol.coefficients.iter().copied().collect::<Vec<_>>())?;
        d.set_item("residual", sol.residual_norm)?;
        d.set_item("energy", sol.energy)?;
        Ok(d)
    }

    /// Implicit Euler for the homogeneous heat flow from `u0`.
    fn heat<'py>(&self, py: Python<'py>, u0: &Bound<'py, PyAny>, dt: f64, steps: usize) -> PyResult<Bound<'py, PyDict>> {
        let u = data(&self.mesh, &self.domain, u0)?;
        let traj = py.detach(|| heat_step(&self.sys, &u, dt, steps)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("times", traj.times.clone())?;
        d.set_item("masses", traj.masses.clone())?;
        d.set_item("energies", traj.energies.clone())?;
        d.set_item("mass_drift", traj.mass_drift())?;
        d.set_item("energy_monotone", traj.energy_monotone())?;
        d.set_item("final", traj.states.last().map(|s| s.iter().copied().collect::<Vec<_>>()))?;
        Ok(d)
    }
}

/// A discrete function extended to the complement of a bounded domain.
#[pyclass(name = "Extension", module = "fracneumann_py")]
struct PyExtension(ExtendedFunction);

#[pymethods]
impl PyExtension {
    #[new]
    fn new(py: Python<'_>, mesh: &PyMesh, values: Vec<f64>, domain: &PyDomain, kernel: &PyKernel) -> PyResult<Self> {
        py.detach(|| extend(&mesh.0, &values, &domain.0, &kernel.0)).map(PyExtension).map_err(err)
    }

    fn value(&self, z: Vec<f64>) -> PyResult<f64> {
        self.0.exterior_value(&point(&z)?).map_err(err)
    }

    /// Nonlocal normal derivative at an exterior point.
    fn normal_derivative(&self, z: Vec<f64>) -> PyResult<f64> {
        self.0.eval_ns(&point(&z)?).map_err(err)
    }

    fn interior_range(&self) -> (f64, f64) {
        self.0.interior_range()
    }
}

/// Kernel two-sided estimate ratios over random pairs.
#[pyfunction]
#[pyo3(signature = (domain, kernel, samples = 200, seed = 42))]
fn kernel_estimates<'py>(py: Python<'py>, domain: &PyDomain, kernel: &PyKernel, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let rep = py.detach(|| validate_estimates(&domain.0, &kernel.0, samples, seed)).map_err(err)?;
    to_py(py, &rep)
}

/// Defect of the pure power `x^(2s-1)` under the half-line operator.
#[pyfunction]
fn power_null<'py>(py: Python<'py>, s: f64, xs: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let rep = check_power_null(s, &xs, Variant::HalfLine1D).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
fn supersolution<'py>(py: Python<'py>, s: f64, r0: f64, xs: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let spec = BarrierSpec::new(s, r0, Variant::HalfLine1D).map_err(err)?;
    let rep = py.detach(|| check_supersolution(&spec, &xs)).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
fn subsolution<'py>(py: Python<'py>, s: f64, r0: f64, c: f64, xs: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let spec = BarrierSpec {
        c_target: c,
        ..BarrierSpec::new(s, r0, Variant::HalfLine1D).map_err(err)?
    };
    let rep = py.detach(|| find_subsolution_m(&spec, c, &xs)).map_err(err)?;
    to_py(py, &rep)
}

/// `(name, summary)` for every experiment.
#[pyfunction]
fn list_experiments() -> Vec<(&'static str, &'static str)> {
    Experiment::ALL.iter().map(|e| (e.name(), e.summary())).collect()
}

/// Parses a TOML experiment config and returns the resolved echo.
#[pyfunction]
fn validate_config(text: &str) -> PyResult<String> {
    Ok(ExperimentConfig::from_str(text).map_err(err)?.echo_text())
}

/// Runs an experiment from TOML text in memory and returns the report.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_str(text).map_err(err)?;
    let (rep, _) = py.detach(|| execute(&cfg));
    to_py(py, &rep)
}

#[pymodule]
fn fracneumann_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDomain>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PySystem>()?;
    m.add_class::<PyExtension>()?;
    m.add_function(wrap_pyfunction!(kernel_estimates, m)?)?;
    m.add_function(wrap_pyfunction!(power_null, m)?)?;
    m.add_function(wrap_pyfunction!(supersolution, m)?)?;
    m.add_function(wrap_pyfunction!(subsolution, m)?)?;
    m.add_function(wrap_pyfunction!(list_experiments, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
