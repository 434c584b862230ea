//! Flat dotted-key experiment configuration.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Value;

use super::catalog::{catalog_lookup, CatalogFn};
use crate::error::{Error, Result};
use crate::geometry::{default_grading, DomainSpec, Point, Shape};
use crate::kernels::Variant;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Solve,
    KernelCheck,
    EquivalenceCheck,
    BarrierCheck,
    RegularityReport,
    HeatMass,
    SLimitSweep,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Solve,
        Experiment::KernelCheck,
        Experiment::EquivalenceCheck,
        Experiment::BarrierCheck,
        Experiment::RegularityReport,
        Experiment::HeatMass,
        Experiment::SLimitSweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::KernelCheck => "kernel-check",
            Experiment::EquivalenceCheck => "equivalence-check",
            Experiment::BarrierCheck => "barrier-check",
            Experiment::RegularityReport => "regularity-report",
            Experiment::HeatMass => "heat-mass",
            Experiment::SLimitSweep => "s-limit-sweep",
        }
    }

    pub fn summary(&self) -> &'static str {
        match self {
            Experiment::Solve => "stationary Neumann solve with compatibility and null-space checks",
            Experiment::KernelCheck => "two-sided estimates of the exterior correction kernel on sampled pairs",
            Experiment::EquivalenceCheck => "exterior extension and equality of the full and restricted forms",
            Experiment::BarrierCheck => "power-null identity and half-line barrier certificates",
            Experiment::RegularityReport => "boundary growth and normal quotients against the Dirichlet contrast",
            Experiment::HeatMass => "implicit Euler heat flow: mass conservation and energy decay",
            Experiment::SLimitSweep => "error against the classical Neumann solution as s grows",
        }
    }

    pub fn parse(s: &str) -> Option<Experiment> {
        Experiment::ALL.into_iter().find(|e| e.name() == s)
    }
}

/// Verdict thresholds; every verdict in a report names the one it used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub residual: f64,
    pub compat: f64,
    pub null_space: f64,
    pub mass: f64,
    pub estimate_bound: f64,
    pub gap: f64,
    pub ns: f64,
    pub margin: f64,
    pub decay: f64,
    pub dirichlet_window: f64,
    pub power_null: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshParams {
    pub n: usize,
    pub mu: f64,
}

/// Experiment-specific parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Plan {
    Solve { mesh: MeshParams, f: CatalogFn, f_name: String, integral: Option<f64> },
    KernelCheck { samples: usize },
    EquivalenceCheck { mesh: MeshParams, count: usize, levels: usize, points: usize },
    BarrierCheck { r0: f64, c_targets: Vec<f64>, power_x: Vec<f64>, x: Vec<f64> },
    RegularityReport { ladder: Vec<usize>, mu: f64, f: CatalogFn, t_max: f64, scales: usize },
    HeatMass { mesh: MeshParams, f: CatalogFn, dt: f64, steps: usize },
    SLimitSweep { n: usize, f: CatalogFn, s_values: Vec<f64>, variant: Variant },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub domain: DomainSpec,
    pub variant: Variant,
    pub s: f64,
    pub seed: u64,
    pub output: PathBuf,
    pub tolerances: Tolerances,
    pub plan: Plan,
    /// Every key with its resolved value, defaults included.
    pub echo: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

struct Reader<'a> {
    src: &'a str,
    map: BTreeMap<String, Value>,
    used: RefCell<BTreeSet<String>>,
    echo: RefCell<BTreeMap<String, Value>>,
}

impl<'a> Reader<'a> {
    fn line_of(&self, key: &str) -> Option<usize> {
        let last = key.rsplit('.').next().unwrap_or(key);
        self.src.lines().position(|l| {
            let t = l.trim_start();
            [key, last].iter().any(|k| {
                t.strip_prefix(k)
                    .map(|rest| rest.trim_start().starts_with('='))
                    .unwrap_or(false)
            })
        })
        .map(|i| i + 1)
    }

    fn err(&self, key: &str, msg: impl std::fmt::Display) -> Error {
        match self.line_of(key) {
            Some(l) => Error::Config(format!("line {l}, field `{key}`: {msg}")),
            None => Error::Config(format!("field `{key}`: {msg}")),
        }
    }

    fn raw(&self, key: &str) -> Option<&Value> {
        self.used.borrow_mut().insert(key.to_string());
        self.map.get(key)
    }

    fn record(&self, key: &str, v: Value) {
        self.echo.borrow_mut().insert(key.to_string(), v);
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        let v = match self.raw(key) {
            None => default,
            Some(Value::Float(x)) => *x,
            Some(Value::Integer(i)) => *i as f64,
            Some(other) => return Err(self.err(key, format!("expected a number, got {}", other.type_str()))),
        };
        self.record(key, Value::Float(v));
        Ok(v)
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        let v = match self.raw(key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as usize,
            Some(other) => return Err(self.err(key, format!("expected a nonnegative integer, got {other}"))),
        };
        self.record(key, Value::Integer(v as i64));
        Ok(v)
    }

    fn string(&self, key: &str, default: &str) -> Result<String> {
        let v = match self.raw(key) {
            None => default.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(other) => return Err(self.err(key, format!("expected a quoted string, got {other}"))),
        };
        self.record(key, Value::String(v.clone()));
        Ok(v)
    }

    fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let v = match self.raw(key) {
            None => default.to_vec(),
            Some(Value::Array(xs)) => xs
                .iter()
                .map(|x| match x {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(self.err(key, "expected an array of numbers")),
                })
                .collect::<Result<Vec<_>>>()?,
            Some(Value::Float(f)) => vec![*f],
            Some(Value::Integer(i)) => vec![*i as f64],
            Some(_) => return Err(self.err(key, "expected an array of numbers")),
        };
        self.record(key, Value::Array(v.iter().map(|&x| Value::Float(x)).collect()));
        Ok(v)
    }

    fn usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        let v = match self.raw(key) {
            None => default.to_vec(),
            Some(Value::Array(xs)) => xs
                .iter()
                .map(|x| match x {
                    Value::Integer(i) if *i > 0 => Ok(*i as usize),
                    _ => Err(self.err(key, "expected an array of positive integers")),
                })
                .collect::<Result<Vec<_>>>()?,
            Some(_) => return Err(self.err(key, "expected an array of positive integers")),
        };
        self.record(key, Value::Array(v.iter().map(|&x| Value::Integer(x as i64)).collect()));
        Ok(v)
    }

    fn point(&self, key: &str, default: Point) -> Result<Point> {
        let v = self.f64_list(key, &[default.x, default.y])?;
        if v.len() != 2 {
            return Err(self.err(key, "expected [x, y]"));
        }
        Ok(Point::new2(v[0], v[1]))
    }

    fn check_unused(&self, experiment: Experiment) -> Result<()> {
        let used = self.used.borrow();
        match self.map.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(self.err(k, format!("unknown key for experiment `{}`", experiment.name()))),
            None => Ok(()),
        }
    }
}

fn domain_from(r: &Reader) -> Result<DomainSpec> {
    let shape = r.string("domain.shape", "interval")?;
    let shape = match shape.as_str() {
        "interval" => Shape::Interval {
            a: r.f64("domain.a", 0.0)?,
            b: r.f64("domain.b", 1.0)?,
        },
        "disc" => Shape::Disc {
            center: r.point("domain.center", Point::new2(0.0, 0.0))?,
            radius: r.f64("domain.radius", 1.0)?,
        },
        "rectangle" => Shape::Rectangle {
            min: r.point("domain.min", Point::new2(0.0, 0.0))?,
            max: r.point("domain.max", Point::new2(1.0, 1.0))?,
        },
        other => return Err(r.err("domain.shape", format!("unknown shape `{other}` (interval, disc, rectangle)"))),
    };
    let trunc = match r.raw("domain.truncation") {
        Some(_) => Some(r.f64("domain.truncation", 0.0)?),
        None => None,
    };
    DomainSpec::new(shape, trunc).map_err(|e| r.err("domain.shape", e))
}

fn lookup(r: &Reader, domain: &DomainSpec, default: &str) -> Result<(CatalogFn, String, Option<f64>)> {
    let name = r.string("data.f", default)?;
    let (f, integral) = catalog_lookup(&name, domain).map_err(|e| r.err("data.f", e))?;
    Ok((f, name, integral))
}

fn positive(r: &Reader, key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(r.err(key, format!("must be positive, got {v}")))
    }
}

fn s_in_range(r: &Reader, key: &str, s: f64, above_half: bool) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(r.err(key, format!("s must lie in (0, 1), got {s}")));
    }
    if above_half && s <= 0.5 {
        return Err(r.err(key, format!("this experiment needs s > 1/2, got {s}")));
    }
    Ok(s)
}

fn mesh_from(r: &Reader, s: f64, default_n: usize) -> Result<MeshParams> {
    let n = r.usize("mesh.n", default_n)?;
    if n < 2 {
        return Err(r.err("mesh.n", "need at least 2 elements"));
    }
    let mu = r.f64("mesh.mu", default_grading(s))?;
    if !(mu >= 1.0) {
        return Err(r.err("mesh.mu", format!("grading must be at least 1, got {mu}")));
    }
    Ok(MeshParams { n, mu })
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_str(&src)
    }

    pub fn from_str(src: &str) -> Result<Self> {
        let table: toml::Table = src.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut map = BTreeMap::new();
        flatten("", &table, &mut map);
        let r = Reader {
            src,
            map,
            used: RefCell::new(BTreeSet::new()),
            echo: RefCell::new(BTreeMap::new()),
        };
        let name = match r.raw("experiment") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(r.err("experiment", "expected a quoted experiment name")),
            None => return Err(Error::Config("missing required field `experiment`".into())),
        };
        let experiment = Experiment::parse(&name)
            .ok_or_else(|| r.err("experiment", format!("unknown experiment `{name}`")))?;
        r.record("experiment", Value::String(name));
        let seed = r.usize("seed", DEFAULT_SEED as usize)? as u64;
        let output = PathBuf::from(r.string("output.dir", &format!("out/{}", experiment.name()))?);
        let tolerances = Tolerances {
            residual: r.f64("tolerances.residual", 1e-8)?,
            compat: r.f64("tolerances.compat", 1e-8)?,
            null_space: r.f64("tolerances.null_space", 1e-10)?,
            mass: r.f64("tolerances.mass", 1e-10)?,
            estimate_bound: r.f64("tolerances.estimate_bound", crate::kernels::ESTIMATE_BOUND)?,
            gap: r.f64("tolerances.gap", 1e-3)?,
            ns: r.f64("tolerances.ns", 1e-8)?,
            margin: r.f64("tolerances.margin", crate::regularity::EXPONENT_MARGIN)?,
            decay: r.f64("tolerances.decay", crate::regularity::QUOTIENT_DECAY)?,
            dirichlet_window: r.f64("tolerances.dirichlet_window", 0.1)?,
            power_null: r.f64("tolerances.power_null", 1e-4)?,
        };

        let barrier = experiment == Experiment::BarrierCheck;
        let domain = if barrier { DomainSpec::half_line() } else { domain_from(&r)? };
        let default_variant = if barrier { "half_line1d" } else { "full_neumann" };
        let variant_name = r.string("kernel.variant", default_variant)?;
        let variant: Variant = variant_name.parse().map_err(|e| r.err("kernel.variant", e))?;
        let needs_half = matches!(experiment, Experiment::BarrierCheck | Experiment::RegularityReport);
        let sweep = experiment == Experiment::SLimitSweep;
        let s = if sweep { 1.0 } else { s_in_range(&r, "kernel.s", r.f64("kernel.s", 0.75)?, needs_half)? };
        if !barrier && variant == Variant::HalfLine1D {
            return Err(r.err("kernel.variant", "the half-line kernel is only used by barrier-check"));
        }
        let is_interval = matches!(domain.shape(), Shape::Interval { .. });

        let plan = match experiment {
            Experiment::Solve => {
                let mesh = mesh_from(&r, s, if is_interval { 256 } else { 8 })?;
                let (f, f_name, integral) = lookup(&r, &domain, "cos_pi")?;
                Plan::Solve { mesh, f, f_name, integral }
            }
            Experiment::KernelCheck => {
                if variant != Variant::FullNeumann {
                    return Err(r.err("kernel.variant", "kernel-check concerns the full Neumann kernel"));
                }
                let samples = r.usize("kernel_check.samples", 200)?;
                if samples < 2 {
                    return Err(r.err("kernel_check.samples", "need at least 2 samples"));
                }
                Plan::KernelCheck { samples }
            }
            Experiment::EquivalenceCheck => {
                let mesh = mesh_from(&r, s, if is_interval { 16 } else { 4 })?;
                let count = r.usize("equivalence.count", 5)?;
                let levels = r.usize("equivalence.levels", 3)?;
                let points = r.usize("equivalence.points", 10)?;
                if count == 0 || levels < 2 || points == 0 {
                    return Err(r.err("equivalence.levels", "need count ≥ 1, levels ≥ 2 and points ≥ 1"));
                }
                Plan::EquivalenceCheck { mesh, count, levels, points }
            }
            Experiment::BarrierCheck => {
                if variant == Variant::FullNeumann {
                    return Err(r.err("kernel.variant", "barriers use half_line1d or regional"));
                }
                let r0 = positive(&r, "barrier.r0", r.f64("barrier.r0", 1.0)?)?;
                let c_targets = r.f64_list("barrier.c_target", &[0.0, 1.0])?;
                if c_targets.iter().any(|c| !(*c >= 0.0)) {
                    return Err(r.err("barrier.c_target", "targets must be nonnegative"));
                }
                let power_x = r.f64_list("barrier.power_x", &[0.1, 0.5, 1.0, 5.0])?;
                let x = r.f64_list("barrier.x", &[0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9])?;
                if x.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                    return Err(r.err("barrier.x", "samples are fractions of r0 in (0, 1)"));
                }
                if power_x.iter().any(|v| !(*v > 0.0)) {
                    return Err(r.err("barrier.power_x", "samples must be positive"));
                }
                Plan::BarrierCheck { r0, c_targets, power_x, x }
            }
            Experiment::RegularityReport => {
                if !is_interval {
                    return Err(r.err("domain.shape", "regularity-report runs on intervals"));
                }
                let n = r.usize("mesh.n", 512)?;
                let ladder = r.usize_list("mesh.ladder", &[n / 4, n / 2, n])?;
                if ladder.len() < 2 || ladder.windows(2).any(|w| w[1] <= w[0]) || ladder[0] < 2 {
                    return Err(r.err("mesh.ladder", "need an increasing ladder of at least two sizes ≥ 2"));
                }
                let mu = r.f64("mesh.mu", default_grading(s))?;
                let (f, _, _) = lookup(&r, &domain, "cos_pi")?;
                let t_max = positive(&r, "regularity.t_max", r.f64("regularity.t_max", 0.02)?)?;
                let scales = r.usize("regularity.scales", 9)?;
                if scales < crate::regularity::MIN_SCALES {
                    return Err(r.err("regularity.scales", format!("need at least {}", crate::regularity::MIN_SCALES)));
                }
                Plan::RegularityReport { ladder, mu, f, t_max, scales }
            }
            Experiment::HeatMass => {
                let mesh = mesh_from(&r, s, if is_interval { 256 } else { 8 })?;
                let (f, _, _) = lookup(&r, &domain, "bump")?;
                let dt = positive(&r, "heat.dt", r.f64("heat.dt", 1e-3)?)?;
                let steps = r.usize("heat.steps", 100)?;
                Plan::HeatMass { mesh, f, dt, steps }
            }
            Experiment::SLimitSweep => {
                if !is_interval {
                    return Err(r.err("domain.shape", "s-limit-sweep runs on intervals"));
                }
                let n = r.usize("mesh.n", 256)?;
                let (f, _, integral) = lookup(&r, &domain, "cos_pi")?;
                if integral.map(|i| i.abs() > 1e-12).unwrap_or(false) {
                    return Err(r.err("data.f", "the classical reference needs ∫f = 0"));
                }
                let s_values = r.f64_list("sweep.s", &[0.6, 0.7, 0.8, 0.9, 0.95])?;
                for &sv in &s_values {
                    s_in_range(&r, "sweep.s", sv, false)?;
                }
                if s_values.len() < 2 || s_values.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(r.err("sweep.s", "need at least two increasing values"));
                }
                Plan::SLimitSweep { n, f, s_values, variant }
            }
        };
        r.check_unused(experiment)?;
        Ok(ExperimentConfig {
            experiment,
            domain,
            variant,
            s,
            seed,
            output,
            tolerances,
            plan,
            echo: r.echo.into_inner(),
        })
    }

    /// Resolved configuration as flat `key = value` lines.
    pub fn echo_text(&self) -> String {
        self.echo.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_echo_round_trip() {
        let c = ExperimentConfig::from_str("experiment = \"solve\"\nmesh.n = 32\n").unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.s, 0.75);
        let again = ExperimentConfig::from_str(&c.echo_text()).unwrap();
        assert_eq!(again.plan, c.plan);
        assert_eq!(again.echo, c.echo);
    }

    #[test]
    fn errors_name_line_and_field() {
        let e = ExperimentConfig::from_str("experiment = \"solve\"\n\nkernel.s = 1.5\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 3") && msg.contains("kernel.s"), "{msg}");
        let e = ExperimentConfig::from_str("experiment = \"solve\"\nmesh.nn = 4\n").unwrap_err();
        assert!(e.to_string().contains("mesh.nn"));
        let e = ExperimentConfig::from_str("experiment = \"solve\"\ndata.f = \"cosh\"\n").unwrap_err();
        assert!(e.to_string().contains("data.f"));
        assert!(ExperimentConfig::from_str("experiment = \"nope\"").is_err());
        assert!(ExperimentConfig::from_str("experiment = solve").is_err());
        assert!(ExperimentConfig::from_str("mesh.n = 3").is_err());
    }

    #[test]
    fn half_order_enforced_where_needed() {
        assert!(ExperimentConfig::from_str("experiment = \"barrier-check\"\nkernel.s = 0.4\n").is_err());
        assert!(ExperimentConfig::from_str("experiment = \"regularity-report\"\nkernel.s = 0.5\n").is_err());
        assert!(ExperimentConfig::from_str("experiment = \"solve\"\nkernel.s = 0.4\n").is_ok());
    }

    #[test]
    fn sections_and_dotted_keys_agree() {
        let a = ExperimentConfig::from_str("experiment = \"heat-mass\"\nheat.dt = 0.01\n").unwrap();
        let b = ExperimentConfig::from_str("experiment = \"heat-mass\"\n[heat]\ndt = 0.01\n").unwrap();
        assert_eq!(a.plan, b.plan);
    }
}
