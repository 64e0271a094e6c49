//! JSON scenario files and their resolution into library objects.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use phi_sasaki::bundle::{BundleKind, BundleState, FPlanarCoefficients, FTensor, System};
use phi_sasaki::catalog::{self, Family};
use phi_sasaki::expr::{ScalarField, Variables};
use phi_sasaki::frenet::JetMethod;
use phi_sasaki::geometry::{CurvatureOperator, MetricStructure, Sampling};
use phi_sasaki::integrate::Method;

/// A number given either as a JSON double or as a constant expression string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Float(f64),
    Text(String),
}

impl Num {
    pub fn value(&self) -> Result<f64> {
        match self {
            Num::Float(v) => Ok(*v),
            Num::Text(s) => {
                let f = ScalarField::parse_with(s, Variables::Chart(0)).with_context(|| format!("number `{s}`"))?;
                f.eval(&[]).with_context(|| format!("number `{s}`"))
            }
        }
    }
}

/// An expression component; plain numbers are accepted too.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Component {
    Float(f64),
    Text(String),
}

impl Component {
    fn source(&self) -> String {
        match self {
            Component::Float(v) => format!("{v:?}"),
            Component::Text(s) => s.clone(),
        }
    }
}

type Rows = Vec<Vec<Component>>;

fn sources(rows: &Rows) -> Vec<Vec<String>> {
    rows.iter().map(|r| r.iter().map(Component::source).collect()).collect()
}

fn as_refs(rows: &[Vec<String>]) -> Vec<Vec<&str>> {
    rows.iter().map(|r| r.iter().map(String::as_str).collect()).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ManifoldConfig {
    Named(String),
    Catalog {
        catalog: String,
        #[serde(default)]
        params: BTreeMap<String, Num>,
    },
    Inline(InlineManifold),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineManifold {
    pub dim: usize,
    pub g: Rows,
    pub phi: Rows,
    #[serde(default, rename = "F")]
    pub f: Option<ForceConfig>,
    #[serde(default)]
    pub christoffel: Option<Vec<Rows>>,
    #[serde(default)]
    pub chart_box: Option<Vec<[Num; 2]>>,
    #[serde(default)]
    pub curvature: Option<CurvatureConfig>,
    #[serde(default)]
    pub fd_step: Option<Num>,
    #[serde(default)]
    pub curvature_step: Option<Num>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ForceConfig {
    /// `"phi"` or `"zero"`.
    Keyword(String),
    Matrix(Rows),
    Lorentz {
        omega: Rows,
        strength: Num,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CurvatureConfig {
    /// `"from_metric"`.
    Keyword(String),
    Constant {
        constant: Num,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub rho1: Component,
    pub rho2: Component,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InitialConfig {
    Explicit {
        x: Vec<Num>,
        xdot: Vec<Num>,
        xi: Vec<Num>,
        xidot: Vec<Num>,
    },
    Family {
        family: String,
        #[serde(default)]
        params: BTreeMap<String, Num>,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    pub step: Option<Num>,
    pub t_span: Option<[Num; 2]>,
    pub method: Option<String>,
    pub monitor_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    pub samples: Option<usize>,
    pub run: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrenetConfig {
    /// `auto`, `finite_difference`, `recursion` or `hybrid`.
    pub method: Option<String>,
    pub tolerance: Option<Num>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub manifold: ManifoldConfig,
    #[serde(default)]
    pub system: Option<String>,
    #[serde(default, rename = "F")]
    pub f: Option<ForceConfig>,
    #[serde(default)]
    pub coefficients: Option<CoefficientsConfig>,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub frenet: FrenetConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Structural checks a scenario may request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Norden,
    Involution,
    ParallelPhi,
    CurvaturePurity,
}

impl CheckKind {
    pub const ALL: [CheckKind; 4] =
        [CheckKind::Norden, CheckKind::Involution, CheckKind::ParallelPhi, CheckKind::CurvaturePurity];

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "norden" => CheckKind::Norden,
            "involution" => CheckKind::Involution,
            "parallel_phi" => CheckKind::ParallelPhi,
            "curvature_purity" => CheckKind::CurvaturePurity,
            other => bail!("unknown check `{other}` (expected norden, involution, parallel_phi, curvature_purity)"),
        })
    }
}

/// A scenario with every name and expression resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub structure: MetricStructure,
    pub curvature: CurvatureOperator,
    pub system: Option<System>,
    pub family: Option<Family>,
    pub initial: Option<BundleState>,
    pub step: f64,
    pub t_span: (f64, f64),
    pub method: Method,
    pub monitor_every: usize,
    pub sampling: Sampling,
    pub checks: Vec<CheckKind>,
    pub frenet_method: Option<JetMethod>,
    pub frenet_tolerance: f64,
    pub locally_symmetric: bool,
    pub out_dir: Option<PathBuf>,
}

struct ResolvedManifold {
    label: String,
    structure: MetricStructure,
    curvature: CurvatureOperator,
    f: Option<FTensor>,
    entry: Option<catalog::CatalogEntry>,
    locally_symmetric: bool,
}

fn catalog_name(base: &str, params: &BTreeMap<String, Num>) -> Result<String> {
    let order: &[(&str, f64)] = match base {
        "poly2d" => &[("a", 1.0), ("b", 0.5)],
        "euclid_oblique" => &[("dim", 4.0)],
        "const_curv" => &[("c", 1.0)],
        _ => &[],
    };
    for key in params.keys() {
        if !order.iter().any(|(k, _)| k == key) {
            bail!("catalog entry `{base}` has no parameter `{key}`");
        }
    }
    if order.is_empty() {
        return Ok(base.to_string());
    }
    let args = order
        .iter()
        .map(|(k, d)| Ok(params.get(*k).map(Num::value).transpose()?.unwrap_or(*d)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(format!("{base}({})", args.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")))
}

fn resolve_f(def: &ForceConfig, structure: &MetricStructure, sampling: Sampling) -> Result<FTensor> {
    let n = structure.dim();
    match def {
        ForceConfig::Keyword(k) if k == "phi" => Ok(FTensor::Phi),
        ForceConfig::Keyword(k) if k == "zero" => Ok(FTensor::Zero),
        ForceConfig::Keyword(k) => bail!("unknown F keyword `{k}` (expected phi, zero, a matrix or a Lorentz form)"),
        ForceConfig::Matrix(rows) => {
            let src = sources(rows);
            let refs = as_refs(&src);
            let rows: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
            Ok(FTensor::from_strings(n, &rows)?)
        }
        ForceConfig::Lorentz { omega, strength } => {
            let src = sources(omega);
            let refs = as_refs(&src);
            let rows: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
            Ok(phi_sasaki::bundle::lorentz_force(structure, &rows, strength.value()?, sampling)?)
        }
    }
}

fn resolve_inline(m: &InlineManifold, sampling: Sampling) -> Result<ResolvedManifold> {
    let g = sources(&m.g);
    let phi = sources(&m.phi);
    let (g, phi) = (as_refs(&g), as_refs(&phi));
    let g: Vec<&[&str]> = g.iter().map(Vec::as_slice).collect();
    let phi: Vec<&[&str]> = phi.iter().map(Vec::as_slice).collect();
    let mut structure = MetricStructure::from_strings(m.dim, &g, &phi)?;
    if let Some(gamma) = &m.christoffel {
        let fields = gamma
            .iter()
            .map(|mat| {
                mat.iter()
                    .map(|row| {
                        row.iter()
                            .map(|c| {
                                let s = c.source();
                                ScalarField::parse(&s, m.dim).with_context(|| format!("christoffel component `{s}`"))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        structure = structure.with_christoffel(fields)?;
    }
    if let Some(bounds) = &m.chart_box {
        let b = bounds.iter().map(|[lo, hi]| Ok((lo.value()?, hi.value()?))).collect::<Result<Vec<_>>>()?;
        structure = structure.with_chart_box(b)?;
    }
    if let Some(h) = &m.fd_step {
        structure = structure.with_fd_step(h.value()?)?;
    }
    if let Some(h) = &m.curvature_step {
        structure = structure.with_curvature_step(h.value()?)?;
    }
    let curvature = match &m.curvature {
        None => CurvatureOperator::FromMetric,
        Some(CurvatureConfig::Keyword(k)) if k == "from_metric" => CurvatureOperator::FromMetric,
        Some(CurvatureConfig::Keyword(k)) => bail!("unknown curvature `{k}`"),
        Some(CurvatureConfig::Constant { constant }) => CurvatureOperator::Constant(constant.value()?),
    };
    let f = m.f.as_ref().map(|f| resolve_f(f, &structure, sampling)).transpose()?;
    Ok(ResolvedManifold { label: "inline".into(), structure, curvature, f, entry: None, locally_symmetric: false })
}

fn resolve_manifold(def: &ManifoldConfig, sampling: Sampling) -> Result<ResolvedManifold> {
    let name = match def {
        ManifoldConfig::Named(n) => n.clone(),
        ManifoldConfig::Catalog { catalog, params } => catalog_name(catalog, params)?,
        ManifoldConfig::Inline(m) => return resolve_inline(m, sampling),
    };
    let e = catalog::entry(&name)?;
    Ok(ResolvedManifold {
        label: e.name.clone(),
        structure: e.structure.clone(),
        curvature: e.curvature,
        f: e.f.clone(),
        locally_symmetric: e.locally_symmetric,
        entry: Some(e),
    })
}

fn resolve_system(name: &str, f: Option<FTensor>, co: Option<&CoefficientsConfig>) -> Result<System> {
    let need_f = || f.clone().ok_or_else(|| anyhow!("system `{name}` needs an F tensor (scenario or manifold `F`)"));
    let coefficients = || -> Result<FPlanarCoefficients> {
        let co = co.ok_or_else(|| anyhow!("system `{name}` needs `coefficients` rho1 and rho2"))?;
        Ok(FPlanarCoefficients::from_strings(&co.rho1.source(), &co.rho2.source())?)
    };
    Ok(match name {
        "geodesic_tm" => System::geodesic_tm(),
        "geodesic_unit" => System::geodesic_unit(),
        "f_geodesic_tm" => System::f_geodesic_tm(need_f()?),
        "f_geodesic_unit" => System::f_geodesic_unit(need_f()?),
        "f_planar_tm" => System::f_planar_tm(need_f()?, coefficients()?),
        "f_planar_unit" => System::f_planar_unit(need_f()?, coefficients()?),
        other => bail!(
            "unknown system `{other}` (expected geodesic_tm, geodesic_unit, f_geodesic_tm, f_geodesic_unit, f_planar_tm, f_planar_unit)"
        ),
    })
}

fn numbers(v: &[Num]) -> Result<Vec<f64>> {
    v.iter().map(Num::value).collect()
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: ScenarioFile =
            serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))?;
        Self::resolve(&file)
    }

    pub fn resolve(file: &ScenarioFile) -> Result<Self> {
        let sampling = Sampling {
            count: file.checks.samples.unwrap_or(Sampling::default().count),
            seed: file.seed.unwrap_or(Sampling::default().seed),
        };
        let manifold = resolve_manifold(&file.manifold, sampling)?;
        let f = match &file.f {
            Some(def) => Some(resolve_f(def, &manifold.structure, sampling)?),
            None => manifold.f.clone(),
        };
        let mut system =
            file.system.as_deref().map(|s| resolve_system(s, f, file.coefficients.as_ref())).transpose()?;

        let mut family = None;
        let initial = match &file.initial {
            None => None,
            Some(InitialConfig::Explicit { x, xdot, xi, xidot }) => {
                Some(BundleState::from_slices(&numbers(x)?, &numbers(xdot)?, &numbers(xi)?, &numbers(xidot)?)?)
            }
            Some(InitialConfig::Family { family: name, params }) => {
                let entry =
                    manifold.entry.as_ref().ok_or_else(|| anyhow!("family initial data needs a catalog manifold"))?;
                let values =
                    params.iter().map(|(k, v)| Ok((k.clone(), v.value()?))).collect::<Result<BTreeMap<_, _>>>()?;
                let fam = entry.family(name, &values)?;
                if system.is_none() {
                    system = Some(fam.system.clone());
                }
                family = Some(fam);
                None
            }
        };
        let system = system.map(|s| s.with_curvature(manifold.curvature));

        let (default_t0, default_t1) = family.as_ref().map_or((0.0, 1.0), |f| f.window);
        let t_span = match &file.integrator.t_span {
            Some([a, b]) => (a.value()?, b.value()?),
            None => (default_t0, default_t1),
        };
        let method = match file.integrator.method.as_deref() {
            None | Some("rk4") => Method::Rk4,
            Some("euler") => Method::Euler,
            Some(other) => bail!("unknown integration method `{other}` (expected rk4 or euler)"),
        };
        let checks = match &file.checks.run {
            None => CheckKind::ALL.to_vec(),
            Some(names) => names.iter().map(|n| CheckKind::parse(n)).collect::<Result<_>>()?,
        };
        let frenet_method = match file.frenet.method.as_deref() {
            None | Some("auto") => None,
            Some("finite_difference") => Some(JetMethod::FiniteDifference),
            Some("recursion") => Some(JetMethod::Recursion),
            Some("hybrid") => Some(JetMethod::Hybrid),
            Some(other) => {
                bail!("unknown frenet method `{other}` (expected auto, finite_difference, recursion, hybrid)")
            }
        };
        Ok(Scenario {
            label: manifold.label,
            structure: manifold.structure,
            curvature: manifold.curvature,
            system,
            family,
            initial,
            step: file.integrator.step.as_ref().map(Num::value).transpose()?.unwrap_or(1e-3),
            t_span,
            method,
            monitor_every: file.integrator.monitor_every.unwrap_or(1),
            sampling,
            checks,
            frenet_method,
            frenet_tolerance: file.frenet.tolerance.as_ref().map(Num::value).transpose()?.unwrap_or(1e-6),
            locally_symmetric: manifold.locally_symmetric,
            out_dir: file.output.dir.clone(),
        })
    }

    /// Initial state at the start of the t-span.
    pub fn initial_state(&self) -> Result<BundleState> {
        if let Some(s) = &self.initial {
            return Ok(s.clone());
        }
        match &self.family {
            Some(f) => Ok(f.state(self.t_span.0)?),
            None => bail!("scenario has no initial state"),
        }
    }

    pub fn system(&self) -> Result<&System> {
        self.system.as_ref().ok_or_else(|| anyhow!("scenario names no system"))
    }

    /// Whether the system is a plain unit-bundle geodesic flow.
    pub fn is_unit_geodesic(&self) -> bool {
        self.system.as_ref().is_some_and(|s| s.kind == BundleKind::Unit && s.forcing.is_none())
    }

    /// Jet method for Frenet analysis: the curvature recursion where it is exact, finite differences otherwise.
    pub fn jet_method(&self) -> JetMethod {
        self.frenet_method.unwrap_or(if self.is_unit_geodesic() && self.locally_symmetric {
            JetMethod::Recursion
        } else {
            JetMethod::FiniteDifference
        })
    }
}
