//! Built-in manifolds with closed-form solution families.
//!
//! Every family is an analytic curve `t ↦ (x, ẋ, ξ, ξ̇)` together with its
//! accelerations, so it can be checked against its system by substitution
//! and used to seed integrations.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fmt;
use std::sync::Arc;

use crate::bundle::{BundleState, FPlanarCoefficients, FTensor, Jet, ResidualReport, System};
use crate::error::{Error, Result};
use crate::geometry::{inner, CurvatureOperator, MetricStructure, Vector};

/// Tolerance on parameter constraints of closed-form families.
pub const PARAMETER_TOLERANCE: f64 = 1e-12;

/// Whether a family is an exact solution of its system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyStatus {
    Exact,
    /// Stored as published; only its residual is reported.
    ResidualOnly,
}

type JetFn = Arc<dyn Fn(f64) -> Jet + Send + Sync>;

/// A closed-form curve on the bundle and the system it is meant to solve.
#[derive(Clone)]
pub struct Family {
    pub name: &'static str,
    pub params: Vec<(&'static str, f64)>,
    pub system: System,
    /// Open interval on which the formulas are defined.
    pub domain: (f64, f64),
    /// Default closed sampling interval inside the domain.
    pub window: (f64, f64),
    pub status: FamilyStatus,
    jet: JetFn,
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Family")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("system", &self.system.name())
            .field("domain", &self.domain)
            .field("window", &self.window)
            .field("status", &self.status)
            .finish()
    }
}

impl Family {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    pub fn jet(&self, t: f64) -> Result<Jet> {
        if !(t > self.domain.0 && t < self.domain.1) {
            return Err(Error::InvalidArgument(format!(
                "t = {t} lies outside the domain ({}, {}) of family {}",
                self.domain.0, self.domain.1, self.name
            )));
        }
        Ok((self.jet)(t))
    }

    pub fn state(&self, t: f64) -> Result<BundleState> {
        Ok(self.jet(t)?.state)
    }

    /// `n` evenly spaced sample times over the window.
    pub fn sample_times(&self, n: usize) -> Vec<f64> {
        let (a, b) = self.window;
        if n < 2 {
            return vec![a];
        }
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    /// Substitute `n` window samples into the family's system.
    pub fn residual(&self, m: &MetricStructure, n: usize) -> Result<ResidualReport> {
        let times = self.sample_times(n);
        let jets = times.iter().map(|t| self.jet(*t)).collect::<Result<Vec<_>>>()?;
        self.system.residual_at_jets(m, &times, &jets)
    }

    /// Max coordinate error of sampled states against the closed form.
    pub fn max_error(&self, times: &[f64], states: &[BundleState]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (t, s) in times.iter().zip(states) {
            let exact = self.state(*t)?;
            worst = worst.max((exact.to_flat() - s.to_flat()).amax());
        }
        Ok(worst)
    }
}

/// Reads named parameters with defaults and rejects unknown names.
struct Params<'a> {
    given: &'a BTreeMap<String, f64>,
    used: Vec<(&'static str, f64)>,
}

impl<'a> Params<'a> {
    fn new(given: &'a BTreeMap<String, f64>) -> Self {
        Self { given, used: Vec::new() }
    }

    fn get(&mut self, name: &'static str, default: f64) -> f64 {
        let v = self.given.get(name).copied().unwrap_or(default);
        self.used.push((name, v));
        v
    }

    fn get_or_else(&mut self, name: &'static str, default: impl FnOnce() -> f64) -> f64 {
        let v = match self.given.get(name) {
            Some(v) => *v,
            None => default(),
        };
        self.used.push((name, v));
        v
    }

    fn vector(&mut self, names: &[&'static str], defaults: &[f64]) -> Vector {
        Vector::from_iterator(names.len(), names.iter().zip(defaults).map(|(n, d)| self.get(n, *d)))
    }

    fn finish(self, family: &str) -> Result<Vec<(&'static str, f64)>> {
        for key in self.given.keys() {
            if !self.used.iter().any(|(n, _)| n == key) {
                return Err(Error::InvalidArgument(format!("family {family} has no parameter `{key}`")));
            }
        }
        if let Some((n, v)) = self.used.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("parameter {n} = {v} is not finite")));
        }
        Ok(self.used)
    }
}

fn require(what: &str, residual: f64) -> Result<()> {
    if residual.abs() > PARAMETER_TOLERANCE || residual.is_nan() {
        return Err(Error::Constraint {
            what: what.to_string(),
            residual: residual.abs(),
            tolerance: PARAMETER_TOLERANCE,
        });
    }
    Ok(())
}

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

/// A named manifold with its structure and closed-form families.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub structure: MetricStructure,
    pub f: Option<FTensor>,
    pub curvature: CurvatureOperator,
    /// `∇R = 0`, so projected geodesics have constant Frenet curvatures.
    pub locally_symmetric: bool,
    family_names: Vec<&'static str>,
}

pub const ENTRY_NAMES: [&str; 5] = ["exp2d", "flat_diag", "poly2d", "euclid_oblique", "const_curv"];

/// Look up an entry by name. Accepts `poly2d(a,b)`, `euclid_oblique(dim)` and `const_curv(c)`.
pub fn entry(name: &str) -> Result<CatalogEntry> {
    let trimmed = name.trim();
    let (base, args) = match trimmed.find('(') {
        Some(i) if trimmed.ends_with(')') => {
            let inner = &trimmed[i + 1..trimmed.len() - 1];
            let args = inner
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::UnknownEntry(name.to_string()))?;
            (&trimmed[..i], args)
        }
        _ => (trimmed, Vec::new()),
    };
    let arity = |n: usize| -> Result<()> {
        if args.len() == n || args.is_empty() {
            Ok(())
        } else {
            Err(Error::UnknownEntry(name.to_string()))
        }
    };
    match base {
        "exp2d" if args.is_empty() => exp2d(),
        "flat_diag" if args.is_empty() => flat_diag(),
        "poly2d" => {
            arity(2)?;
            let (a, b) = if args.is_empty() { (1.0, 0.5) } else { (args[0], args[1]) };
            poly2d(a, b)
        }
        "euclid_oblique" => {
            arity(1)?;
            let dim = args.first().copied().unwrap_or(4.0);
            if dim.fract() != 0.0 || dim < 2.0 {
                return Err(Error::UnknownEntry(name.to_string()));
            }
            euclid_oblique(dim as usize)
        }
        "const_curv" => {
            arity(1)?;
            const_curv(args.first().copied().unwrap_or(1.0))
        }
        _ => Err(Error::UnknownEntry(name.to_string())),
    }
}

/// `g = e^{2x}dx² + e^{2y}dy²`, `φ = [[0, e^{y−x}], [e^{x−y}, 0]]`.
pub fn exp2d() -> Result<CatalogEntry> {
    let structure = MetricStructure::from_strings(
        2,
        &[&["exp(2*x)", "0"], &["0", "exp(2*y)"]],
        &[&["0", "exp(y-x)"], &["exp(x-y)", "0"]],
    )?
    .with_christoffel_entries(&[(0, 0, 0, "1"), (1, 1, 1, "1")])?;
    Ok(CatalogEntry {
        name: "exp2d".into(),
        structure,
        f: None,
        curvature: CurvatureOperator::FromMetric,
        locally_symmetric: true,
        family_names: vec!["natural_lift", "horizontal_lift"],
    })
}

/// Flat plane with `φ = diag(1, −1)`.
pub fn flat_diag() -> Result<CatalogEntry> {
    let structure = MetricStructure::from_strings(2, &[&["1", "0"], &["0", "1"]], &[&["1", "0"], &["0", "-1"]])?
        .with_christoffel_entries(&[])?;
    Ok(CatalogEntry {
        name: "flat_diag".into(),
        structure,
        f: Some(FTensor::Phi),
        curvature: CurvatureOperator::FromMetric,
        locally_symmetric: true,
        family_names: vec!["hphi_geodesic", "hphi_planar", "hphi_planar_constant", "hphi_planar_constant_unit"],
    })
}

/// `g = x²dx² + y²dy²`, `φ = [[0, y/x], [x/y, 0]]`, `F = diag(a, b)`.
pub fn poly2d(a: f64, b: f64) -> Result<CatalogEntry> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument("poly2d parameters must be finite".into()));
    }
    let structure = MetricStructure::from_strings(2, &[&["x^2", "0"], &["0", "y^2"]], &[&["0", "y/x"], &["x/y", "0"]])?
        .with_christoffel_entries(&[(0, 0, 0, "1/x"), (1, 1, 1, "1/y")])?
        .with_chart_box(vec![(0.5, 2.0), (0.5, 2.0)])?;
    let (sa, sb) = (format!("{a:?}"), format!("{b:?}"));
    let f = FTensor::from_strings(2, &[&[&sa, "0"], &["0", &sb]])?;
    Ok(CatalogEntry {
        name: format!("poly2d({a:?},{b:?})"),
        structure,
        f: Some(f),
        curvature: CurvatureOperator::FromMetric,
        locally_symmetric: true,
        family_names: vec!["f_geodesic_horizontal", "f_geodesic_horizontal_unit", "f_planar_printed"],
    })
}

fn diagonal_rows(entries: &[&'static str]) -> Vec<Vec<&'static str>> {
    let n = entries.len();
    (0..n).map(|i| (0..n).map(|j| if i == j { entries[i] } else { "0" }).collect()).collect()
}

fn flat_split(dim: usize) -> Result<MetricStructure> {
    if dim < 2 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidStructure(format!("dimension must be even and >= 2, got {dim}")));
    }
    let g = diagonal_rows(&vec!["1"; dim]);
    let signs: Vec<&str> = (0..dim).map(|i| if i < dim / 2 { "1" } else { "-1" }).collect();
    let phi = diagonal_rows(&signs);
    let g: Vec<&[&str]> = g.iter().map(Vec::as_slice).collect();
    let phi: Vec<&[&str]> = phi.iter().map(Vec::as_slice).collect();
    MetricStructure::from_strings(dim, &g, &phi)?.with_christoffel_entries(&[])
}

/// Flat `ℝ^{dim}` with `φ = diag(1,…,1,−1,…,−1)`.
pub fn euclid_oblique(dim: usize) -> Result<CatalogEntry> {
    Ok(CatalogEntry {
        name: if dim == 4 { "euclid_oblique".into() } else { format!("euclid_oblique({dim})") },
        structure: flat_split(dim)?,
        f: None,
        curvature: CurvatureOperator::FromMetric,
        locally_symmetric: true,
        family_names: vec!["oblique_geodesic"],
    })
}

/// Flat `ℝ⁴` base driven by the synthetic constant-curvature operator with constant `c`.
pub fn const_curv(c: f64) -> Result<CatalogEntry> {
    if !c.is_finite() {
        return Err(Error::InvalidArgument(format!("curvature constant must be finite, got {c}")));
    }
    Ok(CatalogEntry {
        name: format!("const_curv({c:?})"),
        structure: flat_split(4)?,
        f: None,
        curvature: CurvatureOperator::Constant(c),
        locally_symmetric: true,
        family_names: vec!["helix"],
    })
}

impl CatalogEntry {
    pub fn family_names(&self) -> &[&'static str] {
        &self.family_names
    }

    /// Families with default parameters.
    pub fn default_families(&self) -> Result<Vec<Family>> {
        let none = BTreeMap::new();
        self.family_names.iter().map(|n| self.family(n, &none)).collect()
    }

    /// Build a family, overriding defaults with `params`.
    pub fn family(&self, name: &str, params: &BTreeMap<String, f64>) -> Result<Family> {
        if !self.family_names.contains(&name) {
            return Err(Error::UnknownEntry(format!("{}/{}", self.name, name)));
        }
        let mut p = Params::new(params);
        let mut family = match name {
            "natural_lift" => exp2d_natural_lift(&mut p)?,
            "horizontal_lift" => exp2d_horizontal_lift(&mut p)?,
            "hphi_geodesic" => flat_hphi_geodesic(&mut p),
            "hphi_planar" => flat_hphi_planar(&mut p)?,
            "hphi_planar_constant" => flat_planar_constant(&mut p, false)?,
            "hphi_planar_constant_unit" => flat_planar_constant(&mut p, true)?,
            "f_geodesic_horizontal" => self.poly_horizontal(&mut p, false)?,
            "f_geodesic_horizontal_unit" => self.poly_horizontal(&mut p, true)?,
            "f_planar_printed" => self.poly_printed(&mut p)?,
            "oblique_geodesic" => self.oblique(&mut p)?,
            "helix" => self.helix(&mut p)?,
            _ => unreachable!("listed family without a builder"),
        };
        family.params = p.finish(name)?;
        family.system = family.system.with_curvature(self.curvature);
        Ok(family)
    }

    fn poly_f(&self) -> (f64, f64) {
        let f = self.f.as_ref().expect("poly2d carries F").at(&self.structure, &[1.0, 1.0]).expect("constant F");
        (f[(0, 0)], f[(1, 1)])
    }

    fn poly_horizontal(&self, p: &mut Params, unit: bool) -> Result<Family> {
        let (a, b) = self.poly_f();
        let e1 = p.get("eps1", 1.0);
        let c1 = p.get("c1", 1.0);
        let c2 = p.get("c2", 0.5);
        let e2 = p.get("eps2", 1.0);
        let c3 = p.get("c3", 0.5);
        let c4 = p.get("c4", 1.0);
        let (k1, k2) = if unit {
            let k1 = p.get("k1", 1.0);
            let k2 = p.get_or_else("k2", || 0.5 / k1);
            // g(ξ, φξ) = 2xy·uv = 2 k1 k2 along the lift.
            require("2 k1 k2 = 1", 2.0 * k1 * k2 - 1.0)?;
            (k1, k2)
        } else {
            (p.get("k1", 0.7), p.get("k2", -0.4))
        };
        if e1.abs() != 1.0 || e2.abs() != 1.0 {
            return Err(Error::InvalidArgument("eps1 and eps2 must be +1 or -1".into()));
        }
        let system = if unit {
            System::f_geodesic_unit(self.f.clone().expect("F"))
        } else {
            System::f_geodesic_tm(self.f.clone().expect("F"))
        };
        poly_family(
            if unit { "f_geodesic_horizontal_unit" } else { "f_geodesic_horizontal" },
            system,
            FamilyStatus::Exact,
            [e1, c1, c2, a, e2, c3, c4, b],
            (k1, k2),
        )
    }

    fn poly_printed(&self, p: &mut Params) -> Result<Family> {
        let (a, b) = self.poly_f();
        let e1 = p.get("eps1", 1.0);
        let c1 = p.get("c1", 1.0);
        let c2 = p.get("c2", 0.5);
        let e2 = p.get("eps2", 1.0);
        let c3 = p.get("c3", 0.5);
        let c4 = p.get("c4", 1.0);
        let k1 = p.get("k1", 0.7);
        let k2 = p.get("k2", -0.4);
        let r1 = p.get("rho1", 0.0);
        let r2 = p.get("rho2", 1.5);
        // x = ε₁√(c₁ e^{ϱ₁ + aϱ₂t} + c₂): fold e^{ϱ₁} into the amplitude.
        let system = System::f_planar_tm(self.f.clone().expect("F"), FPlanarCoefficients::constant(r1, r2));
        poly_family(
            "f_planar_printed",
            system,
            FamilyStatus::ResidualOnly,
            [e1, c1 * r1.exp(), c2, a * r2, e2, c3 * r1.exp(), c4, b * r2],
            (k1, k2),
        )
    }

    fn oblique(&self, p: &mut Params) -> Result<Family> {
        let n = self.structure.dim();
        let half = n / 2;
        let rho = p.get("rho", 0.5);
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("rho must lie in [0, 1], got {rho}")));
        }
        let names = |prefix: &'static str| -> Vec<&'static str> { (1..=n).map(|i| param_name(prefix, i)).collect() };
        let speed = (1.0 - rho * rho).sqrt();
        let mut c1d = vec![0.0; n];
        c1d[0] = 0.6 * speed;
        c1d[n - 1] = 0.8 * speed;
        let c2d: Vec<f64> = (0..n).map(|i| [0.1, -0.2, 0.3, 0.05][i % 4]).collect();
        let mut c3d = vec![0.0; n];
        let mut c4d = vec![0.0; n];
        if half >= 2 {
            c3d[0] = SQRT_2;
            c3d[half] = 1.0;
            c4d[1] = SQRT_2;
            c4d[half + 1] = 1.0;
        }
        let c1 = p.vector(&names("c1_"), &c1d);
        let c2 = p.vector(&names("c2_"), &c2d);
        let c3 = p.vector(&names("c3_"), &c3d);
        let c4 = p.vector(&names("c4_"), &c4d);
        let twin = self.structure.twin_metric_at(&vec![0.0; n])?;
        require("g(c3, phi c3) = 1", inner(&twin, &c3, &c3) - 1.0)?;
        require("g(c4, phi c4) = 1", inner(&twin, &c4, &c4) - 1.0)?;
        require("g(c3, phi c4) = 0", inner(&twin, &c3, &c4))?;
        require("|c1|^2 = 1 - rho^2", c1.norm_squared() - (1.0 - rho * rho))?;
        let jet = move |t: f64| {
            let (s, c) = (rho * t).sin_cos();
            let xi = &c3 * c + &c4 * s;
            Jet {
                state: BundleState {
                    x: &c1 * t + &c2,
                    xdot: c1.clone(),
                    xidot: (&c4 * c - &c3 * s) * rho,
                    xi: xi.clone(),
                },
                xddot: Vector::zeros(c1.len()),
                xiddot: xi * (-rho * rho),
            }
        };
        Ok(Family {
            name: "oblique_geodesic",
            params: Vec::new(),
            system: System::geodesic_unit(),
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            window: (0.0, 1.0),
            status: FamilyStatus::Exact,
            jet: Arc::new(jet),
        })
    }

    fn helix(&self, p: &mut Params) -> Result<Family> {
        let CurvatureOperator::Constant(c) = self.curvature else {
            return Err(Error::InvalidArgument("helix family needs a constant-curvature entry".into()));
        };
        let rho = p.get("rho", 0.5);
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {rho}")));
        }
        let speed = (1.0 - rho * rho).sqrt();
        let alpha = p.get("alpha", 0.6 * speed);
        let beta3 = p.get("beta3", 0.48 * speed);
        let beta4 = p.get("beta4", 0.64 * speed);
        let theta = p.get("theta", 0.2);
        let x0 = p.vector(&["x0_1", "x0_2", "x0_3", "x0_4"], &[0.0; 4]);
        require(
            "alpha^2 + beta3^2 + beta4^2 = 1 - rho^2",
            alpha * alpha + beta3 * beta3 + beta4 * beta4 - speed * speed,
        )?;
        let omega = c * rho;
        let jet = move |t: f64| {
            let (s, co) = (omega * t + theta).sin_cos();
            let (s0, c0) = theta.sin_cos();
            let (planar1, planar2) = if omega == 0.0 {
                (alpha * c0 * t, alpha * s0 * t)
            } else {
                (alpha / omega * (s - s0), alpha / omega * (c0 - co))
            };
            let (rs, rc) = (rho * t).sin_cos();
            Jet {
                state: BundleState {
                    x: &x0 + v(&[planar1, planar2, beta3 * t, beta4 * t]),
                    xdot: v(&[alpha * co, alpha * s, beta3, beta4]),
                    xi: v(&[rc, rs, 0.0, 0.0]),
                    xidot: v(&[-rho * rs, rho * rc, 0.0, 0.0]),
                },
                xddot: v(&[-alpha * omega * s, alpha * omega * co, 0.0, 0.0]),
                xiddot: v(&[-rho * rho * rc, -rho * rho * rs, 0.0, 0.0]),
            }
        };
        Ok(Family {
            name: "helix",
            params: Vec::new(),
            system: System::geodesic_unit(),
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            window: (0.0, 1.0),
            status: FamilyStatus::Exact,
            jet: Arc::new(jet),
        })
    }
}

fn param_name(prefix: &'static str, i: usize) -> &'static str {
    // Parameter names are static so families stay cheap to clone.
    const C1: [&str; 8] = ["c1_1", "c1_2", "c1_3", "c1_4", "c1_5", "c1_6", "c1_7", "c1_8"];
    const C2: [&str; 8] = ["c2_1", "c2_2", "c2_3", "c2_4", "c2_5", "c2_6", "c2_7", "c2_8"];
    const C3: [&str; 8] = ["c3_1", "c3_2", "c3_3", "c3_4", "c3_5", "c3_6", "c3_7", "c3_8"];
    const C4: [&str; 8] = ["c4_1", "c4_2", "c4_3", "c4_4", "c4_5", "c4_6", "c4_7", "c4_8"];
    let table = match prefix {
        "c1_" => &C1,
        "c2_" => &C2,
        "c3_" => &C3,
        _ => &C4,
    };
    table.get(i - 1).copied().unwrap_or("c_out_of_range")
}

/// `x = a + ln(1+λt)`, `y = b + ln(1+ηt)`, `ξ = γ′`, with `λη = 1/(2e^{a+b})`.
fn exp2d_natural_lift(p: &mut Params) -> Result<Family> {
    let a = p.get("a", 0.0);
    let b = p.get("b", 0.0);
    let lambda = p.get("lambda", FRAC_1_SQRT_2);
    let target = 0.5 * (-(a + b)).exp();
    let eta = p.get_or_else("eta", || target / lambda);
    require("lambda eta = 1/(2 e^(a+b))", lambda * eta - target)?;
    let domain = log_domain(&[lambda, eta]);
    let jet = move |t: f64| {
        let (dl, de) = (1.0 + lambda * t, 1.0 + eta * t);
        let xdot = v(&[lambda / dl, eta / de]);
        let xddot = v(&[-(lambda / dl).powi(2), -(eta / de).powi(2)]);
        let xiddot = v(&[2.0 * (lambda / dl).powi(3), 2.0 * (eta / de).powi(3)]);
        Jet {
            state: BundleState {
                x: v(&[a + dl.ln(), b + de.ln()]),
                xdot: xdot.clone(),
                xi: xdot,
                xidot: xddot.clone(),
            },
            xddot,
            xiddot,
        }
    };
    Ok(Family {
        name: "natural_lift",
        params: Vec::new(),
        system: System::geodesic_unit(),
        domain,
        window: clip_window(domain, (0.0, 1.0)),
        status: FamilyStatus::Exact,
        jet: Arc::new(jet),
    })
}

/// Same base geodesic, fibers `u = h₁/(1+λt)`, `v = h₂/(1+ηt)` with `h₁h₂ = 1/(2e^{a+b})`.
fn exp2d_horizontal_lift(p: &mut Params) -> Result<Family> {
    let a = p.get("a", 0.0);
    let b = p.get("b", 0.0);
    let lambda = p.get("lambda", FRAC_1_SQRT_2);
    let eta = p.get("eta", FRAC_1_SQRT_2);
    let target = 0.5 * (-(a + b)).exp();
    let h1 = p.get("h1", 1.0);
    let h2 = p.get_or_else("h2", || target / h1);
    require("h1 h2 = 1/(2 e^(a+b))", h1 * h2 - target)?;
    let domain = log_domain(&[lambda, eta]);
    let jet = move |t: f64| {
        let (dl, de) = (1.0 + lambda * t, 1.0 + eta * t);
        Jet {
            state: BundleState {
                x: v(&[a + dl.ln(), b + de.ln()]),
                xdot: v(&[lambda / dl, eta / de]),
                xi: v(&[h1 / dl, h2 / de]),
                xidot: v(&[-h1 * lambda / (dl * dl), -h2 * eta / (de * de)]),
            },
            xddot: v(&[-(lambda / dl).powi(2), -(eta / de).powi(2)]),
            xiddot: v(&[2.0 * h1 * lambda * lambda / dl.powi(3), 2.0 * h2 * eta * eta / de.powi(3)]),
        }
    };
    Ok(Family {
        name: "horizontal_lift",
        params: Vec::new(),
        system: System::geodesic_unit(),
        domain,
        window: clip_window(domain, (0.0, 1.0)),
        status: FamilyStatus::Exact,
        jet: Arc::new(jet),
    })
}

/// Open interval where every `1 + r t` is positive.
fn log_domain(rates: &[f64]) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for &r in rates {
        if r > 0.0 {
            lo = lo.max(-1.0 / r);
        } else if r < 0.0 {
            hi = hi.min(-1.0 / r);
        }
    }
    (lo, hi)
}

fn clip_window(domain: (f64, f64), window: (f64, f64)) -> (f64, f64) {
    let hi = if window.1 < domain.1 { window.1 } else { 0.9 * domain.1 };
    (window.0.max(domain.0), hi)
}

/// `x = k₁eᵗ + k₂`, `y = k₃e⁻ᵗ + k₄`, and likewise for the fiber.
fn flat_hphi_geodesic(p: &mut Params) -> Family {
    let k = p.vector(&["k1", "k2", "k3", "k4"], &[0.5, 0.1, 0.3, -0.2]);
    let l = p.vector(&["l1", "l2", "l3", "l4"], &[0.2, 1.0, -0.1, 0.4]);
    let jet = move |t: f64| {
        let (ep, em) = (t.exp(), (-t).exp());
        let pair = |c: &Vector| {
            (v(&[c[0] * ep + c[1], c[2] * em + c[3]]), v(&[c[0] * ep, -c[2] * em]), v(&[c[0] * ep, c[2] * em]))
        };
        let (x, xdot, xddot) = pair(&k);
        let (xi, xidot, xiddot) = pair(&l);
        Jet { state: BundleState { x, xdot, xi, xidot }, xddot, xiddot }
    };
    Family {
        name: "hphi_geodesic",
        params: Vec::new(),
        system: System::f_geodesic_tm(FTensor::Phi),
        domain: (f64::NEG_INFINITY, f64::INFINITY),
        window: (0.0, 1.0),
        status: FamilyStatus::Exact,
        jet: Arc::new(jet),
    }
}

/// `ϱ₁ = 1/(t+1)`, `ϱ₂ = 1/(t−1)`:
/// `x = a₁(t³ − 3t) + a₂`, `y = a₃(ln((t−1)²) + t) + a₄`, fiber likewise with `b`.
fn flat_hphi_planar(p: &mut Params) -> Result<Family> {
    let a = p.vector(&["a1", "a2", "a3", "a4"], &[0.4, 0.1, 0.3, -0.2]);
    let b = p.vector(&["b1", "b2", "b3", "b4"], &[-0.2, 0.5, 0.25, 0.05]);
    let jet = move |t: f64| {
        let w = t - 1.0;
        let curve = |c: &Vector| {
            (
                v(&[c[0] * (t.powi(3) - 3.0 * t) + c[1], c[2] * ((w * w).ln() + t) + c[3]]),
                v(&[3.0 * c[0] * (t * t - 1.0), c[2] * (t + 1.0) / w]),
                v(&[6.0 * c[0] * t, -2.0 * c[2] / (w * w)]),
            )
        };
        let (x, xdot, xddot) = curve(&a);
        let (xi, xidot, xiddot) = curve(&b);
        Jet { state: BundleState { x, xdot, xi, xidot }, xddot, xiddot }
    };
    Ok(Family {
        name: "hphi_planar",
        params: Vec::new(),
        system: System::f_planar_tm(FTensor::Phi, FPlanarCoefficients::from_strings("1/(t+1)", "1/(t-1)")?),
        domain: (-1.0, 1.0),
        window: (0.0, 0.9),
        status: FamilyStatus::Exact,
        jet: Arc::new(jet),
    })
}

/// Constant `ϱ₁, ϱ₂` with `F = φ`: `x_i = x_i(0) + v_i (e^{k_i t} − 1)/k_i`, `k = ϱ₁ ± ϱ₂`,
/// carrying a parallel (constant) fiber.
fn flat_planar_constant(p: &mut Params, unit: bool) -> Result<Family> {
    let r1 = p.get("rho1", 0.3);
    let r2 = p.get("rho2", -0.5);
    let x0 = p.vector(&["x1", "x2"], &[0.1, -0.2]);
    let v0 = p.vector(&["v1", "v2"], &[0.6, 0.8]);
    let xi = if unit {
        let th = p.get("theta", 0.3);
        v(&[th.cosh(), th.sinh()])
    } else {
        p.vector(&["u1", "u2"], &[0.7, 0.2])
    };
    let rates = [r1 + r2, r1 - r2];
    let jet = move |t: f64| {
        let mut x = Vector::zeros(2);
        let mut xdot = Vector::zeros(2);
        let mut xddot = Vector::zeros(2);
        for i in 0..2 {
            let k = rates[i];
            let e = (k * t).exp();
            x[i] = x0[i] + v0[i] * if k == 0.0 { t } else { (k * t).exp_m1() / k };
            xdot[i] = v0[i] * e;
            xddot[i] = v0[i] * k * e;
        }
        Jet { state: BundleState { x, xdot, xi: xi.clone(), xidot: Vector::zeros(2) }, xddot, xiddot: Vector::zeros(2) }
    };
    let coefficients = FPlanarCoefficients::constant(r1, r2);
    Ok(Family {
        name: if unit { "hphi_planar_constant_unit" } else { "hphi_planar_constant" },
        params: Vec::new(),
        system: if unit {
            System::f_planar_unit(FTensor::Phi, coefficients)
        } else {
            System::f_planar_tm(FTensor::Phi, coefficients)
        },
        domain: (f64::NEG_INFINITY, f64::INFINITY),
        window: (0.0, 1.0),
        status: FamilyStatus::Exact,
        jet: Arc::new(jet),
    })
}

/// `x = ε√(c₁e^{at} + c₂)` per coordinate; horizontal fiber `u = k/x`.
fn poly_family(
    name: &'static str,
    system: System,
    status: FamilyStatus,
    [e1, c1, c2, a, e2, c3, c4, b]: [f64; 8],
    (k1, k2): (f64, f64),
) -> Result<Family> {
    // (value, first, second derivative) of ε√(c e^{rt} + d) and of k over it.
    let coord = move |eps: f64, c: f64, d: f64, r: f64, k: f64, t: f64| {
        let e = (r * t).exp();
        let big = c * e + d;
        let (d1, d2) = (r * c * e, r * r * c * e);
        let sq = big.sqrt();
        let x = eps * sq;
        let xd = eps * d1 / (2.0 * sq);
        let xdd = eps * (d2 / (2.0 * sq) - d1 * d1 / (4.0 * big * sq));
        let u = k / x;
        let ud = -k * xd / (x * x);
        let udd = -k * (xdd / (x * x) - 2.0 * xd * xd / (x * x * x));
        ([x, xd, xdd], [u, ud, udd])
    };
    let domain = positive_domain(&[(c1, c2, a), (c3, c4, b)]);
    if !(domain.0 < 0.0 && domain.1 > 0.0) {
        return Err(Error::Constraint {
            what: "c e^{rt} + d must be positive near t = 0".into(),
            residual: (c1 + c2).min(c3 + c4),
            tolerance: 0.0,
        });
    }
    let jet = move |t: f64| {
        let ([x, xd, xdd], [u, ud, udd]) = coord(e1, c1, c2, a, k1, t);
        let ([y, yd, ydd], [w, wd, wdd]) = coord(e2, c3, c4, b, k2, t);
        Jet {
            state: BundleState { x: v(&[x, y]), xdot: v(&[xd, yd]), xi: v(&[u, w]), xidot: v(&[ud, wd]) },
            xddot: v(&[xdd, ydd]),
            xiddot: v(&[udd, wdd]),
        }
    };
    Ok(Family {
        name,
        params: Vec::new(),
        system,
        domain,
        window: clip_window(domain, (0.0, 1.0)),
        status,
        jet: Arc::new(jet),
    })
}

/// Open interval containing 0 on which every `c e^{rt} + d` is positive.
fn positive_domain(terms: &[(f64, f64, f64)]) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for &(c, d, r) in terms {
        if c + d <= 0.0 {
            return (0.0, 0.0);
        }
        // Root of c e^{rt} + d = 0, if any.
        let ratio = -d / c;
        if c == 0.0 || r == 0.0 || ratio <= 0.0 {
            continue;
        }
        let root = ratio.ln() / r;
        if root > 0.0 {
            hi = hi.min(root);
        } else {
            lo = lo.max(root);
        }
    }
    (lo, hi)
}
