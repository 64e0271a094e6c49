//! Tangent-bundle layer: lifts, the φ-Sasaki metric, and the ODE systems
//! for geodesic, F-geodesic and F-planar curves on `TM` and on the φ-unit
//! bundle `T₁M = {(x, ξ) : g(ξ, φξ) = 1}`.
//!
//! States carry coordinate derivatives `(x, ẋ, ξ, ξ̇)`. Covariant quantities
//! are derived on demand:
//!
//! ```text
//! γ″ = ẍ + Γ(ẋ, ẋ)
//! ξ′ = ξ̇ + Γ(ẋ, ξ)
//! ξ″ = d(ξ′)/dt + Γ(ẋ, ξ′)
//! ```

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::expr::{ScalarField, Variables};
use crate::fd;
use crate::geometry::{inner, CurvatureOperator, Matrix, MetricStructure, PointGeometry, Sampling, Vector};
use crate::integrate::Trajectory;

/// Tolerance for the unit-bundle constraints `g(ξ,φξ) = 1`, `g(ξ′,φξ) = 0`.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-10;

/// A point `(x, ξ)` of the tangent bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct BundlePoint {
    pub x: Vector,
    pub xi: Vector,
}

impl BundlePoint {
    pub fn new(x: Vector, xi: Vector) -> Result<Self> {
        if x.len() != xi.len() {
            return Err(Error::InvalidArgument(format!("x has {} entries but xi has {}", x.len(), xi.len())));
        }
        Ok(Self { x, xi })
    }
}

/// A tangent vector to `TM` split as horizontal and vertical parts.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleVector {
    pub horizontal: Vector,
    pub vertical: Vector,
}

impl BundleVector {
    pub fn new(horizontal: Vector, vertical: Vector) -> Self {
        Self { horizontal, vertical }
    }
}

/// ODE state `(x, ẋ, ξ, ξ̇)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleState {
    pub x: Vector,
    pub xdot: Vector,
    pub xi: Vector,
    pub xidot: Vector,
}

impl BundleState {
    pub fn new(x: Vector, xdot: Vector, xi: Vector, xidot: Vector) -> Result<Self> {
        let n = x.len();
        if n == 0 || xdot.len() != n || xi.len() != n || xidot.len() != n {
            return Err(Error::InvalidArgument("state blocks must share one non-zero length".into()));
        }
        Ok(Self { x, xdot, xi, xidot })
    }

    pub fn from_slices(x: &[f64], xdot: &[f64], xi: &[f64], xidot: &[f64]) -> Result<Self> {
        Self::new(
            Vector::from_column_slice(x),
            Vector::from_column_slice(xdot),
            Vector::from_column_slice(xi),
            Vector::from_column_slice(xidot),
        )
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn point(&self) -> BundlePoint {
        BundlePoint { x: self.x.clone(), xi: self.xi.clone() }
    }

    /// Concatenation `[x, ẋ, ξ, ξ̇]`.
    pub fn to_flat(&self) -> Vector {
        let n = self.dim();
        let mut v = Vector::zeros(4 * n);
        v.rows_mut(0, n).copy_from(&self.x);
        v.rows_mut(n, n).copy_from(&self.xdot);
        v.rows_mut(2 * n, n).copy_from(&self.xi);
        v.rows_mut(3 * n, n).copy_from(&self.xidot);
        v
    }

    pub fn from_flat(v: &Vector) -> Self {
        let n = v.len() / 4;
        Self {
            x: v.rows(0, n).into_owned(),
            xdot: v.rows(n, n).into_owned(),
            xi: v.rows(2 * n, n).into_owned(),
            xidot: v.rows(3 * n, n).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.x, &self.xdot, &self.xi, &self.xidot].iter().all(|v| v.iter().all(|c| c.is_finite()))
    }

    /// Same curve traversed backwards: velocities negated.
    pub fn reversed(&self) -> Self {
        Self { x: self.x.clone(), xdot: -&self.xdot, xi: self.xi.clone(), xidot: -&self.xidot }
    }
}

/// A state together with its coordinate accelerations `ẍ` and `ξ̈`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub state: BundleState,
    pub xddot: Vector,
    pub xiddot: Vector,
}

/// A (1,1)-tensor field `F` on the base.
#[derive(Debug, Clone)]
pub enum FTensor {
    Zero,
    /// Reuse the para-complex structure.
    Phi,
    /// Explicit components `F^i_j`, row-major.
    Components(Vec<ScalarField>),
    /// Lorentz force `q Φ` with `g(ΦX, Y) = Ω(X, Y)`; `omega` holds `Ω_ij` row-major.
    Lorentz {
        omega: Vec<ScalarField>,
        strength: f64,
    },
}

fn parse_square(dim: usize, rows: &[&[&str]], what: &str) -> Result<Vec<ScalarField>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidStructure(format!("{what} must be {dim}x{dim}")));
    }
    rows.iter()
        .flat_map(|r| r.iter())
        .map(|s| ScalarField::parse(s, dim).map_err(|e| Error::Parse { source_text: s.to_string(), source: e }))
        .collect()
}

fn eval_square(fields: &[ScalarField], dim: usize, p: &[f64], what: &str) -> Result<Matrix> {
    let mut m = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = fields[i * dim + j].eval(p).map_err(|e| Error::Eval {
                what: format!("{what}[{}][{}]", i + 1, j + 1),
                point: p.to_vec(),
                source: e,
            })?;
        }
    }
    Ok(m)
}

impl FTensor {
    pub fn from_strings(dim: usize, rows: &[&[&str]]) -> Result<Self> {
        Ok(FTensor::Components(parse_square(dim, rows, "F")?))
    }

    pub fn from_fields(dim: usize, fields: Vec<ScalarField>) -> Result<Self> {
        if fields.len() != dim * dim || fields.iter().any(|f| f.variables() != Variables::Chart(dim)) {
            return Err(Error::InvalidStructure(format!("F must be {dim}x{dim} chart fields")));
        }
        Ok(FTensor::Components(fields))
    }

    /// `F^i_j(p)`.
    pub fn at(&self, m: &MetricStructure, p: &[f64]) -> Result<Matrix> {
        let n = m.dim();
        match self {
            FTensor::Zero => Ok(Matrix::zeros(n, n)),
            FTensor::Phi => m.phi_at(p),
            FTensor::Components(fields) => {
                if fields.len() != n * n {
                    return Err(Error::InvalidStructure(format!("F must be {n}x{n}")));
                }
                eval_square(fields, n, p, "F")
            }
            FTensor::Lorentz { omega, strength } => {
                if omega.len() != n * n {
                    return Err(Error::InvalidStructure(format!("Omega must be {n}x{n}")));
                }
                let om = eval_square(omega, n, p, "Omega")?;
                // g_ab Φ^a_i = Ω_ib, so Φ = -g⁻¹ Ω for antisymmetric Ω.
                Ok(m.inverse_metric_at(p)? * om * (-strength))
            }
        }
    }
}

/// Lorentz force tensor of the 2-form `Ω` with strength `q`.
///
/// `Ω` is checked for antisymmetry and `g` for invertibility at sampled
/// points of the chart box.
pub fn lorentz_force(m: &MetricStructure, omega: &[&[&str]], q: f64, sampling: Sampling) -> Result<FTensor> {
    let n = m.dim();
    let fields = parse_square(n, omega, "Omega")?;
    for p in m.sample_points(sampling) {
        let om = eval_square(&fields, n, &p, "Omega")?;
        let asym = (&om + om.transpose()).amax();
        if asym > 1e-12 * (1.0 + om.amax()) {
            return Err(Error::InvalidStructure(format!("Omega is not antisymmetric at {p:?} (|Ω+Ωᵀ| = {asym:e})")));
        }
        m.inverse_metric_at(&p)?;
    }
    Ok(FTensor::Lorentz { omega: fields, strength: q })
}

/// Coefficient functions `ϱ₁(t)`, `ϱ₂(t)` of an F-planar system.
#[derive(Debug, Clone, PartialEq)]
pub struct FPlanarCoefficients {
    pub rho1: ScalarField,
    pub rho2: ScalarField,
}

impl FPlanarCoefficients {
    pub fn new(rho1: ScalarField, rho2: ScalarField) -> Result<Self> {
        if rho1.variables() != Variables::Time || rho2.variables() != Variables::Time {
            return Err(Error::InvalidArgument("coefficients must be functions of t".into()));
        }
        Ok(Self { rho1, rho2 })
    }

    pub fn from_strings(rho1: &str, rho2: &str) -> Result<Self> {
        let parse =
            |s: &str| ScalarField::parse_time(s).map_err(|e| Error::Parse { source_text: s.to_string(), source: e });
        Self::new(parse(rho1)?, parse(rho2)?)
    }

    pub fn constant(rho1: f64, rho2: f64) -> Self {
        Self { rho1: ScalarField::constant(rho1, Variables::Time), rho2: ScalarField::constant(rho2, Variables::Time) }
    }

    /// `ϱ₁ = 0`, `ϱ₂ = 1`: the F-geodesic case.
    pub fn geodesic() -> Self {
        Self::constant(0.0, 1.0)
    }

    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let ev = |f: &ScalarField, name: &str| {
            f.eval_at(t).map_err(|e| Error::Eval { what: name.to_string(), point: vec![t], source: e })
        };
        Ok((ev(&self.rho1, "rho1")?, ev(&self.rho2, "rho2")?))
    }
}

/// Forcing term `ϱ₁ V + ϱ₂ F V` applied to both `γ′` and `ξ′`.
#[derive(Debug, Clone)]
pub struct Forcing {
    pub f: FTensor,
    pub coefficients: FPlanarCoefficients,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundleKind {
    /// The whole tangent bundle.
    Tangent,
    /// The φ-unit bundle `g(ξ, φξ) = 1`.
    Unit,
}

/// `φ-Sasaki` value `g(A_h, B_h) + g(A_v, φB_v)`.
pub fn sasaki_metric_eval(m: &MetricStructure, bp: &BundlePoint, a: &BundleVector, b: &BundleVector) -> Result<f64> {
    let p = bp.x.as_slice();
    let twin = m.twin_metric_at(p)?;
    let g = m.metric_at(p)?;
    Ok(inner(&g, &a.horizontal, &b.horizontal) + inner(&twin, &a.vertical, &b.vertical))
}

fn unit_defect(twin: &Matrix, xi: &Vector) -> f64 {
    (inner(twin, xi, xi) - 1.0).abs()
}

/// Tangential part `Y − g(Y, φξ) ξ` of the vertical lift of `Y` at a point of `T₁M`.
pub fn lift_tangential(m: &MetricStructure, bp: &BundlePoint, y: &Vector) -> Result<Vector> {
    let twin = m.twin_metric_at(bp.x.as_slice())?;
    let defect = unit_defect(&twin, &bp.xi);
    if defect > CONSTRAINT_TOLERANCE {
        return Err(Error::Constraint {
            what: "g(xi, phi xi) = 1".into(),
            residual: defect,
            tolerance: CONSTRAINT_TOLERANCE,
        });
    }
    Ok(y - &bp.xi * inner(&twin, y, &bp.xi))
}

/// Covariant fiber velocity `ξ′ = ξ̇ + Γ(ẋ, ξ)`.
pub fn covariant_velocity(m: &MetricStructure, state: &BundleState) -> Result<Vector> {
    let gamma = m.christoffel_at(state.x.as_slice())?;
    Ok(&state.xidot + gamma.contract(&state.xdot, &state.xi))
}

/// `(γ″, ξ′)` given the coordinate acceleration `ẍ`.
pub fn covariant_deriv_along(m: &MetricStructure, state: &BundleState, xddot: &Vector) -> Result<(Vector, Vector)> {
    let gamma = m.christoffel_at(state.x.as_slice())?;
    let gamma_dd = xddot + gamma.contract(&state.xdot, &state.xdot);
    let xi_prime = &state.xidot + gamma.contract(&state.xdot, &state.xi);
    Ok((gamma_dd, xi_prime))
}

/// Rescale `ξ` onto `g(ξ, φξ) = 1` and remove the `g(ξ′, φξ)` component of the fiber velocity.
pub fn normalize_unit_state(m: &MetricStructure, state: &BundleState) -> Result<BundleState> {
    let p = state.x.as_slice();
    let twin = m.twin_metric_at(p)?;
    let gamma = m.christoffel_at(p)?;
    let norm = inner(&twin, &state.xi, &state.xi);
    if !(norm > 0.0) {
        return Err(Error::Constraint {
            what: "g(xi, phi xi) must be positive to normalize onto the unit bundle".into(),
            residual: norm,
            tolerance: 0.0,
        });
    }
    let scale = norm.sqrt().recip();
    let xi = &state.xi * scale;
    let xi_prime = (&state.xidot + gamma.contract(&state.xdot, &state.xi)) * scale;
    let xi_prime = &xi_prime - &xi * inner(&twin, &xi_prime, &xi);
    let xidot = &xi_prime - gamma.contract(&state.xdot, &xi);
    Ok(BundleState { x: state.x.clone(), xdot: state.xdot.clone(), xi, xidot })
}

/// `(|g(ξ,φξ) − 1|, |g(ξ′,φξ)|)`.
pub fn unit_constraint_defects(m: &MetricStructure, state: &BundleState) -> Result<(f64, f64)> {
    let twin = m.twin_metric_at(state.x.as_slice())?;
    let xi_prime = covariant_velocity(m, state)?;
    Ok((unit_defect(&twin, &state.xi), inner(&twin, &xi_prime, &state.xi).abs()))
}

/// Pointwise residual split into base and fiber parts (max-abs component).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResidual {
    pub horizontal: f64,
    pub vertical: f64,
}

impl PointResidual {
    pub fn max(&self) -> f64 {
        self.horizontal.max(self.vertical)
    }
}

/// Max residual over a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub max: f64,
    pub horizontal: f64,
    pub vertical: f64,
    pub worst_time: f64,
    pub samples: usize,
}

impl ResidualReport {
    fn from_points(times: &[f64], points: &[PointResidual]) -> Self {
        let mut report = ResidualReport { max: 0.0, horizontal: 0.0, vertical: 0.0, worst_time: times[0], samples: 0 };
        for (t, r) in times.iter().zip(points) {
            report.samples += 1;
            report.horizontal = report.horizontal.max(r.horizontal);
            report.vertical = report.vertical.max(r.vertical);
            let m = if r.max().is_nan() { f64::INFINITY } else { r.max() };
            if m > report.max {
                report.max = m;
                report.worst_time = *t;
            }
        }
        report
    }
}

/// One of the bundle ODE systems.
///
/// Covariant form:
///
/// ```text
/// γ″ = R(ξ′, φξ) γ′ + ϱ₁ γ′ + ϱ₂ F γ′
/// ξ″ = ϱ₁ ξ′ + ϱ₂ F ξ′ − κ ξ
/// ```
///
/// with `κ = 0` on `TM` and `κ = g(ξ′, φξ′)` on the unit bundle.
#[derive(Debug, Clone)]
pub struct System {
    pub kind: BundleKind,
    pub curvature: CurvatureOperator,
    pub forcing: Option<Forcing>,
    kappa_sign: f64,
}

impl System {
    pub fn new(kind: BundleKind, forcing: Option<Forcing>) -> Self {
        Self { kind, curvature: CurvatureOperator::FromMetric, forcing, kappa_sign: 1.0 }
    }

    pub fn geodesic_tm() -> Self {
        Self::new(BundleKind::Tangent, None)
    }

    pub fn geodesic_unit() -> Self {
        Self::new(BundleKind::Unit, None)
    }

    pub fn f_geodesic_tm(f: FTensor) -> Self {
        Self::f_planar_tm(f, FPlanarCoefficients::geodesic())
    }

    pub fn f_geodesic_unit(f: FTensor) -> Self {
        Self::f_planar_unit(f, FPlanarCoefficients::geodesic())
    }

    pub fn f_planar_tm(f: FTensor, coefficients: FPlanarCoefficients) -> Self {
        Self::new(BundleKind::Tangent, Some(Forcing { f, coefficients }))
    }

    pub fn f_planar_unit(f: FTensor, coefficients: FPlanarCoefficients) -> Self {
        Self::new(BundleKind::Unit, Some(Forcing { f, coefficients }))
    }

    pub fn with_curvature(mut self, curvature: CurvatureOperator) -> Self {
        self.curvature = curvature;
        self
    }

    /// Flip the sign of the `κ ξ` term in the right-hand side only (mutation control).
    #[doc(hidden)]
    pub fn with_flipped_kappa_sign(mut self) -> Self {
        self.kappa_sign = -self.kappa_sign;
        self
    }

    pub fn is_mutated(&self) -> bool {
        self.kappa_sign != 1.0
    }

    pub fn name(&self) -> &'static str {
        match (self.kind, self.forcing.is_some()) {
            (BundleKind::Tangent, false) => "geodesic_tm",
            (BundleKind::Unit, false) => "geodesic_unit",
            (BundleKind::Tangent, true) => "f_planar_tm",
            (BundleKind::Unit, true) => "f_planar_unit",
        }
    }

    /// Covariant targets `(A_γ, A_ξ)` for `γ″` and `ξ″`.
    fn targets(
        &self,
        m: &MetricStructure,
        geo: &PointGeometry,
        t: f64,
        state: &BundleState,
        xi_prime: &Vector,
        kappa_sign: f64,
    ) -> Result<(Vector, Vector)> {
        let phi_xi = &geo.phi * &state.xi;
        let mut a_gamma = geo.curvature.apply(xi_prime, &phi_xi, &state.xdot);
        let mut a_xi = Vector::zeros(state.dim());
        if let Some(forcing) = &self.forcing {
            let (r1, r2) = forcing.coefficients.eval(t)?;
            let f = forcing.f.at(m, state.x.as_slice())?;
            a_gamma += &state.xdot * r1 + &f * &state.xdot * r2;
            a_xi += xi_prime * r1 + &f * xi_prime * r2;
        }
        if self.kind == BundleKind::Unit {
            let kappa = inner(&geo.g, xi_prime, &(&geo.phi * xi_prime));
            a_xi -= &state.xi * (kappa_sign * kappa);
        }
        Ok((a_gamma, a_xi))
    }

    /// Time derivative of the state.
    pub fn rhs(&self, m: &MetricStructure, t: f64, state: &BundleState) -> Result<BundleState> {
        let geo = m.point_geometry(state.x.as_slice(), self.curvature, true)?;
        let gamma = &geo.christoffel;
        let dgamma = geo.dchristoffel.as_deref().expect("requested");
        let xi_prime = &state.xidot + gamma.contract(&state.xdot, &state.xi);
        let (a_gamma, a_xi) = self.targets(m, &geo, t, state, &xi_prime, self.kappa_sign)?;

        let xddot = &a_gamma - gamma.contract(&state.xdot, &state.xdot);
        let dxi_prime = &a_xi - gamma.contract(&state.xdot, &xi_prime);
        let mut xiddot = dxi_prime - gamma.contract(&xddot, &state.xi) - gamma.contract(&state.xdot, &state.xidot);
        for (k, dg) in dgamma.iter().enumerate() {
            if state.xdot[k] != 0.0 {
                xiddot -= dg.contract(&state.xdot, &state.xi) * state.xdot[k];
            }
        }
        Ok(BundleState { x: state.xdot.clone(), xdot: xddot, xi: state.xidot.clone(), xidot: xiddot })
    }

    /// Residual of the covariant equations given `γ″`, `ξ′`, `ξ″`.
    pub fn residual_covariant(
        &self,
        m: &MetricStructure,
        t: f64,
        state: &BundleState,
        gamma_dd: &Vector,
        xi_prime: &Vector,
        xi_dd: &Vector,
    ) -> Result<PointResidual> {
        let geo = m.point_geometry(state.x.as_slice(), self.curvature, false)?;
        let (a_gamma, a_xi) = self.targets(m, &geo, t, state, xi_prime, 1.0)?;
        Ok(PointResidual { horizontal: (gamma_dd - a_gamma).amax(), vertical: (xi_dd - a_xi).amax() })
    }

    /// Residual at an analytically known jet.
    pub fn residual_at_jet(&self, m: &MetricStructure, t: f64, jet: &Jet) -> Result<PointResidual> {
        let s = &jet.state;
        let p = s.x.as_slice();
        let gamma = m.christoffel_at(p)?;
        let dgamma = m.christoffel_derivatives_at(p)?;
        let gamma_dd = &jet.xddot + gamma.contract(&s.xdot, &s.xdot);
        let xi_prime = &s.xidot + gamma.contract(&s.xdot, &s.xi);
        let mut dxi_prime = &jet.xiddot + gamma.contract(&jet.xddot, &s.xi) + gamma.contract(&s.xdot, &s.xidot);
        for (k, dg) in dgamma.iter().enumerate() {
            dxi_prime += dg.contract(&s.xdot, &s.xi) * s.xdot[k];
        }
        let xi_dd = dxi_prime + gamma.contract(&s.xdot, &xi_prime);
        self.residual_covariant(m, t, s, &gamma_dd, &xi_prime, &xi_dd)
    }

    /// Max residual over a list of analytic jets.
    pub fn residual_at_jets(&self, m: &MetricStructure, times: &[f64], jets: &[Jet]) -> Result<ResidualReport> {
        if times.is_empty() || times.len() != jets.len() {
            return Err(Error::InvalidArgument("need matching, non-empty times and jets".into()));
        }
        let points = times.iter().zip(jets).map(|(t, j)| self.residual_at_jet(m, *t, j)).collect::<Result<Vec<_>>>()?;
        Ok(ResidualReport::from_points(times, &points))
    }

    /// Residual of the defining equations along a stored trajectory, with time
    /// derivatives of `ẋ` and `ξ′` taken by five-point finite differences.
    pub fn trajectory_residual(&self, m: &MetricStructure, traj: &Trajectory) -> Result<ResidualReport> {
        let (times, states) = (&traj.times, &traj.states);
        if times.len() < fd::STENCIL {
            return Err(Error::TooFewSamples { got: times.len(), need: fd::STENCIL });
        }
        let gammas = states.iter().map(|s| m.christoffel_at(s.x.as_slice())).collect::<Result<Vec<_>>>()?;
        let xdots: Vec<Vector> = states.iter().map(|s| s.xdot.clone()).collect();
        let xi_primes: Vec<Vector> =
            states.iter().zip(&gammas).map(|(s, g)| &s.xidot + g.contract(&s.xdot, &s.xi)).collect();
        let xddots = fd::differentiate(times, &xdots).expect("length checked");
        let dxi_primes = fd::differentiate(times, &xi_primes).expect("length checked");
        let mut points = Vec::with_capacity(times.len());
        for i in 0..times.len() {
            let s = &states[i];
            let gamma_dd = &xddots[i] + gammas[i].contract(&s.xdot, &s.xdot);
            let xi_dd = &dxi_primes[i] + gammas[i].contract(&s.xdot, &xi_primes[i]);
            points.push(self.residual_covariant(m, times[i], s, &gamma_dd, &xi_primes[i], &xi_dd)?);
        }
        Ok(ResidualReport::from_points(times, &points))
    }

    /// Base-curve residual `|γ″ − ϱ₁γ′ − ϱ₂Fγ′|` (F-planar condition on `M`).
    pub fn base_residual_at(
        &self,
        m: &MetricStructure,
        t: f64,
        x: &Vector,
        xdot: &Vector,
        xddot: &Vector,
    ) -> Result<f64> {
        let p = x.as_slice();
        let gamma = m.christoffel_at(p)?;
        let mut r = xddot + gamma.contract(xdot, xdot);
        if let Some(forcing) = &self.forcing {
            let (r1, r2) = forcing.coefficients.eval(t)?;
            let f = forcing.f.at(m, p)?;
            r -= xdot * r1 + f * xdot * r2;
        }
        Ok(r.amax())
    }
}

/// `geodesic_residual` for a stored trajectory.
pub fn geodesic_residual(m: &MetricStructure, traj: &Trajectory, system: &System) -> Result<ResidualReport> {
    system.trajectory_residual(m, traj)
}

/// Mirror `(x, ẋ, ξ, ξ̇) ↦ (x, ẋ, φξ, μ̇)` where `μ′ = φξ′`.
pub fn phi_mirror_state(m: &MetricStructure, state: &BundleState) -> Result<BundleState> {
    let p = state.x.as_slice();
    let phi = m.phi_at(p)?;
    let gamma = m.christoffel_at(p)?;
    let xi_prime = &state.xidot + gamma.contract(&state.xdot, &state.xi);
    let mu = &phi * &state.xi;
    let mu_prime = &phi * xi_prime;
    let mudot = mu_prime - gamma.contract(&state.xdot, &mu);
    Ok(BundleState { x: state.x.clone(), xdot: state.xdot.clone(), xi: mu, xidot: mudot })
}

/// Apply [`phi_mirror_state`] along a trajectory. Requires `∇φ = 0` along the curve.
pub fn phi_mirror(m: &MetricStructure, traj: &Trajectory) -> Result<Trajectory> {
    let tol = m.default_tolerance();
    for s in &traj.states {
        let residual = m.parallel_phi_residual(s.x.as_slice())?;
        if residual > tol {
            return Err(Error::NonParallelStructure { residual });
        }
    }
    let states = traj.states.iter().map(|s| phi_mirror_state(m, s)).collect::<Result<Vec<_>>>()?;
    Trajectory::from_states(m, traj.times.clone(), states)
}

/// Convenience constructor for fixed-size vectors in tests and catalogs.
pub fn vector(xs: &[f64]) -> Vector {
    DVector::from_column_slice(xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp2d() -> MetricStructure {
        MetricStructure::from_strings(
            2,
            &[&["exp(2*x)", "0"], &["0", "exp(2*y)"]],
            &[&["0", "exp(y-x)"], &["exp(x-y)", "0"]],
        )
        .unwrap()
        .with_christoffel_entries(&[(0, 0, 0, "1"), (1, 1, 1, "1")])
        .unwrap()
    }

    fn flat_diag() -> MetricStructure {
        MetricStructure::from_strings(2, &[&["1", "0"], &["0", "1"]], &[&["1", "0"], &["0", "-1"]]).unwrap()
    }

    #[test]
    fn sasaki_metric_examples() {
        let m = exp2d();
        let bp = BundlePoint::new(vector(&[0.0, 0.0]), vector(&[0.3, 0.7])).unwrap();
        let (e1, z) = (vector(&[1.0, 0.0]), vector(&[0.0, 0.0]));
        let h = BundleVector::new(e1.clone(), z.clone());
        let v = BundleVector::new(z.clone(), e1.clone());
        assert_eq!(sasaki_metric_eval(&m, &bp, &h, &h).unwrap(), 1.0);
        assert_eq!(sasaki_metric_eval(&m, &bp, &h, &v).unwrap(), 0.0);
        let flat = flat_diag();
        assert_eq!(sasaki_metric_eval(&flat, &bp, &v, &v).unwrap(), 1.0);
    }

    #[test]
    fn tangential_lift() {
        let m = flat_diag();
        let s2 = 2f64.sqrt();
        let bp = BundlePoint::new(vector(&[0.0, 0.0]), vector(&[s2, 1.0])).unwrap();
        let out = lift_tangential(&m, &bp, &vector(&[1.0, 0.0])).unwrap();
        assert!((out - vector(&[-1.0, -s2])).amax() < 1e-15);
        let zero = lift_tangential(&m, &bp, &bp.xi).unwrap();
        assert!(zero.amax() < 1e-15);
        let off = BundlePoint::new(vector(&[0.0, 0.0]), vector(&[1.0, 1.0])).unwrap();
        assert!(lift_tangential(&m, &off, &vector(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn flat_covariant_velocity_is_coordinate_velocity() {
        let s = BundleState::from_slices(&[0.1, 0.2], &[1.0, -1.0], &[0.5, 0.5], &[0.25, 3.0]).unwrap();
        assert_eq!(covariant_velocity(&flat_diag(), &s).unwrap(), s.xidot);
    }

    #[test]
    fn horizontal_lift_has_zero_fiber_velocity() {
        let m = exp2d();
        let (lam, eta, h1, h2) = (0.4, 1.25, 0.8, 0.625);
        let t: f64 = 0.7;
        let x = vector(&[(1.0 + lam * t).ln(), (1.0 + eta * t).ln()]);
        let xdot = vector(&[lam / (1.0 + lam * t), eta / (1.0 + eta * t)]);
        let xi = vector(&[h1 / (1.0 + lam * t), h2 / (1.0 + eta * t)]);
        let xidot = vector(&[-h1 * lam / (1.0 + lam * t).powi(2), -h2 * eta / (1.0 + eta * t).powi(2)]);
        let s = BundleState::new(x, xdot, xi, xidot).unwrap();
        assert!(covariant_velocity(&m, &s).unwrap().amax() < 1e-15);
    }

    #[test]
    fn flat_rhs_is_free_motion() {
        let s = BundleState::from_slices(&[0.1, 0.2], &[1.0, -1.0], &[0.5, 0.5], &[0.25, 3.0]).unwrap();
        let d = System::geodesic_tm().rhs(&flat_diag(), 0.0, &s).unwrap();
        assert_eq!(d.x, s.xdot);
        assert_eq!(d.xi, s.xidot);
        assert_eq!(d.xdot, vector(&[0.0, 0.0]));
        assert_eq!(d.xidot, vector(&[0.0, 0.0]));
    }

    #[test]
    fn degenerate_planar_reduces_to_geodesic() {
        let m = exp2d();
        let s = BundleState::from_slices(&[0.1, 0.2], &[0.3, -0.4], &[0.5, 0.6], &[0.25, 0.1]).unwrap();
        let planar = System::f_planar_tm(FTensor::Zero, FPlanarCoefficients::constant(0.0, 0.0));
        assert_eq!(planar.rhs(&m, 0.3, &s).unwrap(), System::geodesic_tm().rhs(&m, 0.3, &s).unwrap());
    }

    #[test]
    fn normalization_lands_on_unit_bundle() {
        let m = exp2d();
        let s = BundleState::from_slices(&[0.2, -0.1], &[0.3, 0.4], &[1.0, 2.0], &[0.5, -0.3]).unwrap();
        let n = normalize_unit_state(&m, &s).unwrap();
        let (a, b) = unit_constraint_defects(&m, &n).unwrap();
        assert!(a < 1e-14 && b < 1e-14, "{a} {b}");
        let bad = BundleState::from_slices(&[0.0, 0.0], &[0.0, 0.0], &[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert!(normalize_unit_state(&m, &bad).is_err());
    }

    #[test]
    fn lorentz_force_examples() {
        let m = flat_diag();
        let f = lorentz_force(&m, &[&["0", "1"], &["-1", "0"]], 1.0, Sampling { count: 4, seed: 3 }).unwrap();
        let phi = f.at(&m, &[0.3, 0.4]).unwrap();
        assert_eq!(phi, Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let (x, y) = (vector(&[0.7, -1.3]), vector(&[2.0, 0.5]));
        // g(ΦX, Y) = Ω(X, Y)
        let omega = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(((&phi * &x).dot(&y) - x.dot(&(&omega * &y))).abs() < 1e-15);
        let zero = lorentz_force(&m, &[&["0", "0"], &["0", "0"]], 1.0, Sampling::default()).unwrap();
        assert_eq!(zero.at(&m, &[0.0, 0.0]).unwrap().amax(), 0.0);
        assert!(lorentz_force(&m, &[&["0", "1"], &["1", "0"]], 1.0, Sampling::default()).is_err());
    }

    #[test]
    fn mirror_of_state() {
        let m = flat_diag();
        let s2 = 2f64.sqrt();
        let s = BundleState::from_slices(&[0.0, 0.0], &[1.0, 0.0], &[s2, 1.0], &[0.0, 0.0]).unwrap();
        let mirrored = phi_mirror_state(&m, &s).unwrap();
        assert_eq!(mirrored.xi, vector(&[s2, -1.0]));
        let twin = m.twin_metric_at(&[0.0, 0.0]).unwrap();
        assert!((inner(&twin, &mirrored.xi, &mirrored.xi) - 1.0).abs() < 1e-15);
        assert_eq!(phi_mirror_state(&m, &mirrored).unwrap(), s);
    }
}
