//! Fixed-step explicit integration of the bundle systems with invariant monitors.

use thiserror::Error;

use crate::bundle::{
    covariant_velocity, normalize_unit_state, unit_constraint_defects, BundleKind, BundleState, System,
    CONSTRAINT_TOLERANCE,
};
use crate::error::Error as GeometryError;
use crate::geometry::{inner, MetricStructure, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Rk4,
    /// Forward Euler, for diagnostics only.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub step: f64,
    pub t0: f64,
    pub t1: f64,
    pub method: Method,
    pub monitor_every: usize,
}

impl IntegratorConfig {
    pub fn new(step: f64, t0: f64, t1: f64) -> Self {
        Self { step, t0, t1, method: Method::Rk4, monitor_every: 1 }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_monitor_every(mut self, every: usize) -> Self {
        self.monitor_every = every;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |msg: String| Err(IntegrateError::InvalidConfig(msg));
        if !(self.t0.is_finite() && self.t1.is_finite()) {
            return bad("t-span must be finite".into());
        }
        if !(self.t1 > self.t0) {
            return bad(format!("t1 ({}) must exceed t0 ({})", self.t1, self.t0));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if self.step > self.t1 - self.t0 {
            return bad(format!("step {} exceeds the t-span length {}", self.step, self.t1 - self.t0));
        }
        if self.monitor_every == 0 {
            return bad("monitor_every must be at least 1".into());
        }
        Ok(())
    }

    /// Grid `t0, t0 + h, …, t1`; the final step is shortened to land on `t1`.
    pub fn grid(&self) -> Vec<f64> {
        let span = self.t1 - self.t0;
        let n = ((span / self.step) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let mut times: Vec<f64> = (0..n).map(|k| self.t0 + k as f64 * self.step).collect();
        times.push(self.t1);
        times
    }
}

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state rejected: {0}")]
    Init(#[source] GeometryError),
    #[error("state became non-finite after t = {t_last}")]
    BlowUp { t_last: f64, partial: Box<Trajectory> },
    #[error("evaluation failed after t = {t_last}: {source}")]
    Domain {
        t_last: f64,
        partial: Box<Trajectory>,
        #[source]
        source: GeometryError,
    },
}

impl IntegrateError {
    /// Trajectory computed before the failure, if any.
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            IntegrateError::BlowUp { partial, .. } | IntegrateError::Domain { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Invariants evaluated from one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorSample {
    pub t: f64,
    /// `g(ξ, φξ)`.
    pub unit_norm: f64,
    /// `g(ξ′, φξ′)`.
    pub rho_sq: f64,
    /// `g(γ′, γ′)`.
    pub speed_sq: f64,
    /// `g(ξ′, φξ)`.
    pub normal_velocity: f64,
}

impl MonitorSample {
    pub fn compute(m: &MetricStructure, t: f64, s: &BundleState) -> Result<Self, GeometryError> {
        let p = s.x.as_slice();
        let g = m.metric_at(p)?;
        let twin = m.twin_metric_at(p)?;
        let xi_prime = covariant_velocity(m, s)?;
        Ok(Self {
            t,
            unit_norm: inner(&twin, &s.xi, &s.xi),
            rho_sq: inner(&twin, &xi_prime, &xi_prime),
            speed_sq: inner(&g, &s.xdot, &s.xdot),
            normal_velocity: inner(&twin, &xi_prime, &s.xi),
        })
    }
}

/// Largest deviation of each monitor from its initial value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Drift {
    pub unit_norm: f64,
    pub rho_sq: f64,
    pub speed_sq: f64,
    pub normal_velocity: f64,
}

impl Drift {
    pub fn max(&self) -> f64 {
        self.unit_norm.max(self.rho_sq).max(self.speed_sq).max(self.normal_velocity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BundleState>,
    pub monitors: Vec<MonitorSample>,
}

impl Trajectory {
    /// Build from states, monitoring every sample.
    pub fn from_states(m: &MetricStructure, times: Vec<f64>, states: Vec<BundleState>) -> Result<Self, GeometryError> {
        if times.len() != states.len() {
            return Err(GeometryError::InvalidArgument("times and states differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GeometryError::InvalidArgument("times must be strictly increasing".into()));
        }
        let monitors =
            times.iter().zip(&states).map(|(t, s)| MonitorSample::compute(m, *t, s)).collect::<Result<_, _>>()?;
        Ok(Self { times, states, monitors })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &BundleState)> {
        self.times.last().copied().zip(self.states.last())
    }

    pub fn drift(&self) -> Drift {
        let Some(first) = self.monitors.first() else {
            return Drift::default();
        };
        let mut d = Drift::default();
        for s in &self.monitors {
            d.unit_norm = d.unit_norm.max((s.unit_norm - first.unit_norm).abs());
            d.rho_sq = d.rho_sq.max((s.rho_sq - first.rho_sq).abs());
            d.speed_sq = d.speed_sq.max((s.speed_sq - first.speed_sq).abs());
            d.normal_velocity = d.normal_velocity.max((s.normal_velocity - first.normal_velocity).abs());
        }
        d
    }

    /// Cubic Hermite interpolation of `x` and `ξ` (with their derivatives) at `t`.
    pub fn sample_at(&self, t: f64) -> Option<BundleState> {
        let (first, last) = (*self.times.first()?, *self.times.last()?);
        if !(t >= first && t <= last) {
            return None;
        }
        let i = match self.times.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(i) => return Some(self.states[i].clone()),
            Err(i) => i - 1,
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let (a, b) = (&self.states[i], &self.states[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (h00, h10, h01, h11) = (
            2.0 * s.powi(3) - 3.0 * s * s + 1.0,
            s.powi(3) - 2.0 * s * s + s,
            -2.0 * s.powi(3) + 3.0 * s * s,
            s.powi(3) - s * s,
        );
        let (d00, d10, d01, d11) = (
            (6.0 * s * s - 6.0 * s) / h,
            3.0 * s * s - 4.0 * s + 1.0,
            (-6.0 * s * s + 6.0 * s) / h,
            3.0 * s * s - 2.0 * s,
        );
        let value =
            |p0: &Vector, v0: &Vector, p1: &Vector, v1: &Vector| p0 * h00 + v0 * (h10 * h) + p1 * h01 + v1 * (h11 * h);
        let deriv = |p0: &Vector, v0: &Vector, p1: &Vector, v1: &Vector| p0 * d00 + v0 * d10 + p1 * d01 + v1 * d11;
        Some(BundleState {
            x: value(&a.x, &a.xdot, &b.x, &b.xdot),
            xdot: deriv(&a.x, &a.xdot, &b.x, &b.xdot),
            xi: value(&a.xi, &a.xidot, &b.xi, &b.xidot),
            xidot: deriv(&a.xi, &a.xidot, &b.xi, &b.xidot),
        })
    }
}

/// Prepare an initial state for `system`: unit-bundle states are normalized
/// and then required to satisfy the constraints within [`CONSTRAINT_TOLERANCE`].
pub fn prepare_initial_state(
    system: &System,
    m: &MetricStructure,
    init: &BundleState,
) -> Result<BundleState, GeometryError> {
    if init.dim() != m.dim() {
        return Err(GeometryError::InvalidArgument(format!(
            "initial state has dimension {}, manifold has {}",
            init.dim(),
            m.dim()
        )));
    }
    if !init.is_finite() {
        return Err(GeometryError::InvalidArgument("initial state is not finite".into()));
    }
    if system.kind == BundleKind::Tangent {
        return Ok(init.clone());
    }
    let s = normalize_unit_state(m, init)?;
    let (unit, normal) = unit_constraint_defects(m, &s)?;
    let worst = unit.max(normal);
    if worst > CONSTRAINT_TOLERANCE {
        return Err(GeometryError::Constraint {
            what: "unit-bundle constraints after normalization".into(),
            residual: worst,
            tolerance: CONSTRAINT_TOLERANCE,
        });
    }
    Ok(s)
}

fn step(
    system: &System,
    m: &MetricStructure,
    method: Method,
    t: f64,
    h: f64,
    y: &Vector,
) -> Result<Vector, GeometryError> {
    let f = |t: f64, y: &Vector| -> Result<Vector, GeometryError> {
        Ok(system.rhs(m, t, &BundleState::from_flat(y))?.to_flat())
    };
    match method {
        Method::Euler => Ok(y + f(t, y)? * h),
        Method::Rk4 => {
            let k1 = f(t, y)?;
            let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
            let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
            let k4 = f(t + h, &(y + &k3 * h))?;
            Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
        }
    }
}

/// Integrate `system` from `init` over `cfg`'s t-span.
pub fn integrate(
    system: &System,
    m: &MetricStructure,
    init: &BundleState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    cfg.validate()?;
    let init = prepare_initial_state(system, m, init).map_err(IntegrateError::Init)?;
    let grid = cfg.grid();
    let mut traj = Trajectory { times: vec![grid[0]], states: vec![init.clone()], monitors: Vec::new() };
    let first = MonitorSample::compute(m, grid[0], &init).map_err(IntegrateError::Init)?;
    traj.monitors.push(first);

    let mut y = init.to_flat();
    let last_index = grid.len() - 1;
    for k in 1..grid.len() {
        let (t, t_next) = (grid[k - 1], grid[k]);
        let next = match step(system, m, cfg.method, t, t_next - t, &y) {
            Ok(v) => v,
            Err(source) => return Err(IntegrateError::Domain { t_last: t, partial: Box::new(traj), source }),
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::BlowUp { t_last: t, partial: Box::new(traj) });
        }
        y = next;
        let state = BundleState::from_flat(&y);
        if k % cfg.monitor_every == 0 || k == last_index {
            match MonitorSample::compute(m, t_next, &state) {
                Ok(sample) => traj.monitors.push(sample),
                Err(source) => return Err(IntegrateError::Domain { t_last: t, partial: Box::new(traj), source }),
            }
        }
        traj.times.push(t_next);
        traj.states.push(state);
    }
    Ok(traj)
}

/// Outcome of a Richardson order estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Measured(f64),
    /// Successive differences sit at the rounding floor; the solution is reproduced exactly.
    Skipped {
        difference: f64,
    },
}

/// Observed order from final states at steps `h`, `h/2`, `h/4`.
pub fn convergence_order(
    system: &System,
    m: &MetricStructure,
    init: &BundleState,
    cfg: &IntegratorConfig,
) -> Result<Order, IntegrateError> {
    let run = |h: f64| -> Result<Vector, IntegrateError> {
        let c = IntegratorConfig { step: h, monitor_every: usize::MAX, ..*cfg };
        let traj = integrate(system, m, init, &c)?;
        Ok(traj.states.last().expect("non-empty").to_flat())
    };
    let y1 = run(cfg.step)?;
    let y2 = run(cfg.step / 2.0)?;
    let y4 = run(cfg.step / 4.0)?;
    let e1 = (&y1 - &y2).amax();
    let e2 = (&y2 - &y4).amax();
    let floor = 1e3 * f64::EPSILON * (1.0 + y4.amax());
    if e1 <= floor || e2 <= floor {
        return Ok(Order::Skipped { difference: e1.max(e2) });
    }
    Ok(Order::Measured((e1 / e2).log2()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::vector;

    fn flat4() -> MetricStructure {
        MetricStructure::from_strings(
            4,
            &[&["1", "0", "0", "0"], &["0", "1", "0", "0"], &["0", "0", "1", "0"], &["0", "0", "0", "1"]],
            &[&["1", "0", "0", "0"], &["0", "1", "0", "0"], &["0", "0", "-1", "0"], &["0", "0", "0", "-1"]],
        )
        .unwrap()
    }

    #[test]
    fn grid_lands_on_end() {
        let g = IntegratorConfig::new(0.3, 0.0, 1.0).grid();
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!((g[3] - 0.9).abs() < 1e-15);
        let g = IntegratorConfig::new(1e-3, 0.0, 1.0).grid();
        assert_eq!(g.len(), 1001);
        let g = IntegratorConfig::new(0.25, 0.0, 1.0).grid();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::new(0.1, 1.0, 1.0).validate().is_err());
        assert!(IntegratorConfig::new(2.0, 0.0, 1.0).validate().is_err());
        assert!(IntegratorConfig::new(-0.1, 0.0, 1.0).validate().is_err());
        assert!(IntegratorConfig::new(0.1, 0.0, 1.0).with_monitor_every(0).validate().is_err());
    }

    #[test]
    fn rest_state_is_fixed() {
        let m = flat4();
        let s = BundleState::new(
            vector(&[0.1, 0.2, 0.3, 0.4]),
            Vector::zeros(4),
            vector(&[1.0, 0.0, 0.0, 0.0]),
            Vector::zeros(4),
        )
        .unwrap();
        let traj = integrate(&System::geodesic_unit(), &m, &s, &IntegratorConfig::new(0.1, 0.0, 1.0)).unwrap();
        assert!(traj.states.iter().all(|x| *x == s));
        assert_eq!(traj.monitors.len(), traj.len());
    }

    #[test]
    fn monitor_every_keeps_endpoints() {
        let m = flat4();
        let s = BundleState::new(
            vector(&[0.0; 4]),
            vector(&[1.0, 0.0, 0.0, 0.0]),
            vector(&[1.0, 0.0, 0.0, 0.0]),
            Vector::zeros(4),
        )
        .unwrap();
        let cfg = IntegratorConfig::new(0.1, 0.0, 1.0).with_monitor_every(3);
        let traj = integrate(&System::geodesic_tm(), &m, &s, &cfg).unwrap();
        let ts: Vec<f64> = traj.monitors.iter().map(|s| s.t).collect();
        assert_eq!(ts.len(), 5);
        assert_eq!(ts[0], 0.0);
        assert_eq!(*ts.last().unwrap(), 1.0);
    }

    #[test]
    fn blow_up_returns_partial() {
        // ẍ = -Γ¹₁₁ ẋ² with Γ¹₁₁ = -x blows up in finite time.
        let m = MetricStructure::from_strings(2, &[&["1", "0"], &["0", "1"]], &[&["1", "0"], &["0", "-1"]])
            .unwrap()
            .with_christoffel_entries(&[(0, 0, 0, "-exp(x^2)")])
            .unwrap();
        let s = BundleState::from_slices(&[1.0, 0.0], &[5.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let err = integrate(&System::geodesic_tm(), &m, &s, &IntegratorConfig::new(0.01, 0.0, 10.0)).unwrap_err();
        let partial = err.partial().expect("partial trajectory");
        assert!(!partial.is_empty());
        assert!(matches!(err, IntegrateError::BlowUp { .. } | IntegrateError::Domain { .. }));
    }

    #[test]
    fn hermite_sampling_reproduces_cubics() {
        let m = flat4();
        let s = BundleState::new(
            vector(&[0.0; 4]),
            vector(&[1.0, 2.0, 0.0, 0.0]),
            vector(&[1.0, 0.0, 0.0, 0.0]),
            vector(&[0.0, 1.0, 0.0, 0.0]),
        )
        .unwrap();
        let traj = integrate(&System::geodesic_tm(), &m, &s, &IntegratorConfig::new(0.1, 0.0, 1.0)).unwrap();
        let mid = traj.sample_at(0.55).unwrap();
        assert!((mid.x - vector(&[0.55, 1.1, 0.0, 0.0])).amax() < 1e-14);
        assert!((mid.xi - vector(&[1.0, 0.55, 0.0, 0.0])).amax() < 1e-14);
        assert!(traj.sample_at(1.5).is_none());
    }

    #[test]
    fn straight_lines_skip_order_estimate() {
        let m = flat4();
        let s = BundleState::new(
            vector(&[0.0; 4]),
            vector(&[1.0, 2.0, 0.0, 0.0]),
            vector(&[1.0, 0.0, 0.0, 0.0]),
            Vector::zeros(4),
        )
        .unwrap();
        let order = convergence_order(&System::geodesic_tm(), &m, &s, &IntegratorConfig::new(0.1, 0.0, 1.0)).unwrap();
        assert!(matches!(order, Order::Skipped { .. }));
    }
}
