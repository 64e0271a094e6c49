//! Frenet analysis of the projected curve `γ = π ∘ Γ`.
//!
//! Curvatures are read off a metric Gram–Schmidt of the covariant jets
//! `γ′, γ″, …` taken with respect to the curve parameter. With `n_i` the
//! norm of the `i`-th orthogonalized jet, `k_i = n_{i+1} / (n_1 n_i)`, which
//! holds for any regular parameterization.

use crate::error::{Error, Result};
use crate::fd;
use crate::geometry::{inner, CurvatureOperator, Matrix, MetricStructure, Vector};
use crate::integrate::Trajectory;

/// Truncation tolerance on curvatures and on relative jet dependence.
pub const TRUNCATION_TOLERANCE: f64 = 1e-7;
/// Smallest base speed accepted by the arc-length reparameterization.
pub const MIN_SPEED: f64 = 1e-8;

/// Arc length `s(t)` of the projected curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcLength {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    /// `ds/dt = |γ′|`.
    pub speed: Vec<f64>,
}

impl ArcLength {
    /// `max |ds/dt − mean|`.
    pub fn speed_deviation(&self) -> f64 {
        let mean = self.speed.iter().sum::<f64>() / self.speed.len() as f64;
        self.speed.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
    }
}

/// Arc length by quadrature of `|γ′|` (trapezoid with an end-point derivative correction).
pub fn arc_length_reparam(m: &MetricStructure, traj: &Trajectory) -> Result<ArcLength> {
    if traj.len() < fd::STENCIL {
        return Err(Error::TooFewSamples { got: traj.len(), need: fd::STENCIL });
    }
    let mut speed = Vec::with_capacity(traj.len());
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let g = m.metric_at(s.x.as_slice())?;
        let v2 = inner(&g, &s.xdot, &s.xdot);
        if !(v2 > MIN_SPEED * MIN_SPEED) {
            return Err(Error::VerticalCurve { speed: v2.max(0.0).sqrt(), t: *t });
        }
        speed.push(v2.sqrt());
    }
    let series: Vec<Vector> = speed.iter().map(|v| Vector::from_element(1, *v)).collect();
    let accel = fd::differentiate(&traj.times, &series).expect("length checked");
    let mut s = vec![0.0; traj.len()];
    for i in 1..traj.len() {
        let h = traj.times[i] - traj.times[i - 1];
        s[i] = s[i - 1] + 0.5 * h * (speed[i - 1] + speed[i]) + h * h / 12.0 * (accel[i - 1][0] - accel[i][0]);
    }
    Ok(ArcLength { times: traj.times.clone(), s, speed })
}

/// How higher jets are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetMethod {
    /// `γ^{(p+1)} = d/dt γ^{(p)} + Γ(γ′, γ^{(p)})`, derivatives by finite differences.
    FiniteDifference,
    /// `γ^{(p+1)} = R(ξ′, φξ) γ^{(p)}`; exact along unit-bundle geodesics over locally symmetric bases.
    Recursion,
    /// Finite differences up to order three, the recursion above.
    Hybrid,
}

/// Covariant jets `γ′ … γ^{(p)}` along a sampled curve.
#[derive(Debug, Clone)]
pub struct CurveJets {
    pub times: Vec<f64>,
    /// Metric at each sample.
    pub metrics: Vec<Matrix>,
    /// `jets[i][q]` is `γ^{(q+1)}` at sample `i`.
    pub jets: Vec<Vec<Vector>>,
    pub warnings: Vec<String>,
}

impl CurveJets {
    pub fn order(&self) -> usize {
        self.jets.first().map_or(0, |j| j.len())
    }
}

/// Highest jet order computed by finite differences without a warning.
const FD_ORDER_WARNING: usize = 4;

pub fn covariant_jets(
    m: &MetricStructure,
    traj: &Trajectory,
    order: usize,
    method: JetMethod,
    curvature: CurvatureOperator,
) -> Result<CurveJets> {
    let n = m.dim();
    if order == 0 || order > n {
        return Err(Error::InvalidArgument(format!("jet order must lie in 1..={n}, got {order}")));
    }
    if traj.len() < fd::STENCIL {
        return Err(Error::TooFewSamples { got: traj.len(), need: fd::STENCIL });
    }
    let fd_limit = match method {
        JetMethod::FiniteDifference => order,
        JetMethod::Recursion => 1,
        JetMethod::Hybrid => order.min(3),
    };
    let mut warnings = Vec::new();
    if fd_limit > FD_ORDER_WARNING {
        warnings
            .push(format!("jets above order {FD_ORDER_WARNING} by finite differences are dominated by rounding noise"));
    }

    let mut metrics = Vec::with_capacity(traj.len());
    let mut gammas = Vec::with_capacity(traj.len());
    for s in &traj.states {
        metrics.push(m.metric_at(s.x.as_slice())?);
        gammas.push(m.christoffel_at(s.x.as_slice())?);
    }
    let mut jets: Vec<Vec<Vector>> = traj.states.iter().map(|s| vec![s.xdot.clone()]).collect();

    for q in 1..fd_limit {
        let prev: Vec<Vector> = jets.iter().map(|j| j[q - 1].clone()).collect();
        let d = fd::differentiate(&traj.times, &prev).expect("length checked");
        for (i, s) in traj.states.iter().enumerate() {
            let next = &d[i] + gammas[i].contract(&s.xdot, &prev[i]);
            jets[i].push(next);
        }
    }
    if fd_limit < order {
        for (i, s) in traj.states.iter().enumerate() {
            let geo = m.point_geometry(s.x.as_slice(), curvature, false)?;
            let xi_prime = &s.xidot + geo.christoffel.contract(&s.xdot, &s.xi);
            let phi_xi = &geo.phi * &s.xi;
            for q in fd_limit..order {
                let next = geo.curvature.apply(&xi_prime, &phi_xi, &jets[i][q - 1]);
                jets[i].push(next);
            }
        }
    }
    Ok(CurveJets { times: traj.times.clone(), metrics, jets, warnings })
}

/// Frenet data at every sample.
#[derive(Debug, Clone)]
pub struct FrenetResult {
    pub times: Vec<f64>,
    /// `curvatures[i]` holds `k_1 … k_r` at sample `i`; the last entry may be the truncating one.
    pub curvatures: Vec<Vec<f64>>,
    /// Orthonormal frame `ν_1 … ν_{r+1}` at each sample (in `g`).
    pub frames: Vec<Vec<Vector>>,
    /// Largest number of curvatures over the samples.
    pub frame_rank: usize,
    /// `max_t |k_i(t) − mean k_i|` for each `i < frame_rank`.
    pub constancy: Vec<f64>,
    /// Samples where the frame was cut short by jet dependence rather than a small curvature.
    pub degenerate_samples: usize,
}

impl FrenetResult {
    /// `k_i` at sample `j`, zero where the frame was truncated earlier.
    pub fn curvature(&self, j: usize, i: usize) -> f64 {
        self.curvatures[j].get(i).copied().unwrap_or(0.0)
    }

    pub fn mean_curvature(&self, i: usize) -> f64 {
        (0..self.times.len()).map(|j| self.curvature(j, i)).sum::<f64>() / self.times.len() as f64
    }

    /// Largest `k_i` over all samples.
    pub fn max_curvature(&self, i: usize) -> f64 {
        (0..self.times.len()).map(|j| self.curvature(j, i)).fold(0.0, f64::max)
    }
}

fn gram_schmidt_step(g: &Matrix, frame: &[Vector], v: &Vector) -> Vector {
    let mut u = v.clone();
    for _ in 0..2 {
        for e in frame {
            u -= e * inner(g, &u, e);
        }
    }
    u
}

pub fn frenet_curvatures(jets: &CurveJets) -> Result<FrenetResult> {
    let order = jets.order();
    if order < 2 {
        return Err(Error::InvalidArgument(format!("need jets to order >= 2, got {order}")));
    }
    let mut curvatures = Vec::with_capacity(jets.times.len());
    let mut frames = Vec::with_capacity(jets.times.len());
    let mut degenerate_samples = 0;
    for ((t, g), vs) in jets.times.iter().zip(&jets.metrics).zip(&jets.jets) {
        let mut frame: Vec<Vector> = Vec::new();
        let mut norms = Vec::new();
        let mut ks = Vec::new();
        for (q, v) in vs.iter().enumerate() {
            let u = gram_schmidt_step(g, &frame, v);
            let u2 = inner(g, &u, &u);
            let scale = v.norm();
            if u2 < 0.0 && -u2 > (TRUNCATION_TOLERANCE * scale).powi(2) {
                return Err(Error::Signature { t: *t });
            }
            let nq = u2.max(0.0).sqrt();
            if q == 0 {
                if !(nq > MIN_SPEED) {
                    return Err(Error::VerticalCurve { speed: nq, t: *t });
                }
            } else {
                let k = nq / (norms[0] * norms[q - 1]);
                ks.push(k);
                let dependent = !(nq > TRUNCATION_TOLERANCE * scale);
                if k < TRUNCATION_TOLERANCE || dependent {
                    if dependent && k >= TRUNCATION_TOLERANCE {
                        degenerate_samples += 1;
                    }
                    break;
                }
            }
            norms.push(nq);
            frame.push(u / nq);
        }
        curvatures.push(ks);
        frames.push(frame);
    }
    let frame_rank = curvatures.iter().map(Vec::len).max().unwrap_or(0);
    let mut result = FrenetResult {
        times: jets.times.clone(),
        curvatures,
        frames,
        frame_rank,
        constancy: Vec::new(),
        degenerate_samples,
    };
    result.constancy = (0..frame_rank)
        .map(|i| {
            let mean = result.mean_curvature(i);
            (0..result.times.len()).map(|j| (result.curvature(j, i) - mean).abs()).fold(0.0, f64::max)
        })
        .collect();
    Ok(result)
}

/// Per-curvature outcome of [`constancy_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConstancyReport {
    pub deviations: Vec<f64>,
    pub tolerance: f64,
    pub passed: Vec<bool>,
}

impl ConstancyReport {
    pub fn all_passed(&self) -> bool {
        self.passed.iter().all(|p| *p)
    }
}

pub fn constancy_check(result: &FrenetResult, tol: f64) -> ConstancyReport {
    let passed = result.constancy.iter().map(|d| *d < tol).collect();
    ConstancyReport { deviations: result.constancy.clone(), tolerance: tol, passed }
}

/// Arc length plus Frenet curvatures of the projected curve with jets to order `dim`.
pub fn analyze(
    m: &MetricStructure,
    traj: &Trajectory,
    method: JetMethod,
    curvature: CurvatureOperator,
) -> Result<(ArcLength, FrenetResult)> {
    let arc = arc_length_reparam(m, traj)?;
    let jets = covariant_jets(m, traj, m.dim(), method, curvature)?;
    Ok((arc, frenet_curvatures(&jets)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::BundleState;

    fn flat(n: usize) -> MetricStructure {
        let g: Vec<Vec<&str>> = (0..n).map(|i| (0..n).map(|j| if i == j { "1" } else { "0" }).collect()).collect();
        let phi: Vec<Vec<&str>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i != j {
                            "0"
                        } else if i < n / 2 {
                            "1"
                        } else {
                            "-1"
                        }
                    })
                    .collect()
            })
            .collect();
        let g: Vec<&[&str]> = g.iter().map(Vec::as_slice).collect();
        let phi: Vec<&[&str]> = phi.iter().map(Vec::as_slice).collect();
        MetricStructure::from_strings(n, &g, &phi).unwrap()
    }

    /// Trajectory whose base curve is `x(t)` with velocity `v(t)`; fiber fixed.
    fn curve(m: &MetricStructure, ts: &[f64], x: impl Fn(f64) -> Vec<f64>, v: impl Fn(f64) -> Vec<f64>) -> Trajectory {
        let n = m.dim();
        let mut xi = vec![0.0; n];
        xi[0] = 1.0;
        let states = ts.iter().map(|&t| BundleState::from_slices(&x(t), &v(t), &xi, &vec![0.0; n]).unwrap()).collect();
        Trajectory::from_states(m, ts.to_vec(), states).unwrap()
    }

    fn grid(n: usize, t1: f64) -> Vec<f64> {
        (0..=n).map(|i| t1 * i as f64 / n as f64).collect()
    }

    #[test]
    fn parabola_arc_length() {
        let m = flat(2);
        let ts = grid(400, 1.0);
        let traj = curve(&m, &ts, |t| vec![t, t * t], |t| vec![1.0, 2.0 * t]);
        let arc = arc_length_reparam(&m, &traj).unwrap();
        let exact = |t: f64| 0.5 * t * (1.0 + 4.0 * t * t).sqrt() + 0.25 * (2.0 * t).asinh();
        for (i, t) in ts.iter().enumerate() {
            assert!((arc.speed[i] - (1.0 + 4.0 * t * t).sqrt()).abs() < 1e-14);
            assert!((arc.s[i] - exact(*t)).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_curve_is_vertical() {
        let m = flat(2);
        let traj = curve(&m, &grid(10, 1.0), |_| vec![0.5, 0.5], |_| vec![0.0, 0.0]);
        assert!(matches!(arc_length_reparam(&m, &traj), Err(Error::VerticalCurve { .. })));
    }

    #[test]
    fn circle_has_constant_curvature() {
        let m = flat(2);
        let r0 = 2.5;
        let traj =
            curve(&m, &grid(1000, 3.0), |t| vec![r0 * t.cos(), r0 * t.sin()], |t| vec![-r0 * t.sin(), r0 * t.cos()]);
        let jets = covariant_jets(&m, &traj, 2, JetMethod::FiniteDifference, CurvatureOperator::FromMetric).unwrap();
        let res = frenet_curvatures(&jets).unwrap();
        assert_eq!(res.frame_rank, 1);
        assert!((res.mean_curvature(0) - 1.0 / r0).abs() < 1e-8);
        assert!(constancy_check(&res, 1e-7).all_passed());
    }

    #[test]
    fn straight_line_truncates() {
        let m = flat(4);
        let traj = curve(&m, &grid(50, 1.0), |t| vec![t, 2.0 * t, 0.0, -t], |_| vec![1.0, 2.0, 0.0, -1.0]);
        let (_, res) = analyze(&m, &traj, JetMethod::FiniteDifference, CurvatureOperator::FromMetric).unwrap();
        assert_eq!(res.frame_rank, 1);
        assert!(res.max_curvature(0) < 1e-7);
    }

    #[test]
    fn frame_is_orthonormal() {
        let m = flat(4);
        let (a, b) = (1.5, 0.4);
        let traj = curve(
            &m,
            &grid(800, 2.0),
            |t| vec![a * t.cos(), a * t.sin(), b * t, 0.0],
            |t| vec![-a * t.sin(), a * t.cos(), b, 0.0],
        );
        let jets = covariant_jets(&m, &traj, 3, JetMethod::FiniteDifference, CurvatureOperator::FromMetric).unwrap();
        let res = frenet_curvatures(&jets).unwrap();
        for (frame, g) in res.frames.iter().zip(&jets.metrics) {
            for (i, u) in frame.iter().enumerate() {
                for (j, v) in frame.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((inner(g, u, v) - want).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn indefinite_span_is_a_signature_error() {
        let m = MetricStructure::from_strings(2, &[&["1", "0"], &["0", "-1"]], &[&["1", "0"], &["0", "-1"]]).unwrap();
        let traj = curve(&m, &grid(100, 1.0), |t| vec![2.0 * t.cosh(), t.sinh()], |t| vec![2.0 * t.sinh(), t.cosh()]);
        let jets = covariant_jets(&m, &traj, 2, JetMethod::FiniteDifference, CurvatureOperator::FromMetric).unwrap();
        assert!(frenet_curvatures(&jets).is_err());
    }

    #[test]
    fn order_bounds() {
        let m = flat(2);
        let traj = curve(&m, &grid(10, 1.0), |t| vec![t, 0.0], |_| vec![1.0, 0.0]);
        assert!(covariant_jets(&m, &traj, 3, JetMethod::FiniteDifference, CurvatureOperator::FromMetric).is_err());
        assert!(covariant_jets(&m, &traj, 0, JetMethod::FiniteDifference, CurvatureOperator::FromMetric).is_err());
    }
}
