//! Self-verification battery: closed-form oracles, conservation laws,
//! structural checks and Frenet analysis over the catalog.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bundle::{self, BundleKind, Jet, System};
use crate::catalog::{self, CatalogEntry, Family, FamilyStatus};
use crate::error::{Error, Result};
use crate::frenet::{self, JetMethod};
use crate::geometry::{
    constant_curvature_power, curvature_power, inner, CurvatureOperator, Matrix, MetricStructure, PointCurvature,
    Sampling, Vector, ANALYTIC_TOLERANCE, FINITE_DIFFERENCE_TOLERANCE,
};
use crate::integrate::{convergence_order, integrate, IntegratorConfig, Order, Trajectory};

/// Step used by the oracle integrations.
pub const ORACLE_STEP: f64 = 1e-3;
/// Coarse steps for the drift-halving and order measurements, where the
/// truncation error dominates rounding.
pub const COARSE_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    pub seed: u64,
    /// Flip the sign of the `κξ` term in every unit-bundle geodesic right-hand side.
    pub mutate: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self { seed: Sampling::default().seed, mutate: false }
    }
}

/// One measured claim.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub id: String,
    pub description: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Claim {
    /// Passes when `measured < threshold`.
    fn below(id: &str, description: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self { id: id.into(), description: description.into(), measured, threshold, passed: measured < threshold }
    }

    /// Passes when `measured > threshold`.
    fn above(id: &str, description: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self { id: id.into(), description: description.into(), measured, threshold, passed: measured > threshold }
    }

    fn failed(id: &str, description: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self {
            id: id.into(),
            description: format!("{}: {err}", description.into()),
            measured: f64::NAN,
            threshold: f64::NAN,
            passed: false,
        }
    }
}

fn catch(id: &str, what: &str, f: impl FnOnce() -> Result<Vec<Claim>>) -> Vec<Claim> {
    f().unwrap_or_else(|e| vec![Claim::failed(id, what, e)])
}

fn system_for(family: &Family, opts: &Options) -> System {
    let s = family.system.clone();
    if opts.mutate && s.kind == BundleKind::Unit && s.forcing.is_none() {
        s.with_flipped_kappa_sign()
    } else {
        s
    }
}

/// Integrate a family from the start of its window.
pub fn run_family(m: &MetricStructure, family: &Family, step: f64, opts: &Options) -> Result<Trajectory> {
    let (t0, t1) = family.window;
    let init = family.state(t0)?;
    integrate(&system_for(family, opts), m, &init, &IntegratorConfig::new(step, t0, t1))
        .map_err(|e| Error::InvalidArgument(format!("integration of {} failed: {e}", family.name)))
}

fn family(entry: &CatalogEntry, name: &str) -> Result<Family> {
    entry.family(name, &BTreeMap::new())
}

fn structure_axioms(opts: &Options) -> Result<Vec<Claim>> {
    let mut out = Vec::new();
    let sampling = Sampling { count: 100, seed: opts.seed };
    for name in ["exp2d", "flat_diag", "poly2d"] {
        let e = catalog::entry(name)?;
        let points = e.structure.sample_points(sampling);
        let fd = e.structure.clone().without_christoffel();
        for (path, m, tol) in [("analytic", &e.structure, ANALYTIC_TOLERANCE), ("fd", &fd, FINITE_DIFFERENCE_TOLERANCE)]
        {
            for report in
                [m.check_norden(&points, tol), m.check_involution(&points, tol), m.check_parallel_phi(&points, tol)]
            {
                let mut c = Claim::below("1", format!("{name} {} ({path})", report.check), report.max_residual, tol);
                c.passed = report.passed;
                out.push(c);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let entries: Vec<String> = (0..4).map(|_| format!("{:.6}", rng.random_range(-2.0..2.0))).collect();
    let random = MetricStructure::from_strings(
        2,
        &[&["1", "0"], &["0", "1"]],
        &[&[&entries[0], &entries[1]], &[&entries[2], &entries[3]]],
    )?;
    let points = random.sample_points(sampling);
    let worst = random
        .check_norden(&points, ANALYTIC_TOLERANCE)
        .max_residual
        .max(random.check_involution(&points, ANALYTIC_TOLERANCE).max_residual);
    out.push(Claim::above("1", "random phi is rejected", worst, ANALYTIC_TOLERANCE));
    Ok(out)
}

fn oblique_oracle(opts: &Options) -> Result<Vec<Claim>> {
    let e = catalog::euclid_oblique(4)?;
    let f = family(&e, "oblique_geodesic")?;
    let traj = run_family(&e.structure, &f, ORACLE_STEP, opts)?;
    let err = f.max_error(&traj.times, &traj.states)?;
    Ok(vec![Claim::below("2", "oblique geodesic vs closed form (rho = 0.5)", err, 1e-8)])
}

fn exp2d_oracles(opts: &Options) -> Result<Vec<Claim>> {
    let e = catalog::exp2d()?;
    let mut out = Vec::new();
    for name in ["natural_lift", "horizontal_lift"] {
        let f = family(&e, name)?;
        let traj = run_family(&e.structure, &f, ORACLE_STEP, opts)?;
        out.push(Claim::below(
            "3",
            format!("exp2d {name} vs closed form"),
            f.max_error(&traj.times, &traj.states)?,
            1e-6,
        ));
    }
    Ok(out)
}

fn monitored_runs() -> Result<Vec<(String, CatalogEntry, Family)>> {
    let oblique = catalog::euclid_oblique(4)?;
    let exp = catalog::exp2d()?;
    Ok(vec![
        ("oblique".to_string(), oblique.clone(), family(&oblique, "oblique_geodesic")?),
        ("natural_lift".to_string(), exp.clone(), family(&exp, "natural_lift")?),
        ("horizontal_lift".to_string(), exp.clone(), family(&exp, "horizontal_lift")?),
    ])
}

fn conserved_monitors(opts: &Options) -> Result<Vec<Claim>> {
    let mut out = Vec::new();
    for (label, e, f) in monitored_runs()? {
        let m = &e.structure;
        let traj = run_family(m, &f, ORACLE_STEP, opts)?;
        let first = traj.monitors[0];
        let rho_sq = first.rho_sq;
        let mut worst = [0.0f64; 4];
        for s in &traj.monitors {
            worst[0] = worst[0].max((s.unit_norm - 1.0).abs());
            worst[1] = worst[1].max(s.normal_velocity.abs());
            worst[2] = worst[2].max((s.rho_sq - rho_sq).abs());
            worst[3] = worst[3].max((s.speed_sq - (1.0 - rho_sq)).abs());
        }
        for (name, w) in
            ["g(xi,phi xi)-1", "g(xi',phi xi)", "g(xi',phi xi')-rho^2", "g(gamma',gamma')-(1-rho^2)"].iter().zip(worst)
        {
            out.push(Claim::below("4", format!("{label} drift {name}"), w, 1e-9));
        }
        let coarse = run_family(m, &f, COARSE_STEP, opts)?.drift().max();
        let fine = run_family(m, &f, COARSE_STEP / 2.0, opts)?.drift().max();
        let ratio = if coarse <= 1e3 * f64::EPSILON { f64::INFINITY } else { coarse / fine };
        out.push(Claim::above("4", format!("{label} drift ratio under step halving (h = {COARSE_STEP})"), ratio, 8.0));
    }
    Ok(out)
}

fn flat_diag_oracles(opts: &Options) -> Result<Vec<Claim>> {
    let e = catalog::flat_diag()?;
    let m = &e.structure;
    let geo = family(&e, "hphi_geodesic")?;
    let traj = run_family(m, &geo, ORACLE_STEP, opts)?;
    let planar = family(&e, "hphi_planar")?;
    let ptraj = run_family(m, &planar, ORACLE_STEP, opts)?;
    Ok(vec![
        Claim::below("5", "flat_diag H-phi geodesic vs closed form", geo.max_error(&traj.times, &traj.states)?, 1e-8),
        Claim::below("5", "flat_diag H-phi planar family residual", planar.residual(m, 200)?.max, 1e-8),
        Claim::below(
            "5",
            "flat_diag H-phi planar vs closed form on [0, 0.9]",
            planar.max_error(&ptraj.times, &ptraj.states)?,
            1e-6,
        ),
    ])
}

fn poly2d_oracle(opts: &Options) -> Result<Vec<Claim>> {
    let e = catalog::poly2d(1.0, 0.5)?;
    let m = &e.structure;
    let mut out = Vec::new();
    for name in ["f_geodesic_horizontal", "f_geodesic_horizontal_unit"] {
        let f = family(&e, name)?;
        let traj = run_family(m, &f, ORACLE_STEP, opts)?;
        out.push(Claim::below("6", format!("poly2d {name} residual"), f.residual(m, 200)?.max, 1e-8));
        out.push(Claim::below(
            "6",
            format!("poly2d {name} vs closed form"),
            f.max_error(&traj.times, &traj.states)?,
            1e-6,
        ));
    }
    Ok(out)
}

/// Largest gap between the iterated and closed-form curvature powers.
pub fn curvature_power_gap() -> Result<f64> {
    let g = Matrix::identity(4, 4);
    let e = |i: usize| Vector::from_fn(4, |r, _| if r == i { 1.0 } else { 0.0 });
    let pairs = [
        (e(0), e(1)),
        (Vector::from_column_slice(&[0.5, 0.25, 0.0, 0.0]), Vector::from_column_slice(&[0.0, 0.5, 0.25, 0.0])),
        (Vector::from_column_slice(&[0.75, 0.0, -0.5, 0.25]), Vector::from_column_slice(&[0.25, 0.5, 0.0, -0.125])),
    ];
    let z = Vector::from_column_slice(&[0.5, -0.25, 0.125, 1.0]);
    let mut worst: f64 = 0.0;
    for c in [-2.0, 1.0, 3.0] {
        let op = PointCurvature::constant(c, g.clone());
        for (x, y) in &pairs {
            for p in 1..=8 {
                let naive = curvature_power(&op, p, x, y, &z)?;
                let closed = constant_curvature_power(c, &g, p, x, y, &z)?;
                worst = worst.max((naive - closed).amax());
            }
        }
    }
    Ok(worst)
}

fn curvature_power_claim(_: &Options) -> Result<Vec<Claim>> {
    Ok(vec![Claim::below("7", "curvature power closed form vs iteration (p <= 8)", curvature_power_gap()?, 1e-12)])
}

fn synthetic_curve(m: &MetricStructure, times: &[f64], jet: impl Fn(f64) -> Jet) -> Result<Trajectory> {
    let states = times.iter().map(|t| jet(*t).state).collect();
    Trajectory::from_states(m, times.to_vec(), states)
}

fn frenet_claims(opts: &Options) -> Result<Vec<Claim>> {
    let mut out = Vec::new();
    let oblique = catalog::euclid_oblique(4)?;
    let of = family(&oblique, "oblique_geodesic")?;
    let otraj = run_family(&oblique.structure, &of, ORACLE_STEP, opts)?;
    let (_, ores) =
        frenet::analyze(&oblique.structure, &otraj, JetMethod::FiniteDifference, CurvatureOperator::FromMetric)?;
    let kmax = (0..ores.frame_rank).map(|i| ores.max_curvature(i)).fold(0.0, f64::max);
    out.push(Claim::below("8a", "projected oblique geodesic curvatures", kmax, 1e-7));

    let flat = &oblique.structure;
    let times: Vec<f64> = (0..=2000).map(|i| i as f64 * 3e-3).collect();
    let r0 = 2.0;
    let circle = synthetic_curve(flat, &times, |t| {
        let (s, c) = t.sin_cos();
        let zero = Vector::zeros(4);
        Jet {
            state: bundle::BundleState {
                x: Vector::from_column_slice(&[r0 * c, r0 * s, 0.0, 0.0]),
                xdot: Vector::from_column_slice(&[-r0 * s, r0 * c, 0.0, 0.0]),
                xi: Vector::from_column_slice(&[1.0, 0.0, 0.0, 0.0]),
                xidot: zero.clone(),
            },
            xddot: zero.clone(),
            xiddot: zero,
        }
    })?;
    let cres = frenet::frenet_curvatures(&frenet::covariant_jets(
        flat,
        &circle,
        3,
        JetMethod::FiniteDifference,
        CurvatureOperator::FromMetric,
    )?)?;
    let cdev = (0..times.len()).map(|j| (cres.curvature(j, 0) - 1.0 / r0).abs()).fold(0.0, f64::max);
    out.push(Claim::below("8b", "circle k1 = 1/R0", cdev, 1e-5));
    let (a, b) = (1.5, 0.5);
    let helix = synthetic_curve(flat, &times, |t| {
        let (s, c) = t.sin_cos();
        let zero = Vector::zeros(4);
        Jet {
            state: bundle::BundleState {
                x: Vector::from_column_slice(&[a * c, a * s, b * t, 0.0]),
                xdot: Vector::from_column_slice(&[-a * s, a * c, b, 0.0]),
                xi: Vector::from_column_slice(&[1.0, 0.0, 0.0, 0.0]),
                xidot: zero.clone(),
            },
            xddot: zero.clone(),
            xiddot: zero,
        }
    })?;
    let hres = frenet::frenet_curvatures(&frenet::covariant_jets(
        flat,
        &helix,
        3,
        JetMethod::FiniteDifference,
        CurvatureOperator::FromMetric,
    )?)?;
    let (k1, k2) = (a / (a * a + b * b), b / (a * a + b * b));
    let hdev = (0..times.len())
        .map(|j| (hres.curvature(j, 0) - k1).abs().max((hres.curvature(j, 1) - k2).abs()))
        .fold(0.0, f64::max);
    out.push(Claim::below("8b", "helix k1, k2 closed forms", hdev, 1e-5));

    let c = 1.0;
    let cc = catalog::const_curv(c)?;
    let hf = family(&cc, "helix")?;
    let traj = run_family(&cc.structure, &hf, ORACLE_STEP, opts)?;
    let own = hf.system.trajectory_residual(&cc.structure, &traj)?;
    out.push(Claim::below("8c", "constant-curvature run residual", own.max, 1e-6));
    let (_, res) = frenet::analyze(&cc.structure, &traj, JetMethod::Hybrid, cc.curvature)?;
    let spread = res.constancy.iter().take(2).fold(0.0f64, |a, b| a.max(*b));
    out.push(Claim::below("8c", "constant-curvature k1, k2 constancy", spread, 1e-4));
    let higher = (2..res.frame_rank.max(2)).map(|i| res.max_curvature(i)).fold(0.0, f64::max);
    out.push(Claim::below("8c", "constant-curvature k_i (i >= 3)", higher, 1e-6));

    let s0 = &traj.states[0];
    let g0 = cc.structure.metric_at(s0.x.as_slice())?;
    let phi0 = cc.structure.phi_at(s0.x.as_slice())?;
    let xi_prime = bundle::covariant_velocity(&cc.structure, s0)?;
    let phi_xi = &phi0 * &s0.xi;
    let b2 = inner(&g0, &xi_prime, &xi_prime) * inner(&g0, &phi_xi, &phi_xi) - inner(&g0, &xi_prime, &phi_xi).powi(2);
    let rho_sq = traj.monitors[0].rho_sq;
    let rhs = (1.0 - rho_sq) * (res.mean_curvature(0).powi(2) + res.mean_curvature(1).powi(2));
    out.push(Claim::below("8d", "b^2 c^2 = (1 - rho^2)(k1^2 + k2^2)", (b2 * c * c - rhs).abs(), 1e-4));
    Ok(out)
}

fn mirror_claims(opts: &Options) -> Result<Vec<Claim>> {
    let e = catalog::euclid_oblique(4)?;
    let f = family(&e, "oblique_geodesic")?;
    let traj = run_family(&e.structure, &f, ORACLE_STEP, opts)?;
    let mirrored = bundle::phi_mirror(&e.structure, &traj)?;
    let residual = System::geodesic_unit().trajectory_residual(&e.structure, &mirrored)?;
    let twice = bundle::phi_mirror(&e.structure, &mirrored)?;
    let exact = twice.states == traj.states && twice.times == traj.times;
    Ok(vec![
        Claim::below("9", "mirrored geodesic residual", residual.max, 1e-8),
        Claim::below("9", "double mirror is the identity", if exact { 0.0 } else { 1.0 }, 0.5),
    ])
}

/// Random constant-coefficient F-planar base solutions on `flat_diag` and
/// their horizontal lifts, with a perturbed base as negative control.
fn horizontal_lift_claims(opts: &Options) -> Result<Vec<Claim>> {
    let e = catalog::flat_diag()?;
    let m = &e.structure;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x4C1F7);
    let mut lifted: f64 = 0.0;
    let mut base: f64 = 0.0;
    let mut perturbed_lifted = f64::INFINITY;
    let mut perturbed_base = f64::INFINITY;
    let times: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
    for _ in 0..20 {
        for unit in [false, true] {
            let mut p = BTreeMap::new();
            for key in ["rho1", "rho2"] {
                p.insert(key.to_string(), rng.random_range(-1.0..1.0));
            }
            for key in ["x1", "x2", "v1", "v2"] {
                p.insert(key.to_string(), rng.random_range(-1.0..1.0));
            }
            if unit {
                p.insert("theta".into(), rng.random_range(-1.0..1.0));
            } else {
                p.insert("u1".into(), rng.random_range(-1.0..1.0));
                p.insert("u2".into(), rng.random_range(-1.0..1.0));
            }
            let name = if unit { "hphi_planar_constant_unit" } else { "hphi_planar_constant" };
            let f = e.family(name, &p)?;
            let jets = times.iter().map(|t| f.jet(*t)).collect::<Result<Vec<_>>>()?;
            lifted = lifted.max(f.system.residual_at_jets(m, &times, &jets)?.max);
            let bent: Vec<Jet> = times
                .iter()
                .zip(&jets)
                .map(|(t, j)| {
                    let mut j = j.clone();
                    j.state.x[0] += 0.01 * t.powi(3);
                    j.state.xdot[0] += 0.03 * t * t;
                    j.xddot[0] += 0.06 * t;
                    j
                })
                .collect();
            let bent_report = f.system.residual_at_jets(m, &times, &bent)?;
            perturbed_lifted = perturbed_lifted.min(bent_report.max);
            let mut b_ok: f64 = 0.0;
            let mut b_bad: f64 = 0.0;
            for ((t, j), k) in times.iter().zip(&jets).zip(&bent) {
                b_ok = b_ok.max(f.system.base_residual_at(m, *t, &j.state.x, &j.state.xdot, &j.xddot)?);
                b_bad = b_bad.max(f.system.base_residual_at(m, *t, &k.state.x, &k.state.xdot, &k.xddot)?);
            }
            base = base.max(b_ok);
            perturbed_base = perturbed_base.min(b_bad);
        }
    }
    Ok(vec![
        Claim::below("10", "F-planar bases: base residual", base, 1e-7),
        Claim::below("10", "F-planar bases: lifted residual (TM and unit bundle)", lifted, 1e-7),
        Claim::above("10", "perturbed bases: smallest base residual", perturbed_base, 1e-3),
        Claim::above("10", "perturbed bases: smallest lifted residual", perturbed_lifted, 1e-3),
    ])
}

fn order_claim(opts: &Options) -> Result<Vec<Claim>> {
    let e = catalog::euclid_oblique(4)?;
    let f = family(&e, "oblique_geodesic")?;
    let init = f.state(0.0)?;
    let cfg = IntegratorConfig::new(COARSE_STEP, 0.0, 1.0);
    let order = convergence_order(&system_for(&f, opts), &e.structure, &init, &cfg)
        .map_err(|err| Error::InvalidArgument(err.to_string()))?;
    let measured = match order {
        Order::Measured(p) => p,
        Order::Skipped { .. } => f64::NAN,
    };
    Ok(vec![Claim::below("11", format!("RK4 observed order |p - 4| (p = {measured:.3})"), (measured - 4.0).abs(), 0.3)])
}

fn family_residuals(_: &Options) -> Result<Vec<Claim>> {
    let mut out = Vec::new();
    for name in catalog::ENTRY_NAMES {
        let e = catalog::entry(name)?;
        for f in e.default_families()? {
            if f.status == FamilyStatus::Exact {
                out.push(Claim::below(
                    "catalog",
                    format!("{name}/{} residual", f.name),
                    f.residual(&e.structure, 200)?.max,
                    1e-8,
                ));
            }
        }
    }
    Ok(out)
}

type Check = fn(&Options) -> Result<Vec<Claim>>;

const BATTERY: [(&str, &str, Check); 12] = [
    ("1", "structure axioms", structure_axioms),
    ("2", "oblique geodesic oracle", oblique_oracle),
    ("3", "exp2d oracles", exp2d_oracles),
    ("4", "conserved monitors", conserved_monitors),
    ("5", "flat_diag oracles", flat_diag_oracles),
    ("6", "poly2d oracle", poly2d_oracle),
    ("7", "curvature power", curvature_power_claim),
    ("8", "Frenet curvatures", frenet_claims),
    ("9", "phi mirror", mirror_claims),
    ("10", "horizontal-lift equivalence", horizontal_lift_claims),
    ("11", "integrator order", order_claim),
    ("catalog", "catalog residuals", family_residuals),
];

/// Names accepted by [`run`]: `all` or a battery id.
pub fn battery_ids() -> Vec<&'static str> {
    BATTERY.iter().map(|(id, _, _)| *id).collect()
}

/// Run the whole battery (or one id) concurrently; claims come back in battery order.
pub fn run(selection: &str, opts: &Options) -> Result<Vec<Claim>> {
    let picked: Vec<_> = BATTERY.iter().filter(|(id, _, _)| selection == "all" || *id == selection).collect();
    if picked.is_empty() {
        return Err(Error::UnknownEntry(selection.to_string()));
    }
    Ok(picked.par_iter().map(|(id, what, f)| catch(id, what, || f(opts))).collect::<Vec<_>>().concat())
}
