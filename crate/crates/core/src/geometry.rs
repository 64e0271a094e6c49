//! Base-manifold tensor calculus on a single chart.
//!
//! A [`MetricStructure`] bundles the metric `g`, the para-complex structure
//! `phi` and optional analytic overrides for the Christoffel symbols and the
//! curvature operator. Everything is evaluated pointwise; first derivatives
//! of `g` and `phi` are central differences with `fd_step`, derivatives of
//! the Christoffel symbols use `curvature_step` unless the symbols are
//! analytic.
//!
//! Curvature convention: `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`, with
//! components `R(∂_i,∂_j)∂_k = R^l_{kij} ∂_l`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{ScalarField, Variables};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Analytic curvature callback: `(point, X, Y, Z) -> R(X,Y)Z`.
pub type RiemannFn = Arc<dyn Fn(&[f64], &Vector, &Vector, &Vector) -> Vector + Send + Sync>;

pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_CURVATURE_STEP: f64 = 1e-4;
/// Check tolerance when the Christoffel symbols are analytic.
pub const ANALYTIC_TOLERANCE: f64 = 1e-8;
/// Check tolerance when the Christoffel symbols come from finite differences.
pub const FINITE_DIFFERENCE_TOLERANCE: f64 = 1e-5;

/// `g(u, v) = uᵀ g v`.
#[inline]
pub fn inner(g: &Matrix, u: &Vector, v: &Vector) -> f64 {
    u.dot(&(g * v))
}

/// Christoffel symbols `Γ^k_{ij}` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim * dim] }
    }

    #[inline]
    fn idx(&self, k: usize, i: usize, j: usize) -> usize {
        (k * self.dim + i) * self.dim + j
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(k, i, j)]
    }

    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let n = self.idx(k, i, j);
        self.data[n] = v;
    }

    /// `(Γ(u, v))^k = Γ^k_{ij} u^i v^j`.
    pub fn contract(&self, u: &Vector, v: &Vector) -> Vector {
        let n = self.dim;
        Vector::from_fn(n, |k, _| {
            let mut s = 0.0;
            for i in 0..n {
                if u[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    s += self.get(k, i, j) * u[i] * v[j];
                }
            }
            s
        })
    }

    /// Largest `|Γ^k_{ij} − Γ^k_{ji}|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((self.get(k, i, j) - self.get(k, j, i)).abs());
                }
            }
        }
        worst
    }

    fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim * dim);
        Self { dim, data }
    }
}

/// Full curvature tensor `R^l_{kij}` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct RiemannTensor {
    dim: usize,
    data: Vec<f64>,
}

impl RiemannTensor {
    /// Assemble from `Γ` and its partial derivatives `dgamma[m] = ∂_m Γ`.
    pub fn from_christoffel(gamma: &Christoffel, dgamma: &[Christoffel]) -> Self {
        let n = gamma.dim();
        let mut data = vec![0.0; n * n * n * n];
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut r = dgamma[i].get(l, j, k) - dgamma[j].get(l, i, k);
                        for m in 0..n {
                            r += gamma.get(l, i, m) * gamma.get(m, j, k) - gamma.get(l, j, m) * gamma.get(m, i, k);
                        }
                        data[((l * n + k) * n + i) * n + j] = r;
                    }
                }
            }
        }
        Self { dim: n, data }
    }

    #[inline]
    pub fn get(&self, l: usize, k: usize, i: usize, j: usize) -> f64 {
        let n = self.dim;
        self.data[((l * n + k) * n + i) * n + j]
    }

    /// `R(X,Y)Z`.
    pub fn apply(&self, x: &Vector, y: &Vector, z: &Vector) -> Vector {
        let n = self.dim;
        Vector::from_fn(n, |l, _| {
            let mut s = 0.0;
            for k in 0..n {
                if z[k] == 0.0 {
                    continue;
                }
                for i in 0..n {
                    for j in 0..n {
                        s += self.get(l, k, i, j) * z[k] * x[i] * y[j];
                    }
                }
            }
            s
        })
    }
}

/// Which curvature operator a computation uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureOperator {
    /// The curvature of the structure's metric (or its analytic override).
    FromMetric,
    /// Synthetic operator `R(X,Y)Z = c (g(Y,Z) X − g(X,Z) Y)`, not derived from any metric.
    Constant(f64),
}

/// A curvature operator resolved at one point.
#[derive(Clone)]
pub enum PointCurvature {
    Tensor(RiemannTensor),
    Override { point: Vec<f64>, riemann: RiemannFn },
    Constant { c: f64, g: Matrix },
}

impl fmt::Debug for PointCurvature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointCurvature::Tensor(t) => f.debug_tuple("Tensor").field(t).finish(),
            PointCurvature::Override { point, .. } => f.debug_struct("Override").field("point", point).finish(),
            PointCurvature::Constant { c, g } => f.debug_struct("Constant").field("c", c).field("g", g).finish(),
        }
    }
}

impl PointCurvature {
    pub fn constant(c: f64, g: Matrix) -> Self {
        PointCurvature::Constant { c, g }
    }

    /// `R(X,Y)Z`.
    pub fn apply(&self, x: &Vector, y: &Vector, z: &Vector) -> Vector {
        match self {
            PointCurvature::Tensor(t) => t.apply(x, y, z),
            PointCurvature::Override { point, riemann } => riemann(point, x, y, z),
            PointCurvature::Constant { c, g } => (x * inner(g, y, z) - y * inner(g, x, z)) * *c,
        }
    }
}

/// Iterated curvature `R^p(X,Y)Z = R^{p−1}(X,Y) R(X,Y) Z`.
pub fn curvature_power(op: &PointCurvature, power: usize, x: &Vector, y: &Vector, z: &Vector) -> Result<Vector> {
    if power < 1 {
        return Err(Error::InvalidArgument(format!("curvature power must be >= 1, got {power}")));
    }
    let mut w = z.clone();
    for _ in 0..power {
        w = op.apply(x, y, &w);
    }
    Ok(w)
}

/// Closed form of `R^p(X,Y)Z` for the constant-curvature operator:
/// odd `p = 2k−1` gives `(−b²c²)^{k−1} R(X,Y)Z`, even `p = 2k` gives
/// `(−b²c²)^{k−1} R²(X,Y)Z`, where `b² = |X|²|Y|² − g(X,Y)²`.
pub fn constant_curvature_power(
    c: f64,
    g: &Matrix,
    power: usize,
    x: &Vector,
    y: &Vector,
    z: &Vector,
) -> Result<Vector> {
    if power < 1 {
        return Err(Error::InvalidArgument(format!("curvature power must be >= 1, got {power}")));
    }
    let op = PointCurvature::constant(c, g.clone());
    let b2 = inner(g, x, x) * inner(g, y, y) - inner(g, x, y).powi(2);
    let k = power.div_ceil(2);
    let factor = (-b2 * c * c).powi(k as i32 - 1);
    let base = if power % 2 == 1 { op.apply(x, y, z) } else { op.apply(x, y, &op.apply(x, y, z)) };
    Ok(base * factor)
}

/// Everything the bundle systems need at one base point.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub point: Vec<f64>,
    pub g: Matrix,
    pub phi: Matrix,
    pub christoffel: Christoffel,
    /// `dchristoffel[m] = ∂_m Γ`, when requested.
    pub dchristoffel: Option<Vec<Christoffel>>,
    pub curvature: PointCurvature,
}

/// Random sampling of the declared chart box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sampling {
    pub count: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { count: 100, seed: 0x5A5A_1A5E }
    }
}

/// Outcome of one structural check over sampled points.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub check: &'static str,
    pub max_residual: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub worst_point: Option<Vec<f64>>,
    /// Evaluation failure that aborted the check, if any.
    pub error: Option<String>,
    pub passed: bool,
}

impl CheckReport {
    fn new(check: &'static str, tolerance: f64) -> Self {
        Self { check, max_residual: 0.0, tolerance, samples: 0, worst_point: None, error: None, passed: false }
    }

    fn record(&mut self, residual: f64, point: &[f64]) {
        self.samples += 1;
        if residual > self.max_residual || residual.is_nan() || self.worst_point.is_none() {
            self.max_residual = if residual.is_nan() { f64::INFINITY } else { residual.max(self.max_residual) };
            self.worst_point = Some(point.to_vec());
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.error.is_none() && self.max_residual < self.tolerance;
        self
    }
}

/// Metric, para-complex structure and optional analytic overrides on one chart.
#[derive(Clone)]
pub struct MetricStructure {
    dim: usize,
    g: Vec<ScalarField>,
    phi: Vec<ScalarField>,
    christoffel: Option<Vec<ScalarField>>,
    riemann: Option<RiemannFn>,
    fd_step: f64,
    curvature_step: f64,
    chart_box: Vec<(f64, f64)>,
}

impl fmt::Debug for MetricStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: &[ScalarField]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        f.debug_struct("MetricStructure")
            .field("dim", &self.dim)
            .field("g", &show(&self.g))
            .field("phi", &show(&self.phi))
            .field("christoffel", &self.christoffel.as_deref().map(show))
            .field("riemann_override", &self.riemann.is_some())
            .field("fd_step", &self.fd_step)
            .field("curvature_step", &self.curvature_step)
            .field("chart_box", &self.chart_box)
            .finish()
    }
}

fn flatten_square(dim: usize, rows: Vec<Vec<ScalarField>>, what: &str) -> Result<Vec<ScalarField>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidStructure(format!("{what} must be {dim}x{dim}")));
    }
    let flat: Vec<_> = rows.into_iter().flatten().collect();
    if let Some(bad) = flat.iter().find(|f| f.variables() != Variables::Chart(dim)) {
        return Err(Error::InvalidStructure(format!(
            "{what} component `{bad}` is not a chart field of dimension {dim}"
        )));
    }
    Ok(flat)
}

fn parse_rows(dim: usize, rows: &[&[&str]]) -> Result<Vec<Vec<ScalarField>>> {
    rows.iter()
        .map(|row| {
            row.iter()
                .map(|s| ScalarField::parse(s, dim).map_err(|e| Error::Parse { source_text: s.to_string(), source: e }))
                .collect()
        })
        .collect()
}

impl MetricStructure {
    /// Build from component fields. `g` must be given as a full matrix whose
    /// mirrored entries are identical expressions.
    pub fn new(dim: usize, g: Vec<Vec<ScalarField>>, phi: Vec<Vec<ScalarField>>) -> Result<Self> {
        if dim < 2 || !dim.is_multiple_of(2) {
            return Err(Error::InvalidStructure(format!("dimension must be even and >= 2, got {dim}")));
        }
        let g = flatten_square(dim, g, "metric")?;
        let phi = flatten_square(dim, phi, "phi")?;
        for i in 0..dim {
            for j in (i + 1)..dim {
                if g[i * dim + j] != g[j * dim + i] {
                    return Err(Error::InvalidStructure(format!(
                        "metric components ({},{}) `{}` and ({},{}) `{}` differ",
                        i + 1,
                        j + 1,
                        g[i * dim + j],
                        j + 1,
                        i + 1,
                        g[j * dim + i]
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            g,
            phi,
            christoffel: None,
            riemann: None,
            fd_step: DEFAULT_FD_STEP,
            curvature_step: DEFAULT_CURVATURE_STEP,
            chart_box: vec![(-1.0, 1.0); dim],
        })
    }

    /// Build from expression strings.
    pub fn from_strings(dim: usize, g: &[&[&str]], phi: &[&[&str]]) -> Result<Self> {
        Self::new(dim, parse_rows(dim, g)?, parse_rows(dim, phi)?)
    }

    /// Analytic Christoffel symbols, `gamma[k][i][j] = Γ^k_{ij}`.
    pub fn with_christoffel(mut self, gamma: Vec<Vec<Vec<ScalarField>>>) -> Result<Self> {
        let n = self.dim;
        if gamma.len() != n || gamma.iter().any(|m| m.len() != n || m.iter().any(|r| r.len() != n)) {
            return Err(Error::InvalidStructure(format!("christoffel override must be {n}x{n}x{n}")));
        }
        let flat: Vec<_> = gamma.into_iter().flatten().flatten().collect();
        if flat.iter().any(|f| f.variables() != Variables::Chart(n)) {
            return Err(Error::InvalidStructure("christoffel override must use chart variables".into()));
        }
        self.christoffel = Some(flat);
        Ok(self)
    }

    /// Analytic Christoffel symbols given as the non-zero entries `(k, i, j, expr)`
    /// (zero-based). Entries are mirrored into `(k, j, i)`.
    pub fn with_christoffel_entries(self, entries: &[(usize, usize, usize, &str)]) -> Result<Self> {
        let n = self.dim;
        let zero = ScalarField::constant(0.0, Variables::Chart(n));
        let mut gamma = vec![vec![vec![zero; n]; n]; n];
        for &(k, i, j, src) in entries {
            if k >= n || i >= n || j >= n {
                return Err(Error::InvalidStructure(format!("christoffel index ({k},{i},{j}) out of range")));
            }
            let f = ScalarField::parse(src, n).map_err(|e| Error::Parse { source_text: src.to_string(), source: e })?;
            gamma[k][i][j] = f.clone();
            gamma[k][j][i] = f;
        }
        self.with_christoffel(gamma)
    }

    pub fn with_riemann(mut self, riemann: RiemannFn) -> Self {
        self.riemann = Some(riemann);
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!("fd_step must be positive, got {step}")));
        }
        self.fd_step = step;
        Ok(self)
    }

    pub fn with_curvature_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!("curvature_step must be positive, got {step}")));
        }
        self.curvature_step = step;
        Ok(self)
    }

    /// Declared chart box used for random sampling.
    pub fn with_chart_box(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.dim || bounds.iter().any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidStructure("chart box must give lo < hi for every coordinate".into()));
        }
        self.chart_box = bounds;
        Ok(self)
    }

    /// Drop the analytic Christoffel override, forcing the finite-difference path.
    pub fn without_christoffel(mut self) -> Self {
        self.christoffel = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chart_box(&self) -> &[(f64, f64)] {
        &self.chart_box
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_analytic_christoffel(&self) -> bool {
        self.christoffel.is_some()
    }

    pub fn has_riemann_override(&self) -> bool {
        self.riemann.is_some()
    }

    /// Tolerance for derivative-based checks on this structure.
    pub fn default_tolerance(&self) -> f64 {
        if self.has_analytic_christoffel() {
            ANALYTIC_TOLERANCE
        } else {
            FINITE_DIFFERENCE_TOLERANCE
        }
    }

    fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::InvalidArgument(format!("point has {} coordinates, expected {}", p.len(), self.dim)));
        }
        Ok(())
    }

    fn eval_matrix(&self, fields: &[ScalarField], p: &[f64], what: &str) -> Result<Matrix> {
        let n = self.dim;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = fields[i * n + j].eval(p).map_err(|e| Error::Eval {
                    what: format!("{what}[{}][{}]", i + 1, j + 1),
                    point: p.to_vec(),
                    source: e,
                })?;
            }
        }
        Ok(m)
    }

    fn raw_metric(&self, p: &[f64]) -> Result<Matrix> {
        let n = self.dim;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.g[i * n + j].eval(p).map_err(|e| Error::Eval {
                    what: format!("g[{}][{}]", i + 1, j + 1),
                    point: p.to_vec(),
                    source: e,
                })?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// `g_ij(p)`, symmetric by construction; errors when (nearly) singular.
    pub fn metric_at(&self, p: &[f64]) -> Result<Matrix> {
        self.check_point(p)?;
        let g = self.raw_metric(p)?;
        let scale: f64 = g.row_iter().map(|r| r.norm()).product();
        let det = g.clone().lu().determinant();
        if !(det.abs() > 1e-14 * scale) {
            return Err(Error::SingularMetric { point: p.to_vec() });
        }
        Ok(g)
    }

    pub fn inverse_metric_at(&self, p: &[f64]) -> Result<Matrix> {
        let g = self.metric_at(p)?;
        g.try_inverse().ok_or_else(|| Error::SingularMetric { point: p.to_vec() })
    }

    /// `φ^i_j(p)` (row `i`, column `j`).
    pub fn phi_at(&self, p: &[f64]) -> Result<Matrix> {
        self.check_point(p)?;
        self.eval_matrix(&self.phi, p, "phi")
    }

    /// Twin metric `G_ij = g_ik φ^k_j`; errors when `g` is not pure at `p`.
    pub fn twin_metric_at(&self, p: &[f64]) -> Result<Matrix> {
        let g = self.metric_at(p)?;
        let phi = self.phi_at(p)?;
        let twin = &g * &phi;
        let asymmetry = (&twin - twin.transpose()).amax();
        if asymmetry > 1e-10 * (1.0 + twin.amax()) {
            return Err(Error::PurityViolation { point: p.to_vec(), asymmetry });
        }
        Ok((&twin + twin.transpose()) * 0.5)
    }

    /// Central-difference partials of a flat vector-valued function.
    fn partials<F>(&self, p: &[f64], h: f64, f: F) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>>,
    {
        let mut out = Vec::with_capacity(self.dim);
        let mut q = p.to_vec();
        for m in 0..self.dim {
            let x = p[m];
            let (xp, xm) = (x + h, x - h);
            if xp == x || xm == x {
                return Err(Error::StepUnderflow { step: h, coordinate: x });
            }
            q[m] = xp;
            let fp = f(&q)?;
            q[m] = xm;
            let fm = f(&q)?;
            q[m] = x;
            let width = xp - xm;
            out.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / width).collect());
        }
        Ok(out)
    }

    fn metric_christoffel(&self, p: &[f64]) -> Result<Christoffel> {
        let n = self.dim;
        let g_inv = self.inverse_metric_at(p)?;
        let dg = self.partials(p, self.fd_step, |q| Ok(self.raw_metric(q)?.as_slice().to_vec()))?;
        // nalgebra storage is column-major: entry (a, b) sits at a + b * n.
        let d = |m: usize, a: usize, b: usize| dg[m][a + b * n];
        let mut gamma = Christoffel::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += g_inv[(k, l)] * (d(i, j, l) + d(j, i, l) - d(l, i, j));
                    }
                    gamma.set(k, i, j, 0.5 * s);
                    gamma.set(k, j, i, 0.5 * s);
                }
            }
        }
        Ok(gamma)
    }

    fn analytic_christoffel(&self, fields: &[ScalarField], p: &[f64]) -> Result<Christoffel> {
        let n = self.dim;
        let data = fields
            .iter()
            .enumerate()
            .map(|(idx, f)| {
                f.eval(p).map_err(|e| Error::Eval {
                    what: format!("christoffel[{}][{}][{}]", idx / (n * n) + 1, (idx / n) % n + 1, idx % n + 1),
                    point: p.to_vec(),
                    source: e,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Christoffel::from_flat(n, data))
    }

    /// `Γ^k_{ij}(p)`: the analytic override when present, else central differences of `g`.
    pub fn christoffel_at(&self, p: &[f64]) -> Result<Christoffel> {
        self.check_point(p)?;
        match &self.christoffel {
            Some(fields) => self.analytic_christoffel(fields, p),
            None => self.metric_christoffel(p),
        }
    }

    /// Step used when differentiating the Christoffel symbols.
    pub fn christoffel_derivative_step(&self) -> f64 {
        if self.christoffel.is_some() {
            self.fd_step
        } else {
            self.curvature_step
        }
    }

    /// `∂_m Γ^k_{ij}` for every `m`.
    pub fn christoffel_derivatives_at(&self, p: &[f64]) -> Result<Vec<Christoffel>> {
        self.check_point(p)?;
        let n = self.dim;
        let parts = self.partials(p, self.christoffel_derivative_step(), |q| Ok(self.christoffel_at(q)?.data))?;
        Ok(parts.into_iter().map(|d| Christoffel::from_flat(n, d)).collect())
    }

    /// `∂_m φ` for every `m` (as matrices).
    pub fn phi_derivatives_at(&self, p: &[f64]) -> Result<Vec<Matrix>> {
        self.check_point(p)?;
        let n = self.dim;
        let parts = self.partials(p, self.fd_step, |q| Ok(self.phi_at(q)?.as_slice().to_vec()))?;
        Ok(parts.into_iter().map(|d| Matrix::from_column_slice(n, n, &d)).collect())
    }

    pub fn riemann_tensor_at(&self, p: &[f64]) -> Result<RiemannTensor> {
        let gamma = self.christoffel_at(p)?;
        let dgamma = self.christoffel_derivatives_at(p)?;
        Ok(RiemannTensor::from_christoffel(&gamma, &dgamma))
    }

    /// `R(X,Y)Z` at `p`.
    pub fn riemann_at(&self, p: &[f64], x: &Vector, y: &Vector, z: &Vector) -> Result<Vector> {
        Ok(CurvatureOperator::FromMetric.at(self, p)?.apply(x, y, z))
    }

    /// Resolve every quantity the bundle systems need at `p`.
    pub fn point_geometry(&self, p: &[f64], op: CurvatureOperator, with_dchristoffel: bool) -> Result<PointGeometry> {
        let g = self.metric_at(p)?;
        let phi = self.phi_at(p)?;
        let christoffel = self.christoffel_at(p)?;
        let needs_tensor = op == CurvatureOperator::FromMetric && self.riemann.is_none();
        let dchristoffel =
            if with_dchristoffel || needs_tensor { Some(self.christoffel_derivatives_at(p)?) } else { None };
        let curvature = match op {
            CurvatureOperator::Constant(c) => PointCurvature::constant(c, g.clone()),
            CurvatureOperator::FromMetric => match &self.riemann {
                Some(r) => PointCurvature::Override { point: p.to_vec(), riemann: r.clone() },
                None => PointCurvature::Tensor(RiemannTensor::from_christoffel(
                    &christoffel,
                    dchristoffel.as_deref().expect("computed above"),
                )),
            },
        };
        Ok(PointGeometry { point: p.to_vec(), g, phi, christoffel, dchristoffel, curvature })
    }

    /// Seeded uniform samples from the chart box.
    pub fn sample_points(&self, sampling: Sampling) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
        (0..sampling.count).map(|_| self.chart_box.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect()).collect()
    }

    fn run_check<F>(&self, check: &'static str, points: &[Vec<f64>], tol: f64, mut residual: F) -> CheckReport
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let mut report = CheckReport::new(check, tol);
        for p in points {
            match residual(p) {
                Ok(r) => report.record(r, p),
                Err(e) => {
                    report.error = Some(e.to_string());
                    report.worst_point = Some(p.clone());
                    break;
                }
            }
        }
        report.finish()
    }

    /// `φ² = id` with equal-rank eigenbundles (`tr φ = 0`).
    pub fn check_involution(&self, points: &[Vec<f64>], tol: f64) -> CheckReport {
        let n = self.dim;
        self.run_check("involution", points, tol, |p| {
            let phi = self.phi_at(p)?;
            let sq = &phi * &phi - Matrix::identity(n, n);
            Ok(sq.amax().max(phi.trace().abs()))
        })
    }

    /// Purity `g(φX, Y) = g(X, φY)` over basis vectors.
    pub fn check_norden(&self, points: &[Vec<f64>], tol: f64) -> CheckReport {
        self.run_check("norden", points, tol, |p| {
            let twin = self.metric_at(p)? * self.phi_at(p)?;
            Ok((&twin - twin.transpose()).amax())
        })
    }

    /// `∇φ = 0`: max over `i,k,j` of `|∂_i φ^k_j + Γ^k_{il} φ^l_j − Γ^l_{ij} φ^k_l|`.
    pub fn check_parallel_phi(&self, points: &[Vec<f64>], tol: f64) -> CheckReport {
        self.run_check("parallel_phi", points, tol, |p| self.parallel_phi_residual(p))
    }

    pub fn parallel_phi_residual(&self, p: &[f64]) -> Result<f64> {
        let n = self.dim;
        let phi = self.phi_at(p)?;
        let dphi = self.phi_derivatives_at(p)?;
        let gamma = self.christoffel_at(p)?;
        let mut worst: f64 = 0.0;
        for (i, dphi_i) in dphi.iter().enumerate() {
            for k in 0..n {
                for j in 0..n {
                    let mut v = dphi_i[(k, j)];
                    for l in 0..n {
                        v += gamma.get(k, i, l) * phi[(l, j)] - gamma.get(l, i, j) * phi[(k, l)];
                    }
                    worst = worst.max(v.abs());
                }
            }
        }
        Ok(worst)
    }

    /// Curvature purity `g(R(φX,Y)Z, W) = g(R(X,φY)Z, W)` over basis tuples.
    pub fn check_curvature_purity(&self, points: &[Vec<f64>], tol: f64) -> CheckReport {
        let n = self.dim;
        self.run_check("curvature_purity", points, tol, |p| {
            let geo = self.point_geometry(p, CurvatureOperator::FromMetric, false)?;
            let basis = |i: usize| Vector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
            let mut worst: f64 = 0.0;
            for i in 0..n {
                let ei = basis(i);
                let phi_ei = &geo.phi * &ei;
                for j in 0..n {
                    let ej = basis(j);
                    let phi_ej = &geo.phi * &ej;
                    for k in 0..n {
                        let ek = basis(k);
                        let lhs = &geo.g * geo.curvature.apply(&phi_ei, &ej, &ek);
                        let rhs = &geo.g * geo.curvature.apply(&ei, &phi_ej, &ek);
                        worst = worst.max((lhs - rhs).amax());
                    }
                }
            }
            Ok(worst)
        })
    }
}

impl CurvatureOperator {
    pub fn at(&self, m: &MetricStructure, p: &[f64]) -> Result<PointCurvature> {
        match self {
            CurvatureOperator::Constant(c) => Ok(PointCurvature::constant(*c, m.metric_at(p)?)),
            CurvatureOperator::FromMetric => {
                m.check_point(p)?;
                match &m.riemann {
                    Some(r) => Ok(PointCurvature::Override { point: p.to_vec(), riemann: r.clone() }),
                    None => Ok(PointCurvature::Tensor(m.riemann_tensor_at(p)?)),
                }
            }
        }
    }
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
    }

    fn flat(phi: &[&[&str]]) -> MetricStructure {
        MetricStructure::from_strings(2, &[&["1", "0"], &["0", "1"]], phi).unwrap()
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn metric_values() {
        let m = exp2d();
        assert_eq!(m.metric_at(&[0.0, 0.0]).unwrap(), Matrix::identity(2, 2));
        let poly =
            MetricStructure::from_strings(2, &[&["x^2", "0"], &["0", "y^2"]], &[&["0", "y/x"], &["x/y", "0"]]).unwrap();
        assert_eq!(poly.metric_at(&[2.0, 3.0]).unwrap(), Matrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]));
        assert!(matches!(poly.metric_at(&[0.0, 3.0]), Err(Error::SingularMetric { .. })));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(MetricStructure::from_strings(1, &[&["1"]], &[&["1"]]).is_err());
        assert!(MetricStructure::from_strings(2, &[&["1", "x"], &["0", "1"]], &[&["1", "0"], &["0", "-1"]]).is_err());
    }

    #[test]
    fn twin_metric() {
        let g = exp2d().twin_metric_at(&[0.0, 0.0]).unwrap();
        assert_eq!(g, Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let g = flat(&[&["1", "0"], &["0", "-1"]]).twin_metric_at(&[0.3, 0.1]).unwrap();
        assert_eq!(g, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        let bad = flat(&[&["0", "2"], &["0.5", "0"]]);
        assert!(matches!(bad.twin_metric_at(&[0.0, 0.0]), Err(Error::PurityViolation { .. })));
    }

    #[test]
    fn christoffel_from_differences_matches_closed_form() {
        let m = exp2d();
        let gamma = m.christoffel_at(&[0.3, -0.2]).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let want = if k == i && i == j { 1.0 } else { 0.0 };
                    assert!((gamma.get(k, i, j) - want).abs() < 1e-9, "{k}{i}{j}");
                }
            }
        }
        let flat = flat(&[&["1", "0"], &["0", "-1"]]);
        assert_eq!(flat.christoffel_at(&[0.5, 0.5]).unwrap(), Christoffel::zeros(2));
    }

    #[test]
    fn flat_curvature_vanishes_and_is_antisymmetric() {
        let m = flat(&[&["1", "0"], &["0", "-1"]]);
        let r = m.riemann_at(&[0.1, 0.2], &v(&[1.0, 2.0]), &v(&[0.5, -1.0]), &v(&[3.0, 1.0])).unwrap();
        assert_eq!(r, v(&[0.0, 0.0]));
        let op = PointCurvature::constant(1.0, Matrix::identity(2, 2));
        let e1 = v(&[1.0, 0.0]);
        let e2 = v(&[0.0, 1.0]);
        assert_eq!(op.apply(&e1, &e2, &e2), e1);
        let (x, y, z) = (v(&[0.3, 1.2]), v(&[-0.7, 0.4]), v(&[2.0, -1.0]));
        assert_eq!(op.apply(&x, &y, &z), -op.apply(&y, &x, &z));
    }

    #[test]
    fn sphere_curvature_is_positive() {
        // Round sphere in (theta, phi): g = diag(1, sin^2 theta), sectional curvature 1.
        let m =
            MetricStructure::from_strings(2, &[&["1", "0"], &["0", "sin(x)^2"]], &[&["1", "0"], &["0", "-1"]]).unwrap();
        let p = [1.0, 0.3];
        let g = m.metric_at(&p).unwrap();
        let (e1, e2) = (v(&[1.0, 0.0]), v(&[0.0, 1.0]));
        let r = m.riemann_at(&p, &e1, &e2, &e2).unwrap();
        let want = e1 * inner(&g, &e2, &e2);
        assert!((r - want).amax() < 1e-6);
    }

    #[test]
    fn structural_checks() {
        let pts = exp2d().sample_points(Sampling::default());
        assert_eq!(pts.len(), 100);
        let m = exp2d();
        assert!(m.check_norden(&pts, 1e-8).passed);
        assert!(m.check_involution(&pts, 1e-8).passed);
        assert!(m.check_parallel_phi(&pts, 1e-5).passed);
        assert!(m.check_curvature_purity(&pts, 1e-5).passed);

        let constant = flat(&[&["1", "0"], &["0", "-1"]]);
        let report = constant.check_parallel_phi(&pts, 1e-12);
        assert!(report.passed);
        assert_eq!(report.max_residual, 0.0);

        // A reflection rotating with x1: pure and involutive, but not parallel.
        let rotating = flat(&[&["cos(x1)", "sin(x1)"], &["sin(x1)", "-cos(x1)"]]);
        assert!(rotating.check_norden(&pts, 1e-8).passed);
        assert!(rotating.check_involution(&pts, 1e-8).passed);
        assert!(!rotating.check_parallel_phi(&pts, 1e-5).passed);

        let generic = flat(&[&["0.3", "1.7"], &["-0.4", "0.9"]]);
        let report = generic.check_norden(&pts, 1e-8);
        assert!(!report.passed);
        assert!((report.max_residual - 2.1).abs() < 1e-12);
    }

    #[test]
    fn curvature_purity_catches_injected_operator() {
        let pts = exp2d().sample_points(Sampling { count: 5, seed: 1 });
        let riemann: RiemannFn = Arc::new(|_p, x, y, z| (x * y.dot(z) - y * x.dot(z)) * 1.0);
        let m = flat(&[&["1", "0"], &["0", "-1"]]).with_riemann(riemann);
        let report = m.check_curvature_purity(&pts, 1e-8);
        assert!(!report.passed);
        assert!((report.max_residual - 2.0).abs() < 1e-12);
    }

    #[test]
    fn evaluation_failures_fail_the_check() {
        let m =
            MetricStructure::from_strings(2, &[&["ln(x)", "0"], &["0", "1"]], &[&["1", "0"], &["0", "-1"]]).unwrap();
        let report = m.check_norden(&[vec![-1.0, 0.0]], 1e-8);
        assert!(!report.passed);
        assert!(report.error.is_some());
    }

    #[test]
    fn step_underflow_is_reported() {
        let m = exp2d().with_fd_step(1e-30).unwrap();
        assert!(matches!(m.christoffel_at(&[1.0, 1.0]), Err(Error::StepUnderflow { .. })));
    }

    #[test]
    fn curvature_power_examples() {
        let g = Matrix::identity(2, 2);
        let (e1, e2) = (v(&[1.0, 0.0]), v(&[0.0, 1.0]));
        let z = v(&[0.25, -2.0]);
        let op = PointCurvature::constant(1.0, g.clone());
        let r1 = op.apply(&e1, &e2, &z);
        assert_eq!(curvature_power(&op, 1, &e1, &e2, &z).unwrap(), r1);
        assert_eq!(curvature_power(&op, 3, &e1, &e2, &z).unwrap(), -r1.clone());
        assert_eq!(constant_curvature_power(1.0, &g, 3, &e1, &e2, &z).unwrap(), -r1);

        let op2 = PointCurvature::constant(2.0, g.clone());
        let r2 = op2.apply(&e1, &e2, &op2.apply(&e1, &e2, &z));
        assert_eq!(curvature_power(&op2, 4, &e1, &e2, &z).unwrap(), r2 * -4.0);
        assert!(curvature_power(&op2, 0, &e1, &e2, &z).is_err());
    }
}
