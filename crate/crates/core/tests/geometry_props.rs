use phi_sasaki::bundle::vector;
use phi_sasaki::catalog;
use phi_sasaki::geometry::{
    constant_curvature_power, curvature_power, inner, Matrix, MetricStructure, PointCurvature, Sampling,
};
use proptest::prelude::*;

/// A curved, non-diagonal metric on `[-1, 1]^4` with no analytic Christoffel symbols.
fn curved4() -> MetricStructure {
    MetricStructure::from_strings(
        4,
        &[
            &["1 + x2^2/4", "x3/5", "0", "sin(x1)/10"],
            &["x3/5", "exp(x1/3)", "x4/10", "0"],
            &["0", "x4/10", "2 + cos(x2)/2", "x1*x2/10"],
            &["sin(x1)/10", "0", "x1*x2/10", "1 + x3^2/5"],
        ],
        &[&["1", "0", "0", "0"], &["0", "1", "0", "0"], &["0", "0", "-1", "0"], &["0", "0", "0", "-1"]],
    )
    .unwrap()
}

fn point4() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, 4)
}

/// `∂_k g_ij` by a plain central difference, independent of the library's stencils.
fn metric_derivative(m: &MetricStructure, p: &[f64], k: usize) -> Matrix {
    let h = 1e-5;
    let mut plus = p.to_vec();
    let mut minus = p.to_vec();
    plus[k] += h;
    minus[k] -= h;
    (m.metric_at(&plus).unwrap() - m.metric_at(&minus).unwrap()) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn christoffel_symbols_are_symmetric(p in point4()) {
        let gamma = curved4().christoffel_at(&p).unwrap();
        prop_assert!(gamma.max_asymmetry() < 1e-12);
    }

    #[test]
    fn connection_is_metric_compatible(p in point4()) {
        let m = curved4();
        let g = m.metric_at(&p).unwrap();
        let gamma = m.christoffel_at(&p).unwrap();
        for k in 0..4 {
            let dg = metric_derivative(&m, &p, k);
            for i in 0..4 {
                for j in 0..4 {
                    let rhs: f64 = (0..4).map(|l| gamma.get(l, k, i) * g[(l, j)] + gamma.get(l, k, j) * g[(i, l)]).sum();
                    prop_assert!((dg[(i, j)] - rhs).abs() < 1e-7, "k={k} i={i} j={j}: {} vs {rhs}", dg[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn riemann_satisfies_first_bianchi_and_symmetries(p in point4()) {
        let m = curved4();
        let r = m.riemann_tensor_at(&p).unwrap();
        let g = m.metric_at(&p).unwrap();
        let lower = |a: usize, b: usize, c: usize, d: usize| (0..4).map(|l| g[(a, l)] * r.get(l, b, c, d)).sum::<f64>();
        for l in 0..4 {
            for k in 0..4 {
                for i in 0..4 {
                    for j in 0..4 {
                        prop_assert!((r.get(l, k, i, j) + r.get(l, k, j, i)).abs() < 1e-12);
                        let cyclic = r.get(l, k, i, j) + r.get(l, i, j, k) + r.get(l, j, k, i);
                        prop_assert!(cyclic.abs() < 1e-5, "bianchi {l}{k}{i}{j}: {cyclic}");
                        prop_assert!((lower(l, k, i, j) - lower(i, j, l, k)).abs() < 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn iterated_constant_curvature_matches_closed_form(
        c in -3.0f64..3.0,
        power in 1usize..=8,
        xs in proptest::collection::vec(-1.0f64..1.0, 12),
    ) {
        let g = Matrix::from_row_slice(4, 4, &[
            2.0, 0.3, 0.0, 0.1,
            0.3, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.5, -0.2,
            0.1, 0.0, -0.2, 1.0,
        ]);
        let (x, y, z) = (vector(&xs[0..4]), vector(&xs[4..8]), vector(&xs[8..12]));
        let naive = curvature_power(&PointCurvature::constant(c, g.clone()), power, &x, &y, &z).unwrap();
        let closed = constant_curvature_power(c, &g, power, &x, &y, &z).unwrap();
        let scale = naive.amax().max(closed.amax()).max(1e-300);
        prop_assert!((&naive - &closed).amax() / scale < 1e-10);
    }
}

#[test]
fn finite_difference_christoffel_matches_analytic() {
    for entry in [catalog::exp2d().unwrap(), catalog::poly2d(1.0, 0.5).unwrap()] {
        let analytic = &entry.structure;
        let numeric = analytic.clone().without_christoffel();
        for p in analytic.sample_points(Sampling { count: 50, seed: 11 }) {
            let a = analytic.christoffel_at(&p).unwrap();
            let n = numeric.christoffel_at(&p).unwrap();
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let d = (a.get(k, i, j) - n.get(k, i, j)).abs();
                        assert!(d < 1e-6, "{} at {p:?}: Γ^{k}_{i}{j} differs by {d}", entry.name);
                    }
                }
            }
        }
    }
}

#[test]
fn hyperbolic_plane_has_sectional_curvature_minus_one() {
    let m = MetricStructure::from_strings(2, &[&["1", "0"], &["0", "exp(2*x)"]], &[&["1", "0"], &["0", "-1"]]).unwrap();
    for p in [[0.0, 0.0], [0.7, -1.2], [-0.4, 2.0]] {
        let g = m.metric_at(&p).unwrap();
        let (x, y) = (vector(&[1.0, 0.3]), vector(&[-0.2, 0.8]));
        let ryy = m.riemann_at(&p, &x, &y, &y).unwrap();
        let area = inner(&g, &x, &x) * inner(&g, &y, &y) - inner(&g, &x, &y).powi(2);
        let k = inner(&g, &ryy, &x) / area;
        assert!((k + 1.0).abs() < 1e-6, "K = {k} at {p:?}");
    }
}

#[test]
fn catalog_structures_pass_every_axiom() {
    for name in catalog::ENTRY_NAMES {
        let m = catalog::entry(name).unwrap().structure;
        let pts = m.sample_points(Sampling::default());
        let tol = m.default_tolerance();
        for report in [
            m.check_involution(&pts, tol),
            m.check_norden(&pts, tol),
            m.check_parallel_phi(&pts, tol),
            m.check_curvature_purity(&pts, tol),
        ] {
            assert!(report.passed, "{name}: {report:?}");
        }
    }
}
