//! Finite-difference differentiation of sampled series.
//!
//! Weights come from Fornberg's recursion, so stencils work on the
//! non-uniform grids produced by a shortened final integration step and at
//! the ends of a trajectory (one-sided stencils).

use nalgebra::DVector;

/// Points per stencil. Five points give fourth-order first derivatives.
pub const STENCIL: usize = 5;

/// Weights `w` such that `f'(z) ≈ Σ w_j f(x_j)` (for `order == 1`).
pub fn fornberg_weights(z: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Index window of `STENCIL` samples around `i`, clamped to `[0, len)`.
fn window(i: usize, len: usize) -> std::ops::Range<usize> {
    let half = STENCIL / 2;
    let start = i.saturating_sub(half).min(len - STENCIL);
    start..start + STENCIL
}

/// First time derivative of a vector series at every sample.
///
/// Returns `None` when there are fewer than `STENCIL` samples.
pub fn differentiate(times: &[f64], values: &[DVector<f64>]) -> Option<Vec<DVector<f64>>> {
    let len = times.len();
    if len < STENCIL || values.len() != len {
        return None;
    }
    let out = (0..len)
        .map(|i| {
            let w = window(i, len);
            let weights = fornberg_weights(times[i], &times[w.clone()], 1);
            let mut d = DVector::zeros(values[i].len());
            for (wj, j) in weights.iter().zip(w) {
                d.axpy(*wj, &values[j], 1.0);
            }
            d
        })
        .collect();
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_weights_match_textbook_stencil() {
        let w = fornberg_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        let want = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_on_quartics_with_uneven_spacing() {
        let times = [0.0, 0.1, 0.2, 0.3, 0.37, 0.41];
        let f = |t: f64| 1.0 - 2.0 * t + 3.0 * t.powi(3) - t.powi(4);
        let df = |t: f64| -2.0 + 9.0 * t * t - 4.0 * t.powi(3);
        let values: Vec<_> = times.iter().map(|&t| DVector::from_element(1, f(t))).collect();
        let d = differentiate(&times, &values).unwrap();
        for (t, v) in times.iter().zip(&d) {
            assert!((v[0] - df(*t)).abs() < 1e-11, "t={t}");
        }
    }

    #[test]
    fn too_few_samples() {
        let t = [0.0, 1.0, 2.0];
        let v = vec![DVector::zeros(1); 3];
        assert!(differentiate(&t, &v).is_none());
    }
}
