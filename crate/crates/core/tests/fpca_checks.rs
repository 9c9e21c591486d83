//! Checks of the functional-PCA stage against closed forms: kernel smoothers
//! on data they must reproduce exactly, a planted rank-1 covariance, and the
//! quadrature identities behind scores and grid selection.

use nalgebra::DMatrix;
use rpca_synth::fpca::{
    compute_scores, eigen_decompose, estimate_mean, fit, smooth_covariance, trapezoid_weights,
    Curve, Kernel, SmoothingConfig,
};
use rpca_synth::panel::Panel;

/// Units observed at staggered times, all lying on the line 2 + 3t.
fn linear_curves(n: usize) -> Vec<Curve> {
    (0..n)
        .map(|u| {
            let times: Vec<f64> = (0..10).map(|t| t as f64 + 0.1 * u as f64).collect();
            let values = times.iter().map(|&t| 2.0 + 3.0 * t).collect();
            Curve { times, values }
        })
        .collect()
}

/// A local linear smoother fits straight lines without bias, whatever the
/// kernel or bandwidth: pooling observations that all lie on one line must
/// return that line to machine precision.
#[test]
fn mean_smoother_reproduces_straight_lines_exactly() {
    let curves = linear_curves(4);
    let eval: Vec<f64> = (0..19).map(|i| 0.5 * i as f64).collect();
    for kernel in [Kernel::Epanechnikov, Kernel::Gaussian] {
        for h in [1.0, 3.0, 8.0] {
            let mean = estimate_mean(&curves, &eval, kernel, h).unwrap();
            for (&t, &m) in eval.iter().zip(&mean) {
                assert!(
                    (m - (2.0 + 3.0 * t)).abs() < 1e-9,
                    "{kernel:?} h={h}: mean({t}) = {m}, want {}",
                    2.0 + 3.0 * t
                );
            }
        }
    }
}

/// Curves of the form a_u * phi have second-moment surface m2 * phi phi^T;
/// the smoothed estimate must stay close to it in relative Frobenius norm.
#[test]
fn covariance_smoother_recovers_planted_rank_one_surface() {
    let grid: Vec<f64> = (0..21).map(|t| t as f64).collect();
    let phi = |t: f64| (std::f64::consts::PI * t / 10.0).sin() + 0.3;
    let loadings = [-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0];
    let residuals: Vec<Curve> = loadings
        .iter()
        .map(|&a| Curve {
            times: grid.clone(),
            values: grid.iter().map(|&t| a * phi(t)).collect(),
        })
        .collect();
    let m2 = loadings.iter().map(|a| a * a).sum::<f64>() / loadings.len() as f64;
    let truth = DMatrix::from_fn(21, 21, |i, j| m2 * phi(grid[i]) * phi(grid[j]));

    let surface = smooth_covariance(&residuals, &grid, Kernel::Epanechnikov, 4.0).unwrap();
    let rel = (&surface - &truth).norm() / truth.norm();
    assert!(rel < 0.15, "relative Frobenius error {rel}");

    // The planted structure must dominate the spectrum.
    let basis = eigen_decompose(&surface, &grid).unwrap();
    assert!(
        basis.eigenvalues.len() == 1
            || basis.eigenvalues[1] / basis.eigenvalues[0] < 0.05,
        "second eigenvalue too large: {:?}",
        basis.eigenvalues
    );
}

/// Scores are quadrature inner products: residuals built as c1*phi_1 + c2*phi_2
/// from an orthonormal basis must come back as exactly (c1, c2).
#[test]
fn scores_invert_known_linear_combinations() {
    let g = 120;
    let grid: Vec<f64> = (0..g).map(|i| i as f64 / (g - 1) as f64).collect();
    let surface = DMatrix::from_fn(g, g, |i, j| grid[i].min(grid[j]));
    let basis = eigen_decompose(&surface, &grid).unwrap();
    assert!(basis.eigenvalues.len() >= 2);

    let combos = [(3.0, -2.0), (0.5, 0.0), (-1.25, 4.0)];
    let residuals: Vec<Curve> = combos
        .iter()
        .map(|&(c1, c2)| Curve {
            times: grid.clone(),
            values: (0..g)
                .map(|i| c1 * basis.eigenfunctions[(0, i)] + c2 * basis.eigenfunctions[(1, i)])
                .collect(),
        })
        .collect();
    let scores = compute_scores(&residuals, &basis, &grid).unwrap();
    for (row, &(c1, c2)) in combos.iter().enumerate() {
        assert!(
            (scores[(row, 0)] - c1).abs() < 1e-6,
            "row {row}: score 1 = {}, want {c1}",
            scores[(row, 0)]
        );
        assert!(
            (scores[(row, 1)] - c2).abs() < 1e-6,
            "row {row}: score 2 = {}, want {c2}",
            scores[(row, 1)]
        );
    }
}

/// Trapezoid weights integrate piecewise-linear functions exactly; their sum
/// is the span.
#[test]
fn trapezoid_weights_integrate_linear_functions() {
    let times = [0.0, 0.5, 2.0, 3.5, 4.0];
    let w = trapezoid_weights(&times);
    let total: f64 = w.iter().sum();
    assert!((total - 4.0).abs() < 1e-12, "span: {total}");
    // Integral of 2t over [0, 4] is 16.
    let integral: f64 = times.iter().zip(&w).map(|(&t, &wi)| wi * 2.0 * t).sum();
    assert!((integral - 16.0).abs() < 1e-12, "integral: {integral}");
}

fn panel_with_times(times: Vec<f64>, t0: usize) -> Panel {
    let n_units = 6;
    let values = DMatrix::from_fn(n_units, times.len(), |u, t| {
        (0.3 * times[t] + u as f64).sin() + 2.0 * u as f64
    });
    let mask = DMatrix::from_element(n_units, times.len(), true);
    let labels = (0..n_units).map(|u| format!("u{u}")).collect();
    Panel::new(values, mask, labels, times, 0, t0).unwrap()
}

/// Regular pre-period spacing keeps the observed times as the grid;
/// irregular spacing falls back to 100 equispaced points.
#[test]
fn evaluation_grid_follows_spacing() {
    let regular = panel_with_times((0..12).map(|t| t as f64).collect(), 8);
    let out = fit(&regular, &SmoothingConfig::default()).unwrap();
    assert_eq!(out.grid, (0..8).map(|t| t as f64).collect::<Vec<_>>());

    let mut times: Vec<f64> = (0..12).map(|t| t as f64).collect();
    times[3] = 3.7;
    let irregular = panel_with_times(times, 8);
    let out = fit(&irregular, &SmoothingConfig::default()).unwrap();
    assert_eq!(out.grid.len(), 100);
    assert!((out.grid[0] - 0.0).abs() < 1e-12);
    assert!((out.grid[99] - 3.7f64.max(7.0)).abs() < 1e-12);

    let pinned = fit(
        &regular,
        &SmoothingConfig {
            grid_size: Some(33),
            ..SmoothingConfig::default()
        },
    )
    .unwrap();
    assert_eq!(pinned.grid.len(), 33);
}
