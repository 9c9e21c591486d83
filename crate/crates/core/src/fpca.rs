//! Functional principal component analysis of the pre-intervention curves.
//!
//! The estimation chain is: a local linear kernel smoother for the mean
//! function, a local quadratic surface smoother for the covariance built from
//! off-diagonal raw residual products, a quadrature-weighted eigenproblem for
//! the eigenpairs, and per-unit numerical integration for the scores. Units
//! may have missing observations; every step works on each unit's observed
//! points only.

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

/// Smoothing kernel for the mean and covariance estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Epanechnikov,
    Gaussian,
}

impl Kernel {
    fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => {
                // Tails beyond 8 bandwidths carry weights below 1e-14 and are
                // cut for speed; the cutoff is fixed so results stay
                // deterministic.
                if u.abs() <= 8.0 {
                    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-width of the kernel support in bandwidth units.
    fn support(self) -> f64 {
        match self {
            Kernel::Epanechnikov => 1.0,
            Kernel::Gaussian => 8.0,
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "gaussian" => Ok(Kernel::Gaussian),
            other => Err(Error::invalid(format!(
                "unknown kernel {other:?}, expected \"epanechnikov\" or \"gaussian\""
            ))),
        }
    }
}

/// Configuration for the FPCA smoothing chain. `None` fields are resolved by
/// deterministic defaults at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub kernel: Kernel,
    /// Bandwidth for the mean smoother; `None` selects [`auto_bandwidth`].
    pub bandwidth_mean: Option<f64>,
    /// Bandwidth for the covariance smoother; `None` selects [`auto_bandwidth`].
    pub bandwidth_cov: Option<f64>,
    /// Evaluation grid size. `None` uses the observed pre-period time points
    /// when they are equally spaced and 100 equispaced points otherwise.
    pub grid_size: Option<usize>,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            kernel: Kernel::Epanechnikov,
            bandwidth_mean: None,
            bandwidth_cov: None,
            grid_size: None,
        }
    }
}

/// Deterministic default bandwidth for a pre-period spanning `span` time
/// units with `n_distinct` distinct observed times: `1.5 * span * n^(-1/5)`,
/// the usual rate for local linear smoothers.
///
/// A wide default deliberately favors a stable mean estimate; fine structure
/// the mean smoother misses reappears in the residual covariance and is
/// absorbed by the leading components, so downstream clustering and weights
/// are insensitive to it. Override per fit via [`SmoothingConfig`] when the
/// mean curve itself is the quantity of interest.
pub fn auto_bandwidth(span: f64, n_distinct: usize) -> f64 {
    1.5 * span * (n_distinct.max(2) as f64).powf(BANDWIDTH_EXPONENT)
}

const BANDWIDTH_EXPONENT: f64 = -0.2;

/// One unit's observed samples over some window, as (time, value) pairs split
/// into parallel arrays. Times are strictly increasing within a curve.
#[derive(Debug, Clone, Default)]
pub struct Curve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Result of the FPCA fit.
#[derive(Debug, Clone)]
pub struct FpcaResult {
    /// Evaluation grid, strictly increasing.
    pub grid: Vec<f64>,
    /// Estimated mean function on the grid.
    pub mean: Vec<f64>,
    /// Positive eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// One eigenfunction per row, evaluated on the grid; orthonormal under
    /// the trapezoid quadrature inner product.
    pub eigenfunctions: DMatrix<f64>,
    /// Per-unit scores, units x components, in panel row order.
    pub scores: DMatrix<f64>,
    /// Cumulative explained-variance ratios; the last entry is 1.
    pub explained: Vec<f64>,
    /// Bandwidth actually used by the mean smoother.
    pub bandwidth_mean: f64,
    /// Bandwidth actually used by the covariance smoother.
    pub bandwidth_cov: f64,
}

impl FpcaResult {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Trapezoid quadrature weights for strictly increasing nodes (at least two).
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    debug_assert!(n >= 2);
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let half = 0.5 * (times[i + 1] - times[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    w
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    Ok(())
}

/// Pooled samples aggregated by distinct time: per location, the observation
/// count and the value sum. The weighted least squares normal equations only
/// depend on the data through these.
struct PooledSamples {
    times: Vec<f64>,
    counts: Vec<f64>,
    sums: Vec<f64>,
}

fn pool_samples(curves: &[Curve]) -> Result<PooledSamples> {
    let mut times: Vec<f64> = Vec::new();
    for curve in curves {
        if curve.times.len() != curve.values.len() {
            return Err(Error::invalid("curve times/values length mismatch".to_string()));
        }
        times.extend_from_slice(&curve.times);
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();
    if times.is_empty() {
        return Err(Error::invalid("no observed points to smooth".to_string()));
    }
    let mut counts = vec![0.0; times.len()];
    let mut sums = vec![0.0; times.len()];
    for curve in curves {
        for (&t, &v) in curve.times.iter().zip(&curve.values) {
            let idx = lookup(&times, t);
            counts[idx] += 1.0;
            sums[idx] += v;
        }
    }
    Ok(PooledSamples { times, counts, sums })
}

fn lookup(sorted: &[f64], t: f64) -> usize {
    sorted
        .binary_search_by(|x| x.partial_cmp(&t).expect("finite times"))
        .expect("time present in pooled set")
}

/// Indices of `times` within kernel support of `center`, as a contiguous range.
fn support_range(times: &[f64], center: f64, radius: f64) -> std::ops::Range<usize> {
    let lo = times.partition_point(|&t| t < center - radius);
    let hi = times.partition_point(|&t| t <= center + radius);
    lo..hi
}

fn local_linear_at(
    pool: &PooledSamples,
    t: f64,
    kernel: Kernel,
    h: f64,
) -> Result<f64> {
    let radius = kernel.support() * h;
    let range = support_range(&pool.times, t, radius);
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let (mut b0, mut b1) = (0.0, 0.0);
    for i in range {
        let w = pool.counts[i] * kernel.eval((pool.times[i] - t) / h);
        if w == 0.0 {
            continue;
        }
        let x = t - pool.times[i];
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
        b0 += w * pool.sums[i] / pool.counts[i];
        b1 += w * x * pool.sums[i] / pool.counts[i];
    }
    if s0 == 0.0 {
        return Err(Error::numerical(format!(
            "mean smoother has zero kernel weight at t = {t}; increase the bandwidth"
        )));
    }
    let det = s0 * s2 - s1 * s1;
    // With all in-window points at a single location the linear term is
    // unidentified; fall back to the weighted mean.
    if det.abs() <= 1e-12 * s0 * s2.max(1e-300) {
        return Ok(b0 / s0);
    }
    Ok((s2 * b0 - s1 * b1) / det)
}

/// Local linear kernel estimate of the mean function, pooled over all curves
/// and evaluated at `eval_at`.
pub fn estimate_mean(
    curves: &[Curve],
    eval_at: &[f64],
    kernel: Kernel,
    h: f64,
) -> Result<Vec<f64>> {
    check_bandwidth(h)?;
    let pool = pool_samples(curves)?;
    eval_at
        .iter()
        .map(|&t| local_linear_at(&pool, t, kernel, h))
        .collect()
}

/// Raw residual products aggregated by distinct-time pair: per (k, s)
/// location with k != s, the number of contributing units and the product
/// sum. Diagonal pairs are excluded so measurement noise does not enter the
/// surface.
struct PooledProducts {
    times: Vec<f64>,
    counts: DMatrix<f64>,
    sums: DMatrix<f64>,
}

fn pool_products(residuals: &[Curve]) -> Result<PooledProducts> {
    let mut times: Vec<f64> = Vec::new();
    for curve in residuals {
        if curve.times.len() != curve.values.len() {
            return Err(Error::invalid("curve times/values length mismatch".to_string()));
        }
        times.extend_from_slice(&curve.times);
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();
    let d = times.len();
    if d < 2 {
        return Err(Error::invalid(
            "covariance smoothing needs at least 2 distinct observed times".to_string(),
        ));
    }
    let mut counts = DMatrix::zeros(d, d);
    let mut sums = DMatrix::zeros(d, d);
    for curve in residuals {
        let idx: Vec<usize> = curve.times.iter().map(|&t| lookup(&times, t)).collect();
        for (a, &k) in idx.iter().enumerate() {
            for (b, &s) in idx.iter().enumerate() {
                if a == b {
                    continue;
                }
                counts[(k, s)] += 1.0;
                sums[(k, s)] += curve.values[a] * curve.values[b];
            }
        }
    }
    Ok(PooledProducts { times, counts, sums })
}

/// Local quadratic estimate of the covariance surface on `grid` x `grid`,
/// from residual curves (mean already subtracted). The local model has a
/// linear term in the first coordinate and a quadratic term in the second;
/// the fitted surface is symmetrized afterwards.
pub fn smooth_covariance(
    residuals: &[Curve],
    grid: &[f64],
    kernel: Kernel,
    h: f64,
) -> Result<DMatrix<f64>> {
    check_bandwidth(h)?;
    let pool = pool_products(residuals)?;
    let g = grid.len();
    let radius = kernel.support() * h;

    // Kernel weights per grid point over the distinct times, precomputed.
    let weights: Vec<(std::ops::Range<usize>, Vec<f64>)> = grid
        .iter()
        .map(|&a| {
            let range = support_range(&pool.times, a, radius);
            let w = range
                .clone()
                .map(|i| kernel.eval((pool.times[i] - a) / h))
                .collect();
            (range, w)
        })
        .collect();

    let mut surface = DMatrix::zeros(g, g);
    for ia in 0..g {
        let a = grid[ia];
        let (ra, wa) = &weights[ia];
        for ib in 0..g {
            let b = grid[ib];
            let (rb, wb) = &weights[ib];
            let mut m = Matrix3::<f64>::zeros();
            let mut rhs = Vector3::<f64>::zeros();
            let mut total = 0.0;
            for (oa, k) in ra.clone().enumerate() {
                let wk = wa[oa];
                if wk == 0.0 {
                    continue;
                }
                let x1 = a - pool.times[k];
                for (ob, s) in rb.clone().enumerate() {
                    let w = wk * wb[ob];
                    if w == 0.0 || pool.counts[(k, s)] == 0.0 {
                        continue;
                    }
                    let cw = w * pool.counts[(k, s)];
                    let dt = b - pool.times[s];
                    let x2 = dt * dt;
                    total += cw;
                    m[(0, 0)] += cw;
                    m[(0, 1)] += cw * x1;
                    m[(0, 2)] += cw * x2;
                    m[(1, 1)] += cw * x1 * x1;
                    m[(1, 2)] += cw * x1 * x2;
                    m[(2, 2)] += cw * x2 * x2;
                    let resp = w * pool.sums[(k, s)];
                    rhs[0] += resp;
                    rhs[1] += resp * x1;
                    rhs[2] += resp * x2;
                }
            }
            if total == 0.0 {
                return Err(Error::numerical(format!(
                    "covariance smoother has zero kernel weight at ({a}, {b}); increase the bandwidth"
                )));
            }
            m[(1, 0)] = m[(0, 1)];
            m[(2, 0)] = m[(0, 2)];
            m[(2, 1)] = m[(1, 2)];
            surface[(ia, ib)] = solve_local_quadratic(&m, &rhs, total);
        }
    }

    // The local model is asymmetric in (a, b); averaging with the transpose
    // restores the symmetry the eigenproblem requires.
    let symmetrized = (&surface + surface.transpose()) * 0.5;
    Ok(symmetrized)
}

/// Solves the 3x3 normal equations, backing off to the linear term and then
/// to the weighted mean when the design is rank deficient.
fn solve_local_quadratic(m: &Matrix3<f64>, rhs: &Vector3<f64>, total: f64) -> f64 {
    let scale = m.diagonal().amax().max(1e-300);
    if let Some(chol) = (*m + Matrix3::identity() * scale * 1e-13).cholesky() {
        let beta = chol.solve(rhs);
        if beta[0].is_finite() {
            return beta[0];
        }
    }
    let m2 = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let rhs2 = Vector2::new(rhs[0], rhs[1]);
    let det = m2.determinant();
    if det.abs() > 1e-12 * m2[(0, 0)] * m2[(1, 1)].max(1e-300) {
        let beta = m2.try_inverse().expect("det checked") * rhs2;
        if beta[0].is_finite() {
            return beta[0];
        }
    }
    rhs[0] / total
}

/// Eigenpairs of a covariance surface under trapezoid quadrature.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    /// Positive eigenvalues, descending. Eigenvalues at or below
    /// `1e-10 * lambda_max` are dropped along with their functions.
    pub eigenvalues: Vec<f64>,
    /// Rows are eigenfunctions on the grid, orthonormal under the quadrature
    /// inner product.
    pub eigenfunctions: DMatrix<f64>,
}

/// Solves the integral eigenproblem for `surface` on `grid` by discretizing
/// with trapezoid weights W and eigen-decomposing `W^(1/2) S W^(1/2)`.
pub fn eigen_decompose(surface: &DMatrix<f64>, grid: &[f64]) -> Result<EigenBasis> {
    let g = grid.len();
    if g < 2 {
        return Err(Error::invalid("grid needs at least 2 points".to_string()));
    }
    if surface.nrows() != g || surface.ncols() != g {
        return Err(Error::invalid(format!(
            "surface shape {}x{} does not match grid length {g}",
            surface.nrows(),
            surface.ncols()
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("grid must be strictly increasing".to_string()));
    }
    let scale = surface.amax().max(1.0);
    let asym = (surface - surface.transpose()).amax();
    if asym > 1e-8 * scale {
        return Err(Error::invalid(format!(
            "surface is not symmetric (max |S - S'| = {asym:.3e})"
        )));
    }

    let w = trapezoid_weights(grid);
    let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let mut b = surface.clone();
    for i in 0..g {
        for j in 0..g {
            b[(i, j)] *= sqrt_w[i] * sqrt_w[j];
        }
    }
    let b = (&b + b.transpose()) * 0.5;

    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
    });
    let lambda_max = eig.eigenvalues[order[0]];
    if !(lambda_max > 0.0) {
        return Err(Error::numerical(
            "covariance surface has no positive eigenvalue".to_string(),
        ));
    }
    let tol = 1e-10 * lambda_max;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > tol)
        .collect();

    let mut eigenvalues = Vec::with_capacity(kept.len());
    let mut eigenfunctions = DMatrix::zeros(kept.len(), g);
    for (k, &i) in kept.iter().enumerate() {
        eigenvalues.push(eig.eigenvalues[i]);
        let v = eig.eigenvectors.column(i);
        // Unit quadrature norm: phi = W^(-1/2) v with v an orthonormal
        // eigenvector of the weighted problem.
        let mut phi: Vec<f64> = (0..g).map(|j| v[j] / sqrt_w[j]).collect();
        // Deterministic sign: the largest-magnitude coordinate is positive.
        let mut arg = 0;
        for (j, p) in phi.iter().enumerate() {
            if p.abs() > phi[arg].abs() {
                arg = j;
            }
        }
        if phi[arg] < 0.0 {
            phi.iter_mut().for_each(|p| *p = -*p);
        }
        for (j, p) in phi.into_iter().enumerate() {
            eigenfunctions[(k, j)] = p;
        }
    }
    Ok(EigenBasis {
        eigenvalues,
        eigenfunctions,
    })
}

/// Linear interpolation of `(grid, values)` at `t`, clamped at the ends.
fn interp_linear(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let n = grid.len();
    if t <= grid[0] {
        return values[0];
    }
    if t >= grid[n - 1] {
        return values[n - 1];
    }
    let hi = grid.partition_point(|&x| x < t);
    let lo = hi - 1;
    let frac = (t - grid[lo]) / (grid[hi] - grid[lo]);
    values[lo] + frac * (values[hi] - values[lo])
}

/// Per-unit scores by trapezoid quadrature of residual times eigenfunction
/// over the unit's observed support. Eigenfunctions are interpolated from the
/// grid to the observed times, which is exact when the unit is observed on
/// grid points.
pub fn compute_scores(
    residuals: &[Curve],
    basis: &EigenBasis,
    grid: &[f64],
) -> Result<DMatrix<f64>> {
    let k = basis.eigenvalues.len();
    let mut scores = DMatrix::zeros(residuals.len(), k);
    for (j, curve) in residuals.iter().enumerate() {
        if curve.times.len() < 2 {
            return Err(Error::invalid(format!(
                "unit {j} has {} observed pre-period points, need at least 2 to integrate",
                curve.times.len()
            )));
        }
        let w = trapezoid_weights(&curve.times);
        for c in 0..k {
            let phi = basis.eigenfunctions.row(c);
            let phi_on_grid: Vec<f64> = phi.iter().copied().collect();
            let mut acc = 0.0;
            for ((&t, &r), &wi) in curve.times.iter().zip(&curve.values).zip(&w) {
                acc += wi * r * interp_linear(grid, &phi_on_grid, t);
            }
            scores[(j, c)] = acc;
        }
    }
    Ok(scores)
}

/// Smallest number of leading components whose cumulative explained variance
/// reaches `threshold`.
pub fn select_num_scores(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "score threshold must lie in (0, 1], got {threshold}"
        )));
    }
    if eigenvalues.is_empty() {
        return Err(Error::invalid("no eigenvalues to select from".to_string()));
    }
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("eigenvalues sum to zero".to_string()));
    }
    let mut acc = 0.0;
    for (i, &l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc / total >= threshold {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// Observed pre-period curves of every unit, in panel row order.
pub fn pre_period_curves(panel: &Panel) -> Vec<Curve> {
    (0..panel.n_units())
        .map(|i| {
            let pairs = panel.observed_series(i, 0..panel.t0());
            Curve {
                times: pairs.iter().map(|p| p.0).collect(),
                values: pairs.iter().map(|p| p.1).collect(),
            }
        })
        .collect()
}

fn resolve_grid(panel: &Panel, cfg: &SmoothingConfig) -> Result<Vec<f64>> {
    let pre = &panel.time_labels()[..panel.t0()];
    let lo = pre[0];
    let hi = pre[pre.len() - 1];
    match cfg.grid_size {
        Some(g) => {
            if g < 2 {
                return Err(Error::invalid(format!("grid size must be at least 2, got {g}")));
            }
            let step = (hi - lo) / (g - 1) as f64;
            Ok((0..g).map(|i| lo + step * i as f64).collect())
        }
        None => {
            let regular = pre.len() >= 2
                && pre.windows(2).all(|w| {
                    let mean_step = (hi - lo) / (pre.len() - 1) as f64;
                    ((w[1] - w[0]) - mean_step).abs() <= 1e-6 * mean_step.abs()
                });
            if regular {
                Ok(pre.to_vec())
            } else {
                let g = 100;
                let step = (hi - lo) / (g - 1) as f64;
                Ok((0..g).map(|i| lo + step * i as f64).collect())
            }
        }
    }
}

/// Runs the full FPCA chain on the panel's pre-intervention window.
pub fn fit(panel: &Panel, cfg: &SmoothingConfig) -> Result<FpcaResult> {
    if panel.t0() < 2 {
        return Err(Error::invalid(
            "FPCA needs at least 2 pre-intervention periods".to_string(),
        ));
    }
    let curves = pre_period_curves(panel);
    let grid = resolve_grid(panel, cfg)?;
    let span = grid[grid.len() - 1] - grid[0];
    if !(span > 0.0) {
        return Err(Error::invalid("pre-period span must be positive".to_string()));
    }

    // Distinct observed times drive the auto bandwidth and the residual
    // evaluation points.
    let mut obs_times: Vec<f64> = curves.iter().flat_map(|c| c.times.iter().copied()).collect();
    obs_times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    obs_times.dedup();
    let h_mean = match cfg.bandwidth_mean {
        Some(h) => h,
        None => auto_bandwidth(span, obs_times.len()),
    };
    let h_cov = match cfg.bandwidth_cov {
        Some(h) => h,
        None => auto_bandwidth(span, obs_times.len()),
    };

    let mean_on_grid = estimate_mean(&curves, &grid, cfg.kernel, h_mean)?;
    let mean_on_obs = estimate_mean(&curves, &obs_times, cfg.kernel, h_mean)?;

    let residuals: Vec<Curve> = curves
        .iter()
        .map(|c| Curve {
            times: c.times.clone(),
            values: c
                .times
                .iter()
                .zip(&c.values)
                .map(|(&t, &v)| v - mean_on_obs[lookup(&obs_times, t)])
                .collect(),
        })
        .collect();

    let surface = smooth_covariance(&residuals, &grid, cfg.kernel, h_cov)?;
    let basis = eigen_decompose(&surface, &grid)?;
    let scores = compute_scores(&residuals, &basis, &grid)?;

    let total: f64 = basis.eigenvalues.iter().sum();
    let mut acc = 0.0;
    let explained: Vec<f64> = basis
        .eigenvalues
        .iter()
        .map(|&l| {
            acc += l;
            acc / total
        })
        .collect();

    Ok(FpcaResult {
        grid,
        mean: mean_on_grid,
        eigenvalues: basis.eigenvalues,
        eigenfunctions: basis.eigenfunctions,
        scores,
        explained,
        bandwidth_mean: h_mean,
        bandwidth_cov: h_cov,
    })
}
