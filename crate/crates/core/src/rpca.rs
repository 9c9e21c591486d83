//! Robust PCA: decompose Y into low-rank L plus sparse S by an augmented
//! Lagrangian scheme (principal component pursuit).
//!
//! The per-iteration updates are a singular value threshold for L, an
//! elementwise soft threshold for S, and a dual ascent step; iteration stops
//! once the feasibility residual ||Y - L - S||_F drops below the tolerance.
//! Missing entries are pre-filled with zero and excluded from the residual,
//! so they behave like sparse corruptions absorbed by S.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpcaConfig {
    /// Sparsity weight in `||L||_* + lambda * ||S||_1`.
    pub lambda: f64,
    /// Augmented Lagrangian penalty; also the dual step size.
    pub mu: f64,
    /// Stopping tolerance on the feasibility residual (absolute).
    pub tol: f64,
    pub max_iter: usize,
    /// Start the dual at `Y / max(||Y||_2, ||Y||_inf / lambda)`; `false`
    /// starts at zero.
    pub scaled_dual_init: bool,
}

/// Result of [`rpca_admm`].
#[derive(Debug, Clone, PartialEq)]
pub struct RpcaResult {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub dual: DMatrix<f64>,
    pub iterations: usize,
    /// Final feasibility residual over observed entries.
    pub residual: f64,
    pub converged: bool,
}

/// Singular value report of a matrix.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    /// Singular values, descending.
    pub singular_values: Vec<f64>,
    /// Cumulative share of squared singular values.
    pub cumulative: Vec<f64>,
}

fn check_finite(y: &DMatrix<f64>, what: &str) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains non-finite values")));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::invalid(format!(
            "threshold must be non-negative, got {tau}"
        )));
    }
    Ok(())
}

/// Elementwise soft threshold `sign(x) * max(|x| - tau, 0)`: the proximal
/// operator of `tau * ||.||_1`.
pub fn soft_threshold(x: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    check_finite(x, "input")?;
    Ok(x.map(|v| v.signum() * (v.abs() - tau).max(0.0)))
}

fn svd_of(x: &DMatrix<f64>) -> Result<nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    x.clone()
        .try_svd(true, true, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::numerical("SVD did not converge".to_string()))
}

/// Soft-thresholds the singular values: the proximal operator of
/// `tau * ||.||_*` (singular value thresholding).
pub fn singular_value_threshold(x: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    check_finite(x, "input")?;
    let svd = svd_of(x)?;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let k = svd.singular_values.len();
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..k {
        let s = (svd.singular_values[i] - tau).max(0.0);
        if s > 0.0 {
            // Rank-one accumulation keeps dropped directions exactly zero.
            let ui = u.column(i);
            let vi = vt.row(i);
            for r in 0..x.nrows() {
                let f = s * ui[r];
                if f != 0.0 {
                    for c in 0..x.ncols() {
                        out[(r, c)] += f * vi[c];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Data-driven defaults: `lambda = sqrt(1 / max(rows, cols))`,
/// `tol = 1e-7 * ||Y||_F`, `mu = rows * cols / (4 * sum |y_ij|)`,
/// 1000 iterations, scaled dual start.
pub fn default_hyperparams(y: &DMatrix<f64>) -> Result<RpcaConfig> {
    check_finite(y, "input")?;
    if y.nrows() == 0 || y.ncols() == 0 {
        return Err(Error::invalid("empty matrix".to_string()));
    }
    let abs_sum: f64 = y.iter().map(|v| v.abs()).sum();
    if abs_sum == 0.0 {
        return Err(Error::invalid(
            "all-zero matrix: the default penalty is undefined".to_string(),
        ));
    }
    let (r, c) = y.shape();
    Ok(RpcaConfig {
        lambda: (1.0 / r.max(c) as f64).sqrt(),
        mu: (r * c) as f64 / (4.0 * abs_sum),
        tol: 1e-7 * y.norm(),
        max_iter: 1000,
        scaled_dual_init: true,
    })
}

fn masked_residual_norm(
    y: &DMatrix<f64>,
    l: &DMatrix<f64>,
    s: &DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
) -> f64 {
    let mut acc = 0.0;
    for r in 0..y.nrows() {
        for c in 0..y.ncols() {
            if mask.map_or(true, |m| m[(r, c)]) {
                let d = y[(r, c)] - l[(r, c)] - s[(r, c)];
                acc += d * d;
            }
        }
    }
    acc.sqrt()
}

/// Principal component pursuit by the augmented Lagrangian method.
///
/// `mask` marks observed entries; masked cells are set to zero before the
/// iteration and skipped by the stopping criterion, leaving S free to absorb
/// them. Returns an error when the iterates lose finiteness; runs to
/// `max_iter` without converging otherwise (`converged` reports which).
pub fn rpca_admm(
    y: &DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
    cfg: &RpcaConfig,
) -> Result<RpcaResult> {
    check_finite(y, "input")?;
    if let Some(m) = mask {
        if m.shape() != y.shape() {
            return Err(Error::invalid(format!(
                "mask shape {:?} does not match data shape {:?}",
                m.shape(),
                y.shape()
            )));
        }
    }
    if !(cfg.lambda > 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {}", cfg.lambda)));
    }
    if !(cfg.mu > 0.0 && cfg.mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be positive, got {}", cfg.mu)));
    }
    if !(cfg.tol >= 0.0 && cfg.tol.is_finite()) {
        return Err(Error::invalid(format!("tol must be non-negative, got {}", cfg.tol)));
    }
    if cfg.max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1".to_string()));
    }

    let mut y = y.clone();
    if let Some(m) = mask {
        for r in 0..y.nrows() {
            for c in 0..y.ncols() {
                if !m[(r, c)] {
                    y[(r, c)] = 0.0;
                }
            }
        }
    }

    let mut dual = if cfg.scaled_dual_init {
        let spectral = svd_of(&y)?
            .singular_values
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        let scale = spectral.max(y.amax() / cfg.lambda);
        if scale > 0.0 {
            &y / scale
        } else {
            DMatrix::zeros(y.nrows(), y.ncols())
        }
    } else {
        DMatrix::zeros(y.nrows(), y.ncols())
    };
    let mut sparse = DMatrix::zeros(y.nrows(), y.ncols());
    let mut low_rank;

    let mut iterations = 0;
    let mut residual;
    loop {
        iterations += 1;
        low_rank = singular_value_threshold(&(&y - &sparse - &dual / cfg.mu), 1.0 / cfg.mu)?;
        sparse = soft_threshold(&(&y - &low_rank - &dual / cfg.mu), cfg.lambda / cfg.mu)?;
        dual += (&low_rank + &sparse - &y) * cfg.mu;

        residual = masked_residual_norm(&y, &low_rank, &sparse, mask);
        if !residual.is_finite() {
            return Err(Error::numerical(format!(
                "residual became non-finite at iteration {iterations}"
            )));
        }
        if residual <= cfg.tol || iterations >= cfg.max_iter {
            break;
        }
    }

    Ok(RpcaResult {
        converged: residual <= cfg.tol,
        low_rank,
        sparse,
        dual,
        iterations,
        residual,
    })
}

/// Singular values of `y`, descending, with cumulative shares of the total
/// squared spectrum.
pub fn spectrum_report(y: &DMatrix<f64>) -> Result<SpectrumReport> {
    check_finite(y, "input")?;
    if y.nrows() == 0 || y.ncols() == 0 {
        return Err(Error::invalid("empty matrix".to_string()));
    }
    let mut sv: Vec<f64> = svd_of(y)?.singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    let cumulative = sv
        .iter()
        .map(|s| {
            acc += s * s;
            if total > 0.0 {
                acc / total
            } else {
                0.0
            }
        })
        .collect();
    Ok(SpectrumReport {
        singular_values: sv,
        cumulative,
    })
}
