//! Synthetic control weights and the end-to-end pipeline.
//!
//! The pipeline runs five stages: FPCA of the pre-intervention curves,
//! K-means on the score vectors to pick a donor pool from the treated unit's
//! cluster, robust PCA of the donor matrix, non-negative least squares of the
//! treated pre-period trajectory on the denoised donors, and the weighted
//! combination of denoised donor rows as the counterfactual.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cluster::{self, donor_pool, tune_k, Clustering, KTable};
use crate::error::{Error, Result};
use crate::eval::rmspe;
use crate::fpca::{self, FpcaResult, Kernel, SmoothingConfig};
use crate::panel::Panel;
use crate::rpca::{default_hyperparams, rpca_admm, RpcaConfig, RpcaResult};

/// Optional overrides of the data-driven robust PCA defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RpcaOverrides {
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub scaled_dual_init: Option<bool>,
}

/// Pipeline configuration. Every field has a deterministic default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Keep the smallest number of components whose cumulative explained
    /// variance reaches this share.
    pub explained_threshold: f64,
    /// Candidate cluster counts, inclusive. The upper end is clamped to the
    /// number of distinct score vectors.
    pub k_range: (usize, usize),
    /// K-means restarts per candidate k.
    pub restarts: usize,
    pub seed: u64,
    pub smoothing: SmoothingConfig,
    pub rpca: RpcaOverrides,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            explained_threshold: 0.95,
            k_range: (2, 8),
            restarts: 50,
            seed: 0,
            smoothing: SmoothingConfig::default(),
            rpca: RpcaOverrides::default(),
        }
    }
}

/// The hyperparameters a pipeline run actually used after resolving every
/// default, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub kernel: Kernel,
    pub bandwidth_mean: f64,
    pub bandwidth_cov: f64,
    pub grid_size: usize,
    pub explained_threshold: f64,
    /// Number of score components kept.
    pub n_scores: usize,
    /// Candidate cluster counts after clamping.
    pub k_range: (usize, usize),
    pub chosen_k: usize,
    pub restarts: usize,
    pub seed: u64,
    pub rpca: RpcaConfig,
}

/// Weights and fitted series of a pipeline run.
#[derive(Debug, Clone)]
pub struct SynthFit {
    /// Donor row indices into the panel, in panel order.
    pub donors: Vec<usize>,
    pub donor_labels: Vec<String>,
    /// Non-negative weights, aligned with `donors`. Exact zeros off the
    /// support.
    pub beta: DVector<f64>,
    /// Weighted combination of denoised donor rows over the full horizon.
    pub synthetic: Vec<f64>,
    /// Treated minus synthetic; NaN where the treated value is missing.
    pub gap: Vec<f64>,
    /// Fit error over the observed pre-intervention periods.
    pub pre_rmspe: f64,
    pub config: ResolvedConfig,
}

/// Everything a pipeline run produces, stage by stage.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub fpca: FpcaResult,
    pub k_table: KTable,
    pub clustering: Clustering,
    pub rpca: RpcaResult,
    pub fit: SynthFit,
}

fn check_finite_matrix(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains non-finite values")));
    }
    Ok(())
}

fn ls_solve(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::numerical("SVD did not converge in least squares".to_string()))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let eps = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    svd.solve(y, eps)
        .map_err(|e| Error::numerical(format!("least squares solve failed: {e}")))
}

/// Solves `min ||A beta - y||_2` subject to `beta >= 0` by the active-set
/// method. Coordinates outside the final support are exactly zero, and the
/// optimality conditions hold to `1e-8 * ||A^T y||_inf` (see
/// [`kkt_residual`]).
pub fn fit_weights(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::invalid(format!(
            "need a non-empty design matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if y.len() != a.nrows() {
        return Err(Error::invalid(format!(
            "target length {} does not match {} design rows",
            y.len(),
            a.nrows()
        )));
    }
    check_finite_matrix(a, "design matrix")?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("target contains non-finite values".to_string()));
    }

    let n = a.ncols();
    let tol = 1e-8 * (a.transpose() * y).amax();
    let mut beta = DVector::zeros(n);
    if tol == 0.0 {
        // A^T y = 0: the zero vector already satisfies the optimality
        // conditions.
        return Ok(beta);
    }

    let mut passive = vec![false; n];
    let max_steps = 50 * n.max(10);
    let mut steps = 0;
    loop {
        let w = a.transpose() * (y - a * &beta);
        let mut entering: Option<usize> = None;
        for j in 0..n {
            if !passive[j] && w[j] > tol && entering.map_or(true, |t| w[j] > w[t]) {
                entering = Some(j);
            }
        }
        let Some(t) = entering else { break };
        passive[t] = true;

        loop {
            steps += 1;
            if steps > max_steps {
                return Err(Error::numerical(
                    "active-set iteration limit reached; the design may be degenerate"
                        .to_string(),
                ));
            }
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = a.select_columns(idx.iter());
            let z = ls_solve(&sub, y)?;
            if z.iter().all(|&v| v > 0.0) {
                beta.fill(0.0);
                for (pos, &j) in idx.iter().enumerate() {
                    beta[j] = z[pos];
                }
                break;
            }
            // Step from beta toward z until the first coordinate hits zero,
            // then retire every coordinate that reached the boundary.
            let mut alpha = f64::INFINITY;
            for (pos, &j) in idx.iter().enumerate() {
                if z[pos] <= 0.0 {
                    let denom = beta[j] - z[pos];
                    let ratio = if denom > 0.0 { beta[j] / denom } else { 0.0 };
                    alpha = alpha.min(ratio);
                }
            }
            for (pos, &j) in idx.iter().enumerate() {
                beta[j] += alpha * (z[pos] - beta[j]);
            }
            let scale = beta.amax().max(f64::MIN_POSITIVE);
            for (pos, &j) in idx.iter().enumerate() {
                if z[pos] <= 0.0 && beta[j] <= 1e-12 * scale {
                    beta[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    Ok(beta)
}

/// Largest violation of the non-negative least squares optimality conditions
/// at `beta`: the gradient of `0.5 * ||A beta - y||^2` must vanish on the
/// support and be non-negative off it.
pub fn kkt_residual(a: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let g = a.transpose() * (a * beta - y);
    let mut worst = 0.0f64;
    for j in 0..beta.len() {
        let v = if beta[j] > 0.0 {
            g[j].abs()
        } else {
            (-g[j]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Weighted combination of the rows of `low_rank`, one value per column.
pub fn predict_counterfactual(low_rank: &DMatrix<f64>, beta: &DVector<f64>) -> Result<Vec<f64>> {
    if beta.len() != low_rank.nrows() {
        return Err(Error::invalid(format!(
            "{} weights do not match {} donor rows",
            beta.len(),
            low_rank.nrows()
        )));
    }
    let combo = low_rank.transpose() * beta;
    Ok(combo.iter().copied().collect())
}

/// Donor rows over the full horizon, with missing cells zero-filled and a
/// mask marking the observed ones.
fn donor_matrix(panel: &Panel, donors: &[usize]) -> (DMatrix<f64>, DMatrix<bool>) {
    let values = DMatrix::from_fn(donors.len(), panel.n_times(), |r, c| {
        if panel.observed(donors[r], c) {
            panel.values()[(donors[r], c)]
        } else {
            0.0
        }
    });
    let mask = DMatrix::from_fn(donors.len(), panel.n_times(), |r, c| {
        panel.observed(donors[r], c)
    });
    (values, mask)
}

fn resolve_rpca(y: &DMatrix<f64>, o: &RpcaOverrides) -> Result<RpcaConfig> {
    let mut cfg = if o.lambda.is_none() || o.mu.is_none() || o.tol.is_none() {
        default_hyperparams(y)?
    } else {
        RpcaConfig {
            lambda: 0.0,
            mu: 0.0,
            tol: 0.0,
            max_iter: 1000,
            scaled_dual_init: true,
        }
    };
    if let Some(v) = o.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = o.mu {
        cfg.mu = v;
    }
    if let Some(v) = o.tol {
        cfg.tol = v;
    }
    if let Some(v) = o.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = o.scaled_dual_init {
        cfg.scaled_dual_init = v;
    }
    Ok(cfg)
}

/// Runs the whole pipeline on a panel.
pub fn run_pipeline(panel: &Panel, cfg: &SynthConfig) -> Result<PipelineResult> {
    let fpca = fpca::fit(panel, &cfg.smoothing).map_err(|e| e.in_stage("fpca"))?;
    let n_scores = fpca::select_num_scores(&fpca.eigenvalues, cfg.explained_threshold)
        .map_err(|e| e.in_stage("fpca"))?;
    let scores = fpca.scores.columns(0, n_scores).into_owned();

    let distinct = cluster::count_distinct(&scores);
    let (lo, hi) = cfg.k_range;
    let hi_eff = hi.min(distinct);
    if hi_eff < lo {
        return Err(Error::invalid(format!(
            "k range {lo}..={hi} needs at least {lo} distinct score vectors, \
             but the panel has {distinct}"
        ))
        .in_stage("cluster"));
    }
    let (k_table, clustering) =
        tune_k(&scores, (lo, hi_eff), cfg.restarts, cfg.seed).map_err(|e| e.in_stage("cluster"))?;
    let donors = donor_pool(&clustering, panel.treated()).map_err(|e| e.in_stage("cluster"))?;

    let (donor_values, donor_mask) = donor_matrix(panel, &donors);
    let rpca_cfg = resolve_rpca(&donor_values, &cfg.rpca).map_err(|e| e.in_stage("rpca"))?;
    let rpca = rpca_admm(&donor_values, Some(&donor_mask), &rpca_cfg)
        .map_err(|e| e.in_stage("rpca"))?;

    let treated = panel.treated();
    let obs_pre: Vec<usize> = (0..panel.t0())
        .filter(|&t| panel.observed(treated, t))
        .collect();
    let design = DMatrix::from_fn(obs_pre.len(), donors.len(), |r, c| {
        rpca.low_rank[(c, obs_pre[r])]
    });
    let target = DVector::from_fn(obs_pre.len(), |r, _| panel.values()[(treated, obs_pre[r])]);
    let beta = fit_weights(&design, &target).map_err(|e| e.in_stage("weights"))?;

    let synthetic = predict_counterfactual(&rpca.low_rank, &beta)?;
    let gap: Vec<f64> = (0..panel.n_times())
        .map(|t| {
            if panel.observed(treated, t) {
                panel.values()[(treated, t)] - synthetic[t]
            } else {
                f64::NAN
            }
        })
        .collect();
    let treated_series: Vec<f64> = (0..panel.n_times())
        .map(|t| {
            if panel.observed(treated, t) {
                panel.values()[(treated, t)]
            } else {
                f64::NAN
            }
        })
        .collect();
    let pre_rmspe = rmspe(&treated_series, &synthetic, 0..panel.t0())?;

    let config = ResolvedConfig {
        kernel: cfg.smoothing.kernel,
        bandwidth_mean: fpca.bandwidth_mean,
        bandwidth_cov: fpca.bandwidth_cov,
        grid_size: fpca.grid.len(),
        explained_threshold: cfg.explained_threshold,
        n_scores,
        k_range: (lo, hi_eff),
        chosen_k: clustering.k,
        restarts: cfg.restarts,
        seed: cfg.seed,
        rpca: rpca_cfg,
    };
    let donor_labels = donors
        .iter()
        .map(|&i| panel.unit_labels()[i].clone())
        .collect();

    Ok(PipelineResult {
        fpca,
        k_table,
        clustering,
        rpca,
        fit: SynthFit {
            donors,
            donor_labels,
            beta,
            synthetic,
            gap,
            pre_rmspe,
            config,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_on_identity_design_clip_negatives() {
        let a = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let beta = fit_weights(&a, &y).unwrap();
        assert!((beta[0] - 1.0).abs() < 1e-12);
        assert_eq!(beta[1], 0.0, "negative target clips to an exact zero");
        assert!((beta[2] - 3.0).abs() < 1e-12);
        assert!(kkt_residual(&a, &y, &beta) <= 1e-8);
    }

    #[test]
    fn weights_recover_a_feasible_solution() {
        let a = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.5, 0.2, 0.3, 1.0, 0.1, 0.2, 0.4, 1.0, 0.7, 0.3, 0.5],
        );
        let truth = DVector::from_vec(vec![0.8, 0.0, 1.3]);
        let y = &a * &truth;
        let beta = fit_weights(&a, &y).unwrap();
        assert!((&beta - &truth).amax() < 1e-10, "beta = {beta:?}");
        assert_eq!(beta[1], 0.0);
    }

    #[test]
    fn weights_are_zero_when_no_column_helps() {
        let a = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![-1.0, -2.0, -0.5]);
        let beta = fit_weights(&a, &y).unwrap();
        assert!(beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn weights_validate_shapes() {
        let a = DMatrix::identity(3, 3);
        assert!(fit_weights(&a, &DVector::from_vec(vec![1.0, 2.0])).is_err());
        assert!(fit_weights(&DMatrix::<f64>::zeros(0, 2), &DVector::zeros(0)).is_err());
        let bad = DMatrix::from_element(2, 2, f64::NAN);
        assert!(fit_weights(&bad, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn kkt_residual_flags_suboptimal_points() {
        let a = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let optimal = DVector::from_vec(vec![1.0, 1.0]);
        let off = DVector::from_vec(vec![0.0, 0.0]);
        assert!(kkt_residual(&a, &y, &optimal) < 1e-12);
        assert!(kkt_residual(&a, &y, &off) > 0.9);
    }

    #[test]
    fn counterfactual_is_row_combination() {
        let l = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 10.0, 20.0, 30.0]);
        let beta = DVector::from_vec(vec![0.5, 0.25]);
        let out = predict_counterfactual(&l, &beta).unwrap();
        assert_eq!(out, vec![3.0, 6.0, 9.0]);
        assert!(predict_counterfactual(&l, &DVector::zeros(3)).is_err());
    }

    fn two_group_panel() -> Panel {
        // Units 0..=4 live near level 1 with phase-shifted wiggles, units
        // 5..=8 near level 10. Unit 0 is treated.
        let n_times = 14;
        let t0 = 10;
        let values = DMatrix::from_fn(9, n_times, |u, t| {
            let t = t as f64;
            if u < 5 {
                1.0 + 0.1 * (0.7 * t + u as f64).sin()
            } else {
                10.0 + 0.1 * (0.7 * t + u as f64).cos()
            }
        });
        let mask = DMatrix::from_element(9, n_times, true);
        let labels = (0..9).map(|u| format!("u{u}")).collect();
        let times = (0..n_times).map(|t| t as f64).collect();
        Panel::new(values, mask, labels, times, 0, t0).unwrap()
    }

    #[test]
    fn pipeline_selects_donors_from_treated_cluster() {
        let panel = two_group_panel();
        let cfg = SynthConfig {
            restarts: 10,
            ..SynthConfig::default()
        };
        let out = run_pipeline(&panel, &cfg).unwrap();
        assert_eq!(out.fit.config.chosen_k, 2, "two clear level groups");
        assert_eq!(out.fit.donors, vec![1, 2, 3, 4]);
        assert!(out.fit.beta.iter().all(|&b| b >= 0.0));
        assert_eq!(out.fit.synthetic.len(), panel.n_times());
        assert!(out.fit.pre_rmspe.is_finite());
        assert!(out.fit.pre_rmspe < 0.2, "pre fit should track level 1");
        assert!(out.fit.config.n_scores >= 1);
        assert!(out.fit.config.n_scores <= out.fpca.n_components());
        assert_eq!(out.fit.donor_labels, vec!["u1", "u2", "u3", "u4"]);
    }

    #[test]
    fn pipeline_is_deterministic() {
        let panel = two_group_panel();
        let cfg = SynthConfig {
            restarts: 5,
            ..SynthConfig::default()
        };
        let a = run_pipeline(&panel, &cfg).unwrap();
        let b = run_pipeline(&panel, &cfg).unwrap();
        assert_eq!(a.fit.beta, b.fit.beta);
        assert_eq!(a.fit.synthetic, b.fit.synthetic);
        assert_eq!(a.clustering.assignment, b.clustering.assignment);
    }

    #[test]
    fn pipeline_rejects_unreachable_k_range() {
        let panel = two_group_panel();
        let cfg = SynthConfig {
            k_range: (100, 200),
            restarts: 3,
            ..SynthConfig::default()
        };
        let err = run_pipeline(&panel, &cfg).unwrap_err();
        assert!(err.is_validation(), "unexpected error: {err}");
    }
}
