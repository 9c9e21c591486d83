//! Evaluation protocols: fit error, placebo checks, and leave-one-out
//! robustness of the donor weights.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::synth::{run_pipeline, PipelineResult, SynthConfig};

/// Root mean squared error between two aligned series over an index range.
/// Pairs with a NaN on either side are treated as missing and skipped.
pub fn rmspe(actual: &[f64], predicted: &[f64], range: Range<usize>) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "series lengths differ: {} vs {}",
            actual.len(),
            predicted.len()
        )));
    }
    if range.start >= range.end || range.end > actual.len() {
        return Err(Error::invalid(format!(
            "index range {}..{} is empty or out of bounds for length {}",
            range.start,
            range.end,
            actual.len()
        )));
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in range {
        let (a, p) = (actual[i], predicted[i]);
        if a.is_nan() || p.is_nan() {
            continue;
        }
        acc += (a - p) * (a - p);
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid(
            "no observed pairs in the requested range".to_string(),
        ));
    }
    Ok((acc / n as f64).sqrt())
}

fn gap_rmspe(gap: &[f64], range: Range<usize>) -> Result<f64> {
    let zeros = vec![0.0; gap.len()];
    rmspe(gap, &zeros, range)
}

/// Pre/post fit errors of one unit's pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct UnitEval {
    pub unit: String,
    pub pre_rmspe: f64,
    pub post_rmspe: f64,
    /// post / pre; large values flag a unit whose trajectory broke away
    /// after the intervention.
    pub ratio: f64,
}

/// In-space placebo study: the pipeline rerun with each unit cast as the
/// treated one.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Treated unit first, then the remaining units in panel order. Units
    /// whose run failed are listed in `errors` instead.
    pub rows: Vec<UnitEval>,
    /// Gap series aligned with `rows`, full horizon, NaN where the unit is
    /// unobserved.
    pub gaps: Vec<Vec<f64>>,
    pub errors: Vec<(String, String)>,
}

/// Reruns the pipeline with the intervention backdated to `fake_t0`
/// (an index into the time axis), using only truly pre-intervention data.
/// A flat gap after `fake_t0` supports the design.
pub fn placebo_in_time(panel: &Panel, fake_t0: usize, cfg: &SynthConfig) -> Result<PipelineResult> {
    if fake_t0 >= panel.t0() {
        return Err(Error::invalid(format!(
            "backdated intervention at index {fake_t0} must precede the real one at {}",
            panel.t0()
        )));
    }
    let pseudo = panel.truncated(panel.t0(), fake_t0)?;
    run_pipeline(&pseudo, cfg)
}

/// Runs an in-space placebo study: each control unit is cast as treated on a
/// panel with the real treated unit removed, while the real treated unit gets
/// its reference run. Per-unit failures are recorded, not fatal.
///
/// Each unit's run is seeded by the base seed plus the unit's original row
/// index, so a unit's result does not depend on which other units ran.
pub fn placebo_in_space(panel: &Panel, cfg: &SynthConfig) -> Result<EvalReport> {
    let treated = panel.treated();
    let t0 = panel.t0();
    let units: Vec<usize> = (0..panel.n_units()).collect();
    let mut outcomes: Vec<(usize, Result<PipelineResult>)> = units
        .par_iter()
        .map(|&u| {
            let cfg_u = SynthConfig {
                seed: cfg.seed.wrapping_add(u as u64),
                ..cfg.clone()
            };
            let run = if u == treated {
                run_pipeline(panel, &cfg_u)
            } else {
                panel
                    .without_unit(treated, u)
                    .and_then(|p| run_pipeline(&p, &cfg_u))
            };
            (u, run)
        })
        .collect();
    outcomes.sort_by_key(|&(u, _)| (u != treated, u));

    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    let mut errors = Vec::new();
    for (u, run) in outcomes {
        let label = panel.unit_labels()[u].clone();
        let evaluated = run.and_then(|r| {
            let post_rmspe = gap_rmspe(&r.fit.gap, t0..r.fit.gap.len())?;
            Ok((r, post_rmspe))
        });
        match evaluated {
            Ok((r, post_rmspe)) => {
                rows.push(UnitEval {
                    unit: label,
                    pre_rmspe: r.fit.pre_rmspe,
                    post_rmspe,
                    ratio: post_rmspe / r.fit.pre_rmspe,
                });
                gaps.push(r.fit.gap);
            }
            Err(e) => errors.push((label, e.to_string())),
        }
    }
    Ok(EvalReport { rows, gaps, errors })
}

/// Leave-one-out robustness check of a fit.
#[derive(Debug, Clone)]
pub struct LooReport {
    pub reference: PipelineResult,
    /// Labels of the positive-weight donors dropped one at a time, in panel
    /// order.
    pub dropped: Vec<String>,
    /// Synthetic series of each refit, aligned with `dropped`.
    pub series: Vec<Vec<f64>>,
    pub errors: Vec<(String, String)>,
}

/// Refits the pipeline once per positive-weight donor with that donor
/// removed. A counterfactual that barely moves under every drop is robust to
/// any single donor. Needs at least two positive weights; each refit is
/// seeded by the base seed plus the dropped unit's row index.
pub fn leave_one_out(panel: &Panel, cfg: &SynthConfig) -> Result<LooReport> {
    let reference = run_pipeline(panel, cfg)?;
    let support: Vec<usize> = reference
        .fit
        .donors
        .iter()
        .enumerate()
        .filter(|&(pos, _)| reference.fit.beta[pos] > 0.0)
        .map(|(_, &d)| d)
        .collect();
    if support.len() < 2 {
        return Err(Error::invalid(format!(
            "leave-one-out needs at least 2 positive-weight donors, found {}",
            support.len()
        )));
    }

    let runs: Vec<(usize, Result<PipelineResult>)> = support
        .par_iter()
        .map(|&d| {
            let cfg_d = SynthConfig {
                seed: cfg.seed.wrapping_add(d as u64),
                ..cfg.clone()
            };
            let run = panel
                .without_unit(d, panel.treated())
                .and_then(|p| run_pipeline(&p, &cfg_d));
            (d, run)
        })
        .collect();

    let mut dropped = Vec::new();
    let mut series = Vec::new();
    let mut errors = Vec::new();
    for (d, run) in runs {
        let label = panel.unit_labels()[d].clone();
        match run {
            Ok(r) => {
                dropped.push(label);
                series.push(r.fit.synthetic);
            }
            Err(e) => errors.push((label, e.to_string())),
        }
    }
    Ok(LooReport {
        reference,
        dropped,
        series,
        errors,
    })
}
