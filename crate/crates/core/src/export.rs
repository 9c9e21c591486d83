//! Deterministic CSV rendering of pipeline outputs.
//!
//! Floats are written with Rust's shortest round-trip formatting and missing
//! values as empty cells, so equal results always produce byte-identical
//! files.

use crate::cluster::KTable;
use crate::eval::{EvalReport, LooReport};
use crate::fpca::FpcaResult;
use crate::panel::Panel;
use crate::rpca::SpectrumReport;
use crate::sim::StudyTable;
use crate::synth::SynthFit;

fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}

/// `time,actual,counterfactual,gap` over the full horizon.
pub fn series_csv(panel: &Panel, fit: &SynthFit) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "actual", "counterfactual", "gap"])
        .expect("in-memory write");
    let treated = panel.treated();
    for t in 0..panel.n_times() {
        let observed = panel.observed(treated, t);
        let actual = if observed {
            panel.values()[(treated, t)]
        } else {
            f64::NAN
        };
        w.write_record(&[
            cell(panel.time_labels()[t]),
            cell(actual),
            cell(fit.synthetic[t]),
            cell(fit.gap[t]),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// `component,eigenvalue,share,cumulative`, one row per retained component.
pub fn scree_csv(fpca: &FpcaResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["component", "eigenvalue", "share", "cumulative"])
        .expect("in-memory write");
    let mut prev = 0.0;
    for (i, (&ev, &cum)) in fpca.eigenvalues.iter().zip(&fpca.explained).enumerate() {
        w.write_record(&[
            format!("{}", i + 1),
            cell(ev),
            cell(cum - prev),
            cell(cum),
        ])
        .expect("in-memory write");
        prev = cum;
    }
    finish(w)
}

/// `k,wss,silhouette`, one row per candidate cluster count.
pub fn tune_csv(table: &KTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "wss", "silhouette"]).expect("in-memory write");
    for row in &table.rows {
        w.write_record(&[format!("{}", row.k), cell(row.wss), cell(row.silhouette)])
            .expect("in-memory write");
    }
    finish(w)
}

/// `unit,score_1,...,score_K` in panel row order.
pub fn scores_csv(panel: &Panel, fpca: &FpcaResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let k = fpca.scores.ncols();
    let mut header = vec!["unit".to_string()];
    header.extend((1..=k).map(|i| format!("score_{i}")));
    w.write_record(&header).expect("in-memory write");
    for (i, label) in panel.unit_labels().iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend((0..k).map(|j| cell(fpca.scores[(i, j)])));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

/// `donor,weight` for the fitted weights, in donor order.
pub fn weights_csv(fit: &SynthFit) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["donor", "weight"]).expect("in-memory write");
    for (label, &b) in fit.donor_labels.iter().zip(fit.beta.iter()) {
        w.write_record(&[label.clone(), cell(b)]).expect("in-memory write");
    }
    finish(w)
}

/// `unit,pre_rmspe,post_rmspe,ratio`, treated unit first.
pub fn ratios_csv(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["unit", "pre_rmspe", "post_rmspe", "ratio"])
        .expect("in-memory write");
    for row in &report.rows {
        w.write_record(&[
            row.unit.clone(),
            cell(row.pre_rmspe),
            cell(row.post_rmspe),
            cell(row.ratio),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// `time,<unit>,...`: every placebo run's gap series as one column.
pub fn gaps_csv(times: &[f64], report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time".to_string()];
    header.extend(report.rows.iter().map(|r| r.unit.clone()));
    w.write_record(&header).expect("in-memory write");
    for (t, &label) in times.iter().enumerate() {
        let mut row = vec![cell(label)];
        row.extend(report.gaps.iter().map(|g| cell(g[t])));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

/// `time,reference,<dropped unit>,...`: the reference synthetic series and
/// one column per leave-one-out refit.
pub fn loo_csv(times: &[f64], report: &LooReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time".to_string(), "reference".to_string()];
    header.extend(report.dropped.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (t, &label) in times.iter().enumerate() {
        let mut row = vec![cell(label), cell(report.reference.fit.synthetic[t])];
        row.extend(report.series.iter().map(|s| cell(s[t])));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

/// `sigma_sq,pre_rmspe,post_rmspe,accuracy,first_fpc_explained`.
pub fn study_csv(table: &StudyTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "sigma_sq",
        "pre_rmspe",
        "post_rmspe",
        "accuracy",
        "first_fpc_explained",
    ])
    .expect("in-memory write");
    for row in &table.rows {
        w.write_record(&[
            cell(row.sigma_sq),
            cell(row.pre_rmspe),
            cell(row.post_rmspe),
            cell(row.accuracy),
            cell(row.first_fpc_explained),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// `index,singular_value,cumulative_share`.
pub fn spectrum_csv(report: &SpectrumReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "singular_value", "cumulative_share"])
        .expect("in-memory write");
    for (i, (&s, &c)) in report
        .singular_values
        .iter()
        .zip(&report.cumulative)
        .enumerate()
    {
        w.write_record(&[format!("{}", i + 1), cell(s), cell(c)])
            .expect("in-memory write");
    }
    finish(w)
}

/// `grid,mean,phi_1,...,phi_K`: the mean function and eigenfunctions on the
/// evaluation grid.
pub fn fpca_csv(fpca: &FpcaResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let k = fpca.eigenfunctions.nrows();
    let mut header = vec!["grid".to_string(), "mean".to_string()];
    header.extend((1..=k).map(|i| format!("phi_{i}")));
    w.write_record(&header).expect("in-memory write");
    for (g, &x) in fpca.grid.iter().enumerate() {
        let mut row = vec![cell(x), cell(fpca.mean[g])];
        row.extend((0..k).map(|i| cell(fpca.eigenfunctions[(i, g)])));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}
