//! Subcommand implementations: merge flags with the configuration file, load
//! data, run the library, write CSV and JSON outputs.
//!
//! Every output CSV is deterministic for a fixed input and seed; the only
//! run-dependent value is the timestamp in summary.json.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rpca_synth::export;
use rpca_synth::{
    leave_one_out, load_panel, placebo_in_space, placebo_in_time, run_pipeline,
    run_simulation_study, rmspe, spectrum_report, validate, Error, Kernel, Layout, Panel,
    PipelineResult, RpcaOverrides, SimConfig, SmoothingConfig, SynthConfig, SynthFit,
};
use serde_json::json;

use crate::config::ConfigFile;
use crate::{
    Command, FitArgs, FpcaReportArgs, InputArgs, PipelineArgs, SimulateArgs, SmoothArgs,
    SpectrumArgs, TreatArgs,
};

pub enum CliError {
    /// Missing required argument; maps to exit code 64.
    Usage(String),
    /// Library error; maps to exit code 1 (validation) or 2 (numerical).
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        CliError::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Fit(args) => fit(args),
        Command::PlaceboTime(args) => placebo_time(args),
        Command::PlaceboSpace(args) => placebo_space(args),
        Command::Loo(args) => loo(args),
        Command::Simulate(args) => simulate(args),
        Command::FpcaReport(args) => fpca_report(args),
        Command::Spectrum(args) => spectrum(args),
    }
}

// --- configuration resolution -------------------------------------------

fn load_config(path: &Option<String>) -> CliResult<ConfigFile> {
    match path {
        Some(p) => Ok(ConfigFile::load(Path::new(p))?),
        None => Ok(ConfigFile::empty()),
    }
}

struct Io {
    input: String,
    layout: Layout,
    out: PathBuf,
}

/// Resolves the shared input/output arguments and applies `--jobs`.
fn resolve_io(io: &InputArgs, file: &ConfigFile) -> CliResult<Io> {
    let input = file
        .merge(io.input.clone(), "input")?
        .ok_or_else(|| CliError::Usage("missing required --input".to_string()))?;
    let layout_flag = io.layout.as_deref().map(str::parse::<Layout>).transpose()?;
    let layout = file.merge(layout_flag, "layout")?.unwrap_or(Layout::Wide);
    let out = file
        .merge(io.out.clone(), "out")?
        .unwrap_or_else(|| "out".to_string());
    if let Some(n) = file.merge(io.jobs, "jobs")? {
        configure_jobs(n);
    }
    Ok(Io {
        input,
        layout,
        out: PathBuf::from(out),
    })
}

fn configure_jobs(n: usize) {
    // A second build_global in one process fails; the pool is then already
    // sized, which is fine for a single CLI invocation.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

fn resolve_treat(t: &TreatArgs, file: &ConfigFile) -> CliResult<(String, f64)> {
    let treated = file
        .merge(t.treated.clone(), "treated")?
        .ok_or_else(|| CliError::Usage("missing required --treated".to_string()))?;
    let t0 = file
        .merge(t.t0, "t0")?
        .ok_or_else(|| CliError::Usage("missing required --t0".to_string()))?;
    Ok((treated, t0))
}

fn resolve_smoothing(s: &SmoothArgs, file: &ConfigFile) -> CliResult<SmoothingConfig> {
    let mut cfg = SmoothingConfig::default();
    let kernel_flag = s.kernel.as_deref().map(str::parse::<Kernel>).transpose()?;
    if let Some(k) = file.merge(kernel_flag, "kernel")? {
        cfg.kernel = k;
    }
    cfg.bandwidth_mean = file.merge(s.bandwidth_mean, "bandwidth-mean")?;
    cfg.bandwidth_cov = file.merge(s.bandwidth_cov, "bandwidth-cov")?;
    cfg.grid_size = file.merge(s.grid_size, "grid-size")?;
    Ok(cfg)
}

fn resolve_pipeline(p: &PipelineArgs, file: &ConfigFile) -> CliResult<SynthConfig> {
    let mut cfg = SynthConfig::default();
    cfg.smoothing = resolve_smoothing(&p.smooth, file)?;
    if let Some(v) = file.merge(p.explained, "explained")? {
        cfg.explained_threshold = v;
    }
    if let Some(v) = file.merge(p.k_min, "k-min")? {
        cfg.k_range.0 = v;
    }
    if let Some(v) = file.merge(p.k_max, "k-max")? {
        cfg.k_range.1 = v;
    }
    if let Some(v) = file.merge(p.restarts, "restarts")? {
        cfg.restarts = v;
    }
    if let Some(v) = file.merge(p.seed, "seed")? {
        cfg.seed = v;
    }
    let dual: Option<String> = file.merge(p.dual_init.clone(), "dual-init")?;
    let scaled_dual_init = match dual.as_deref() {
        None => None,
        Some("scaled") => Some(true),
        Some("zero") => Some(false),
        Some(other) => {
            return Err(Error::invalid(format!(
                "dual-init must be \"scaled\" or \"zero\", got {other:?}"
            ))
            .into())
        }
    };
    cfg.rpca = RpcaOverrides {
        lambda: file.merge(p.lambda, "lambda")?,
        mu: file.merge(p.mu, "mu")?,
        tol: file.merge(p.tol, "tol")?,
        max_iter: file.merge(p.max_iter, "max-iter")?,
        scaled_dual_init,
    };
    Ok(cfg)
}

/// Loads and validates a panel, printing diagnostics that do not block the
/// run as warnings.
fn load_checked(io: &Io, treated: &str, t0: f64) -> CliResult<Panel> {
    let table = load_panel(&io.input, io.layout)?;
    let panel = table.into_panel(treated, t0)?;
    let report = validate(&panel);
    for v in &report.violations {
        eprintln!("warning: {v}");
    }
    if report.irregular_spacing {
        eprintln!("warning: irregular time spacing, smoothing uses an equispaced grid");
    }
    Ok(panel)
}

// --- output helpers ------------------------------------------------------

fn write_file(dir: &Path, name: &str, content: &str) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_summary(dir: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    write_file(dir, "summary.json", &text)
}

fn wrote_line(dir: &Path, names: &[&str]) -> String {
    let paths: Vec<String> = names
        .iter()
        .map(|n| dir.join(n).display().to_string())
        .collect();
    format!("wrote {}", paths.join(" "))
}

/// Compact human formatting: plain decimals in a middle range, scientific
/// notation outside it. Display only; CSV files keep full precision.
fn sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let a = x.abs();
    if (0.001..10000.0).contains(&a) {
        format!("{x:.4}")
    } else {
        format!("{x:.3e}")
    }
}

fn weight_line(fit: &SynthFit) -> String {
    let parts: Vec<String> = fit
        .donor_labels
        .iter()
        .zip(fit.beta.iter())
        .filter(|(_, &b)| b > 0.0)
        .map(|(label, &b)| format!("{label} {}", sig(b)))
        .collect();
    if parts.is_empty() {
        "(none positive)".to_string()
    } else {
        parts.join(", ")
    }
}

fn weights_json(fit: &SynthFit) -> serde_json::Value {
    let entries: Vec<serde_json::Value> = fit
        .donor_labels
        .iter()
        .zip(fit.beta.iter())
        .filter(|(_, &b)| b > 0.0)
        .map(|(label, &b)| json!({ "donor": label, "weight": b }))
        .collect();
    serde_json::Value::Array(entries)
}

/// Gap magnitude after the intervention; NaN when nothing is observed there.
fn post_rmspe(panel: &Panel, fit: &SynthFit) -> f64 {
    let zeros = vec![0.0; fit.gap.len()];
    rmspe(&fit.gap, &zeros, panel.t0()..fit.gap.len()).unwrap_or(f64::NAN)
}

fn pipeline_json(panel: &Panel, result: &PipelineResult) -> serde_json::Value {
    json!({
        "config": serde_json::to_value(&result.fit.config).expect("config serializes"),
        "fpca": {
            "n_components": result.fpca.n_components(),
            "eigenvalues": result.fpca.eigenvalues,
            "explained": result.fpca.explained,
            "bandwidth_mean": result.fpca.bandwidth_mean,
            "bandwidth_cov": result.fpca.bandwidth_cov,
        },
        "clusters": {
            "k": result.clustering.k,
            "silhouette": result.clustering.silhouette,
            "candidates": serde_json::to_value(&result.k_table).expect("table serializes"),
            "donor_pool": result.fit.donor_labels,
        },
        "rpca": {
            "iterations": result.rpca.iterations,
            "converged": result.rpca.converged,
            "residual": result.rpca.residual,
        },
        "weights": weights_json(&result.fit),
        "pre_rmspe": result.fit.pre_rmspe,
        "post_rmspe": post_rmspe(panel, &result.fit),
    })
}

fn warn_rpca(result: &PipelineResult) {
    if !result.rpca.converged {
        eprintln!(
            "warning: robust decomposition hit the iteration cap, residual {}",
            sig(result.rpca.residual)
        );
    }
}

fn print_pipeline(panel: &Panel, result: &PipelineResult) {
    let pre = panel.t0();
    let post = panel.n_times() - pre;
    println!(
        "panel    {} units x {} periods, treated {:?} ({pre} pre, {post} post)",
        panel.n_units(),
        panel.n_times(),
        panel.treated_label(),
    );
    let k = result.fit.config.n_scores;
    println!(
        "fpca     {} component{} keep{} {} of variance (threshold {})",
        k,
        if k == 1 { "" } else { "s" },
        if k == 1 { "s" } else { "" },
        sig(result.fpca.explained[k - 1]),
        sig(result.fit.config.explained_threshold),
    );
    println!(
        "cluster  k = {} from {}..{}, silhouette {}, donor pool {} of {} controls",
        result.clustering.k,
        result.fit.config.k_range.0,
        result.fit.config.k_range.1,
        sig(result.clustering.silhouette),
        result.fit.donors.len(),
        panel.n_units() - 1,
    );
    println!(
        "rpca     {} after {} iterations, residual {}",
        if result.rpca.converged {
            "converged"
        } else {
            "stopped"
        },
        result.rpca.iterations,
        sig(result.rpca.residual),
    );
    println!("weights  {}", weight_line(&result.fit));
    println!(
        "fit      pre rmspe {}, post rmspe {}",
        sig(result.fit.pre_rmspe),
        sig(post_rmspe(panel, &result.fit)),
    );
}

// --- subcommands ---------------------------------------------------------

fn fit(args: FitArgs) -> CliResult<()> {
    let file = load_config(&args.io.config)?;
    let io = resolve_io(&args.io, &file)?;
    let (treated, t0) = resolve_treat(&args.treat, &file)?;
    let cfg = resolve_pipeline(&args.pipeline, &file)?;
    file.reject_unknown()?;

    let panel = load_checked(&io, &treated, t0)?;
    let result = run_pipeline(&panel, &cfg)?;
    warn_rpca(&result);

    write_file(&io.out, "series.csv", &export::series_csv(&panel, &result.fit))?;
    write_file(&io.out, "scree.csv", &export::scree_csv(&result.fpca))?;
    write_file(&io.out, "tune.csv", &export::tune_csv(&result.k_table))?;
    write_file(&io.out, "scores.csv", &export::scores_csv(&panel, &result.fpca))?;
    write_file(&io.out, "weights.csv", &export::weights_csv(&result.fit))?;
    let summary = json!({
        "command": "fit",
        "created_unix": timestamp(),
        "input": io.input,
        "treated": panel.treated_label(),
        "t0": t0,
        "panel": panel_json(&panel),
        "pipeline": pipeline_json(&panel, &result),
        "outputs": ["scores.csv", "scree.csv", "series.csv", "summary.json",
                    "tune.csv", "weights.csv"],
    });
    write_summary(&io.out, &summary)?;

    print_pipeline(&panel, &result);
    println!(
        "{}",
        wrote_line(
            &io.out,
            &["series.csv", "scree.csv", "tune.csv", "scores.csv", "weights.csv", "summary.json"],
        )
    );
    Ok(())
}

fn panel_json(panel: &Panel) -> serde_json::Value {
    let report = validate(panel);
    json!({
        "n_units": report.n_units,
        "n_times": report.n_times,
        "pre_periods": panel.t0(),
        "post_periods": panel.n_times() - panel.t0(),
        "missing_total": report.missing_total,
        "irregular_spacing": report.irregular_spacing,
    })
}

fn placebo_time(args: crate::PlaceboTimeArgs) -> CliResult<()> {
    let file = load_config(&args.fit.io.config)?;
    let io = resolve_io(&args.fit.io, &file)?;
    let (treated, t0) = resolve_treat(&args.fit.treat, &file)?;
    let cfg = resolve_pipeline(&args.fit.pipeline, &file)?;
    let fake_label = file
        .merge(args.fake_t0, "fake-t0")?
        .ok_or_else(|| CliError::Usage("missing required --fake-t0".to_string()))?;
    file.reject_unknown()?;

    let panel = load_checked(&io, &treated, t0)?;
    // Same convention as --t0: the label names the last period treated as
    // pre-intervention.
    let fake_idx = panel.table().resolve_time(fake_label)? + 1;
    let result = placebo_in_time(&panel, fake_idx, &cfg)?;
    warn_rpca(&result);
    let pseudo = panel.truncated(panel.t0(), fake_idx)?;

    write_file(&io.out, "series.csv", &export::series_csv(&pseudo, &result.fit))?;
    let summary = json!({
        "command": "placebo-time",
        "created_unix": timestamp(),
        "input": io.input,
        "treated": panel.treated_label(),
        "t0": t0,
        "fake_t0": fake_label,
        "panel": panel_json(&pseudo),
        "pipeline": pipeline_json(&pseudo, &result),
        "outputs": ["series.csv", "summary.json"],
    });
    write_summary(&io.out, &summary)?;

    println!(
        "backdated intervention to {fake_label} ({} of {} true pre periods kept as post)",
        panel.t0() - fake_idx,
        panel.t0(),
    );
    print_pipeline(&pseudo, &result);
    println!("{}", wrote_line(&io.out, &["series.csv", "summary.json"]));
    Ok(())
}

fn placebo_space(args: FitArgs) -> CliResult<()> {
    let file = load_config(&args.io.config)?;
    let io = resolve_io(&args.io, &file)?;
    let (treated, t0) = resolve_treat(&args.treat, &file)?;
    let cfg = resolve_pipeline(&args.pipeline, &file)?;
    file.reject_unknown()?;

    let panel = load_checked(&io, &treated, t0)?;
    let report = placebo_in_space(&panel, &cfg)?;
    for (unit, msg) in &report.errors {
        eprintln!("warning: placebo run for {unit:?} failed: {msg}");
    }

    write_file(&io.out, "ratios.csv", &export::ratios_csv(&report))?;
    write_file(
        &io.out,
        "gaps.csv",
        &export::gaps_csv(panel.time_labels(), &report),
    )?;

    let treated_row = &report.rows[0];
    let rank = 1 + report
        .rows
        .iter()
        .skip(1)
        .filter(|r| r.ratio > treated_row.ratio)
        .count();
    let rows_json: Vec<serde_json::Value> = report
        .rows
        .iter()
        .map(|r| serde_json::to_value(r).expect("row serializes"))
        .collect();
    let summary = json!({
        "command": "placebo-space",
        "created_unix": timestamp(),
        "input": io.input,
        "treated": panel.treated_label(),
        "t0": t0,
        "panel": panel_json(&panel),
        "rows": rows_json,
        "failed": report.errors.iter().map(|(u, m)| json!({"unit": u, "error": m})).collect::<Vec<_>>(),
        "treated_ratio_rank": rank,
        "n_ratios": report.rows.len(),
        "outputs": ["gaps.csv", "ratios.csv", "summary.json"],
    });
    write_summary(&io.out, &summary)?;

    println!(
        "placebo runs: {} ok, {} failed",
        report.rows.len(),
        report.errors.len(),
    );
    println!(
        "treated {:?}: pre rmspe {}, post rmspe {}, ratio {} (rank {rank} of {})",
        panel.treated_label(),
        sig(treated_row.pre_rmspe),
        sig(treated_row.post_rmspe),
        sig(treated_row.ratio),
        report.rows.len(),
    );
    println!("{}", wrote_line(&io.out, &["ratios.csv", "gaps.csv", "summary.json"]));
    Ok(())
}

fn loo(args: FitArgs) -> CliResult<()> {
    let file = load_config(&args.io.config)?;
    let io = resolve_io(&args.io, &file)?;
    let (treated, t0) = resolve_treat(&args.treat, &file)?;
    let cfg = resolve_pipeline(&args.pipeline, &file)?;
    file.reject_unknown()?;

    let panel = load_checked(&io, &treated, t0)?;
    let report = leave_one_out(&panel, &cfg)?;
    for (unit, msg) in &report.errors {
        eprintln!("warning: refit without {unit:?} failed: {msg}");
    }

    write_file(
        &io.out,
        "loo.csv",
        &export::loo_csv(panel.time_labels(), &report),
    )?;
    write_file(
        &io.out,
        "series.csv",
        &export::series_csv(&panel, &report.reference.fit),
    )?;

    // Largest pointwise departure of any refit from the reference series.
    let reference = &report.reference.fit.synthetic;
    let mut max_shift = 0.0_f64;
    let mut max_donor = String::new();
    for (donor, series) in report.dropped.iter().zip(&report.series) {
        let shift = series
            .iter()
            .zip(reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        if shift > max_shift {
            max_shift = shift;
            max_donor = donor.clone();
        }
    }

    let summary = json!({
        "command": "loo",
        "created_unix": timestamp(),
        "input": io.input,
        "treated": panel.treated_label(),
        "t0": t0,
        "panel": panel_json(&panel),
        "pipeline": pipeline_json(&panel, &report.reference),
        "dropped": report.dropped,
        "failed": report.errors.iter().map(|(u, m)| json!({"unit": u, "error": m})).collect::<Vec<_>>(),
        "max_shift": max_shift,
        "max_shift_donor": max_donor,
        "outputs": ["loo.csv", "series.csv", "summary.json"],
    });
    write_summary(&io.out, &summary)?;

    println!(
        "reference weights: {}",
        weight_line(&report.reference.fit)
    );
    println!(
        "dropped {} donors, max counterfactual shift {}{}",
        report.dropped.len(),
        sig(max_shift),
        if max_donor.is_empty() {
            String::new()
        } else {
            format!(" (without {max_donor:?})")
        },
    );
    println!("{}", wrote_line(&io.out, &["loo.csv", "series.csv", "summary.json"]));
    Ok(())
}

fn simulate(args: SimulateArgs) -> CliResult<()> {
    let file = load_config(&args.config)?;
    let mut cfg = SimConfig::default();
    if let Some(v) = file.merge(args.n1, "n1")? {
        cfg.n1 = v;
    }
    if let Some(v) = file.merge(args.n2, "n2")? {
        cfg.n2 = v;
    }
    if let Some(v) = file.merge(args.t_max, "t-max")? {
        cfg.t_max = v;
    }
    if let Some(v) = file.merge(args.t0, "t0")? {
        cfg.t0 = v;
    }
    let sigma = file.merge_list(args.sigma2.clone(), "sigma2")?;
    if !sigma.is_empty() {
        cfg.sigma_sq = sigma;
    }
    if let Some(v) = file.merge(args.missing, "missing")? {
        cfg.missing = v;
    }
    if let Some(v) = file.merge(args.seed, "seed")? {
        cfg.seed = v;
    }
    let out = PathBuf::from(
        file.merge(args.out.clone(), "out")?
            .unwrap_or_else(|| "out".to_string()),
    );
    if let Some(n) = file.merge(args.jobs, "jobs")? {
        configure_jobs(n);
    }
    file.reject_unknown()?;

    let table = run_simulation_study(&cfg)?;
    write_file(&out, "study.csv", &export::study_csv(&table))?;
    let summary = json!({
        "command": "simulate",
        "created_unix": timestamp(),
        "config": serde_json::to_value(&cfg).expect("config serializes"),
        "table": serde_json::to_value(&table).expect("table serializes"),
        "outputs": ["study.csv", "summary.json"],
    });
    write_summary(&out, &summary)?;

    println!(
        "{} units x {} periods, intervention after t = {}, missing {}",
        cfg.n1 + cfg.n2 + 1,
        cfg.t_max,
        cfg.t0,
        cfg.missing,
    );
    println!("sigma2    pre_rmspe  post_rmspe  accuracy  first_fpc");
    for row in &table.rows {
        println!(
            "{:<9} {:<10} {:<11} {:<9} {}",
            row.sigma_sq,
            sig(row.pre_rmspe),
            sig(row.post_rmspe),
            sig(row.accuracy),
            sig(row.first_fpc_explained),
        );
    }
    println!("{}", wrote_line(&out, &["study.csv", "summary.json"]));
    Ok(())
}

fn fpca_report(args: FpcaReportArgs) -> CliResult<()> {
    let file = load_config(&args.io.config)?;
    let io = resolve_io(&args.io, &file)?;
    let (treated, t0) = resolve_treat(&args.treat, &file)?;
    let smoothing = resolve_smoothing(&args.smooth, &file)?;
    file.reject_unknown()?;

    let panel = load_checked(&io, &treated, t0)?;
    let result = rpca_synth::fpca::fit(&panel, &smoothing)?;

    write_file(&io.out, "scree.csv", &export::scree_csv(&result))?;
    write_file(&io.out, "fpca.csv", &export::fpca_csv(&result))?;
    let summary = json!({
        "command": "fpca-report",
        "created_unix": timestamp(),
        "input": io.input,
        "treated": panel.treated_label(),
        "t0": t0,
        "panel": panel_json(&panel),
        "fpca": {
            "n_components": result.n_components(),
            "eigenvalues": result.eigenvalues,
            "explained": result.explained,
            "bandwidth_mean": result.bandwidth_mean,
            "bandwidth_cov": result.bandwidth_cov,
            "grid_size": result.grid.len(),
        },
        "outputs": ["fpca.csv", "scree.csv", "summary.json"],
    });
    write_summary(&io.out, &summary)?;

    println!(
        "grid {} points over [{}, {}], bandwidths mean {} cov {}",
        result.grid.len(),
        sig(result.grid[0]),
        sig(result.grid[result.grid.len() - 1]),
        sig(result.bandwidth_mean),
        sig(result.bandwidth_cov),
    );
    println!(
        "{} components, cumulative explained {}",
        result.n_components(),
        result
            .explained
            .iter()
            .map(|&e| sig(e))
            .collect::<Vec<_>>()
            .join(", "),
    );
    println!("{}", wrote_line(&io.out, &["scree.csv", "fpca.csv", "summary.json"]));
    Ok(())
}

fn spectrum(args: SpectrumArgs) -> CliResult<()> {
    let file = load_config(&args.io.config)?;
    let io = resolve_io(&args.io, &file)?;
    file.reject_unknown()?;

    let table = load_panel(&io.input, io.layout)?;
    // Missing cells carry no value; zero them so the factorization sees a
    // defined matrix.
    let mut values = table.values.clone();
    for i in 0..values.nrows() {
        for j in 0..values.ncols() {
            if !table.mask[(i, j)] {
                values[(i, j)] = 0.0;
            }
        }
    }
    let report = spectrum_report(&values)?;

    write_file(&io.out, "spectrum.csv", &export::spectrum_csv(&report))?;
    let summary = json!({
        "command": "spectrum",
        "created_unix": timestamp(),
        "input": io.input,
        "n_units": table.unit_labels.len(),
        "n_times": table.time_labels.len(),
        "singular_values": report.singular_values,
        "cumulative": report.cumulative,
        "outputs": ["spectrum.csv", "summary.json"],
    });
    write_summary(&io.out, &summary)?;

    let top = report
        .cumulative
        .iter()
        .take(3)
        .last()
        .copied()
        .unwrap_or(1.0);
    println!(
        "{} singular values, top {} carry {} of squared energy",
        report.singular_values.len(),
        report.singular_values.len().min(3),
        sig(top),
    );
    println!("{}", wrote_line(&io.out, &["spectrum.csv", "summary.json"]));
    Ok(())
}
