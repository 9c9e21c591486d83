//! Panel container and CSV loaders.
//!
//! A panel is an M x T matrix of outcomes: one row per unit, one column per
//! time period, with a boolean mask marking which cells were actually
//! observed. Time labels are numeric (years, indices) and strictly
//! increasing. The treated unit and the intervention index `t0` split the
//! horizon into a pre-period `0..t0` and a post-period `t0..T`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Input file layout for [`load_panel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `unit,<t1>,<t2>,...` header; one row per unit; empty or `NA` cells are
    /// treated as missing.
    Wide,
    /// `unit,time,value` header; one row per observed cell; absent pairs are
    /// treated as missing.
    Long,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wide" => Ok(Layout::Wide),
            "long" => Ok(Layout::Long),
            other => Err(Error::invalid(format!(
                "unknown layout {other:?}, expected \"wide\" or \"long\""
            ))),
        }
    }
}

/// Outcome table as loaded from disk, before the intervention is known.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTable {
    pub values: DMatrix<f64>,
    /// `true` marks an observed cell.
    pub mask: DMatrix<bool>,
    pub unit_labels: Vec<String>,
    pub time_labels: Vec<f64>,
}

impl PanelTable {
    /// Attaches the treated unit and intervention time, producing a validated
    /// [`Panel`]. `t0_label` is a time label; the period with that label is
    /// the last pre-intervention period.
    pub fn into_panel(self, treated_label: &str, t0_label: f64) -> Result<Panel> {
        let treated = self
            .unit_labels
            .iter()
            .position(|u| u == treated_label)
            .ok_or_else(|| Error::invalid(format!("treated unit {treated_label:?} not found")))?;
        let t0 = self.resolve_time(t0_label)? + 1;
        Panel::new(
            self.values,
            self.mask,
            self.unit_labels,
            self.time_labels,
            treated,
            t0,
        )
    }

    /// Index of the period whose label matches `label` (within a tiny
    /// relative tolerance, so `1990` written as text round-trips).
    pub fn resolve_time(&self, label: f64) -> Result<usize> {
        let tol = 1e-9 * label.abs().max(1.0);
        self.time_labels
            .iter()
            .position(|t| (t - label).abs() <= tol)
            .ok_or_else(|| Error::invalid(format!("time label {label} not found")))
    }

    /// Serializes to the wide CSV layout accepted by [`load_panel`].
    pub fn to_wide_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["unit".to_string()];
        header.extend(self.time_labels.iter().map(|t| format!("{t}")));
        w.write_record(&header).expect("in-memory write");
        for i in 0..self.values.nrows() {
            let mut row = vec![self.unit_labels[i].clone()];
            for j in 0..self.values.ncols() {
                row.push(if self.mask[(i, j)] {
                    format!("{}", self.values[(i, j)])
                } else {
                    String::new()
                });
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    /// Serializes observed cells to the long CSV layout.
    pub fn to_long_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["unit", "time", "value"]).expect("in-memory write");
        for i in 0..self.values.nrows() {
            for j in 0..self.values.ncols() {
                if self.mask[(i, j)] {
                    w.write_record(&[
                        self.unit_labels[i].clone(),
                        format!("{}", self.time_labels[j]),
                        format!("{}", self.values[(i, j)]),
                    ])
                    .expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }
}

/// Validated outcome panel with a designated treated unit and intervention.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
    unit_labels: Vec<String>,
    time_labels: Vec<f64>,
    treated: usize,
    t0: usize,
}

impl Panel {
    /// Builds a panel, rejecting any invariant violation (see [`validate`]).
    pub fn new(
        values: DMatrix<f64>,
        mask: DMatrix<bool>,
        unit_labels: Vec<String>,
        time_labels: Vec<f64>,
        treated: usize,
        t0: usize,
    ) -> Result<Panel> {
        let panel = Panel {
            values,
            mask,
            unit_labels,
            time_labels,
            treated,
            t0,
        };
        let report = validate(&panel);
        if report.pass {
            Ok(panel)
        } else {
            Err(Error::invalid(report.violations.join("; ")))
        }
    }

    /// Builds a panel without checking invariants. Intended for tests that
    /// need deliberately broken panels; everything else goes through
    /// [`Panel::new`].
    pub fn from_parts_unchecked(
        values: DMatrix<f64>,
        mask: DMatrix<bool>,
        unit_labels: Vec<String>,
        time_labels: Vec<f64>,
        treated: usize,
        t0: usize,
    ) -> Panel {
        Panel {
            values,
            mask,
            unit_labels,
            time_labels,
            treated,
            t0,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn unit_labels(&self) -> &[String] {
        &self.unit_labels
    }

    pub fn time_labels(&self) -> &[f64] {
        &self.time_labels
    }

    pub fn treated(&self) -> usize {
        self.treated
    }

    /// Number of pre-intervention periods; also the index of the first
    /// post-intervention column.
    pub fn t0(&self) -> usize {
        self.t0
    }

    pub fn n_units(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.values.ncols()
    }

    pub fn treated_label(&self) -> &str {
        &self.unit_labels[self.treated]
    }

    pub fn observed(&self, unit: usize, time: usize) -> bool {
        self.mask[(unit, time)]
    }

    /// Observed (time label, value) pairs for one unit over `cols`.
    pub fn observed_series(&self, unit: usize, cols: std::ops::Range<usize>) -> Vec<(f64, f64)> {
        cols.filter(|&j| self.mask[(unit, j)])
            .map(|j| (self.time_labels[j], self.values[(unit, j)]))
            .collect()
    }

    pub fn observed_pre_count(&self, unit: usize) -> usize {
        (0..self.t0).filter(|&j| self.mask[(unit, j)]).count()
    }

    /// True when consecutive time labels are equally spaced within a relative
    /// tolerance of 1e-6 of the average spacing.
    pub fn regular_spacing(&self) -> bool {
        regular_spacing(&self.time_labels)
    }

    /// Copy of the panel truncated to the first `n_times` columns with a new
    /// intervention index. Used by the in-time placebo.
    pub fn truncated(&self, n_times: usize, new_t0: usize) -> Result<Panel> {
        if n_times > self.n_times() {
            return Err(Error::invalid(format!(
                "cannot truncate to {n_times} periods, panel has {}",
                self.n_times()
            )));
        }
        Panel::new(
            self.values.columns(0, n_times).into_owned(),
            self.mask.columns(0, n_times).into_owned(),
            self.unit_labels.clone(),
            self.time_labels[..n_times].to_vec(),
            self.treated,
            new_t0,
        )
    }

    /// Copy of the panel without unit `drop`, re-designating `new_treated`
    /// (an index into the original panel) as treated. Used by the in-space
    /// placebo and the leave-one-out check.
    pub fn without_unit(&self, drop: usize, new_treated: usize) -> Result<Panel> {
        if drop >= self.n_units() {
            return Err(Error::invalid(format!(
                "unit index {drop} out of range for {} units",
                self.n_units()
            )));
        }
        if new_treated == drop {
            return Err(Error::invalid(
                "treated unit cannot be the dropped unit".to_string(),
            ));
        }
        let keep: Vec<usize> = (0..self.n_units()).filter(|&i| i != drop).collect();
        let values = DMatrix::from_fn(keep.len(), self.n_times(), |i, j| self.values[(keep[i], j)]);
        let mask = DMatrix::from_fn(keep.len(), self.n_times(), |i, j| self.mask[(keep[i], j)]);
        let labels: Vec<String> = keep.iter().map(|&i| self.unit_labels[i].clone()).collect();
        let treated = keep
            .iter()
            .position(|&i| i == new_treated)
            .expect("new_treated survives the drop");
        Panel::new(
            values,
            mask,
            labels,
            self.time_labels.clone(),
            treated,
            self.t0,
        )
    }

    /// The loader-level view of this panel (labels and data, no intervention).
    pub fn table(&self) -> PanelTable {
        PanelTable {
            values: self.values.clone(),
            mask: self.mask.clone(),
            unit_labels: self.unit_labels.clone(),
            time_labels: self.time_labels.clone(),
        }
    }
}

fn regular_spacing(times: &[f64]) -> bool {
    if times.len() < 3 {
        return true;
    }
    let span = times[times.len() - 1] - times[0];
    let mean_step = span / (times.len() - 1) as f64;
    times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - mean_step).abs() <= 1e-6 * mean_step.abs())
}

/// Diagnostic report for a panel. Produced by [`validate`]; never an error.
#[derive(Debug, Clone)]
pub struct PanelReport {
    pub pass: bool,
    pub violations: Vec<String>,
    pub n_units: usize,
    pub n_times: usize,
    pub treated: usize,
    pub t0: usize,
    pub missing_total: usize,
    pub missing_per_unit: Vec<usize>,
    pub min_observed_pre: usize,
    pub irregular_spacing: bool,
}

impl fmt::Display for PanelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "panel: {} units x {} periods, treated index {}, {} pre-periods",
            self.n_units, self.n_times, self.treated, self.t0
        )?;
        writeln!(
            f,
            "missing cells: {} total, min observed pre-period entries per unit: {}",
            self.missing_total, self.min_observed_pre
        )?;
        if self.irregular_spacing {
            writeln!(f, "warning: time labels are not equally spaced")?;
        }
        if self.pass {
            write!(f, "validation: pass")
        } else {
            write!(f, "validation: FAIL\n  - {}", self.violations.join("\n  - "))
        }
    }
}

/// Checks every panel invariant and reports all violations found.
pub fn validate(panel: &Panel) -> PanelReport {
    let mut violations = Vec::new();
    let m = panel.values.nrows();
    let t = panel.values.ncols();

    if m < 2 {
        violations.push(format!("need at least 2 units, got {m}"));
    }
    if t < 2 {
        violations.push(format!("need at least 2 time periods, got {t}"));
    }
    if panel.mask.nrows() != m || panel.mask.ncols() != t {
        violations.push(format!(
            "mask shape {}x{} does not match values shape {m}x{t}",
            panel.mask.nrows(),
            panel.mask.ncols()
        ));
    }
    if panel.unit_labels.len() != m {
        violations.push(format!(
            "{} unit labels for {m} units",
            panel.unit_labels.len()
        ));
    }
    if panel.time_labels.len() != t {
        violations.push(format!(
            "{} time labels for {t} periods",
            panel.time_labels.len()
        ));
    }
    {
        let mut seen = BTreeSet::new();
        for label in &panel.unit_labels {
            if !seen.insert(label.as_str()) {
                violations.push(format!("duplicate unit label {label:?}"));
            }
        }
    }
    for w in panel.time_labels.windows(2) {
        if !(w[1] > w[0]) {
            violations.push(format!(
                "time labels must be strictly increasing, got {} then {}",
                w[0], w[1]
            ));
            break;
        }
    }
    if panel.time_labels.iter().any(|t| !t.is_finite()) {
        violations.push("non-finite time label".to_string());
    }
    if panel.treated >= m {
        violations.push(format!(
            "treated index {} out of range for {m} units",
            panel.treated
        ));
    }
    if panel.t0 < 1 || panel.t0 >= t {
        violations.push(format!(
            "intervention index must satisfy 1 <= t0 < {t}, got {}",
            panel.t0
        ));
    }

    let shapes_ok = panel.mask.nrows() == m && panel.mask.ncols() == t;
    let mut missing_total = 0;
    let mut missing_per_unit = vec![0usize; m];
    let mut min_observed_pre = usize::MAX;
    if shapes_ok {
        for i in 0..m {
            let mut observed_pre = 0;
            for j in 0..t {
                if panel.mask[(i, j)] {
                    if !panel.values[(i, j)].is_finite() {
                        violations.push(format!(
                            "non-finite value for unit {:?} at time {}",
                            panel
                                .unit_labels
                                .get(i)
                                .map(String::as_str)
                                .unwrap_or("<unlabeled>"),
                            panel.time_labels.get(j).copied().unwrap_or(f64::NAN)
                        ));
                    }
                    if j < panel.t0 {
                        observed_pre += 1;
                    }
                } else {
                    missing_total += 1;
                    missing_per_unit[i] += 1;
                }
            }
            if observed_pre < 2 {
                violations.push(format!(
                    "unit {:?} has {observed_pre} observed pre-intervention entries, need at least 2",
                    panel
                        .unit_labels
                        .get(i)
                        .map(String::as_str)
                        .unwrap_or("<unlabeled>")
                ));
            }
            min_observed_pre = min_observed_pre.min(observed_pre);
        }
    }
    if min_observed_pre == usize::MAX {
        min_observed_pre = 0;
    }

    PanelReport {
        pass: violations.is_empty(),
        violations,
        n_units: m,
        n_times: t,
        treated: panel.treated,
        t0: panel.t0,
        missing_total,
        missing_per_unit,
        min_observed_pre,
        irregular_spacing: !regular_spacing(&panel.time_labels),
    }
}

/// Loads an outcome table from a CSV file in the given layout.
pub fn load_panel(path: impl AsRef<Path>, layout: Layout) -> Result<PanelTable> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_csv_str(&raw, layout)
}

/// Parses an outcome table from CSV text. See [`Layout`] for the two formats.
pub fn from_csv_str(data: &str, layout: Layout) -> Result<PanelTable> {
    match layout {
        Layout::Wide => parse_wide(data),
        Layout::Long => parse_long(data),
    }
}

fn is_missing(cell: &str) -> bool {
    let trimmed = cell.trim();
    trimmed.is_empty() || trimmed.eq_ignore_ascii_case("na")
}

fn parse_value(cell: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        row,
        col: Some(col),
        msg: format!("expected a number, got {:?}", cell.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            col: Some(col),
            msg: format!("non-finite value {:?}", cell.trim()),
        });
    }
    Ok(v)
}

fn csv_reader(data: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(data.as_bytes())
}

fn parse_wide(data: &str) -> Result<PanelTable> {
    let mut reader = csv_reader(data);
    let mut records = reader.records().enumerate();

    let (_, header) = records.next().ok_or_else(|| Error::Parse {
        row: 1,
        col: None,
        msg: "empty file".to_string(),
    })?;
    let header = header.map_err(|e| Error::Parse {
        row: 1,
        col: None,
        msg: e.to_string(),
    })?;
    if header.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            col: None,
            msg: "wide header needs a unit column and at least one time column".to_string(),
        });
    }
    let mut time_labels = Vec::with_capacity(header.len() - 1);
    for (c, cell) in header.iter().enumerate().skip(1) {
        time_labels.push(parse_value(cell, 1, c + 1)?);
    }
    for (c, w) in time_labels.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::Parse {
                row: 1,
                col: Some(c + 3),
                msg: format!(
                    "time labels must be strictly increasing, got {} then {}",
                    w[0], w[1]
                ),
            });
        }
    }

    let t = time_labels.len();
    let mut unit_labels = Vec::new();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for (idx, record) in records {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            col: None,
            msg: e.to_string(),
        })?;
        if record.len() == 1 && record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if record.len() != t + 1 {
            return Err(Error::Parse {
                row,
                col: None,
                msg: format!(
                    "ragged row: expected {} cells (unit + {t} periods), got {}",
                    t + 1,
                    record.len()
                ),
            });
        }
        unit_labels.push(record[0].to_string());
        for (c, cell) in record.iter().enumerate().skip(1) {
            if is_missing(cell) {
                values.push(0.0);
                mask.push(false);
            } else {
                values.push(parse_value(cell, row, c + 1)?);
                mask.push(true);
            }
        }
    }
    let m = unit_labels.len();
    if m == 0 {
        return Err(Error::Parse {
            row: 2,
            col: None,
            msg: "no unit rows".to_string(),
        });
    }
    Ok(PanelTable {
        values: DMatrix::from_row_slice(m, t, &values),
        mask: DMatrix::from_row_slice(m, t, &mask),
        unit_labels,
        time_labels,
    })
}

fn parse_long(data: &str) -> Result<PanelTable> {
    let mut reader = csv_reader(data);
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            col: None,
            msg: e.to_string(),
        })?;
        if idx == 0 {
            // Header row; content is not interpreted beyond arity.
            if record.len() != 3 {
                return Err(Error::Parse {
                    row,
                    col: None,
                    msg: format!("long header needs 3 columns (unit,time,value), got {}", record.len()),
                });
            }
            continue;
        }
        if record.len() == 1 && record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if record.len() != 3 {
            return Err(Error::Parse {
                row,
                col: None,
                msg: format!("ragged row: expected 3 cells, got {}", record.len()),
            });
        }
        let unit = record[0].to_string();
        let time = parse_value(&record[1], row, 2)?;
        let value = if is_missing(&record[2]) {
            None
        } else {
            Some(parse_value(&record[2], row, 3)?)
        };
        rows.push((unit, time, value, row));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: None,
            msg: "no data rows".to_string(),
        });
    }

    let mut unit_labels: Vec<String> = Vec::new();
    for (unit, ..) in &rows {
        if !unit_labels.iter().any(|u| u == unit) {
            unit_labels.push(unit.clone());
        }
    }
    let mut time_labels: Vec<f64> = Vec::new();
    for &(_, time, _, row) in &rows {
        if !time.is_finite() {
            return Err(Error::Parse {
                row,
                col: Some(2),
                msg: "non-finite time label".to_string(),
            });
        }
        if !time_labels.iter().any(|&t| t == time) {
            time_labels.push(time);
        }
    }
    time_labels.sort_by(|a, b| a.partial_cmp(b).expect("finite time labels"));

    let m = unit_labels.len();
    let t = time_labels.len();
    let mut values = DMatrix::zeros(m, t);
    let mut mask = DMatrix::from_element(m, t, false);
    let mut filled = DMatrix::from_element(m, t, false);
    for (unit, time, value, row) in rows {
        let i = unit_labels.iter().position(|u| *u == unit).expect("collected above");
        let j = time_labels.iter().position(|&t| t == time).expect("collected above");
        if filled[(i, j)] {
            return Err(Error::Parse {
                row,
                col: None,
                msg: format!("duplicate entry for unit {unit:?} at time {time}"),
            });
        }
        filled[(i, j)] = true;
        if let Some(v) = value {
            values[(i, j)] = v;
            mask[(i, j)] = true;
        }
    }
    Ok(PanelTable {
        values,
        mask,
        unit_labels,
        time_labels,
    })
}
