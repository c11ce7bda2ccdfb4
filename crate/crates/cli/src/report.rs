//! Run reports and their CSV, SVG and provenance outputs.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};

use predictability::cloze::GridCell;
use predictability::corpus::Measure;
use predictability::stats::{ComparisonResult, CorrelationEstimate, BOTH};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::chart::{render_svg, write_svg, Bar, BarGroup};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const REPORT_CSV: &str = "report.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const CHART_SVG: &str = "chart.svg";
pub const PROVENANCE_TXT: &str = "provenance.txt";
pub const CORRELATIONS_CSV: &str = "correlations.csv";
pub const GRID_CSV: &str = "grid.csv";
pub const GRID_TABLE_CSV: &str = "grid_table.csv";

/// One cross-validated comparison on one measure.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub measure: Measure,
    /// Distinguishes analyses sharing a measure, e.g. swept parameter values.
    pub label: String,
    pub n_obs: usize,
    pub outcome: std::result::Result<ComparisonResult, String>,
    /// Run chosen as the median when the predictor is stochastic.
    pub selected_run: Option<usize>,
}

impl Analysis {
    pub fn group_label(&self) -> String {
        if self.label.is_empty() {
            self.measure.to_string()
        } else {
            format!("{} {}", self.measure, self.label)
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationRow {
    pub predictor: String,
    pub estimate: CorrelationEstimate,
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub measure: Measure,
    pub n_obs: usize,
    pub cells: Vec<GridCell>,
    pub best: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub command: String,
    pub analyses: Vec<Analysis>,
    pub correlations: Vec<CorrelationRow>,
    pub grids: Vec<GridReport>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            ..Self::default()
        }
    }

    /// Every requested comparison and grid cell completed.
    pub fn all_ok(&self) -> bool {
        self.analyses.iter().all(|a| a.outcome.is_ok())
            && self.grids.iter().all(|g| g.cells.iter().all(|c| c.gain.is_some()))
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .analyses
            .iter()
            .filter_map(|a| a.outcome.as_ref().err().map(|e| format!("{}: {e}", a.group_label())))
            .collect();
        for g in &self.grids {
            for c in &g.cells {
                if let Some(e) = &c.error {
                    out.push(format!("{} grid S={} {}: {e}", g.measure, c.smoothing.get(), c.transform));
                }
            }
        }
        out
    }
}

/// Display name of a model: the joint model is named after its predictors.
fn model_name(name: &str, result: &ComparisonResult) -> String {
    if name != BOTH {
        return name.to_string();
    }
    result
        .cv
        .model(BOTH)
        .map(|m| m.predictors.join("+"))
        .unwrap_or_else(|| BOTH.to_string())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::output(path, e))
}

fn fmt(v: f64) -> String {
    format!("{v:.9e}")
}

#[derive(Serialize)]
struct FoldRow<'a> {
    measure: &'a str,
    model: &'a str,
    fold: usize,
    mean_gain_nats: String,
}

#[derive(Serialize)]
struct SummaryRow {
    measure: String,
    comparison: String,
    n_obs: usize,
    mean_difference_nats: String,
    sem: String,
    p: String,
    p_adjusted: String,
    significant: String,
    status: String,
}

pub fn write_fold_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut seen = BTreeSet::new();
    for a in &report.analyses {
        let Ok(result) = &a.outcome else { continue };
        for m in &result.cv.models {
            let name = model_name(&m.name, result);
            if !seen.insert((a.measure, name.clone())) {
                continue;
            }
            for (fold, g) in m.per_fold.iter().enumerate() {
                w.serialize(FoldRow {
                    measure: a.measure.as_str(),
                    model: &name,
                    fold,
                    mean_gain_nats: g.map(fmt).unwrap_or_else(|| "NA".into()),
                })
                .map_err(|e| CliError::output(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn write_summary_csv(report: &RunReport, alpha: f64, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for a in &report.analyses {
        let rows: Vec<SummaryRow> = match &a.outcome {
            Ok(result) => result
                .comparisons
                .iter()
                .map(|c| {
                    let failed = result.cv.failed_folds.len();
                    SummaryRow {
                        measure: a.measure.to_string(),
                        comparison: format!("{}_vs_{}", model_name(&c.first, result), model_name(&c.second, result)),
                        n_obs: a.n_obs,
                        mean_difference_nats: fmt(c.mean_difference),
                        sem: fmt(c.sem),
                        p: fmt(c.p),
                        p_adjusted: fmt(c.p_adjusted),
                        significant: c.significant(alpha).to_string(),
                        status: if failed == 0 { "ok".into() } else { format!("ok ({failed} failed folds)") },
                    }
                })
                .collect(),
            Err(e) => vec![SummaryRow {
                measure: a.measure.to_string(),
                comparison: a.label.clone(),
                n_obs: a.n_obs,
                mean_difference_nats: "NA".into(),
                sem: "NA".into(),
                p: "NA".into(),
                p_adjusted: "NA".into(),
                significant: "NA".into(),
                status: format!("failed: {e}"),
            }],
        };
        for r in rows {
            w.serialize(r).map_err(|e| CliError::output(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

/// Bar groups for the chart: one group per completed analysis, one bar per
/// model, marks on significant comparisons.
pub fn chart_groups(report: &RunReport, alpha: f64) -> Vec<BarGroup> {
    report
        .analyses
        .iter()
        .filter_map(|a| a.outcome.as_ref().ok().map(|r| (a, r)))
        .map(|(a, result)| {
            let bars: Vec<Bar> = result
                .cv
                .models
                .iter()
                .map(|m| Bar {
                    label: model_name(&m.name, result),
                    value: m.mean(),
                    sem: m.sem(),
                })
                .collect();
            let index = |name: &str| result.cv.models.iter().position(|m| m.name == name);
            let marks = result
                .comparisons
                .iter()
                .filter(|c| c.significant(alpha))
                .filter_map(|c| Some((index(&c.first)?, index(&c.second)?)))
                .collect();
            BarGroup {
                label: a.group_label(),
                bars,
                marks,
            }
        })
        .collect()
}

pub fn emit_chart(report: &RunReport, alpha: f64, path: &Path) -> Result<()> {
    let svg = render_svg(
        &format!("{}: held-out log-likelihood gain over baseline", report.command),
        "gain per observation (nats)",
        &chart_groups(report, alpha),
    )?;
    write_svg(path, &svg)
}

pub fn write_correlations_csv(report: &RunReport, path: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        predictor: &'a str,
        r: String,
        ci_low: String,
        ci_high: String,
        n: usize,
    }
    let mut w = csv_writer(path)?;
    for c in &report.correlations {
        w.serialize(Row {
            predictor: &c.predictor,
            r: fmt(c.estimate.r),
            ci_low: fmt(c.estimate.ci_low),
            ci_high: fmt(c.estimate.ci_high),
            n: c.estimate.n,
        })
        .map_err(|e| CliError::output(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn write_grid_csv(report: &RunReport, path: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        measure: String,
        #[serde(rename = "S")]
        s: u32,
        transform: String,
        loglik_gain: String,
        best: bool,
    }
    let mut w = csv_writer(path)?;
    for g in &report.grids {
        for (i, c) in g.cells.iter().enumerate() {
            w.serialize(Row {
                measure: g.measure.to_string(),
                s: c.smoothing.get(),
                transform: c.transform.to_string(),
                loglik_gain: c.gain.map(fmt).unwrap_or_else(|| "NA".into()),
                best: g.best == Some(i),
            })
            .map_err(|e| CliError::output(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

/// Transforms as rows, smoothing factors as columns; the best cell of each
/// measure carries a trailing `*`.
pub fn write_grid_table(report: &RunReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| CliError::output(path, e);
    for g in &report.grids {
        let mut s_values: Vec<u32> = g.cells.iter().map(|c| c.smoothing.get()).collect();
        s_values.dedup();
        let mut transforms = Vec::new();
        for c in &g.cells {
            if !transforms.contains(&c.transform) {
                transforms.push(c.transform);
            }
        }
        let mut header = vec!["measure".to_string(), "transform".to_string()];
        header.extend(s_values.iter().map(|s| format!("S={s}")));
        w.write_record(&header).map_err(io)?;
        for t in &transforms {
            let mut row = vec![g.measure.to_string(), t.to_string()];
            for s in &s_values {
                let cell = g
                    .cells
                    .iter()
                    .position(|c| c.transform == *t && c.smoothing.get() == *s);
                row.push(match cell {
                    Some(i) => {
                        let v = g.cells[i].gain.map(|v| format!("{v:.1}")).unwrap_or_else(|| "NA".into());
                        if g.best == Some(i) { format!("{v}*") } else { v }
                    }
                    None => String::new(),
                });
            }
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| predictability::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| predictability::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn provenance_text(report: &RunReport, config: &ExperimentConfig) -> Result<String> {
    let json = config.to_json();
    let canonical = serde_json::to_string(&json).map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = String::new();
    out.push_str(&format!("tool: {} {}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")));
    out.push_str(&format!("command: {}\n", report.command));
    out.push_str(&format!("seed: {}\n", config.seed));
    out.push_str(&format!("config_sha256: {}\n", hex::encode(Sha256::digest(canonical.as_bytes()))));
    out.push_str("inputs:\n");
    for (name, path) in config.inputs.named() {
        out.push_str(&format!("  {name}: {} sha256={}\n", path.display(), sha256_file(path)?));
    }
    let runs: Vec<String> = report
        .analyses
        .iter()
        .filter_map(|a| a.selected_run.map(|r| format!("  {}: run {r}", a.group_label())))
        .collect();
    if !runs.is_empty() {
        out.push_str("median runs:\n");
        for r in runs {
            out.push_str(&r);
            out.push('\n');
        }
    }
    if !report.notes.is_empty() {
        out.push_str("notes:\n");
        for n in &report.notes {
            out.push_str(&format!("  - {n}\n"));
        }
    }
    let failures = report.failures();
    out.push_str(&format!("status: {}\n", if failures.is_empty() { "ok" } else { "partial failure" }));
    for f in failures {
        out.push_str(&format!("  failed: {f}\n"));
    }
    out.push_str("config:\n");
    let pretty = serde_json::to_string_pretty(&json).map_err(|e| CliError::Config(e.to_string()))?;
    for line in pretty.lines() {
        out.push_str("  ");
        out.push_str(line);
        out.push('\n');
    }
    Ok(out)
}

/// Writes every output that applies to `report` into `dir`; returns the paths.
pub fn write_outputs(report: &RunReport, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    let mut written = Vec::new();
    if !report.analyses.is_empty() {
        let p = dir.join(REPORT_CSV);
        write_fold_csv(report, &p)?;
        written.push(p);
        let p = dir.join(SUMMARY_CSV);
        write_summary_csv(report, config.alpha, &p)?;
        written.push(p);
        let p = dir.join(CHART_SVG);
        match emit_chart(report, config.alpha, &p) {
            Ok(()) => written.push(p),
            Err(CliError::EmptyChart) => {}
            Err(e) => return Err(e),
        }
    }
    if !report.correlations.is_empty() {
        let p = dir.join(CORRELATIONS_CSV);
        write_correlations_csv(report, &p)?;
        written.push(p);
    }
    if !report.grids.is_empty() {
        let p = dir.join(GRID_CSV);
        write_grid_csv(report, &p)?;
        written.push(p);
        let p = dir.join(GRID_TABLE_CSV);
        write_grid_table(report, &p)?;
        written.push(p);
    }
    let p = dir.join(PROVENANCE_TXT);
    fs::write(&p, provenance_text(report, config)?).map_err(|e| CliError::output(&p, e))?;
    written.push(p);
    Ok(written)
}
