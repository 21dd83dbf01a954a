use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::experiment::ExperimentReport;
use super::{io_err, write_file, write_json, HarnessError};
use crate::classifier::Mode;
use crate::corpus::Criterion;
use crate::evaluation::{CaseMetrics, MacroAverage, Prf};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown];
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(HarnessError::InvalidSpec(format!("unknown report format {other:?}"))),
        }
    }
}

struct Table {
    name: &'static str,
    title: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn csv(&self) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = row.iter().map(|c| csv_cell(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn markdown(&self) -> String {
        let mut out = format!("## {}\n\n", self.title);
        let _ = writeln!(out, "| {} |", self.header.join(" | "));
        let _ = writeln!(out, "|{}", " --- |".repeat(self.header.len()));
        for row in &self.rows {
            let _ = writeln!(out, "| {} |", row.join(" | "));
        }
        out.push('\n');
        out
    }
}

fn csv_cell(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

fn num(v: f64) -> String {
    format!("{v:.4}")
}

fn prf_cells(row: &Prf<f64>) -> [String; 3] {
    [num(row.precision), num(row.recall), num(row.f1)]
}

fn macro_cells(row: &MacroAverage<f64>) -> [String; 3] {
    [num(row.precision), num(row.recall), num(row.f1)]
}

fn case_cells(m: &CaseMetrics<f64>) -> [String; 3] {
    [num(m.accuracy), num(m.sensitivity), num(m.specificity)]
}

/// Criterion rows plus the macro row, one precision/recall/F1 column group per stage.
fn criterion_table(report: &ExperimentReport) -> Option<Table> {
    let stages: Vec<_> = report.stages.iter().filter(|s| s.average.criterion.is_some()).collect();
    if stages.is_empty() {
        return None;
    }
    let mut header = vec!["criterion".to_string()];
    for s in &stages {
        for m in ["precision", "recall", "f1"] {
            header.push(format!("{} {m}", s.stage));
        }
    }
    let mut rows: Vec<Vec<String>> = Criterion::ALL
        .iter()
        .map(|c| {
            let mut row = vec![c.code().to_string()];
            for s in &stages {
                let metrics = s.average.criterion.as_ref().expect("filtered");
                row.extend(prf_cells(&metrics.per_criterion.get(c).copied().unwrap_or_default()));
            }
            row
        })
        .collect();
    let mut macro_row = vec!["Macro Average".to_string()];
    for s in &stages {
        macro_row.extend(macro_cells(&s.average.criterion.as_ref().expect("filtered").macro_avg));
    }
    rows.push(macro_row);
    Some(Table {
        name: "criterion_metrics",
        title: "Cross-validated criterion metrics".into(),
        header,
        rows,
    })
}

fn grid_tables(report: &ExperimentReport) -> Vec<Table> {
    let folds: Vec<&str> = report.comparison_folds.iter().map(|f| f.name.as_str()).collect();
    let mut models: Vec<&str> = Vec::new();
    for cell in &report.grid {
        if !models.contains(&cell.model.as_str()) {
            models.push(&cell.model);
        }
    }
    let mut tables = Vec::new();
    if report.spec.mode == Mode::Transparent {
        let mut header = vec!["model".to_string()];
        for f in &folds {
            for m in ["precision", "recall", "f1"] {
                header.push(format!("{f} fold {m}"));
            }
        }
        let rows = models
            .iter()
            .map(|model| {
                let mut row = vec![model.to_string()];
                for f in &folds {
                    match report.cell(model, f).and_then(|c| c.evaluation.criterion.as_ref()) {
                        Some(m) => row.extend(macro_cells(&m.macro_avg)),
                        None => row.extend(std::iter::repeat_n(String::new(), 3)),
                    }
                }
                row
            })
            .collect();
        tables.push(Table {
            name: "comparison_criterion",
            title: "Best models on comparison folds: macro criterion metrics".into(),
            header,
            rows,
        });
    }
    let mut header = vec!["model".to_string()];
    for f in &folds {
        for m in ["accuracy", "sensitivity", "specificity", "overlap"] {
            header.push(format!("{f} fold {m}"));
        }
    }
    let rows = models
        .iter()
        .map(|model| {
            let mut row = vec![model.to_string()];
            for f in &folds {
                match report.cell(model, f) {
                    Some(c) => {
                        row.extend(case_cells(&c.evaluation.case));
                        row.push(c.train_overlap.to_string());
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            row
        })
        .collect();
    tables.push(Table {
        name: "comparison_case",
        title: "Best models on comparison folds: case metrics".into(),
        header,
        rows,
    });
    tables
}

fn case_table(report: &ExperimentReport) -> Table {
    Table {
        name: "case_metrics",
        title: "Cross-validated case metrics".into(),
        header: ["stage", "accuracy", "sensitivity", "specificity"]
            .map(String::from)
            .to_vec(),
        rows: report
            .stages
            .iter()
            .map(|s| {
                let mut row = vec![s.stage.clone()];
                row.extend(case_cells(&s.average.case));
                row
            })
            .collect(),
    }
}

fn sweep_table(report: &ExperimentReport) -> Option<Table> {
    if report.threshold_sweep.is_empty() {
        return None;
    }
    Some(Table {
        name: "threshold_sweep",
        title: "Black-box threshold sweep".into(),
        header: ["stage", "threshold", "accuracy", "sensitivity", "specificity"]
            .map(String::from)
            .to_vec(),
        rows: report
            .threshold_sweep
            .iter()
            .map(|r| {
                vec![
                    r.stage.clone(),
                    r.threshold.to_string(),
                    num(r.accuracy),
                    num(r.sensitivity),
                    num(r.specificity),
                ]
            })
            .collect(),
    })
}

fn significance_table(report: &ExperimentReport) -> Option<Table> {
    if report.significance.is_empty() {
        return None;
    }
    Some(Table {
        name: "significance",
        title: "Paired t-tests on per-criterion averages".into(),
        header: ["first", "second", "metric", "t", "df", "p", "alpha", "significant"]
            .map(String::from)
            .to_vec(),
        rows: report
            .significance
            .iter()
            .map(|e| {
                let mut row = vec![e.first.clone(), e.second.clone(), e.metric.name().to_string()];
                match &e.result {
                    Some(r) => row.extend([
                        num(r.t),
                        r.df.to_string(),
                        format!("{:.5}", r.p_two_tailed),
                        format!("{:.6}", r.alpha_adjusted),
                        r.significant().to_string(),
                    ]),
                    None => row.extend([
                        e.note.clone().unwrap_or_default(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                    ]),
                }
                row
            })
            .collect(),
    })
}

/// Chart data: one row per (stage, threshold, metric).
fn fig4_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("stage,threshold,metric,value\n");
    for s in &report.stages {
        let mut points: Vec<(String, &CaseMetrics<f64>)> = Vec::new();
        if s.average.thresholds.is_empty() {
            points.push(("rule".into(), &s.average.case));
        }
        for t in &s.average.thresholds {
            points.push((t.threshold.to_string(), &t.case));
        }
        for (threshold, m) in points {
            for (metric, value) in [
                ("accuracy", m.accuracy),
                ("sensitivity", m.sensitivity),
                ("specificity", m.specificity),
            ] {
                let _ = writeln!(out, "{},{threshold},{metric},{}", csv_cell(&s.stage), num(value));
            }
        }
    }
    out
}

/// Writes the report as JSON and as CSV and Markdown tables.
pub fn emit_report(report: &ExperimentReport, out_dir: &Path, formats: &[ReportFormat]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    if formats.contains(&ReportFormat::Json) {
        write_json(&out_dir.join(REPORT_FILE), report)?;
    }
    let mut tables = Vec::new();
    tables.extend(criterion_table(report));
    tables.extend(grid_tables(report));
    tables.push(case_table(report));
    tables.extend(sweep_table(report));
    tables.extend(significance_table(report));
    if formats.contains(&ReportFormat::Csv) {
        for t in &tables {
            write_file(
                &out_dir.join("tables").join(format!("{}.csv", t.name)),
                t.csv().as_bytes(),
            )?;
        }
        write_file(&out_dir.join("fig4.csv"), fig4_csv(report).as_bytes())?;
    }
    if formats.contains(&ReportFormat::Markdown) {
        let mut md = format!(
            "# Experiment report ({} mode, seed {})\n\n",
            report.spec.mode.name(),
            report.spec.seed
        );
        for t in &tables {
            md.push_str(&t.markdown());
        }
        write_file(&out_dir.join("report.md"), md.as_bytes())?;
    }
    Ok(())
}

pub fn read_report(out_dir: &Path) -> Result<ExperimentReport, HarnessError> {
    let path = out_dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_str(&text)?)
}
