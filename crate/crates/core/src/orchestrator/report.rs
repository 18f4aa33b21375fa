use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{Map, Value};

use super::study::StudyResult;
use super::SessionError;
use crate::potential::improvement_ratio;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Scores,
    Cdf,
    Potential,
    Improvement,
}

impl ReportKind {
    pub const ALL: [ReportKind; 4] = [Self::Scores, Self::Cdf, Self::Potential, Self::Improvement];

    pub fn name(self) -> &'static str {
        match self {
            Self::Scores => "scores",
            Self::Cdf => "cdf",
            Self::Potential => "potential",
            Self::Improvement => "improvement",
        }
    }
}

impl FromStr for ReportKind {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SessionError::Config(format!("unknown report kind `{s}` (scores, cdf, potential, improvement)")))
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(SessionError::Config(format!("unknown report format `{s}` (csv, json)"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Cell {
    Text(String),
    Num(f64),
    Int(usize),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Num(v) => Value::from(*v),
            Cell::Int(v) => Value::from(*v),
            Cell::Empty => Value::Null,
        }
    }
}

fn opt(v: Option<f64>) -> Cell {
    v.map_or(Cell::Empty, Cell::Num)
}

fn text(s: &str) -> Cell {
    Cell::Text(s.to_string())
}

/// Sorted distinct values with the fraction of samples at or below each.
pub fn cdf_points(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    out
}

fn table(result: &StudyResult, kind: ReportKind) -> (Vec<&'static str>, Vec<Vec<Cell>>) {
    let mut rows = Vec::new();
    match kind {
        ReportKind::Scores => {
            for c in &result.cells {
                rows.push(vec![
                    text(&c.algorithm),
                    text(&c.env),
                    Cell::Int(c.capability.n_reflect),
                    Cell::Int(c.capability.n_bayes),
                    opt(c.initial_score),
                    opt(c.final_score),
                    Cell::Int(c.evaluations),
                    c.error.as_deref().map_or(Cell::Empty, text),
                ]);
            }
            (
                vec!["algorithm", "env", "n_reflect", "n_bayes", "initial", "final", "evaluations", "error"],
                rows,
            )
        }
        ReportKind::Cdf => {
            for c in &result.cells {
                for (phase, cases) in [("initial", &c.initial_cases), ("final", &c.final_cases)] {
                    let series = format!(
                        "{}/{}/r{}-b{}/{phase}",
                        c.algorithm, c.env, c.capability.n_reflect, c.capability.n_bayes
                    );
                    let scores: Vec<f64> = cases.iter().map(|k| k.score).collect();
                    for (v, f) in cdf_points(&scores) {
                        rows.push(vec![text(&series), Cell::Num(v), Cell::Num(f)]);
                    }
                }
            }
            (vec!["series", "value", "fraction"], rows)
        }
        ReportKind::Potential => {
            for p in &result.potentials {
                let r = p.report.as_ref();
                rows.push(vec![
                    text(&p.algorithm),
                    Cell::Int(p.capability.n_reflect),
                    Cell::Int(p.capability.n_bayes),
                    r.map_or(Cell::Empty, |r| text(&r.ideal_env)),
                    opt(r.map(|r| r.potential)),
                    opt(r.map(|r| r.potential_std)),
                    opt(r.map(|r| r.improvement)),
                    p.error.as_deref().map_or(Cell::Empty, text),
                ]);
            }
            (
                vec![
                    "algorithm",
                    "n_reflect",
                    "n_bayes",
                    "ideal_env",
                    "potential",
                    "potential_std_across_envs",
                    "improvement",
                    "error",
                ],
                rows,
            )
        }
        ReportKind::Improvement => {
            for c in &result.cells {
                let ratio = match (c.initial_score, c.final_score) {
                    (Some(b), Some(t)) => improvement_ratio(t, b),
                    _ => None,
                };
                rows.push(vec![
                    text(&c.algorithm),
                    text(&c.env),
                    Cell::Int(c.capability.n_reflect),
                    Cell::Int(c.capability.n_bayes),
                    opt(c.initial_score),
                    opt(c.final_score),
                    opt(ratio),
                ]);
            }
            (
                vec!["algorithm", "env", "n_reflect", "n_bayes", "initial", "final", "ratio"],
                rows,
            )
        }
    }
}

/// Report text. CSV uses LF line endings and has only a header when there
/// is nothing to report; JSON is an array of row objects.
pub fn render_report(result: &StudyResult, kind: ReportKind, format: ReportFormat) -> String {
    let (header, rows) = table(result, kind);
    match format {
        ReportFormat::Csv => {
            let mut out = header.join(",");
            out.push('\n');
            for row in rows {
                out.push_str(&row.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
                out.push('\n');
            }
            out
        }
        ReportFormat::Json => {
            let items: Vec<Value> = rows
                .iter()
                .map(|row| {
                    let mut m = Map::new();
                    for (h, c) in header.iter().zip(row) {
                        m.insert(h.to_string(), c.json());
                    }
                    Value::Object(m)
                })
                .collect();
            let mut out = serde_json::to_string_pretty(&items).expect("serializable");
            out.push('\n');
            out
        }
    }
}

/// Writes `<dir>/<kind>.<csv|json>` and returns its path.
pub fn emit_report(
    result: &StudyResult,
    kind: ReportKind,
    format: ReportFormat,
    dir: &Path,
) -> Result<PathBuf, SessionError> {
    fs::create_dir_all(dir).map_err(|e| SessionError::io(dir, e))?;
    let path = dir.join(format!("{}.{}", kind.name(), format.extension()));
    fs::write(&path, render_report(result, kind, format)).map_err(|e| SessionError::io(&path, e))?;
    Ok(path)
}
