//! CSV tables and plot series written after a run or sweep.
//!
//! All durations are reported in the scenario's declared time unit. Files are
//! UTF-8 with `\n` line endings and `.` as the decimal separator.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::engine::MS_PER_HOUR;
use crate::metrics::{queue_wait, rejection_percentage, RunMetrics};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("unknown plot kind `{0}` (expected hourly_response or rejections_bar)")]
    UnknownKind(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub const SUMMARY_CSV: &str = "summary.csv";
pub const REJECTIONS_CSV: &str = "rejections.csv";
pub const JOBS_CSV: &str = "jobs.csv";

fn unit(m: &RunMetrics, ms: f64) -> f64 {
    m.time_unit.from_ms(ms)
}

pub fn summary_csv(m: &RunMetrics) -> String {
    let mut out = String::from("metric,avg,min,max\n");
    for (name, s) in m.summaries() {
        let _ = writeln!(out, "{name},{},{},{}", unit(m, s.avg), unit(m, s.min), unit(m, s.max));
    }
    out
}

/// One row per run, in the order given.
pub fn rejections_csv(runs: &[RunMetrics]) -> String {
    let mut out = String::from("submitted,rejected,percent\n");
    for m in runs {
        if let Ok(p) = rejection_percentage(m.submitted, m.rejected) {
            let _ = writeln!(out, "{},{},{p}", m.submitted, m.rejected);
        }
    }
    out
}

pub fn jobs_csv(m: &RunMetrics) -> String {
    let mut out = String::from("id,arrival,start,finish,wait,vm_history,state\n");
    let opt = |v: Option<f64>| v.map(|x| unit(m, x).to_string()).unwrap_or_default();
    for t in &m.traces {
        let history: Vec<String> = t.vm_history.iter().map(|v| v.0.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.id,
            unit(m, t.arrival.as_ms()),
            opt(t.start.map(|s| s.as_ms())),
            opt(t.finish.map(|f| f.as_ms())),
            opt(queue_wait(t).ok()),
            history.join(";"),
            t.state.as_str(),
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// Average response time per arrival hour, one series per user base.
    HourlyResponse,
    /// Rejected job count against submitted count.
    RejectionsBar,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::HourlyResponse => "hourly_response.dat",
            PlotKind::RejectionsBar => "rejections_bar.dat",
        }
    }

    fn axes(self) -> &'static str {
        match self {
            PlotKind::HourlyResponse => "x=arrival hour, y=average response time",
            PlotKind::RejectionsBar => "x=jobs submitted, y=jobs rejected",
        }
    }
}

impl FromStr for PlotKind {
    type Err = OutputError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hourly_response" => Ok(PlotKind::HourlyResponse),
            "rejections_bar" => Ok(PlotKind::RejectionsBar),
            _ => Err(OutputError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub fn emit_plot_series(runs: &[RunMetrics], kind: PlotKind) -> Vec<Series> {
    match kind {
        PlotKind::HourlyResponse => runs
            .iter()
            .flat_map(|m| {
                let suffix = if runs.len() > 1 {
                    format!("@{}", m.submitted)
                } else {
                    String::new()
                };
                hourly_response(m).into_iter().map(move |mut s| {
                    s.label.push_str(&suffix);
                    s
                })
            })
            .collect(),
        PlotKind::RejectionsBar => {
            let points: Vec<(f64, f64)> = runs
                .iter()
                .filter(|m| m.submitted > 0)
                .map(|m| (m.submitted as f64, m.rejected as f64))
                .collect();
            if points.is_empty() {
                Vec::new()
            } else {
                vec![Series {
                    label: "rejected".into(),
                    points,
                }]
            }
        }
    }
}

/// Completed jobs bucketed by the hour they arrived in.
fn hourly_response(m: &RunMetrics) -> Vec<Series> {
    let mut buckets: BTreeMap<&str, BTreeMap<u64, (f64, u64)>> = BTreeMap::new();
    for t in &m.traces {
        let Some(rt) = t.network_response_time() else { continue };
        let label = t.origin.as_deref().unwrap_or("jobs");
        let hour = (t.arrival.as_ms() / MS_PER_HOUR).floor() as u64;
        let e = buckets.entry(label).or_default().entry(hour).or_insert((0.0, 0));
        e.0 += rt;
        e.1 += 1;
    }
    buckets
        .into_iter()
        .map(|(label, hours)| Series {
            label: label.to_string(),
            points: hours
                .into_iter()
                .map(|(h, (sum, n))| (h as f64, unit(m, sum / n as f64)))
                .collect(),
        })
        .collect()
}

/// Gnuplot-style data: `# label` header per series, two blank lines between series.
pub fn render_series(kind: PlotKind, series: &[Series]) -> String {
    let mut out = format!("# {}\n", kind.axes());
    for (i, s) in series.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "# {}", s.label);
        for (x, y) in &s.points {
            let _ = writeln!(out, "{x} {y}");
        }
    }
    out
}

fn write_atomic(dir: &Path, name: &str, content: &str) -> Result<PathBuf, OutputError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| OutputError::Io { path, source }
    };
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(dir))?;
    tmp.write_all(content.as_bytes()).map_err(io(&target))?;
    tmp.persist(&target).map_err(|e| io(&target)(e.error))?;
    Ok(target)
}

fn write_all(dir: &Path, files: Vec<(&str, String)>) -> Result<Vec<PathBuf>, OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    files
        .into_iter()
        .map(|(name, content)| write_atomic(dir, name, &content))
        .collect()
}

/// `summary.csv`, `rejections.csv`, `jobs.csv` and both plot series for one run.
pub fn write_metrics_csv(m: &RunMetrics, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    let runs = std::slice::from_ref(m);
    let mut files = vec![
        (SUMMARY_CSV, summary_csv(m)),
        (REJECTIONS_CSV, rejections_csv(runs)),
        (JOBS_CSV, jobs_csv(m)),
    ];
    for kind in [PlotKind::HourlyResponse, PlotKind::RejectionsBar] {
        files.push((kind.file_name(), render_series(kind, &emit_plot_series(runs, kind))));
    }
    write_all(dir, files)
}

/// Aggregated `rejections.csv` and the rejection plot across sweep levels.
pub fn write_sweep_csv(runs: &[RunMetrics], dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    let kind = PlotKind::RejectionsBar;
    write_all(
        dir,
        vec![
            (REJECTIONS_CSV, rejections_csv(runs)),
            (kind.file_name(), render_series(kind, &emit_plot_series(runs, kind))),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::TimeUnit;

    #[test]
    fn empty_run_writes_headers_only() {
        let m = RunMetrics::empty("empty", TimeUnit::Ms);
        assert_eq!(summary_csv(&m), "metric,avg,min,max\n");
        assert_eq!(rejections_csv(std::slice::from_ref(&m)), "submitted,rejected,percent\n");
        assert_eq!(jobs_csv(&m), "id,arrival,start,finish,wait,vm_history,state\n");
        assert!(emit_plot_series(std::slice::from_ref(&m), PlotKind::HourlyResponse).is_empty());
        assert!(emit_plot_series(&[m], PlotKind::RejectionsBar).is_empty());
    }

    #[test]
    fn unknown_plot_kind() {
        assert!(matches!("pie".parse::<PlotKind>(), Err(OutputError::UnknownKind(_))));
        assert_eq!("rejections_bar".parse::<PlotKind>().unwrap(), PlotKind::RejectionsBar);
    }

    #[test]
    fn series_rendering() {
        let s = vec![
            Series {
                label: "a".into(),
                points: vec![(0.0, 1.5), (1.0, 2.0)],
            },
            Series {
                label: "b".into(),
                points: vec![(0.0, 3.0)],
            },
        ];
        assert_eq!(
            render_series(PlotKind::HourlyResponse, &s),
            "# x=arrival hour, y=average response time\n# a\n0 1.5\n1 2\n\n\n# b\n0 3\n"
        );
    }
}
