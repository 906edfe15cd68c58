//! Speedup tables across completed runs: quantiles, success counts and
//! per-task convergence series.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::TaskCategory;
use crate::util;

/// A task counts as improved above this speedup.
pub const SUCCESS_THRESHOLD: f64 = 1.01;

/// Linear-interpolation quantile over sorted data (inclusive method: the
/// `q`-quantile sits at position `(n - 1) * q`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupSummary {
    pub mean: f64,
    pub max: f64,
    pub p75: f64,
    pub p50: f64,
    pub p25: f64,
    pub success: usize,
    pub total: usize,
}

pub fn summarize(speedups: &[f64]) -> Option<SpeedupSummary> {
    if speedups.is_empty() {
        return None;
    }
    let mut sorted = speedups.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(SpeedupSummary {
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        max: sorted[sorted.len() - 1],
        p75: quantile(&sorted, 0.75),
        p50: quantile(&sorted, 0.5),
        p25: quantile(&sorted, 0.25),
        success: sorted.iter().filter(|s| **s > SUCCESS_THRESHOLD).count(),
        total: sorted.len(),
    })
}

/// Per-iteration progress of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub completed_searches: usize,
    pub failed_searches: usize,
    pub iteration_best: Option<f64>,
    pub added: usize,
    pub database_size: usize,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub category: TaskCategory,
    pub best_id: String,
    pub best_speedup: f64,
    pub series: Vec<IterationSummary>,
}

/// Written last into a run directory; its presence marks the run complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema: String,
    pub completed: bool,
    pub tasks: Vec<TaskResult>,
}

impl RunResult {
    pub const SCHEMA: &'static str = "kevo.run-result/1";
    pub const FILE: &'static str = "result.json";
}

/// `None` (with a warning) for directories without a completed result.
pub fn load_run(dir: &Path) -> Option<RunResult> {
    let path = dir.join(RunResult::FILE);
    match util::read_json::<RunResult>(&path) {
        Ok(r) if r.completed && r.schema == RunResult::SCHEMA => Some(r),
        Ok(_) => {
            tracing::warn!(dir = %dir.display(), "run is not complete; skipping");
            None
        }
        Err(e) => {
            tracing::warn!(dir = %dir.display(), error = %e, "no readable run result; skipping");
            None
        }
    }
}

fn category_name(c: TaskCategory) -> String {
    serde_json::to_value(c)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// `(group, summary)`, `all` first.
    pub groups: Vec<(String, SpeedupSummary)>,
    pub files: Vec<PathBuf>,
}

fn summary_row(out: &mut String, group: &str, s: &SpeedupSummary) {
    writeln!(
        out,
        "{group},{},{},{},{},{},{},{}",
        s.mean, s.max, s.p75, s.p50, s.p25, s.success, s.total
    )
    .expect("string write");
}

/// Every (run, task) best speedup is one data point. Writes `report.csv`,
/// `tasks.csv` and `series/<run>-<task>.csv` under `out_dir`.
pub fn write_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<Report> {
    let runs: Vec<(String, RunResult)> = run_dirs
        .iter()
        .filter_map(|d| {
            let name = d
                .file_name()
                .map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned());
            load_run(d).map(|r| (name, r))
        })
        .collect();
    let points: Vec<(&str, &TaskResult)> = runs
        .iter()
        .flat_map(|(name, r)| r.tasks.iter().map(move |t| (name.as_str(), t)))
        .collect();
    if points.is_empty() {
        return Err(Error::State("no completed runs to report".into()));
    }
    let mut groups = Vec::new();
    let all: Vec<f64> = points.iter().map(|(_, t)| t.best_speedup).collect();
    groups.push(("all".to_string(), summarize(&all).expect("non-empty")));
    let mut categories: Vec<TaskCategory> = points.iter().map(|(_, t)| t.category).collect();
    categories.sort_by_key(|c| category_name(*c));
    categories.dedup();
    if categories.len() > 1 {
        for c in categories {
            let s: Vec<f64> = points
                .iter()
                .filter(|(_, t)| t.category == c)
                .map(|(_, t)| t.best_speedup)
                .collect();
            groups.push((category_name(c), summarize(&s).expect("non-empty")));
        }
    }

    let mut files = Vec::new();
    let mut report = String::from("group,mean,max,p75,p50,p25,success,total\n");
    for (g, s) in &groups {
        summary_row(&mut report, g, s);
    }
    let path = out_dir.join("report.csv");
    util::write_string(&path, &report)?;
    files.push(path);

    let mut tasks = String::from("run,task,category,best_speedup\n");
    for (run, t) in &points {
        writeln!(tasks, "{run},{},{},{}", t.task_id, category_name(t.category), t.best_speedup).expect("string write");
        let mut series = String::from("iteration,best_so_far,iteration_best,database_size\n");
        for s in &t.series {
            let ib = s.iteration_best.map(|v| v.to_string()).unwrap_or_default();
            writeln!(series, "{},{},{ib},{}", s.iteration, s.best_so_far, s.database_size).expect("string write");
        }
        let p = out_dir.join("series").join(format!("{run}-{}.csv", t.task_id));
        util::write_string(&p, &series)?;
        files.push(p);
    }
    let p = out_dir.join("tasks.csv");
    util::write_string(&p, &tasks)?;
    files.push(p);
    Ok(Report { groups, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_runs() {
        let s = summarize(&[1.4, 1.0, 1.2]).unwrap();
        assert!((s.mean - 1.2).abs() < 1e-12);
        assert_eq!(s.max, 1.4);
        assert_eq!(s.p50, 1.2);
        assert!((s.p75 - 1.3).abs() < 1e-12);
        assert!((s.p25 - 1.1).abs() < 1e-12);
        assert_eq!((s.success, s.total), (2, 3));
    }

    #[test]
    fn single_value() {
        let s = summarize(&[1.07]).unwrap();
        assert_eq!([s.mean, s.max, s.p75, s.p50, s.p25], [1.07; 5]);
    }

    #[test]
    fn empty_is_none() {
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn quantile_matches_linear_rule() {
        let d = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(quantile(&d, 0.5), 3.0);
        assert_eq!(quantile(&d, 0.25), 1.75);
        assert_eq!(quantile(&d, 1.0), 8.0);
    }

    #[test]
    fn no_completed_runs_is_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_report(&[dir.path().to_path_buf()], dir.path()).is_err());
    }
}
