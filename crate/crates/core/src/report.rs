//! Recomputes run statistics from raw generation records and checks them
//! against the stored summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use walkdir::WalkDir;

use crate::domain::ObjectivePair;
use crate::moea::Selector;
use crate::runner::{population_hypervolume, RecordLine, Stats, Summary};

/// Largest tolerated gap between recomputed and stored statistics.
pub const TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no summary.json found under {0}")]
    NoRuns(PathBuf),
    #[error("bad records:\n{}", .0.iter().map(|(p, m)| format!("  {}: {m}", p.display())).collect::<Vec<_>>().join("\n"))]
    BadRecords(Vec<(PathBuf, String)>),
}

/// Statistics of one (pair, selector) experiment recomputed from records.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub pair: ObjectivePair,
    pub selector: Selector,
    /// Per-repetition hypervolume series, generation 0 first.
    pub curves: Vec<(usize, Vec<f64>)>,
    pub final_stats: Stats,
    pub running_max: Stats,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub experiments: Vec<ExperimentReport>,
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= TOLERANCE,
        (None, None) => true,
        _ => false,
    }
}

fn stats_match(a: &Stats, b: &Stats) -> bool {
    close(a.best, b.best)
        && close(a.worst, b.worst)
        && close(a.mean, b.mean)
        && close(a.std_dev, b.std_dev)
}

fn read_generation(path: &Path) -> Result<f64, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut survivors = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let rec: RecordLine =
            serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
        if rec.selected {
            survivors.push(rec.individual);
        }
    }
    if survivors.is_empty() {
        return Err("no selected individuals".into());
    }
    Ok(population_hypervolume(survivors.iter()))
}

fn load_experiment(
    summary_path: &Path,
    bad: &mut Vec<(PathBuf, String)>,
) -> Option<ExperimentReport> {
    let dir = summary_path.parent()?.to_path_buf();
    let summary: Summary = match fs::read_to_string(summary_path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(s) => s,
        Err(e) => {
            bad.push((summary_path.to_path_buf(), e));
            return None;
        }
    };

    let before = bad.len();
    let mut curves = Vec::new();
    for &rep in &summary.completed {
        let rep_dir = dir.join(format!("rep_{rep}"));
        let mut series = Vec::with_capacity(summary.generations + 1);
        for g in 0..=summary.generations {
            let path = rep_dir.join(format!("gen_{g}.jsonl"));
            match read_generation(&path) {
                Ok(hv) => series.push(hv),
                Err(e) => bad.push((path, e)),
            }
        }
        curves.push((rep, series));
    }
    if bad.len() > before {
        return None;
    }

    let finals: Vec<f64> = curves
        .iter()
        .map(|(_, s)| *s.last().expect("non-empty"))
        .collect();
    let maxima: Vec<f64> = curves
        .iter()
        .map(|(_, s)| s.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let report = ExperimentReport {
        dir,
        pair: summary.pair,
        selector: summary.selector,
        final_stats: Stats::of(&finals),
        running_max: Stats::of(&maxima),
        curves,
    };
    let per_rep_ok = finals.len() == summary.final_hypervolumes.len()
        && finals
            .iter()
            .zip(&summary.final_hypervolumes)
            .all(|(a, b)| (a - b).abs() <= TOLERANCE)
        && maxima
            .iter()
            .zip(&summary.max_hypervolumes)
            .all(|(a, b)| (a - b).abs() <= TOLERANCE);
    if !per_rep_ok
        || !stats_match(&report.final_stats, &summary.final_stats)
        || !stats_match(&report.running_max, &summary.running_max)
    {
        bad.push((
            summary_path.to_path_buf(),
            "recomputed hypervolumes disagree with summary".into(),
        ));
        return None;
    }
    Some(report)
}

/// Finds every `summary.json` below `root` and verifies it against the
/// generation records next to it.
pub fn build_report(root: &Path) -> Result<Report, ReportError> {
    let mut summaries: Vec<PathBuf> = WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.file_name() == "summary.json")
        .map(|e| e.into_path())
        .collect();
    summaries.sort();
    if summaries.is_empty() {
        return Err(ReportError::NoRuns(root.to_path_buf()));
    }

    let mut bad = Vec::new();
    let experiments: Vec<ExperimentReport> = summaries
        .iter()
        .filter_map(|p| load_experiment(p, &mut bad))
        .collect();
    if !bad.is_empty() {
        return Err(ReportError::BadRecords(bad));
    }
    Ok(Report { experiments })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn raw(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl Report {
    /// Fixed-width table, one row per experiment.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:<9} {:>4}  {:>9} {:>9} {:>9} {:>9}  {:>9} {:>9} {:>9} {:>9}",
            "pair",
            "selector",
            "reps",
            "best",
            "worst",
            "mean",
            "std",
            "max.best",
            "max.worst",
            "max.mean",
            "max.std"
        );
        for e in &self.experiments {
            let (f, m) = (&e.final_stats, &e.running_max);
            let _ = writeln!(
                out,
                "{:<18} {:<9} {:>4}  {:>9} {:>9} {:>9} {:>9}  {:>9} {:>9} {:>9} {:>9}",
                e.pair.to_string(),
                e.selector.name(),
                e.curves.len(),
                cell(f.best),
                cell(f.worst),
                cell(f.mean),
                cell(f.std_dev),
                cell(m.best),
                cell(m.worst),
                cell(m.mean),
                cell(m.std_dev),
            );
        }
        out
    }

    pub fn report_csv(&self) -> String {
        let mut out = String::from(
            "pair,selector,repetitions,best,worst,mean,std_dev,max_best,max_worst,max_mean,max_std_dev\n",
        );
        for e in &self.experiments {
            let (f, m) = (&e.final_stats, &e.running_max);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                e.pair,
                e.selector,
                e.curves.len(),
                raw(f.best),
                raw(f.worst),
                raw(f.mean),
                raw(f.std_dev),
                raw(m.best),
                raw(m.worst),
                raw(m.mean),
                raw(m.std_dev),
            );
        }
        out
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from("pair,selector,repetition,generation,hypervolume\n");
        for e in &self.experiments {
            for (rep, series) in &e.curves {
                for (g, hv) in series.iter().enumerate() {
                    let _ = writeln!(out, "{},{},{rep},{g},{hv}", e.pair, e.selector);
                }
            }
        }
        out
    }
}
