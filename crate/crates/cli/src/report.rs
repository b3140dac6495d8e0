//! Replay of stored run logs and the aggregate table shared with `ablate`.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use rosevo::evolution::{replay, MetricsReport, ReplayReport};
use rosevo::metrics::{mean, std_dev};
use rosevo::RunLog;

use crate::error::{Categorize, CliError, CliResult};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run logs, or directories searched for `runlog.jsonl`.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Directory for `curves.csv` and `summary.csv`.
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Pool all tasks per variant, e.g. for sweeps where every seed
    /// generates its own synthetic task.
    #[arg(long)]
    by_variant: bool,
}

/// One replayed log.
#[derive(Debug, Clone)]
pub struct Entry {
    pub path: PathBuf,
    pub task: String,
    pub variant: String,
    pub seed: u64,
    pub report: ReplayReport,
}

impl Entry {
    /// Metrics of a complete run, recomputed from its events.
    fn metrics(&self) -> Option<(f64, f64)> {
        if self.report.failed {
            return None;
        }
        Some((self.report.esr_avg?, self.report.ssd?))
    }
}

/// Aggregate over the runs of one (task, variant) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub task: String,
    pub variant: String,
    pub esr_avg_mean: Option<f64>,
    pub esr_avg_std: Option<f64>,
    pub ssd_mean: Option<f64>,
    pub runs: usize,
    pub failed: usize,
}

impl Row {
    pub fn all_failed(&self) -> bool {
        self.failed == self.runs
    }
}

/// Rows in order of first appearance. Within a cell runs are taken in seed
/// order, so the numbers do not depend on the order of `entries`.
pub fn aggregate(entries: &[Entry]) -> Vec<Row> {
    let mut cells: Vec<((String, String), Vec<&Entry>)> = Vec::new();
    for e in entries {
        let key = (e.task.clone(), e.variant.clone());
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(e),
            None => cells.push((key, vec![e])),
        }
    }
    cells
        .into_iter()
        .map(|((task, variant), mut members)| {
            members.sort_by_key(|e| e.seed);
            let ok: Vec<(f64, f64)> = members.iter().filter_map(|e| e.metrics()).collect();
            let esrs: Vec<f64> = ok.iter().map(|m| m.0).collect();
            let ssds: Vec<f64> = ok.iter().map(|m| m.1).collect();
            let some = !ok.is_empty();
            Row {
                task,
                variant,
                esr_avg_mean: some.then(|| mean(&esrs)),
                esr_avg_std: some.then(|| std_dev(&esrs)),
                ssd_mean: some.then(|| mean(&ssds)),
                runs: members.len(),
                failed: members.len() - ok.len(),
            }
        })
        .collect()
}

pub fn write_rows_csv(path: &Path, rows: &[Row]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).or_runtime(path.display())?;
    for row in rows {
        w.serialize(row).or_runtime(path.display())?;
    }
    w.flush().or_runtime(path.display())
}

/// Fixed-width text rendering of `rows`.
pub fn render_rows(rows: &[Row]) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut table = vec![[
        "task".to_string(),
        "variant".into(),
        "ESR_avg".into(),
        "std".into(),
        "SSD".into(),
        "runs".into(),
        "failed".into(),
    ]];
    for r in rows {
        table.push([
            r.task.clone(),
            r.variant.clone(),
            fmt(r.esr_avg_mean),
            fmt(r.esr_avg_std),
            fmt(r.ssd_mean),
            r.runs.to_string(),
            r.failed.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..7).map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| if c < 2 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Load and replay one log. A stored `metrics.json` next to the log is
/// compared as well.
pub fn replay_file(path: &Path) -> CliResult<Entry> {
    let log = RunLog::load(path).or_runtime(path.display())?;
    let mut report = replay(&log);
    let stored = path.with_file_name("metrics.json");
    if stored.exists() {
        let text = std::fs::read_to_string(&stored).or_runtime(stored.display())?;
        let stored: MetricsReport = serde_json::from_str(&text).or_runtime(stored.display())?;
        report.checks += 1;
        if report.esr_avg != Some(stored.esr_avg) || report.ssd != Some(stored.ssd) {
            report.mismatches.push(format!(
                "metrics.json: stored ESR_avg {} / SSD {}, recomputed {:?} / {:?}",
                stored.esr_avg, stored.ssd, report.esr_avg, report.ssd
            ));
        }
    }
    Ok(Entry {
        path: path.to_path_buf(),
        task: report.task_id.clone(),
        variant: report.variant.clone(),
        seed: report.seed,
        report,
    })
}

fn collect_logs(path: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if path.is_dir() {
        let mut children: Vec<PathBuf> = std::fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        children.sort();
        for child in children {
            if child.is_dir() {
                collect_logs(&child, found)?;
            } else if child.file_name().is_some_and(|n| n == "runlog.jsonl") {
                found.push(child);
            }
        }
        Ok(())
    } else if path.exists() {
        found.push(path.to_path_buf());
        Ok(())
    } else {
        Err(std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"))
    }
}

#[derive(Serialize)]
struct CurvePoint<'a> {
    task: &'a str,
    variant: &'a str,
    seed: u64,
    iteration: u32,
    best_success: f64,
}

pub fn report(args: &ReportArgs) -> CliResult<()> {
    let mut paths = Vec::new();
    for p in &args.paths {
        collect_logs(p, &mut paths).or_config(p.display())?;
    }
    if paths.is_empty() {
        return Err(CliError::config(anyhow::anyhow!("no run logs found")));
    }
    let entries: Vec<Entry> = paths.iter().map(|p| replay_file(p)).collect::<CliResult<_>>()?;

    let mut mismatched = 0;
    for e in &entries {
        if e.report.is_ok() {
            println!("replay OK        {} ({} checks)", e.path.display(), e.report.checks);
        } else {
            mismatched += 1;
            println!("replay MISMATCH  {}", e.path.display());
            for m in &e.report.mismatches {
                println!("    {m}");
            }
        }
    }

    std::fs::create_dir_all(&args.out).or_runtime(args.out.display())?;
    let curves = args.out.join("curves.csv");
    let mut w = csv::Writer::from_path(&curves).or_runtime(curves.display())?;
    for e in &entries {
        for &(iteration, best_success) in &e.report.iteration_bests {
            let point = CurvePoint { task: &e.task, variant: &e.variant, seed: e.seed, iteration, best_success };
            w.serialize(point).or_runtime(curves.display())?;
        }
    }
    w.flush().or_runtime(curves.display())?;
    let mut grouped = entries.clone();
    if args.by_variant {
        grouped.iter_mut().for_each(|e| e.task = "*".into());
    }
    let rows = aggregate(&grouped);
    write_rows_csv(&args.out.join("summary.csv"), &rows)?;
    println!();
    print!("{}", render_rows(&rows));

    if mismatched > 0 {
        return Err(CliError::Mismatch(mismatched));
    }
    Ok(())
}
