//! On-disk layout of a run:
//!
//! ```text
//! <dir>/runlog.jsonl
//! <dir>/metrics.json          (complete runs only)
//! <dir>/set/iter_01.csv ...   (state,usage,contribution)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::runlog::{RunEvent, RunLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task_id: String,
    pub variant: String,
    pub esr_avg: f64,
    pub esr_list: Vec<f64>,
    pub ssd: f64,
    pub iterations: u32,
    pub seed: u64,
}

impl MetricsReport {
    pub fn from_log(log: &RunLog) -> Option<Self> {
        let (task_id, config, _) = log.started()?;
        log.events.iter().find_map(|e| match e {
            RunEvent::Metrics { esr_avg, esr_list, ssd, .. } => Some(MetricsReport {
                task_id: task_id.to_string(),
                variant: config.variant_name.clone(),
                esr_avg: *esr_avg,
                esr_list: esr_list.clone(),
                ssd: *ssd,
                iterations: config.iterations,
                seed: config.seed,
            }),
            _ => None,
        })
    }
}

/// Write the log, table snapshots and, for complete runs, the metrics
/// report under `dir`.
pub fn write_artifacts(dir: &Path, log: &RunLog) -> std::io::Result<Option<MetricsReport>> {
    std::fs::create_dir_all(dir.join("set"))?;
    std::fs::write(dir.join("runlog.jsonl"), log.to_jsonl())?;
    for (iteration, rows) in log.set_snapshots() {
        let mut csv = String::from("state,usage,contribution\n");
        for row in rows {
            csv.push_str(&format!("{},{},{}\n", row.state, row.usage, row.contribution));
        }
        std::fs::write(dir.join("set").join(format!("iter_{iteration:02}.csv")), csv)?;
    }
    let report = MetricsReport::from_log(log);
    if let Some(report) = &report {
        let json = serde_json::to_string_pretty(report).expect("report serializes");
        std::fs::write(dir.join("metrics.json"), json + "\n")?;
    }
    Ok(report)
}
