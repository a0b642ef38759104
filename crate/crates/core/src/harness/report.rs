use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ChannelCounters, LatencyStats, Measure, TestbedConfig};
use crate::channels::ScenarioSpec;

/// Bumped whenever a field changes meaning or is removed.
pub const SCHEMA_VERSION: u32 = 1;

/// Everything needed to reproduce a toggle experiment, plus its results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    pub toggles: u32,
    pub seed: u64,
    pub dwell_min_us: u64,
    pub dwell_max_us: u64,
    pub measure: Measure,
    pub testbed: TestbedConfig,
    pub release: Option<LatencyStats>,
    pub activate: Option<LatencyStats>,
    pub channels: Vec<ChannelCounters>,
    pub events: u64,
    pub sim_duration_us: u64,
}

impl ExperimentReport {
    /// The series a single-row summary shows: release unless only
    /// activation was measured.
    pub fn primary(&self) -> Option<&LatencyStats> {
        self.release.as_ref().or(self.activate.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format {other:?} (expected json or csv)")),
        }
    }
}

pub fn export_report(report: &ExperimentReport, format: ReportFormat) -> String {
    export_reports(std::slice::from_ref(report), format)
}

/// JSON is a pretty-printed array (a single object for one report). CSV has
/// one row per report with millisecond columns at 0.1 ms resolution.
pub fn export_reports(reports: &[ExperimentReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = if reports.len() == 1 {
                serde_json::to_string_pretty(&reports[0])
            } else {
                serde_json::to_string_pretty(reports)
            }
            .expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "scenario", "mean_ms", "std_ms", "max_ms", "min_ms", "count", "seed",
            ])
            .expect("in-memory write");
            for r in reports {
                let row = match r.primary() {
                    Some(s) => [
                        r.scenario.name.clone(),
                        format!("{:.1}", s.mean_ms),
                        format!("{:.1}", s.std_ms),
                        format!("{:.1}", s.max_ms),
                        format!("{:.1}", s.min_ms),
                        s.count.to_string(),
                        r.seed.to_string(),
                    ],
                    None => [
                        r.scenario.name.clone(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        "0".into(),
                        r.seed.to_string(),
                    ],
                };
                w.write_record(&row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
        }
    }
}
