//! End-to-end testbed and the experiments run on it.

mod experiment;
mod probe;
mod report;
mod stats;
mod testbed;

pub use experiment::{run_toggle_experiment, ExperimentConfig, Measure};
pub use probe::{run_watchdog_probe, ProbeConfig, ProbeReport};
pub use report::{export_report, export_reports, ExperimentReport, ReportFormat, SCHEMA_VERSION};
pub use stats::LatencyStats;
pub use testbed::{ChannelCounters, StepInfo, StepKind, Testbed, TestbedConfig};

use thiserror::Error;

use crate::channels::ChannelError;
use crate::gate::GateError;
use crate::protocol::ProtocolError;
use crate::sim::{SimError, SimTime};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid experiment config: {0}")]
    Config(String),
    /// The output never reached the expected state in time.
    #[error("aborted at toggle {toggle}: {phase} did not complete within {waited}")]
    Aborted {
        toggle: u32,
        phase: &'static str,
        waited: SimTime,
    },
}
