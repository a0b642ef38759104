//! Simulation of a redundant-radio remote emergency stop for a tracked
//! robot: a handheld sender, three radio links, the on-robot receiver and
//! its power gate, plus the power distribution plane behind it.
//!
//! Everything runs on a single-threaded discrete-event engine with seeded
//! randomness, so a run is a pure function of its configuration and seed.

pub mod channels;
pub mod gate;
pub mod harness;
pub mod plane;
pub mod protocol;
pub mod sim;

pub use channels::{preset, ChannelSpec, LatencyTargets, ScenarioName, ScenarioSpec};
pub use gate::{GateConfig, OutputEdge, PowerGate};
pub use harness::{
    run_toggle_experiment, run_watchdog_probe, ExperimentConfig, ExperimentReport, HarnessError,
    Measure, ProbeConfig, Testbed,
};
pub use protocol::{ChannelId, EStopCommand, Receiver, Sender, StatusFrame};
pub use sim::{Engine, RandomSource, SimTime};
