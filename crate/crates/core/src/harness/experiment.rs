use serde::{Deserialize, Serialize};

use super::report::{ExperimentReport, SCHEMA_VERSION};
use super::{HarnessError, LatencyStats, Testbed, TestbedConfig};
use crate::channels::ScenarioSpec;
use crate::gate::OutputEdge;
use crate::protocol::EStopCommand;
use crate::sim::{RandomSource, SimTime};

const DWELL_STREAM: u64 = 2;

/// Which latency the experiment reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    /// Run command to output on.
    Release,
    /// HardStop command to output off.
    Activate,
    Both,
}

impl Measure {
    fn release(self) -> bool {
        matches!(self, Measure::Release | Measure::Both)
    }

    fn activate(self) -> bool {
        matches!(self, Measure::Activate | Measure::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub toggles: u32,
    pub seed: u64,
    pub dwell_min: SimTime,
    pub dwell_max: SimTime,
    pub measure: Measure,
    /// A toggle whose output edge has not appeared after this long aborts
    /// the run.
    pub abort_after: SimTime,
    pub keep_samples: bool,
    pub testbed: TestbedConfig,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioSpec) -> Self {
        Self {
            scenario,
            toggles: 1_000,
            seed: 0,
            dwell_min: SimTime::from_ms(500),
            dwell_max: SimTime::from_ms(1_000),
            measure: Measure::Release,
            abort_after: SimTime::from_secs(10),
            keep_samples: false,
            testbed: TestbedConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.toggles == 0 {
            return Err(HarnessError::Config("toggles must be at least 1".into()));
        }
        if self.dwell_min > self.dwell_max {
            return Err(HarnessError::Config("dwell_min exceeds dwell_max".into()));
        }
        if self.dwell_min <= self.testbed.watchdog.timeout {
            return Err(HarnessError::Config(
                "dwell_min must exceed the watchdog timeout so each toggle starts settled".into(),
            ));
        }
        if self.abort_after == SimTime::ZERO {
            return Err(HarnessError::Config("abort_after must be positive".into()));
        }
        self.scenario.validate()?;
        Ok(())
    }
}

/// Drives the output into the requested state, waiting up to `limit`.
/// Returns the time of the edge, or `None` if the output was already there.
fn settle(
    tb: &mut Testbed,
    on: bool,
    limit: SimTime,
    toggle: u32,
    phase: &'static str,
) -> Result<Option<SimTime>, HarnessError> {
    // Edges from earlier phases (a watchdog trip during a dwell, say) must
    // not be mistaken for the response to the command just issued.
    tb.take_edges();
    if tb.output_on() == on {
        return Ok(None);
    }
    let edge = if on { OutputEdge::On } else { OutputEdge::Off };
    let deadline = tb.now() + limit;
    match tb.run_until_edge(edge, deadline)? {
        Some(t) => Ok(Some(t)),
        None => Err(HarnessError::Aborted {
            toggle,
            phase,
            waited: limit,
        }),
    }
}

fn dwell(
    tb: &mut Testbed,
    rng: &mut RandomSource,
    cfg: &ExperimentConfig,
) -> Result<(), HarnessError> {
    let d = rng.uniform_u64(cfg.dwell_min.as_us(), cfg.dwell_max.as_us());
    tb.run_for(SimTime::from_us(d))
}

/// Toggles the handheld between HardStop and Run and measures how long the
/// output takes to follow.
///
/// Each toggle sets HardStop, waits for the output to drop, dwells, sets
/// Run and waits for the output to come back, then dwells again. Release
/// latency is Run-command to output-on; activation latency is
/// HardStop-command to output-off. Dwells are uniform in
/// `[dwell_min, dwell_max]`.
pub fn run_toggle_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let mut tb = Testbed::new(&cfg.scenario, &cfg.testbed, cfg.seed)?;
    let mut rng = RandomSource::with_stream(cfg.seed, DWELL_STREAM);
    let mut release = Vec::with_capacity(cfg.toggles as usize);
    let mut activate = Vec::with_capacity(cfg.toggles as usize);

    tb.set_command(EStopCommand::Run)?;
    settle(&mut tb, true, cfg.abort_after, 0, "warm-up")?;
    dwell(&mut tb, &mut rng, cfg)?;

    for toggle in 0..cfg.toggles {
        // A watchdog trip during the previous dwell may have dropped the
        // output already; bring it back so every activation starts from on.
        settle(&mut tb, true, cfg.abort_after, toggle, "recovery")?;

        let t_stop = tb.now();
        tb.set_command(EStopCommand::HardStop)?;
        if let Some(t_off) = settle(&mut tb, false, cfg.abort_after, toggle, "activation")? {
            activate.push(t_off - t_stop);
        }
        dwell(&mut tb, &mut rng, cfg)?;

        let t_run = tb.now();
        tb.set_command(EStopCommand::Run)?;
        if let Some(t_on) = settle(&mut tb, true, cfg.abort_after, toggle, "release")? {
            release.push(t_on - t_run);
        }
        dwell(&mut tb, &mut rng, cfg)?;
    }

    let m = cfg.measure;
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        scenario: cfg.scenario.clone(),
        toggles: cfg.toggles,
        seed: cfg.seed,
        dwell_min_us: cfg.dwell_min.as_us(),
        dwell_max_us: cfg.dwell_max.as_us(),
        measure: m,
        testbed: cfg.testbed.clone(),
        release: if m.release() {
            LatencyStats::from_samples(&release, cfg.keep_samples)
        } else {
            None
        },
        activate: if m.activate() {
            LatencyStats::from_samples(&activate, cfg.keep_samples)
        } else {
            None
        },
        channels: tb.counters().to_vec(),
        events: tb.events_processed(),
        sim_duration_us: tb.now().as_us(),
    })
}
