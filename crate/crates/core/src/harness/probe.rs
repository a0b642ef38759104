use serde::{Deserialize, Serialize};

use super::report::SCHEMA_VERSION;
use super::{HarnessError, LatencyStats, StepKind, Testbed, TestbedConfig};
use crate::channels::ScenarioSpec;
use crate::gate::OutputEdge;
use crate::protocol::EStopCommand;
use crate::sim::{RandomSource, SimTime};

const PROBE_STREAM: u64 = 3;

/// Repeatedly silences every link while running and records how long after
/// the last delivered frame the receiver and the output react.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub scenario: ScenarioSpec,
    pub probes: u32,
    pub seed: u64,
    pub dwell_min: SimTime,
    pub dwell_max: SimTime,
    /// Length of each silence. `None` keeps the links silent until the
    /// output drops.
    pub silence: Option<SimTime>,
    /// Start each silence right after a delivery instead of at a random
    /// instant.
    pub align_to_delivery: bool,
    pub abort_after: SimTime,
    pub keep_samples: bool,
    pub testbed: TestbedConfig,
}

impl ProbeConfig {
    pub fn new(scenario: ScenarioSpec) -> Self {
        Self {
            scenario,
            probes: 1_000,
            seed: 0,
            dwell_min: SimTime::from_ms(500),
            dwell_max: SimTime::from_ms(1_000),
            silence: None,
            align_to_delivery: false,
            abort_after: SimTime::from_secs(10),
            keep_samples: false,
            testbed: TestbedConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub schema_version: u32,
    pub scenario: String,
    pub probes: u32,
    pub seed: u64,
    pub silence_us: Option<u64>,
    pub align_to_delivery: bool,
    pub trips: u32,
    /// Last delivery to receiver watchdog expiry.
    pub watchdog_latency: Option<LatencyStats>,
    /// Last delivery to output off.
    pub output_latency: Option<LatencyStats>,
    pub events: u64,
}

fn restore(tb: &mut Testbed, cfg: &ProbeConfig, probe: u32) -> Result<(), HarnessError> {
    if tb.output_on() {
        return Ok(());
    }
    let deadline = tb.now() + cfg.abort_after;
    match tb.run_until_edge(OutputEdge::On, deadline)? {
        Some(_) => Ok(()),
        None => Err(HarnessError::Aborted {
            toggle: probe,
            phase: "restore",
            waited: cfg.abort_after,
        }),
    }
}

pub fn run_watchdog_probe(cfg: &ProbeConfig) -> Result<ProbeReport, HarnessError> {
    if cfg.probes == 0 || cfg.dwell_min > cfg.dwell_max {
        return Err(HarnessError::Config(
            "need at least one probe and dwell_min <= dwell_max".into(),
        ));
    }
    let mut tb = Testbed::new(&cfg.scenario, &cfg.testbed, cfg.seed)?;
    let mut rng = RandomSource::with_stream(cfg.seed, PROBE_STREAM);
    let mut watchdog = Vec::new();
    let mut output = Vec::new();
    let mut trips = 0;

    tb.set_command(EStopCommand::Run)?;
    for probe in 0..cfg.probes {
        restore(&mut tb, cfg, probe)?;
        let d = rng.uniform_u64(cfg.dwell_min.as_us(), cfg.dwell_max.as_us());
        tb.run_for(SimTime::from_us(d))?;
        restore(&mut tb, cfg, probe)?;

        if cfg.align_to_delivery {
            let limit = tb.now() + cfg.abort_after;
            loop {
                match tb.step(limit)? {
                    Some(info) if matches!(info.kind, StepKind::Delivered(_)) => break,
                    Some(_) => {}
                    None => {
                        return Err(HarnessError::Aborted {
                            toggle: probe,
                            phase: "align",
                            waited: cfg.abort_after,
                        })
                    }
                }
            }
        }

        tb.take_edges();
        tb.set_silenced(true);
        let end = tb.now() + cfg.silence.unwrap_or(cfg.abort_after);
        let mut tripped_at = None;
        let mut off_at = None;
        while let Some(info) = tb.step(end)? {
            if info.kind == StepKind::WatchdogTrip {
                tripped_at = Some(info.time);
            }
            if let Some(&(t, _)) = tb.take_edges().iter().find(|(_, e)| *e == OutputEdge::Off) {
                off_at = Some(t);
                break;
            }
        }
        match off_at {
            Some(off) => {
                trips += 1;
                let last = tb.last_delivery().unwrap_or(SimTime::ZERO);
                output.push(off - last);
                if let Some(t) = tripped_at {
                    watchdog.push(t - last);
                }
            }
            None if cfg.silence.is_none() => {
                return Err(HarnessError::Aborted {
                    toggle: probe,
                    phase: "watchdog",
                    waited: cfg.abort_after,
                });
            }
            None => tb.run_until(end)?,
        }
        tb.set_silenced(false);
        tb.resend()?;
    }

    Ok(ProbeReport {
        schema_version: SCHEMA_VERSION,
        scenario: cfg.scenario.name.clone(),
        probes: cfg.probes,
        seed: cfg.seed,
        silence_us: cfg.silence.map(SimTime::as_us),
        align_to_delivery: cfg.align_to_delivery,
        trips,
        watchdog_latency: LatencyStats::from_samples(&watchdog, cfg.keep_samples),
        output_latency: LatencyStats::from_samples(&output, cfg.keep_samples),
        events: tb.events_processed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_probe_trips_just_after_the_timeout() {
        let cfg = ProbeConfig {
            probes: 50,
            keep_samples: true,
            ..ProbeConfig::new(ScenarioSpec::ideal())
        };
        let r = run_watchdog_probe(&cfg).unwrap();
        assert_eq!(r.trips, 50);
        let wd = r.watchdog_latency.unwrap();
        assert!(wd.samples_us.unwrap().iter().all(|&s| s == 300_000));
        let out = r.output_latency.unwrap();
        assert!(out
            .samples_us
            .unwrap()
            .iter()
            .all(|&s| s > 300_000 && s <= 301_000));
    }

    #[test]
    fn short_silence_never_trips() {
        let cfg = ProbeConfig {
            probes: 50,
            silence: Some(SimTime::from_ms(299)),
            align_to_delivery: true,
            ..ProbeConfig::new(ScenarioSpec::ideal())
        };
        let r = run_watchdog_probe(&cfg).unwrap();
        assert_eq!(r.trips, 0);
        assert!(r.output_latency.is_none());
    }
}
