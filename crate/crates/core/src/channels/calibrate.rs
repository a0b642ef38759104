//! Fits link parameters so that simulated release latency matches measured
//! statistics.
//!
//! The search runs the full toggle experiment for each candidate with a
//! fixed seed, so every evaluation sees the same random stream and the
//! objective is a deterministic function of the parameters. A coarse grid
//! over the loss probability picks a few starting basins, then coordinate
//! descent with step halving refines all selected coordinates from each
//! and the best result wins.
//!
//! When a scenario has fast links enabled, only the fast links are fitted
//! (both get identical parameters) and the slow link is taken as given.
//! Otherwise the slow link is fitted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChannelSpec, LatencyTargets, Provenance, ScenarioName, ScenarioSpec};
use crate::harness::{
    run_toggle_experiment, ExperimentConfig, HarnessError, Measure, TestbedConfig,
};
use crate::protocol::ChannelId;
use crate::sim::SimTime;

/// A tunable link parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coordinate {
    Loss,
    BaseLatency,
    JitterScale,
    JitterSigma,
    Airtime,
}

impl Coordinate {
    fn get(self, c: &ChannelSpec) -> f64 {
        match self {
            Coordinate::Loss => c.loss_probability,
            Coordinate::BaseLatency => c.base_latency.as_us() as f64,
            Coordinate::JitterScale => c.jitter_scale_us,
            Coordinate::JitterSigma => c.jitter_sigma,
            Coordinate::Airtime => c.airtime_per_frame.as_us() as f64,
        }
    }

    fn set(self, c: &mut ChannelSpec, v: f64) {
        let (lo, hi) = self.bounds();
        let v = v.clamp(lo, hi);
        match self {
            Coordinate::Loss => c.loss_probability = v,
            Coordinate::BaseLatency => c.base_latency = SimTime::from_us(v.round() as u64),
            Coordinate::JitterScale => c.jitter_scale_us = v.round(),
            Coordinate::JitterSigma => c.jitter_sigma = v,
            Coordinate::Airtime => c.airtime_per_frame = SimTime::from_us(v.round() as u64),
        }
    }

    fn bounds(self) -> (f64, f64) {
        match self {
            Coordinate::Loss => (0.0, 0.9),
            Coordinate::BaseLatency | Coordinate::Airtime => (0.0, 500_000.0),
            Coordinate::JitterScale => (0.0, 200_000.0),
            Coordinate::JitterSigma => (0.0, 2.5),
        }
    }

    fn initial_step(self) -> f64 {
        match self {
            Coordinate::Loss => 0.04,
            Coordinate::BaseLatency => 2_000.0,
            Coordinate::JitterScale => 2_000.0,
            Coordinate::JitterSigma => 0.2,
            Coordinate::Airtime => 8_000.0,
        }
    }

    fn min_step(self) -> f64 {
        match self {
            Coordinate::Loss => 0.002,
            Coordinate::JitterSigma => 0.01,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Toggles simulated per evaluation.
    pub toggles: u32,
    pub seed: u64,
    /// Outer coordinate-descent sweeps.
    pub max_iters: u32,
    /// A fit counts as converged only at or below this objective value.
    pub accept_error: f64,
    pub weight_mean: f64,
    pub weight_std: f64,
    pub weight_max: f64,
    pub coordinates: Vec<Coordinate>,
    /// Loss probabilities tried before the descent. Empty skips the grid.
    pub loss_grid: Vec<f64>,
    /// Descents started from the best grid points.
    pub starts: usize,
    pub testbed: TestbedConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            toggles: 1_000,
            seed: 0,
            max_iters: 40,
            accept_error: 0.05,
            weight_mean: 1.0,
            weight_std: 0.5,
            weight_max: 0.1,
            coordinates: vec![
                Coordinate::Loss,
                Coordinate::BaseLatency,
                Coordinate::JitterScale,
                Coordinate::JitterSigma,
            ],
            loss_grid: vec![0.0, 0.01, 0.03, 0.06, 0.1, 0.2, 0.3, 0.45],
            starts: 3,
            testbed: TestbedConfig::default(),
        }
    }
}

impl SearchConfig {
    /// Weighted squared relative error of `sim` against `targets`.
    pub fn objective(&self, sim: &LatencyTargets, targets: &LatencyTargets) -> f64 {
        let rel = |s: f64, t: f64| (s - t) / t.max(0.1);
        self.weight_mean * rel(sim.mean, targets.mean).powi(2)
            + self.weight_std * rel(sim.std, targets.std).powi(2)
            + self.weight_max * rel(sim.max, targets.max).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub targets: LatencyTargets,
    pub simulated: LatencyTargets,
    pub error: f64,
    pub converged: bool,
    pub iterations: u32,
    pub evaluations: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    /// The fitted scenario, with provenance attached.
    pub spec: ScenarioSpec,
    pub report: FitReport,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("calibration did not converge (best error {:.4})", .best.report.error)]
    NotConverged { best: Box<Calibrated> },
    #[error("invalid calibration setup: {0}")]
    Invalid(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// Hand-picked starting point for each scenario.
pub fn initial_guess(name: ScenarioName) -> ScenarioSpec {
    let fast = |loss: f64, base_ms: u64, scale_us: f64, sigma: f64| {
        ChannelId::ALL.map(|id| match id {
            ChannelId::Slow => super::preset(ScenarioName::LoRaOnly12m)
                .channel(ChannelId::Slow)
                .clone(),
            _ => ChannelSpec {
                channel: id,
                enabled: true,
                loss_probability: loss,
                base_latency: SimTime::from_ms(base_ms),
                jitter_sigma: sigma,
                jitter_scale_us: scale_us,
                airtime_per_frame: SimTime::from_us(300),
            },
        })
    };
    let channels = match name {
        ScenarioName::LineOfSight12m => fast(0.0, 3, 4_500.0, 0.7),
        ScenarioName::Obstructed3m => fast(0.02, 4, 2_000.0, 0.8),
        ScenarioName::StoneWall12m => fast(0.3, 12, 8_000.0, 0.9),
        ScenarioName::GlassDoor12m => fast(0.04, 5, 2_000.0, 0.7),
        ScenarioName::LoRaOnly12m => [
            ChannelSpec::disabled(ChannelId::FastA),
            ChannelSpec::disabled(ChannelId::FastB),
            ChannelSpec {
                channel: ChannelId::Slow,
                enabled: true,
                loss_probability: 0.0,
                base_latency: SimTime::from_ms(2),
                jitter_sigma: 0.5,
                jitter_scale_us: 6_000.0,
                airtime_per_frame: SimTime::from_ms(239),
            },
        ],
    };
    ScenarioSpec::from_channels(name.as_str(), channels).expect("initial guesses are valid")
}

fn fitted_channels(spec: &ScenarioSpec) -> Vec<ChannelId> {
    let fast: Vec<ChannelId> = [ChannelId::FastA, ChannelId::FastB]
        .into_iter()
        .filter(|&c| spec.channel(c).enabled)
        .collect();
    if fast.is_empty() {
        vec![ChannelId::Slow]
    } else {
        fast
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    x: Vec<f64>,
    spec: ScenarioSpec,
    error: f64,
    sim: LatencyTargets,
}

struct Search<'a> {
    base: &'a ScenarioSpec,
    targets: LatencyTargets,
    cfg: &'a SearchConfig,
    fitted: Vec<ChannelId>,
    evaluations: u32,
}

impl Search<'_> {
    fn build(&self, x: &[f64]) -> ScenarioSpec {
        let mut spec = self.base.clone();
        for &ch in &self.fitted {
            let c = spec.channel_mut(ch);
            for (coord, &v) in self.cfg.coordinates.iter().zip(x) {
                coord.set(c, v);
            }
        }
        spec
    }

    /// Coordinate descent with step halving. Returns the best point, the
    /// sweeps used and whether the steps bottomed out.
    fn descend(&mut self, start: Candidate) -> Result<(Candidate, u32, bool), CalibrationError> {
        let coords = &self.cfg.coordinates;
        let mut best = start;
        let mut steps: Vec<f64> = coords.iter().map(|c| c.initial_step()).collect();
        let mut iterations = 0;
        let mut settled = false;
        while iterations < self.cfg.max_iters && best.error > 0.0 {
            iterations += 1;
            let mut improved = false;
            for j in 0..coords.len() {
                for dir in [1.0, -1.0] {
                    let mut x = best.x.clone();
                    x[j] += dir * steps[j];
                    let spec = self.build(&x);
                    if spec == best.spec {
                        continue;
                    }
                    let (error, sim) = self.evaluate(&spec)?;
                    if error < best.error {
                        // Snap to what was actually simulated after rounding.
                        x[j] = coords[j].get(spec.channel(self.fitted[0]));
                        best = Candidate {
                            x,
                            spec,
                            error,
                            sim,
                        };
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                for (st, c) in steps.iter_mut().zip(coords) {
                    *st = (*st / 2.0).max(c.min_step());
                }
                if steps.iter().zip(coords).all(|(st, c)| *st <= c.min_step()) {
                    // One last sweep happened at the minimum step.
                    if settled {
                        break;
                    }
                    settled = true;
                }
            }
        }
        Ok((best, iterations, settled))
    }

    fn evaluate(&mut self, spec: &ScenarioSpec) -> Result<(f64, LatencyTargets), CalibrationError> {
        self.evaluations += 1;
        let exp = ExperimentConfig {
            toggles: self.cfg.toggles,
            seed: self.cfg.seed,
            measure: Measure::Release,
            testbed: self.cfg.testbed.clone(),
            ..ExperimentConfig::new(spec.clone())
        };
        match run_toggle_experiment(&exp) {
            Ok(report) => {
                let s = report.release.expect("release measured");
                let sim = LatencyTargets {
                    mean: s.mean_ms,
                    std: s.std_ms,
                    max: s.max_ms,
                };
                Ok((self.cfg.objective(&sim, &self.targets), sim))
            }
            // Parameters so bad the output never comes back.
            Err(HarnessError::Aborted { .. }) => Ok((
                f64::INFINITY,
                LatencyTargets {
                    mean: f64::NAN,
                    std: f64::NAN,
                    max: f64::NAN,
                },
            )),
            Err(e) => Err(e.into()),
        }
    }
}

/// Fits `base` to `targets`. Returns the best spec found, or
/// `NotConverged` carrying it when the fit is not good enough.
pub fn calibrate_scenario(
    base: &ScenarioSpec,
    targets: LatencyTargets,
    search: &SearchConfig,
) -> Result<Calibrated, CalibrationError> {
    base.validate().map_err(HarnessError::from)?;
    if search.coordinates.is_empty() || search.toggles == 0 {
        return Err(CalibrationError::Invalid(
            "need at least one coordinate and one toggle".into(),
        ));
    }
    if !(targets.mean > 0.0 && targets.std >= 0.0 && targets.max >= targets.mean) {
        return Err(CalibrationError::Invalid(format!(
            "implausible targets {targets:?}"
        )));
    }
    let fitted = fitted_channels(base);
    let mut s = Search {
        base,
        targets,
        cfg: search,
        fitted,
        evaluations: 0,
    };
    let coords = &search.coordinates;
    let template = base.channel(s.fitted[0]).clone();
    let x0: Vec<f64> = coords.iter().map(|c| c.get(&template)).collect();
    let spec0 = s.build(&x0);
    let (e0, sim0) = s.evaluate(&spec0)?;
    let mut starts = vec![Candidate {
        x: x0.clone(),
        spec: spec0,
        error: e0,
        sim: sim0,
    }];

    if let Some(li) = coords.iter().position(|&c| c == Coordinate::Loss) {
        for &loss in &search.loss_grid {
            let mut x = x0.clone();
            x[li] = loss;
            let spec = s.build(&x);
            if starts.iter().any(|c| c.spec == spec) {
                continue;
            }
            let (error, sim) = s.evaluate(&spec)?;
            starts.push(Candidate {
                x,
                spec,
                error,
                sim,
            });
        }
    }
    starts.sort_by(|a, b| a.error.total_cmp(&b.error));
    starts.truncate(search.starts.max(1));

    let mut best: Option<(Candidate, u32, bool)> = None;
    for start in starts {
        let (cand, iterations, settled) = s.descend(start)?;
        if best.as_ref().map_or(true, |(b, _, _)| cand.error < b.error) {
            best = Some((cand, iterations, settled));
        }
    }
    let (best, iterations, settled) = best.expect("at least one start");
    let Candidate {
        spec: mut best_spec,
        error: best,
        sim: best_sim,
        ..
    } = best;
    let done = best == 0.0 || settled;

    best_spec.provenance = Some(Provenance {
        targets,
        fit_error: best,
        seed: search.seed,
    });
    let converged = done && best <= search.accept_error;
    let result = Calibrated {
        spec: best_spec,
        report: FitReport {
            targets,
            simulated: best_sim,
            error: best,
            converged,
            iterations,
            evaluations: s.evaluations,
        },
    };
    if converged {
        Ok(result)
    } else {
        Err(CalibrationError::NotConverged {
            best: Box::new(result),
        })
    }
}
