//! Statistical radio link models.
//!
//! A link drops each frame independently with `loss_probability`. A frame
//! that survives arrives after `airtime + base_latency + jitter`, where the
//! jitter is log-normal: `jitter_scale_us * exp(jitter_sigma * Z)` with
//! `Z ~ N(0, 1)`. A zero scale disables jitter. The return path of a
//! bidirectional link uses the same parameters as the forward path.

mod calibrate;
mod scenario;

pub use calibrate::{
    calibrate_scenario, initial_guess, Calibrated, CalibrationError, Coordinate, FitReport,
    SearchConfig,
};
pub use scenario::{preset, LatencyTargets, Provenance, ScenarioName, ScenarioSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{ChannelId, StatusFrame, FRAME_BYTES};
use crate::sim::{RandomSource, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    #[serde(rename = "id")]
    pub channel: ChannelId,
    pub enabled: bool,
    pub loss_probability: f64,
    #[serde(rename = "base_latency_us")]
    pub base_latency: SimTime,
    pub jitter_sigma: f64,
    pub jitter_scale_us: f64,
    #[serde(rename = "airtime_us")]
    pub airtime_per_frame: SimTime,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("transmit on disabled channel {0}")]
    Disabled(ChannelId),
    #[error("frame for {frame} handed to the {link} link")]
    Mismatch { frame: ChannelId, link: ChannelId },
    #[error("invalid channel spec for {channel}: {reason}")]
    InvalidSpec { channel: ChannelId, reason: String },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("payload must be at least one byte")]
    EmptyPayload,
    #[error("preset json: {0}")]
    Json(String),
}

impl ChannelSpec {
    /// Lossless, instantaneous link.
    pub fn ideal(channel: ChannelId) -> Self {
        Self {
            channel,
            enabled: true,
            loss_probability: 0.0,
            base_latency: SimTime::ZERO,
            jitter_sigma: 0.0,
            jitter_scale_us: 0.0,
            airtime_per_frame: SimTime::ZERO,
        }
    }

    pub fn disabled(channel: ChannelId) -> Self {
        Self {
            enabled: false,
            ..Self::ideal(channel)
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let invalid = |reason: &str| ChannelError::InvalidSpec {
            channel: self.channel,
            reason: reason.to_string(),
        };
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(invalid("loss_probability outside [0, 1]"));
        }
        if !self.jitter_sigma.is_finite() || self.jitter_sigma < 0.0 {
            return Err(invalid("jitter_sigma must be finite and non-negative"));
        }
        if !self.jitter_scale_us.is_finite() || self.jitter_scale_us < 0.0 {
            return Err(invalid("jitter_scale_us must be finite and non-negative"));
        }
        Ok(())
    }

    /// Fixed part of the delivery delay.
    pub fn fixed_delay(&self) -> SimTime {
        self.airtime_per_frame + self.base_latency
    }

    fn jitter(&self, rng: &mut RandomSource) -> SimTime {
        if self.jitter_scale_us == 0.0 {
            return SimTime::ZERO;
        }
        let z = rng.standard_normal();
        let us = self.jitter_scale_us * (self.jitter_sigma * z).exp();
        // Clamp absurd tails (sigma large) to one minute.
        SimTime::from_us(us.round().min(60e6) as u64)
    }

    /// Sends `frame` at `now`. Returns its arrival time, or `None` if the
    /// frame was lost. Draws one uniform for the loss decision and, when
    /// delivered with jitter enabled, one normal.
    pub fn transmit(
        &self,
        frame: &StatusFrame,
        now: SimTime,
        rng: &mut RandomSource,
    ) -> Result<Option<SimTime>, ChannelError> {
        if !self.enabled {
            return Err(ChannelError::Disabled(self.channel));
        }
        if frame.channel != self.channel {
            return Err(ChannelError::Mismatch {
                frame: frame.channel,
                link: self.channel,
            });
        }
        if rng.bernoulli(self.loss_probability) {
            return Ok(None);
        }
        Ok(Some(now + self.fixed_delay() + self.jitter(rng)))
    }
}

/// Linear time-on-air model: a fixed per-frame overhead (preamble, header,
/// turnaround) plus a cost per payload byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AirtimeConfig {
    pub overhead_us: u64,
    pub per_byte_us: u64,
}

impl AirtimeConfig {
    /// Per-byte cost assumed for the slow link; only the total per frame is
    /// observable end to end.
    pub const SLOW_PER_BYTE_US: u64 = 1_024;

    /// Zero-duration configuration.
    pub const INSTANT: AirtimeConfig = AirtimeConfig {
        overhead_us: 0,
        per_byte_us: 0,
    };

    /// Configuration reproducing the airtime of the shipped slow-link preset
    /// for a standard status frame.
    pub fn calibrated() -> Self {
        let slow = preset(ScenarioName::LoRaOnly12m);
        let total = slow.channel(ChannelId::Slow).airtime_per_frame.as_us();
        Self::from_frame_airtime(total, FRAME_BYTES, Self::SLOW_PER_BYTE_US)
    }

    /// Splits a measured per-frame airtime into overhead and per-byte cost.
    pub fn from_frame_airtime(total_us: u64, payload_bytes: usize, per_byte_us: u64) -> Self {
        let bytes = payload_bytes.max(1) as u64;
        let per_byte_us = per_byte_us.min(total_us / bytes);
        Self {
            overhead_us: total_us - per_byte_us * bytes,
            per_byte_us,
        }
    }
}

pub fn lora_airtime(payload_bytes: usize, config: AirtimeConfig) -> Result<SimTime, ChannelError> {
    if payload_bytes == 0 {
        return Err(ChannelError::EmptyPayload);
    }
    Ok(SimTime::from_us(
        config.overhead_us + config.per_byte_us * payload_bytes as u64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Direction, EStopCommand};

    fn frame(channel: ChannelId) -> StatusFrame {
        StatusFrame {
            seq: 1,
            command: EStopCommand::Run,
            origin_time: SimTime::ZERO,
            channel,
            direction: Direction::SenderToReceiver,
        }
    }

    #[test]
    fn total_loss_never_delivers() {
        let spec = ChannelSpec {
            loss_probability: 1.0,
            ..ChannelSpec::ideal(ChannelId::FastA)
        };
        let mut rng = RandomSource::new(1);
        for _ in 0..10_000 {
            assert_eq!(
                spec.transmit(&frame(ChannelId::FastA), SimTime::ZERO, &mut rng),
                Ok(None)
            );
        }
    }

    #[test]
    fn deterministic_delay_is_a_sum() {
        let spec = ChannelSpec {
            airtime_per_frame: SimTime::from_ms(5),
            base_latency: SimTime::from_ms(3),
            ..ChannelSpec::ideal(ChannelId::FastB)
        };
        let mut rng = RandomSource::new(1);
        let now = SimTime::from_ms(100);
        assert_eq!(
            spec.transmit(&frame(ChannelId::FastB), now, &mut rng),
            Ok(Some(SimTime::from_ms(108)))
        );
    }

    // 10^5 Bernoulli(0.3) draws: the binomial standard error is
    // sqrt(0.3 * 0.7 / 1e5) = 0.00145, so ±0.01 is a ~7 sigma band.
    #[test]
    fn empirical_loss_matches_probability() {
        let spec = ChannelSpec {
            loss_probability: 0.3,
            ..ChannelSpec::ideal(ChannelId::Slow)
        };
        let mut rng = RandomSource::new(2024);
        let n = 100_000;
        let lost = (0..n)
            .filter(|_| {
                spec.transmit(&frame(ChannelId::Slow), SimTime::ZERO, &mut rng)
                    .unwrap()
                    .is_none()
            })
            .count();
        let fraction = lost as f64 / n as f64;
        assert!((fraction - 0.3).abs() < 0.01, "loss fraction {fraction}");
    }

    #[test]
    fn disabled_channel_is_an_error() {
        let spec = ChannelSpec::disabled(ChannelId::FastA);
        let mut rng = RandomSource::new(1);
        assert_eq!(
            spec.transmit(&frame(ChannelId::FastA), SimTime::ZERO, &mut rng),
            Err(ChannelError::Disabled(ChannelId::FastA))
        );
    }

    #[test]
    fn frame_channel_must_match_link() {
        let spec = ChannelSpec::ideal(ChannelId::FastA);
        let mut rng = RandomSource::new(1);
        assert!(matches!(
            spec.transmit(&frame(ChannelId::Slow), SimTime::ZERO, &mut rng),
            Err(ChannelError::Mismatch { .. })
        ));
    }

    #[test]
    fn jitter_is_non_negative_and_seeded() {
        let spec = ChannelSpec {
            jitter_sigma: 0.8,
            jitter_scale_us: 2_000.0,
            base_latency: SimTime::from_ms(1),
            ..ChannelSpec::ideal(ChannelId::FastA)
        };
        let draw = |seed| {
            let mut rng = RandomSource::new(seed);
            (0..100)
                .map(|_| {
                    spec.transmit(&frame(ChannelId::FastA), SimTime::ZERO, &mut rng)
                        .unwrap()
                        .unwrap()
                })
                .collect::<Vec<_>>()
        };
        let a = draw(9);
        assert_eq!(a, draw(9));
        assert!(a.iter().all(|&t| t >= SimTime::from_ms(1)));
        assert!(a.iter().any(|&t| t != a[0]));
    }

    #[test]
    fn airtime_grows_with_payload() {
        let cfg = AirtimeConfig {
            overhead_us: 200_000,
            per_byte_us: 1_024,
        };
        let a = lora_airtime(8, cfg).unwrap();
        let b = lora_airtime(16, cfg).unwrap();
        assert!(b > a);
        assert_eq!(lora_airtime(0, cfg), Err(ChannelError::EmptyPayload));
    }

    #[test]
    fn instant_airtime_reduces_to_base_latency() {
        let airtime = lora_airtime(FRAME_BYTES, AirtimeConfig::INSTANT).unwrap();
        let spec = ChannelSpec {
            airtime_per_frame: airtime,
            base_latency: SimTime::from_ms(4),
            ..ChannelSpec::ideal(ChannelId::Slow)
        };
        let mut rng = RandomSource::new(1);
        assert_eq!(
            spec.transmit(&frame(ChannelId::Slow), SimTime::ZERO, &mut rng),
            Ok(Some(SimTime::from_ms(4)))
        );
    }

    #[test]
    fn calibrated_airtime_reproduces_slow_preset() {
        let cfg = AirtimeConfig::calibrated();
        let slow = preset(ScenarioName::LoRaOnly12m);
        assert_eq!(
            lora_airtime(FRAME_BYTES, cfg).unwrap(),
            slow.channel(ChannelId::Slow).airtime_per_frame
        );
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = ChannelSpec::ideal(ChannelId::FastA);
        spec.loss_probability = 1.5;
        assert!(spec.validate().is_err());
        spec.loss_probability = 0.1;
        spec.jitter_sigma = f64::NAN;
        assert!(spec.validate().is_err());
    }
}
