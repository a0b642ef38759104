//! Remote E-Stop protocol state machines.
//!
//! The handheld [`Sender`] broadcasts its command on up to three redundant
//! channels, immediately on every change and periodically otherwise. The
//! robot-side [`Receiver`] latches the command of the freshest frame
//! (highest sequence number) and falls back to [`EStopCommand::HardStop`]
//! whenever no frame on any channel arrived within the watchdog timeout.
//! Both machines are pure: every operation takes an explicit `now`.

mod log;
mod receiver;
mod sender;
mod wire;

pub use log::{Transition, TransitionLog};
pub use receiver::Receiver;
pub use sender::Sender;
pub use wire::{decode_frame, encode_frame, WireError, FRAME_BYTES};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EStopCommand {
    /// Motor power is cut.
    HardStop,
    /// Power retained, motion inhibited.
    SoftStop,
    /// Power enabled, motion permitted.
    Run,
}

impl EStopCommand {
    pub const ALL: [EStopCommand; 3] = [Self::HardStop, Self::SoftStop, Self::Run];

    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Self::HardStop => 0,
            Self::SoftStop => 1,
            Self::Run => 2,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::HardStop),
            1 => Some(Self::SoftStop),
            2 => Some(Self::Run),
            _ => None,
        }
    }
}

impl fmt::Display for EStopCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::HardStop => "HardStop",
            Self::SoftStop => "SoftStop",
            Self::Run => "Run",
        })
    }
}

/// The three radio links. `FastA` stands in for the BLE link, `FastB` for
/// ESP-NOW and `Slow` for LoRa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelId {
    FastA,
    FastB,
    Slow,
}

impl ChannelId {
    pub const ALL: [ChannelId; 3] = [Self::FastA, Self::FastB, Self::Slow];

    pub fn index(self) -> usize {
        match self {
            Self::FastA => 0,
            Self::FastB => 1,
            Self::Slow => 2,
        }
    }

    /// `Slow` only carries sender-to-receiver traffic.
    pub fn is_bidirectional(self) -> bool {
        !matches!(self, Self::Slow)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FastA => "FastA",
            Self::FastB => "FastB",
            Self::Slow => "Slow",
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChannelId::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown channel {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    SenderToReceiver,
    ReceiverToSender,
}

/// One over-the-air status message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatusFrame {
    pub seq: u32,
    pub command: EStopCommand,
    pub origin_time: SimTime,
    pub channel: ChannelId,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// 20 Hz base rate of the two fast links.
    pub fast_period: SimTime,
    /// Roughly 9 Hz on the slow link.
    pub slow_period: SimTime,
    /// Minimum spacing between receiver echoes on one channel.
    pub echo_period: SimTime,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            fast_period: SimTime::from_ms(50),
            slow_period: SimTime::from_ms(111),
            echo_period: SimTime::from_ms(50),
        }
    }
}

impl ScheduleConfig {
    pub fn period(&self, channel: ChannelId) -> SimTime {
        match channel {
            ChannelId::FastA | ChannelId::FastB => self.fast_period,
            ChannelId::Slow => self.slow_period,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        for (name, p) in [
            ("fast_period", self.fast_period),
            ("slow_period", self.slow_period),
            ("echo_period", self.echo_period),
        ] {
            if p == SimTime::ZERO {
                return Err(ProtocolError::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatchdogConfig {
    pub timeout: SimTime,
}

impl Default for WatchdogConfig {
    fn default() -> Self {
        Self {
            timeout: SimTime::from_ms(300),
        }
    }
}

impl WatchdogConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.timeout == SimTime::ZERO {
            return Err(ProtocolError::InvalidConfig(
                "watchdog timeout must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Sender-side view of a bidirectional link, derived from echo arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkHealth {
    Alive,
    Dead,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("frame travelling {found:?} delivered to an endpoint expecting {expected:?}")]
    WrongDirection {
        expected: Direction,
        found: Direction,
    },
    #[error("echo received on unidirectional channel {0}")]
    EchoOnUnidirectional(ChannelId),
    #[error("watchdog fired at {now} but the last frame arrived at {last_rx}")]
    WatchdogNotExpired { now: SimTime, last_rx: SimTime },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
