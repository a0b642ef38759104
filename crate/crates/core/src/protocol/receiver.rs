use super::{
    ChannelId, Direction, EStopCommand, ProtocolError, ScheduleConfig, StatusFrame, WatchdogConfig,
};
use crate::sim::SimTime;

/// Robot side of the link.
///
/// Boots in `HardStop` with no frame seen. Any frame on any channel feeds
/// the single watchdog; only frames with a seq above everything seen so far
/// change the latched command.
#[derive(Debug, Clone)]
pub struct Receiver {
    schedule: ScheduleConfig,
    watchdog: WatchdogConfig,
    last_rx_time: Option<SimTime>,
    highest_seq_seen: Option<u32>,
    latched_command: EStopCommand,
    effective_command: EStopCommand,
    echo_seq: u32,
    last_echo: [Option<SimTime>; 2],
}

impl Receiver {
    pub fn new(schedule: ScheduleConfig, watchdog: WatchdogConfig) -> Result<Self, ProtocolError> {
        schedule.validate()?;
        watchdog.validate()?;
        Ok(Self {
            schedule,
            watchdog,
            last_rx_time: None,
            highest_seq_seen: None,
            latched_command: EStopCommand::HardStop,
            effective_command: EStopCommand::HardStop,
            echo_seq: 0,
            last_echo: [None; 2],
        })
    }

    pub fn effective_command(&self) -> EStopCommand {
        self.effective_command
    }

    pub fn latched_command(&self) -> EStopCommand {
        self.latched_command
    }

    pub fn last_rx_time(&self) -> Option<SimTime> {
        self.last_rx_time
    }

    pub fn highest_seq_seen(&self) -> Option<u32> {
        self.highest_seq_seen
    }

    pub fn timeout(&self) -> SimTime {
        self.watchdog.timeout
    }

    /// When the watchdog must fire if nothing else arrives.
    pub fn watchdog_deadline(&self) -> Option<SimTime> {
        self.last_rx_time.map(|t| t + self.watchdog.timeout)
    }

    /// True once `timeout` has elapsed since the last frame (or always,
    /// before the first frame).
    pub fn is_expired(&self, now: SimTime) -> bool {
        match self.last_rx_time {
            None => true,
            Some(t) => now.saturating_sub(t) >= self.watchdog.timeout,
        }
    }

    /// Handles one delivered frame and returns the echo to send back, if
    /// the channel has a return path and the echo schedule allows it.
    pub fn on_frame(
        &mut self,
        frame: &StatusFrame,
        now: SimTime,
    ) -> Result<Option<StatusFrame>, ProtocolError> {
        if frame.direction != Direction::SenderToReceiver {
            return Err(ProtocolError::WrongDirection {
                expected: Direction::SenderToReceiver,
                found: frame.direction,
            });
        }
        self.last_rx_time = Some(now);
        let before = self.effective_command;
        if self.highest_seq_seen.map_or(true, |h| frame.seq > h) {
            self.highest_seq_seen = Some(frame.seq);
            self.latched_command = frame.command;
        }
        self.effective_command = self.latched_command;

        if !frame.channel.is_bidirectional() {
            return Ok(None);
        }
        let idx = frame.channel.index();
        let due = match self.last_echo[idx] {
            None => true,
            Some(t) => now.saturating_sub(t) >= self.schedule.echo_period,
        };
        // A state change is confirmed right away instead of waiting for the
        // echo slot.
        if !due && before == self.effective_command {
            return Ok(None);
        }
        self.last_echo[idx] = Some(now);
        Ok(Some(self.echo(frame.channel, now)))
    }

    fn echo(&mut self, channel: ChannelId, now: SimTime) -> StatusFrame {
        let seq = self.echo_seq;
        self.echo_seq = self.echo_seq.wrapping_add(1);
        StatusFrame {
            seq,
            command: self.effective_command,
            origin_time: now,
            channel,
            direction: Direction::ReceiverToSender,
        }
    }

    /// Forces `HardStop` once the timeout has elapsed. The latched command
    /// is kept, so the next fresh frame restores it.
    pub fn watchdog_fire(&mut self, now: SimTime) -> Result<EStopCommand, ProtocolError> {
        if let Some(last_rx) = self.last_rx_time {
            if now.saturating_sub(last_rx) < self.watchdog.timeout {
                return Err(ProtocolError::WatchdogNotExpired { now, last_rx });
            }
        }
        self.effective_command = EStopCommand::HardStop;
        Ok(self.effective_command)
    }
}
