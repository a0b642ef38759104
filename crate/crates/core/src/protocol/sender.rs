use super::{
    ChannelId, Direction, EStopCommand, LinkHealth, ProtocolError, ScheduleConfig, StatusFrame,
    WatchdogConfig,
};
use crate::sim::SimTime;

/// Handheld side of the link.
///
/// Every emission carries a fresh sequence number. A command change
/// transmits immediately on all enabled channels (one shared seq) and
/// restarts every periodic schedule at `now + period`.
#[derive(Debug, Clone)]
pub struct Sender {
    schedule: ScheduleConfig,
    watchdog: WatchdogConfig,
    enabled: [bool; 3],
    current_command: EStopCommand,
    next_seq: u32,
    next_emission: [Option<SimTime>; 3],
    last_echo: [Option<SimTime>; 2],
    last_echo_command: [Option<EStopCommand>; 2],
}

impl Sender {
    /// The sender stays silent until the first [`Sender::set_command`].
    pub fn new(
        schedule: ScheduleConfig,
        watchdog: WatchdogConfig,
        enabled: [bool; 3],
    ) -> Result<Self, ProtocolError> {
        schedule.validate()?;
        watchdog.validate()?;
        Ok(Self {
            schedule,
            watchdog,
            enabled,
            current_command: EStopCommand::HardStop,
            next_seq: 0,
            next_emission: [None; 3],
            last_echo: [None; 2],
            last_echo_command: [None; 2],
        })
    }

    pub fn current_command(&self) -> EStopCommand {
        self.current_command
    }

    pub fn is_enabled(&self, channel: ChannelId) -> bool {
        self.enabled[channel.index()]
    }

    pub fn next_seq(&self) -> u32 {
        self.next_seq
    }

    /// Earliest pending periodic emission across enabled channels.
    pub fn next_due(&self) -> Option<SimTime> {
        self.next_emission.iter().flatten().min().copied()
    }

    pub fn next_emission(&self, channel: ChannelId) -> Option<SimTime> {
        self.next_emission[channel.index()]
    }

    fn take_seq(&mut self) -> u32 {
        let seq = self.next_seq;
        self.next_seq = self
            .next_seq
            .checked_add(1)
            .expect("sequence space exhausted");
        seq
    }

    fn frame(&self, seq: u32, channel: ChannelId, now: SimTime) -> StatusFrame {
        StatusFrame {
            seq,
            command: self.current_command,
            origin_time: now,
            channel,
            direction: Direction::SenderToReceiver,
        }
    }

    /// Sets the command and emits one frame per enabled channel right away.
    /// Re-setting the same command re-emits with a new seq.
    pub fn set_command(&mut self, cmd: EStopCommand, now: SimTime) -> Vec<StatusFrame> {
        self.current_command = cmd;
        let seq = self.take_seq();
        let mut frames = Vec::with_capacity(3);
        for channel in ChannelId::ALL {
            if !self.is_enabled(channel) {
                continue;
            }
            frames.push(self.frame(seq, channel, now));
            self.next_emission[channel.index()] = Some(now + self.schedule.period(channel));
        }
        frames
    }

    /// Emits the periodic frame of every channel that is due at `now`.
    /// A late poll emits once per channel and skips the missed slots.
    pub fn poll(&mut self, now: SimTime) -> Vec<StatusFrame> {
        let mut frames = Vec::new();
        for channel in ChannelId::ALL {
            let idx = channel.index();
            let Some(due) = self.next_emission[idx] else {
                continue;
            };
            if due > now {
                continue;
            }
            let seq = self.take_seq();
            frames.push(self.frame(seq, channel, now));
            let period = self.schedule.period(channel);
            let mut next = due + period;
            while next <= now {
                next += period;
            }
            self.next_emission[idx] = Some(next);
        }
        frames
    }

    /// Records an echo from the receiver and returns the refreshed health of
    /// that link.
    pub fn on_echo(
        &mut self,
        frame: &StatusFrame,
        now: SimTime,
    ) -> Result<LinkHealth, ProtocolError> {
        if frame.direction != Direction::ReceiverToSender {
            return Err(ProtocolError::WrongDirection {
                expected: Direction::ReceiverToSender,
                found: frame.direction,
            });
        }
        if !frame.channel.is_bidirectional() {
            return Err(ProtocolError::EchoOnUnidirectional(frame.channel));
        }
        let idx = frame.channel.index();
        self.last_echo[idx] = Some(now);
        self.last_echo_command[idx] = Some(frame.command);
        Ok(self.link_health(frame.channel, now))
    }

    /// `Alive` iff an echo arrived on `channel` within the watchdog timeout.
    /// The slow channel has no return path and always reads `Dead`.
    pub fn link_health(&self, channel: ChannelId, now: SimTime) -> LinkHealth {
        if !channel.is_bidirectional() {
            return LinkHealth::Dead;
        }
        match self.last_echo[channel.index()] {
            Some(t) if now.saturating_sub(t) <= self.watchdog.timeout => LinkHealth::Alive,
            _ => LinkHealth::Dead,
        }
    }

    /// Robot-side effective command as last confirmed over `channel`.
    pub fn confirmed_command(&self, channel: ChannelId) -> Option<EStopCommand> {
        if !channel.is_bidirectional() {
            return None;
        }
        self.last_echo_command[channel.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL_ON: [bool; 3] = [true, true, true];

    fn sender(enabled: [bool; 3]) -> Sender {
        Sender::new(
            ScheduleConfig::default(),
            WatchdogConfig::default(),
            enabled,
        )
        .unwrap()
    }

    fn ms(v: u64) -> SimTime {
        SimTime::from_ms(v)
    }

    #[test]
    fn set_command_emits_on_every_enabled_channel() {
        let mut s = sender(ALL_ON);
        let frames = s.set_command(EStopCommand::Run, SimTime::ZERO);
        assert_eq!(frames.len(), 3);
        let channels: Vec<_> = frames.iter().map(|f| f.channel).collect();
        assert_eq!(
            channels,
            vec![ChannelId::FastA, ChannelId::FastB, ChannelId::Slow]
        );
        assert!(frames.iter().all(|f| f.seq == frames[0].seq));
        assert!(frames.iter().all(|f| f.command == EStopCommand::Run));
        assert!(frames.iter().all(|f| f.origin_time == SimTime::ZERO));
    }

    #[test]
    fn slow_only_configuration_emits_one_frame() {
        let mut s = sender([false, false, true]);
        let frames = s.set_command(EStopCommand::Run, SimTime::ZERO);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].channel, ChannelId::Slow);
    }

    #[test]
    fn repeated_set_increases_seq() {
        let mut s = sender(ALL_ON);
        let a = s.set_command(EStopCommand::Run, SimTime::ZERO);
        let b = s.set_command(EStopCommand::Run, ms(10));
        assert!(b[0].seq > a[0].seq);
    }

    #[test]
    fn one_second_of_periodic_traffic() {
        let mut s = sender(ALL_ON);
        s.set_command(EStopCommand::Run, SimTime::ZERO);
        let mut counts = [0usize; 3];
        while let Some(due) = s.next_due() {
            if due > SimTime::from_secs(1) {
                break;
            }
            for f in s.poll(due) {
                counts[f.channel.index()] += 1;
            }
        }
        assert_eq!(counts, [20, 20, 9]);
    }

    #[test]
    fn command_change_resets_phase() {
        let mut s = sender(ALL_ON);
        s.set_command(EStopCommand::Run, SimTime::ZERO);
        s.poll(ms(50));
        s.set_command(EStopCommand::HardStop, ms(70));
        assert!(s.poll(ms(100)).is_empty(), "old phase must not fire");
        assert!(s.poll(ms(119)).is_empty());
        let frames = s.poll(ms(120));
        assert_eq!(frames.len(), 2);
        assert!(frames.iter().all(|f| f.command == EStopCommand::HardStop));
        assert_eq!(s.next_emission(ChannelId::Slow), Some(ms(181)));
    }

    #[test]
    fn disabled_channel_never_emits() {
        let mut s = sender([true, false, true]);
        s.set_command(EStopCommand::Run, SimTime::ZERO);
        for t in (0..=2_000).step_by(10) {
            assert!(s.poll(ms(t)).iter().all(|f| f.channel != ChannelId::FastB));
        }
        assert_eq!(s.next_emission(ChannelId::FastB), None);
    }

    #[test]
    fn late_poll_emits_once_and_realigns() {
        let mut s = sender([true, false, false]);
        s.set_command(EStopCommand::Run, SimTime::ZERO);
        assert_eq!(s.poll(ms(175)).len(), 1);
        assert_eq!(s.next_emission(ChannelId::FastA), Some(ms(200)));
    }

    #[test]
    fn seq_strictly_increases_across_emissions() {
        let mut s = sender(ALL_ON);
        let mut last = None;
        let mut t = SimTime::ZERO;
        for i in 0..200u64 {
            let frames = if i % 17 == 0 {
                s.set_command(EStopCommand::ALL[(i % 3) as usize], t)
            } else {
                s.poll(t)
            };
            let mut seqs: Vec<u32> = frames.iter().map(|f| f.seq).collect();
            seqs.dedup();
            for seq in seqs {
                if let Some(prev) = last {
                    assert!(seq > prev);
                }
                last = Some(seq);
            }
            t += ms(13);
        }
    }

    fn echo(channel: ChannelId) -> StatusFrame {
        StatusFrame {
            seq: 0,
            command: EStopCommand::Run,
            origin_time: SimTime::ZERO,
            channel,
            direction: Direction::ReceiverToSender,
        }
    }

    #[test]
    fn echo_marks_link_alive() {
        let mut s = sender(ALL_ON);
        assert_eq!(s.link_health(ChannelId::FastA, ms(5)), LinkHealth::Dead);
        assert_eq!(
            s.on_echo(&echo(ChannelId::FastA), ms(5)),
            Ok(LinkHealth::Alive)
        );
        assert_eq!(
            s.confirmed_command(ChannelId::FastA),
            Some(EStopCommand::Run)
        );
    }

    #[test]
    fn missing_echo_marks_link_dead() {
        let mut s = sender(ALL_ON);
        s.on_echo(&echo(ChannelId::FastB), SimTime::ZERO).unwrap();
        assert_eq!(s.link_health(ChannelId::FastB, ms(300)), LinkHealth::Alive);
        assert_eq!(s.link_health(ChannelId::FastB, ms(301)), LinkHealth::Dead);
    }

    #[test]
    fn echo_on_slow_is_rejected() {
        let mut s = sender(ALL_ON);
        assert_eq!(
            s.on_echo(&echo(ChannelId::Slow), SimTime::ZERO),
            Err(ProtocolError::EchoOnUnidirectional(ChannelId::Slow))
        );
    }

    #[test]
    fn forward_frame_is_not_an_echo() {
        let mut s = sender(ALL_ON);
        let mut f = echo(ChannelId::FastA);
        f.direction = Direction::SenderToReceiver;
        assert!(matches!(
            s.on_echo(&f, SimTime::ZERO),
            Err(ProtocolError::WrongDirection { .. })
        ));
    }

    #[test]
    fn zero_period_rejected() {
        let schedule = ScheduleConfig {
            fast_period: SimTime::ZERO,
            ..Default::default()
        };
        assert!(Sender::new(schedule, WatchdogConfig::default(), ALL_ON).is_err());
    }
}
