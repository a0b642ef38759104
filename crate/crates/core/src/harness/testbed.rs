use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::channels::ScenarioSpec;
use crate::gate::{GateConfig, GateState, OutputEdge, PowerGate};
use crate::protocol::{
    ChannelId, Direction, EStopCommand, LinkHealth, Receiver, ScheduleConfig, Sender, StatusFrame,
    TransitionLog, WatchdogConfig,
};
use crate::sim::{Engine, EntityId, EventHandle, RandomSource, SimTime};

const SENDER: EntityId = EntityId(0);
const RECEIVER: EntityId = EntityId(1);
const GATE: EntityId = EntityId(2);

/// RNG stream used for link draws; other streams of the same seed are free
/// for experiment-level randomness.
pub(crate) const LINK_STREAM: u64 = 1;

#[derive(Debug, Clone)]
enum Msg {
    SenderTick,
    ToReceiver(StatusFrame),
    ToSender(StatusFrame),
    Watchdog,
    GateStep,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestbedConfig {
    pub schedule: ScheduleConfig,
    pub watchdog: WatchdogConfig,
    pub gate: GateConfig,
}

/// Per-channel traffic counters. Echo counts cover the receiver-to-sender
/// direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelCounters {
    pub channel: ChannelId,
    pub sent: u64,
    pub delivered: u64,
    pub lost: u64,
    pub silenced: u64,
    pub echoes_sent: u64,
    pub echoes_delivered: u64,
    pub echoes_lost: u64,
}

impl ChannelCounters {
    fn new(channel: ChannelId) -> Self {
        Self {
            channel,
            sent: 0,
            delivered: 0,
            lost: 0,
            silenced: 0,
            echoes_sent: 0,
            echoes_delivered: 0,
            echoes_lost: 0,
        }
    }
}

/// What the last processed event was.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    SenderTick,
    Delivered(StatusFrame),
    EchoDelivered(StatusFrame),
    WatchdogTrip,
    GateStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInfo {
    pub time: SimTime,
    pub kind: StepKind,
    pub effective: EStopCommand,
}

/// Sender, links, receiver and power gate on one event loop.
pub struct Testbed {
    engine: Engine<Msg>,
    scenario: ScenarioSpec,
    sender: Sender,
    receiver: Receiver,
    gate: PowerGate,
    rng: RandomSource,
    silenced: bool,
    tick: Option<EventHandle>,
    watchdog: Option<EventHandle>,
    gate_step: Option<EventHandle>,
    counters: [ChannelCounters; 3],
    last_delivery: Option<SimTime>,
    edges: Vec<(SimTime, OutputEdge)>,
    link_health: [LinkHealth; 2],
    log: Option<TransitionLog>,
}

impl Testbed {
    pub fn new(
        scenario: &ScenarioSpec,
        config: &TestbedConfig,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        scenario.validate()?;
        let enabled = scenario.enabled_mask();
        Ok(Self {
            engine: Engine::new(),
            sender: Sender::new(config.schedule, config.watchdog, enabled)?,
            receiver: Receiver::new(config.schedule, config.watchdog)?,
            gate: PowerGate::new(config.gate.clone())?,
            scenario: scenario.clone(),
            rng: RandomSource::with_stream(seed, LINK_STREAM),
            silenced: false,
            tick: None,
            watchdog: None,
            gate_step: None,
            counters: ChannelId::ALL.map(ChannelCounters::new),
            last_delivery: None,
            edges: Vec::new(),
            link_health: [LinkHealth::Dead; 2],
            log: None,
        })
    }

    /// Starts recording state transitions.
    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(TransitionLog::new);
    }

    pub fn log(&self) -> Option<&TransitionLog> {
        self.log.as_ref()
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub fn events_processed(&self) -> u64 {
        self.engine.processed()
    }

    pub fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    pub fn sender(&self) -> &Sender {
        &self.sender
    }

    pub fn receiver(&self) -> &Receiver {
        &self.receiver
    }

    pub fn gate(&self) -> &PowerGate {
        &self.gate
    }

    pub fn gate_state(&self) -> GateState {
        self.gate.state()
    }

    pub fn effective_command(&self) -> EStopCommand {
        self.receiver.effective_command()
    }

    pub fn counters(&self) -> &[ChannelCounters; 3] {
        &self.counters
    }

    /// Most recent delivery of a sender frame to the receiver.
    pub fn last_delivery(&self) -> Option<SimTime> {
        self.last_delivery
    }

    pub fn output_on(&self) -> bool {
        self.gate.output_on()
    }

    /// While silenced every transmission in both directions is dropped.
    /// Frames already in flight still arrive.
    pub fn set_silenced(&mut self, silenced: bool) {
        self.silenced = silenced;
    }

    pub fn is_silenced(&self) -> bool {
        self.silenced
    }

    /// Operator input on the handheld at the current time.
    pub fn set_command(&mut self, cmd: EStopCommand) -> Result<(), HarnessError> {
        let now = self.now();
        let before = self.sender.current_command();
        let frames = self.sender.set_command(cmd, now);
        if let Some(log) = self.log.as_mut() {
            log.record(now, "sender", before, cmd, "operator");
        }
        for frame in frames {
            self.transmit(frame)?;
        }
        self.reschedule_tick();
        Ok(())
    }

    /// Re-sends the current command immediately.
    pub fn resend(&mut self) -> Result<(), HarnessError> {
        self.set_command(self.sender.current_command())
    }

    /// Output edges seen since the last call.
    pub fn take_edges(&mut self) -> Vec<(SimTime, OutputEdge)> {
        std::mem::take(&mut self.edges)
    }

    /// Processes the next event at or before `limit`.
    pub fn step(&mut self, limit: SimTime) -> Result<Option<StepInfo>, HarnessError> {
        let Some(event) = self.engine.pop_until(limit) else {
            return Ok(None);
        };
        let now = event.fire_time;
        let kind = match event.payload {
            Msg::SenderTick => {
                self.tick = None;
                for frame in self.sender.poll(now) {
                    self.transmit(frame)?;
                }
                self.reschedule_tick();
                self.refresh_link_health(now, "timeout");
                StepKind::SenderTick
            }
            Msg::ToReceiver(frame) => {
                self.counters[frame.channel.index()].delivered += 1;
                self.last_delivery = Some(now);
                let before = self.receiver.effective_command();
                let echo = self.receiver.on_frame(&frame, now)?;
                if let Some(h) = self.watchdog.take() {
                    self.engine.cancel(h);
                }
                let deadline = self
                    .receiver
                    .watchdog_deadline()
                    .expect("deadline exists after a frame");
                self.watchdog = Some(self.engine.schedule(deadline, RECEIVER, Msg::Watchdog)?);
                self.on_effective_change(before, now, "frame")?;
                if let Some(echo) = echo {
                    self.transmit(echo)?;
                }
                StepKind::Delivered(frame)
            }
            Msg::ToSender(frame) => {
                self.counters[frame.channel.index()].echoes_delivered += 1;
                self.sender.on_echo(&frame, now)?;
                self.refresh_link_health(now, "echo");
                StepKind::EchoDelivered(frame)
            }
            Msg::Watchdog => {
                self.watchdog = None;
                let before = self.receiver.effective_command();
                self.receiver.watchdog_fire(now)?;
                self.on_effective_change(before, now, "watchdog")?;
                StepKind::WatchdogTrip
            }
            Msg::GateStep => {
                self.gate_step = None;
                self.gate.advance_to(now)?;
                self.collect_edges();
                self.reschedule_gate_step();
                StepKind::GateStep
            }
        };
        Ok(Some(StepInfo {
            time: now,
            kind,
            effective: self.receiver.effective_command(),
        }))
    }

    /// Processes everything up to and including `t` and leaves the clock
    /// at `t`.
    pub fn run_until(&mut self, t: SimTime) -> Result<(), HarnessError> {
        while self.step(t)?.is_some() {}
        self.engine.advance_to(t)?;
        Ok(())
    }

    pub fn run_for(&mut self, d: SimTime) -> Result<(), HarnessError> {
        self.run_until(self.now() + d)
    }

    /// Runs until the gate output reaches `edge` or `deadline` passes.
    /// Returns the edge time. Edges of the other kind seen on the way are
    /// discarded.
    pub fn run_until_edge(
        &mut self,
        edge: OutputEdge,
        deadline: SimTime,
    ) -> Result<Option<SimTime>, HarnessError> {
        loop {
            if let Some(t) = self.pop_edge(edge) {
                return Ok(Some(t));
            }
            if self.step(deadline)?.is_none() {
                self.engine.advance_to(deadline)?;
                return Ok(None);
            }
        }
    }

    fn pop_edge(&mut self, edge: OutputEdge) -> Option<SimTime> {
        let pos = self.edges.iter().position(|&(_, e)| e == edge)?;
        let (t, _) = self.edges[pos];
        self.edges.drain(..=pos);
        Some(t)
    }

    fn transmit(&mut self, frame: StatusFrame) -> Result<(), HarnessError> {
        let now = self.now();
        let idx = frame.channel.index();
        let echo = frame.direction == Direction::ReceiverToSender;
        let counters = &mut self.counters[idx];
        if echo {
            counters.echoes_sent += 1;
        } else {
            counters.sent += 1;
        }
        if self.silenced {
            counters.silenced += 1;
            return Ok(());
        }
        let spec = self.scenario.channel(frame.channel);
        match spec.transmit(&frame, now, &mut self.rng)? {
            Some(at) => {
                let (target, msg) = if echo {
                    (SENDER, Msg::ToSender(frame))
                } else {
                    (RECEIVER, Msg::ToReceiver(frame))
                };
                self.engine.schedule(at, target, msg)?;
            }
            None if echo => self.counters[idx].echoes_lost += 1,
            None => self.counters[idx].lost += 1,
        }
        Ok(())
    }

    fn reschedule_tick(&mut self) {
        if let Some(h) = self.tick.take() {
            self.engine.cancel(h);
        }
        if let Some(due) = self.sender.next_due() {
            let due = due.max(self.now());
            self.tick = Some(
                self.engine
                    .schedule(due, SENDER, Msg::SenderTick)
                    .expect("tick is never in the past"),
            );
        }
    }

    fn on_effective_change(
        &mut self,
        before: EStopCommand,
        now: SimTime,
        trigger: &str,
    ) -> Result<(), HarnessError> {
        let after = self.receiver.effective_command();
        if before == after {
            return Ok(());
        }
        if let Some(log) = self.log.as_mut() {
            log.record(now, "receiver", before, after, trigger);
        }
        self.gate.apply(after, now)?;
        self.collect_edges();
        self.reschedule_gate_step();
        Ok(())
    }

    fn collect_edges(&mut self) {
        for (t, edge) in self.gate.take_edges() {
            if let Some(log) = self.log.as_mut() {
                let (from, to) = match edge {
                    OutputEdge::On => ("off", "on"),
                    OutputEdge::Off => ("on", "off"),
                };
                log.record(t, "gate.output", from, to, "voltage");
            }
            self.edges.push((t, edge));
        }
    }

    fn reschedule_gate_step(&mut self) {
        if self.gate_step.is_some() || !self.gate.needs_step() {
            return;
        }
        let at = self.now() + self.gate.step_size();
        self.gate_step = Some(
            self.engine
                .schedule(at, GATE, Msg::GateStep)
                .expect("gate step is in the future"),
        );
    }

    fn refresh_link_health(&mut self, now: SimTime, trigger: &str) {
        for ch in [ChannelId::FastA, ChannelId::FastB] {
            let health = self.sender.link_health(ch, now);
            let slot = &mut self.link_health[ch.index()];
            if *slot != health {
                if let Some(log) = self.log.as_mut() {
                    log.record(
                        now,
                        format!("sender.link.{ch}"),
                        format!("{slot:?}"),
                        format!("{health:?}"),
                        trigger,
                    );
                }
                *slot = health;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{ChannelSpec, ScenarioSpec};

    fn ideal() -> Testbed {
        Testbed::new(&ScenarioSpec::ideal(), &TestbedConfig::default(), 1).unwrap()
    }

    #[test]
    fn release_on_ideal_links_restores_power() {
        let mut tb = ideal();
        tb.set_command(EStopCommand::Run).unwrap();
        let t = tb
            .run_until_edge(OutputEdge::On, SimTime::from_secs(1))
            .unwrap();
        assert_eq!(t, Some(SimTime::from_us(300)));
        assert_eq!(tb.effective_command(), EStopCommand::Run);
    }

    #[test]
    fn silence_trips_the_watchdog() {
        let mut tb = ideal();
        tb.set_command(EStopCommand::Run).unwrap();
        tb.run_until(SimTime::from_ms(500)).unwrap();
        tb.set_silenced(true);
        let last = tb.last_delivery().unwrap();
        let off = tb
            .run_until_edge(OutputEdge::Off, SimTime::from_secs(2))
            .unwrap()
            .unwrap();
        assert!(off > last + SimTime::from_ms(300));
        assert!(off <= last + SimTime::from_ms(301));
        assert_eq!(tb.effective_command(), EStopCommand::HardStop);

        tb.set_silenced(false);
        let on = tb
            .run_until_edge(OutputEdge::On, SimTime::from_secs(3))
            .unwrap();
        assert!(on.is_some());
    }

    #[test]
    fn echoes_keep_fast_links_alive() {
        let mut tb = ideal();
        tb.set_command(EStopCommand::Run).unwrap();
        tb.run_until(SimTime::from_secs(2)).unwrap();
        let now = tb.now();
        assert_eq!(
            tb.sender().link_health(ChannelId::FastA, now),
            LinkHealth::Alive
        );
        assert_eq!(
            tb.sender().link_health(ChannelId::FastB, now),
            LinkHealth::Alive
        );
        assert!(tb.counters()[0].echoes_delivered > 0);
        assert_eq!(tb.counters()[2].echoes_sent, 0);
    }

    #[test]
    fn lora_only_has_no_fast_traffic() {
        let mut tb = Testbed::new(
            &crate::channels::preset(crate::channels::ScenarioName::LoRaOnly12m),
            &TestbedConfig::default(),
            3,
        )
        .unwrap();
        tb.set_command(EStopCommand::Run).unwrap();
        tb.run_until(SimTime::from_secs(3)).unwrap();
        let c = tb.counters();
        assert_eq!(c[0].sent + c[1].sent, 0);
        assert_eq!(c[0].delivered + c[1].delivered, 0);
        assert!(c[2].delivered > 0);
    }

    #[test]
    fn transition_log_records_the_release() {
        let mut tb = ideal();
        tb.enable_log();
        tb.set_command(EStopCommand::Run).unwrap();
        tb.run_until(SimTime::from_ms(10)).unwrap();
        let entities: Vec<&str> = tb
            .log()
            .unwrap()
            .entries()
            .iter()
            .map(|t| t.entity.as_str())
            .collect();
        assert_eq!(&entities[..2], &["sender", "receiver"]);
        assert!(entities.contains(&"gate.output"));
    }

    #[test]
    fn lossy_link_counts_losses() {
        let mut scenario = ScenarioSpec::ideal();
        for ch in ChannelId::ALL {
            *scenario.channel_mut(ch) = ChannelSpec {
                loss_probability: 0.5,
                ..ChannelSpec::ideal(ch)
            };
        }
        let mut tb = Testbed::new(&scenario, &TestbedConfig::default(), 11).unwrap();
        tb.set_command(EStopCommand::Run).unwrap();
        tb.run_until(SimTime::from_secs(5)).unwrap();
        for c in tb.counters() {
            assert_eq!(c.sent, c.delivered + c.lost);
            assert!(c.lost > 0);
        }
    }
}
