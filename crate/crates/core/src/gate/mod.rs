//! The on-robot E-Stop board.
//!
//! The microcontroller's enable pin runs through a series chain of
//! hardware buttons to three high-side switches (drive, flippers,
//! manipulator). A branch conducts only while the pin is HIGH, every button
//! is closed and the branch has no latched overcurrent fault. `HardStop`
//! pulls the pin LOW, `Run` drives it HIGH and `SoftStop` leaves it alone
//! and only raises the motion-inhibit flag.
//!
//! Electrical transients are integrated at a fixed step. Once every branch
//! sits within the quiescence band of its equilibrium the gate stops asking
//! to be stepped, and later advances jump straight to the quasi-static
//! solution.

mod electrical;

pub use electrical::{BranchLoad, GateConfig, LimiterParams};

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::EStopCommand;
use crate::sim::SimTime;
use electrical::Circuit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BranchId {
    Drive,
    Flippers,
    Manipulator,
}

impl BranchId {
    pub const ALL: [BranchId; 3] = [Self::Drive, Self::Flippers, Self::Manipulator];

    pub fn index(self) -> usize {
        match self {
            Self::Drive => 0,
            Self::Flippers => 1,
            Self::Manipulator => 2,
        }
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InrushLimiterState {
    pub series_resistance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchState {
    pub branch: BranchId,
    pub conducting: bool,
    pub latched_fault: bool,
    pub reported_current: f64,
    pub output_voltage: f64,
    pub limiter: Option<InrushLimiterState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateState {
    pub command: EStopCommand,
    pub mcu_enable_pin: bool,
    /// `true` = pressed (open circuit).
    pub hw_buttons: Vec<bool>,
    pub motion_inhibit: bool,
    pub switches: Vec<SwitchState>,
    pub output_on: bool,
}

impl GateState {
    pub fn any_conducting(&self) -> bool {
        self.switches.iter().any(|s| s.conducting)
    }

    pub fn switch(&self, branch: BranchId) -> &SwitchState {
        &self.switches[branch.index()]
    }
}

/// Drive output crossing the detection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputEdge {
    /// Drive conducting and output at or above the threshold.
    On,
    /// Output fell below the threshold.
    Off,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GateError {
    #[error("invalid gate configuration: {0}")]
    Config(String),
    #[error("step duration must be positive")]
    ZeroStep,
    #[error("gate time {now} is ahead of requested {requested}")]
    TimeReversal { now: SimTime, requested: SimTime },
    #[error("no hardware button {0}")]
    NoSuchButton(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub time_us: u64,
    pub branch: BranchId,
    pub current_a: f64,
    pub voltage_v: f64,
}

#[derive(Debug, Clone)]
struct Branch {
    circuit: Circuit,
    limiter: Option<LimiterParams>,
    conducting: bool,
    latched_fault: bool,
    on_since: SimTime,
    cap_v: f64,
    current: f64,
    over_since: Option<SimTime>,
}

impl Branch {
    fn limiter_ohm(&self, now: SimTime) -> f64 {
        match (&self.limiter, self.conducting) {
            (Some(l), true) => l.resistance((now - self.on_since).as_us()),
            (Some(l), false) => l.r_cold_ohm,
            (None, _) => 0.0,
        }
    }

    fn refresh_current(&mut self, now: SimTime) {
        self.current = if self.conducting {
            self.circuit
                .switch_current(self.cap_v, self.limiter_ohm(now))
        } else {
            0.0
        };
    }

    fn is_settled(&self, now: SimTime, band_v: f64) -> bool {
        if self.conducting {
            let target = self.circuit.equilibrium(self.limiter_ohm(now));
            self.over_since.is_none() && (self.cap_v - target).abs() <= band_v
        } else {
            self.cap_v == 0.0
        }
    }

    fn snapshot(&self, now: SimTime) -> SwitchState {
        SwitchState {
            branch: self.circuit.load.branch,
            conducting: self.conducting,
            latched_fault: self.latched_fault,
            reported_current: self.current,
            output_voltage: self.cap_v,
            limiter: self.limiter.map(|_| InrushLimiterState {
                series_resistance: self.limiter_ohm(now),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerGate {
    config: GateConfig,
    now: SimTime,
    command: EStopCommand,
    pin_high: bool,
    buttons: Vec<bool>,
    motion_inhibit: bool,
    branches: Vec<Branch>,
    output_on: bool,
    edges: Vec<(SimTime, OutputEdge)>,
    trace: Option<Vec<TraceRow>>,
}

impl PowerGate {
    /// Powered down: pin LOW, all buttons closed, no faults.
    pub fn new(config: GateConfig) -> Result<Self, GateError> {
        config.validate().map_err(GateError::Config)?;
        let branches = config
            .branches
            .iter()
            .map(|load| Branch {
                circuit: Circuit {
                    bus_v: config.bus_voltage_v,
                    source_ohm: config.source_resistance_ohm,
                    load: *load,
                },
                limiter: load.limiter.then_some(config.limiter),
                conducting: false,
                latched_fault: false,
                on_since: SimTime::ZERO,
                cap_v: 0.0,
                current: 0.0,
                over_since: None,
            })
            .collect();
        Ok(Self {
            buttons: vec![false; config.hw_buttons],
            config,
            now: SimTime::ZERO,
            command: EStopCommand::HardStop,
            pin_high: false,
            motion_inhibit: true,
            branches,
            output_on: false,
            edges: Vec::new(),
            trace: None,
        })
    }

    pub fn config(&self) -> &GateConfig {
        &self.config
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn output_on(&self) -> bool {
        self.output_on
    }

    pub fn step_size(&self) -> SimTime {
        SimTime::from_us(self.config.step_us)
    }

    /// Starts recording every integration step for CSV export.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRow] {
        self.trace.as_deref().unwrap_or(&[])
    }

    fn chain_closed(&self) -> bool {
        self.buttons.iter().all(|pressed| !pressed)
    }

    /// Whether the enable path would let current flow, ignoring faults.
    pub fn enable_conditions_met(&self) -> bool {
        self.pin_high && self.chain_closed() && self.command != EStopCommand::HardStop
    }

    pub fn state(&self) -> GateState {
        GateState {
            command: self.command,
            mcu_enable_pin: self.pin_high,
            hw_buttons: self.buttons.clone(),
            motion_inhibit: self.motion_inhibit,
            switches: self.branches.iter().map(|b| b.snapshot(self.now)).collect(),
            output_on: self.output_on,
        }
    }

    /// Output edges detected since the last call, oldest first.
    pub fn take_edges(&mut self) -> Vec<(SimTime, OutputEdge)> {
        std::mem::take(&mut self.edges)
    }

    /// True while some branch is still in a transient and wants fixed-step
    /// integration.
    pub fn needs_step(&self) -> bool {
        let band = self.config.quiescence_fraction * self.config.bus_voltage_v;
        !self.branches.iter().all(|b| b.is_settled(self.now, band))
    }

    /// Applies a new effective command at `now`.
    pub fn apply(&mut self, cmd: EStopCommand, now: SimTime) -> Result<GateState, GateError> {
        self.advance_to(now)?;
        self.command = cmd;
        match cmd {
            EStopCommand::HardStop => {
                self.pin_high = false;
                self.motion_inhibit = true;
            }
            EStopCommand::SoftStop => self.motion_inhibit = true,
            EStopCommand::Run => {
                self.pin_high = true;
                self.motion_inhibit = false;
            }
        }
        self.update_conduction();
        Ok(self.state())
    }

    /// Opens (`pressed = true`) or closes one button of the series chain.
    pub fn set_button(
        &mut self,
        index: usize,
        pressed: bool,
        now: SimTime,
    ) -> Result<GateState, GateError> {
        if index >= self.buttons.len() {
            return Err(GateError::NoSuchButton(index));
        }
        self.advance_to(now)?;
        self.buttons[index] = pressed;
        self.update_conduction();
        Ok(self.state())
    }

    /// Latches a fault as if the switch had reported overcurrent.
    pub fn inject_fault(&mut self, branch: BranchId, now: SimTime) -> Result<GateState, GateError> {
        self.advance_to(now)?;
        self.latch(branch.index());
        Ok(self.state())
    }

    /// Clears a latched fault. Conduction resumes only if the enable path
    /// permits it. Resetting a healthy branch changes nothing.
    pub fn reset_fault(
        &mut self,
        branch: BranchId,
        now: SimTime,
    ) -> Result<SwitchState, GateError> {
        self.advance_to(now)?;
        let b = &mut self.branches[branch.index()];
        if b.latched_fault {
            b.latched_fault = false;
            b.over_since = None;
            self.update_conduction();
        }
        Ok(self.branches[branch.index()].snapshot(self.now))
    }

    /// Integrates for `dt` and returns the reported current per branch.
    pub fn step(&mut self, dt: SimTime) -> Result<[f64; 3], GateError> {
        if dt == SimTime::ZERO {
            return Err(GateError::ZeroStep);
        }
        self.advance_to(self.now + dt)?;
        Ok(self.currents())
    }

    pub fn currents(&self) -> [f64; 3] {
        BranchId::ALL.map(|b| self.branches[b.index()].current)
    }

    /// Brings the electrical state up to `t`: fixed steps while anything is
    /// in transient, then a direct jump.
    pub fn advance_to(&mut self, t: SimTime) -> Result<(), GateError> {
        if t < self.now {
            return Err(GateError::TimeReversal {
                now: self.now,
                requested: t,
            });
        }
        let step = self.step_size();
        while self.now < t {
            if !self.needs_step() {
                self.jump_to(t);
                break;
            }
            let dt = step.min(t - self.now);
            self.integrate(dt);
        }
        Ok(())
    }

    fn integrate(&mut self, dt: SimTime) {
        let start = self.now;
        let end = start + dt;
        let dt_s = dt.as_secs_f64();
        let band = self.config.quiescence_fraction * self.config.bus_voltage_v;
        for b in &mut self.branches {
            b.cap_v = if b.conducting {
                b.circuit.charge(b.cap_v, b.limiter_ohm(start), dt_s)
            } else {
                let v = b.circuit.discharge(b.cap_v, dt_s);
                if v <= band {
                    0.0
                } else {
                    v
                }
            };
        }
        self.now = end;
        for i in 0..self.branches.len() {
            self.branches[i].refresh_current(end);
            self.check_overcurrent(i);
        }
        self.detect_edge();
        self.record_trace();
    }

    fn jump_to(&mut self, t: SimTime) {
        self.now = t;
        for b in &mut self.branches {
            if b.conducting {
                b.cap_v = b.circuit.equilibrium(b.limiter_ohm(t));
            } else {
                b.cap_v = 0.0;
            }
            b.refresh_current(t);
        }
        self.detect_edge();
    }

    fn check_overcurrent(&mut self, i: usize) {
        let now = self.now;
        let threshold = self.config.trip_threshold_a;
        let trip_time = SimTime::from_us(self.config.trip_time_us);
        let b = &mut self.branches[i];
        if !b.conducting || b.current <= threshold {
            b.over_since = None;
            return;
        }
        let since = *b.over_since.get_or_insert(now);
        if now - since >= trip_time {
            self.latch(i);
        }
    }

    fn latch(&mut self, i: usize) {
        let b = &mut self.branches[i];
        b.latched_fault = true;
        b.conducting = false;
        b.over_since = None;
        b.current = 0.0;
    }

    fn update_conduction(&mut self) {
        let enable = self.enable_conditions_met();
        let now = self.now;
        for i in 0..self.branches.len() {
            let b = &mut self.branches[i];
            let want = enable && !b.latched_fault;
            if want && !b.conducting {
                b.conducting = true;
                b.on_since = now;
                b.over_since = None;
                b.refresh_current(now);
                self.check_overcurrent(i);
            } else if !want && b.conducting {
                b.conducting = false;
                b.over_since = None;
                b.current = 0.0;
            }
        }
        self.detect_edge();
        self.record_trace();
    }

    fn detect_edge(&mut self) {
        let threshold = self.config.detect_fraction * self.config.bus_voltage_v;
        let drive = &self.branches[BranchId::Drive.index()];
        let powered = drive.cap_v >= threshold && (self.output_on || drive.conducting);
        if powered != self.output_on {
            self.output_on = powered;
            let edge = if powered {
                OutputEdge::On
            } else {
                OutputEdge::Off
            };
            self.edges.push((self.now, edge));
        }
    }

    fn record_trace(&mut self) {
        let now = self.now.as_us();
        if let Some(trace) = self.trace.as_mut() {
            for b in &self.branches {
                trace.push(TraceRow {
                    time_us: now,
                    branch: b.circuit.load.branch,
                    current_a: b.current,
                    voltage_v: b.cap_v,
                });
            }
        }
    }

    /// Writes the recorded trace as `time_us,branch,current_a,voltage_v`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.trace() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
