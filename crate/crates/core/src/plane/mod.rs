//! Power distribution board: picks the input source among two battery
//! packs and an external 24 V supply, watches cell voltages, and budgets
//! the auxiliary 5 V / 12 V rails.
//!
//! Source policy:
//! - the external supply wins whenever it is present;
//! - otherwise the board stays on its current pack and only moves to the
//!   other one if that pack is higher by at least the hysteresis and the
//!   last pack change is at least `min_dwell` old;
//! - a pack with any cell under cutoff is never selected; losing the
//!   current pack to cutoff forces a move regardless of dwell;
//! - with no external supply and no eligible pack the board reports
//!   `NoSource`.
//!
//! Consumers must treat both the ~30 V battery bus and the 24 V external bus
//! as valid operating points.

mod auxiliary;
mod battery;

pub use auxiliary::{AuxBudget, AuxGrant, Rail};
pub use battery::{
    BatteryPack, Charge, DischargeOutcome, OcvCurve, PackConfig, PackId, CELLS_PER_PACK,
};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceSelection {
    External24V,
    PackA,
    PackB,
    NoSource,
}

impl SourceSelection {
    pub fn pack(self) -> Option<PackId> {
        match self {
            Self::PackA => Some(PackId::A),
            Self::PackB => Some(PackId::B),
            _ => None,
        }
    }

    fn from_pack(p: PackId) -> Self {
        match p {
            PackId::A => Self::PackA,
            PackId::B => Self::PackB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlaneError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("load current must be finite and non-negative, got {0}")]
    InvalidCurrent(f64),
    #[error("discharge step must be positive")]
    ZeroStep,
    #[error("aux request of {requested_w} W exceeds budget; {remaining_w} W remaining")]
    OverBudget { requested_w: f64, remaining_w: f64 },
    #[error("aux request must be finite and non-negative, got {0} W")]
    InvalidRequest(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdbConfig {
    pub cell_warning_v: f64,
    pub cell_cutoff_v: f64,
    pub switch_hysteresis_v: f64,
    #[serde(rename = "min_dwell_us")]
    pub min_dwell: SimTime,
    pub aux_budget_w: f64,
    pub aux_rails: Vec<Rail>,
    pub pack: PackConfig,
}

impl Default for PdbConfig {
    fn default() -> Self {
        Self {
            cell_warning_v: 3.3,
            cell_cutoff_v: 3.0,
            switch_hysteresis_v: 0.5,
            min_dwell: SimTime::from_secs(1),
            aux_budget_w: 50.0,
            aux_rails: vec![Rail::V5, Rail::V12],
            pack: PackConfig::default(),
        }
    }
}

impl PdbConfig {
    pub fn validate(&self) -> Result<(), PlaneError> {
        if self.cell_cutoff_v.partial_cmp(&self.cell_warning_v) != Some(std::cmp::Ordering::Less) {
            return Err(PlaneError::Config("cutoff must be below warning".into()));
        }
        if self.switch_hysteresis_v.is_nan() || self.switch_hysteresis_v <= 0.0 {
            return Err(PlaneError::Config("hysteresis must be positive".into()));
        }
        if self.aux_budget_w.is_nan() || self.aux_budget_w < 0.0 {
            return Err(PlaneError::Config("aux budget must be non-negative".into()));
        }
        self.pack.ocv.validate()
    }

    pub fn from_json(text: &str) -> Result<Self, PlaneError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| PlaneError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Per-cell warnings and per-pack cutoff status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MonitorReport {
    pub warnings: [[bool; CELLS_PER_PACK]; 2],
    /// Pack has a cell under cutoff and may not be selected.
    pub cutoff: [bool; 2],
}

impl MonitorReport {
    pub fn eligible(&self, pack: PackId) -> bool {
        !self.cutoff[pack.index()]
    }

    pub fn any_warning(&self, pack: PackId) -> bool {
        self.warnings[pack.index()].iter().any(|&w| w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdbState {
    pub selection: SourceSelection,
    pub external_present: bool,
    /// Time of the last change of battery pack.
    pub last_switch_time: Option<SimTime>,
    /// Pack the board is on, or returns to when the external supply goes.
    pub active_pack: Option<PackId>,
    pub warnings: [[bool; CELLS_PER_PACK]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneTraceRow {
    pub time_us: u64,
    pub selection: SourceSelection,
    pub pack_a_v: f64,
    pub pack_b_v: f64,
    pub external_present: bool,
}

#[derive(Debug, Clone)]
pub struct PowerPlane {
    config: PdbConfig,
    state: PdbState,
    aux: AuxBudget,
    trace: Option<Vec<PlaneTraceRow>>,
}

impl PowerPlane {
    pub fn new(config: PdbConfig) -> Result<Self, PlaneError> {
        config.validate()?;
        Ok(Self {
            aux: AuxBudget::new(config.aux_budget_w, config.aux_rails.clone()),
            config,
            state: PdbState {
                selection: SourceSelection::NoSource,
                external_present: false,
                last_switch_time: None,
                active_pack: None,
                warnings: [[false; CELLS_PER_PACK]; 2],
            },
            trace: None,
        })
    }

    pub fn config(&self) -> &PdbConfig {
        &self.config
    }

    pub fn state(&self) -> &PdbState {
        &self.state
    }

    pub fn selection(&self) -> SourceSelection {
        self.state.selection
    }

    pub fn aux(&mut self) -> &mut AuxBudget {
        &mut self.aux
    }

    /// Grants the batch of aux requests if their sum fits the budget.
    pub fn aux_draw(&mut self, requests: &[(Rail, f64)]) -> Result<AuxGrant, PlaneError> {
        self.aux.request(requests)
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    /// Flags cells under the warning threshold and packs with any cell under
    /// cutoff.
    pub fn monitor_cells(&mut self, packs: &[BatteryPack; 2]) -> MonitorReport {
        let mut report = MonitorReport::default();
        for pack in packs {
            let i = pack.id().index();
            for (c, v) in pack.cell_voltages().into_iter().enumerate() {
                report.warnings[i][c] = v < self.config.cell_warning_v;
                if v < self.config.cell_cutoff_v {
                    report.cutoff[i] = true;
                }
            }
        }
        self.state.warnings = report.warnings;
        report
    }

    /// Re-evaluates the input source at `now`. `packs` must be `[A, B]`.
    pub fn select_source(
        &mut self,
        packs: &[BatteryPack; 2],
        external_present: bool,
        now: SimTime,
    ) -> SourceSelection {
        debug_assert!(packs[0].id() == PackId::A && packs[1].id() == PackId::B);
        let report = self.monitor_cells(packs);
        self.state.external_present = external_present;
        let volts = [packs[0].pack_voltage(), packs[1].pack_voltage()];

        let next_pack = self.choose_pack(&report, volts, now);
        if next_pack != self.state.active_pack && next_pack.is_some() {
            self.state.last_switch_time = Some(now);
        }
        if next_pack.is_some() {
            self.state.active_pack = next_pack;
        }

        self.state.selection = if external_present {
            SourceSelection::External24V
        } else {
            next_pack.map_or(SourceSelection::NoSource, SourceSelection::from_pack)
        };
        if let Some(trace) = self.trace.as_mut() {
            trace.push(PlaneTraceRow {
                time_us: now.as_us(),
                selection: self.state.selection,
                pack_a_v: volts[0],
                pack_b_v: volts[1],
                external_present,
            });
        }
        self.state.selection
    }

    fn choose_pack(&self, report: &MonitorReport, volts: [f64; 2], now: SimTime) -> Option<PackId> {
        let eligible = |p: PackId| report.eligible(p);
        match self.state.active_pack {
            Some(cur) if eligible(cur) => {
                let other = cur.other();
                let dwell_ok = self
                    .state
                    .last_switch_time
                    .map_or(true, |t| now.saturating_sub(t) >= self.config.min_dwell);
                let better =
                    volts[other.index()] >= volts[cur.index()] + self.config.switch_hysteresis_v;
                if eligible(other) && better && dwell_ok {
                    Some(other)
                } else {
                    Some(cur)
                }
            }
            _ => match (eligible(PackId::A), eligible(PackId::B)) {
                (true, true) if volts[1] > volts[0] => Some(PackId::B),
                (true, _) => Some(PackId::A),
                (false, true) => Some(PackId::B),
                (false, false) => None,
            },
        }
    }

    pub fn trace(&self) -> &[PlaneTraceRow] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// `time_us,selection,pack_a_v,pack_b_v,external_present`
    pub fn write_trace_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.trace() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
