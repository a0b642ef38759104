use serde::{Deserialize, Serialize};

use super::PlaneError;
use crate::sim::SimTime;

pub const CELLS_PER_PACK: usize = 8;

/// Electric charge in nanocoulombs (= mA·µs). Integer so that coulomb
/// counting is exact.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Charge(pub u64);

impl Charge {
    pub const fn from_mah(mah: u64) -> Self {
        Charge(mah * 3_600_000_000)
    }

    pub fn as_mah(self) -> f64 {
        self.0 as f64 / 3.6e9
    }

    /// Charge moved by `milliamps` flowing for `dt`.
    pub fn from_current(milliamps: u64, dt: SimTime) -> Self {
        Charge(milliamps * dt.as_us())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PackId {
    A,
    B,
}

impl PackId {
    pub fn index(self) -> usize {
        match self {
            PackId::A => 0,
            PackId::B => 1,
        }
    }

    pub fn other(self) -> PackId {
        match self {
            PackId::A => PackId::B,
            PackId::B => PackId::A,
        }
    }
}

/// Piecewise-linear open-circuit voltage per cell over state of charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcvCurve {
    /// `(state_of_charge, volts)` with strictly increasing SoC from 0 to 1.
    pub points: Vec<(f64, f64)>,
}

impl Default for OcvCurve {
    fn default() -> Self {
        Self {
            points: vec![(0.0, 3.0), (0.5, 3.7), (1.0, 4.2)],
        }
    }
}

impl OcvCurve {
    pub fn validate(&self) -> Result<(), PlaneError> {
        let pts = &self.points;
        let ok = pts.len() >= 2
            && pts[0].0 == 0.0
            && pts[pts.len() - 1].0 == 1.0
            && pts.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1);
        if ok {
            Ok(())
        } else {
            Err(PlaneError::Config(
                "OCV curve must span SoC 0..1 with increasing SoC and non-decreasing voltage"
                    .into(),
            ))
        }
    }

    pub fn voltage(&self, soc: f64) -> f64 {
        let soc = soc.clamp(0.0, 1.0);
        let pts = &self.points;
        let i = pts
            .partition_point(|&(s, _)| s <= soc)
            .clamp(1, pts.len() - 1);
        let (s0, v0) = pts[i - 1];
        let (s1, v1) = pts[i];
        v0 + (v1 - v0) * (soc - s0) / (s1 - s0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackConfig {
    pub capacity_mah: u64,
    pub internal_resistance_ohm: f64,
    pub ocv: OcvCurve,
}

impl Default for PackConfig {
    fn default() -> Self {
        Self {
            capacity_mah: 6_750,
            internal_resistance_ohm: 0.04,
            ocv: OcvCurve::default(),
        }
    }
}

/// Two 4S packs in series: eight cells that deplete together.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryPack {
    id: PackId,
    config: PackConfig,
    capacity: Charge,
    remaining: Charge,
    cell_offsets: [f64; CELLS_PER_PACK],
    load_current_a: f64,
    undervoltage: bool,
}

/// What one discharge step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DischargeOutcome {
    /// Charge actually removed (less than requested when the pack ran dry).
    pub drawn: Charge,
    pub depleted: bool,
}

impl BatteryPack {
    pub fn full(id: PackId, config: PackConfig) -> Result<Self, PlaneError> {
        config.ocv.validate()?;
        if config.capacity_mah == 0
            || config.internal_resistance_ohm.is_nan()
            || config.internal_resistance_ohm < 0.0
        {
            return Err(PlaneError::Config(
                "capacity and resistance must be valid".into(),
            ));
        }
        let capacity = Charge::from_mah(config.capacity_mah);
        Ok(Self {
            id,
            config,
            capacity,
            remaining: capacity,
            cell_offsets: [0.0; CELLS_PER_PACK],
            load_current_a: 0.0,
            undervoltage: false,
        })
    }

    /// A pack at the given state of charge, in `[0, 1]`.
    pub fn at_soc(id: PackId, config: PackConfig, soc: f64) -> Result<Self, PlaneError> {
        let mut pack = Self::full(id, config)?;
        let soc = soc.clamp(0.0, 1.0);
        pack.remaining = Charge((pack.capacity.0 as f64 * soc).round() as u64);
        Ok(pack)
    }

    /// Offsets individual cells from the shared OCV, modelling imbalance.
    pub fn with_cell_offsets(mut self, offsets: [f64; CELLS_PER_PACK]) -> Self {
        self.cell_offsets = offsets;
        self
    }

    pub fn id(&self) -> PackId {
        self.id
    }

    pub fn capacity(&self) -> Charge {
        self.capacity
    }

    pub fn charge_remaining(&self) -> Charge {
        self.remaining
    }

    pub fn state_of_charge(&self) -> f64 {
        self.remaining.0 as f64 / self.capacity.0 as f64
    }

    pub fn undervoltage(&self) -> bool {
        self.undervoltage
    }

    pub fn load_current(&self) -> f64 {
        self.load_current_a
    }

    pub fn cell_voltages(&self) -> [f64; CELLS_PER_PACK] {
        let ocv = self.config.ocv.voltage(self.state_of_charge());
        let sag = self.load_current_a * self.config.internal_resistance_ohm / CELLS_PER_PACK as f64;
        self.cell_offsets.map(|o| ocv + o - sag)
    }

    /// Terminal voltage: sum of the cell voltages under the present load.
    pub fn pack_voltage(&self) -> f64 {
        self.cell_voltages().iter().sum()
    }

    pub fn open_circuit_voltage(&self) -> f64 {
        let ocv = self.config.ocv.voltage(self.state_of_charge());
        self.cell_offsets.iter().map(|o| ocv + o).sum()
    }

    /// Draws `load_current_a` for `dt`. The current is counted in whole
    /// milliamps; the pack clamps at empty and flags undervoltage.
    pub fn discharge_step(
        &mut self,
        load_current_a: f64,
        dt: SimTime,
    ) -> Result<DischargeOutcome, PlaneError> {
        if !(load_current_a.is_finite() && load_current_a >= 0.0) {
            return Err(PlaneError::InvalidCurrent(load_current_a));
        }
        if dt == SimTime::ZERO {
            return Err(PlaneError::ZeroStep);
        }
        let milliamps = (load_current_a * 1_000.0).round() as u64;
        let wanted = Charge::from_current(milliamps, dt);
        let drawn = wanted.min(self.remaining);
        self.remaining = Charge(self.remaining.0 - drawn.0);
        self.load_current_a = load_current_a;
        let depleted = drawn < wanted || (self.remaining == Charge(0) && wanted.0 > 0);
        if depleted {
            self.undervoltage = true;
        }
        Ok(DischargeOutcome { drawn, depleted })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pack() -> BatteryPack {
        BatteryPack::full(PackId::A, PackConfig::default()).unwrap()
    }

    #[test]
    fn one_c_for_one_hour_empties_the_pack() {
        let mut p = pack();
        let out = p.discharge_step(6.75, SimTime::from_secs(3_600)).unwrap();
        assert_eq!(p.charge_remaining(), Charge(0));
        assert_eq!(out.drawn, Charge::from_mah(6_750));
        assert!(out.depleted);
        assert!(p.undervoltage());
    }

    #[test]
    fn zero_current_leaves_ocv_and_charge() {
        let mut p = BatteryPack::at_soc(PackId::B, PackConfig::default(), 0.5).unwrap();
        let before = p.charge_remaining();
        p.discharge_step(0.0, SimTime::from_secs(10)).unwrap();
        assert_eq!(p.charge_remaining(), before);
        assert!((p.pack_voltage() - 8.0 * 3.7).abs() < 1e-9);
        assert_eq!(p.pack_voltage(), p.open_circuit_voltage());
    }

    #[test]
    fn overdraw_clamps_and_flags() {
        let mut p = BatteryPack::at_soc(PackId::A, PackConfig::default(), 0.001).unwrap();
        let before = p.charge_remaining();
        let out = p.discharge_step(10.0, SimTime::from_secs(3_600)).unwrap();
        assert!(out.depleted);
        assert_eq!(out.drawn, before);
        assert_eq!(p.charge_remaining(), Charge(0));
        assert!(p.undervoltage());
    }

    #[test]
    fn load_sags_terminal_voltage() {
        let mut p = pack();
        p.discharge_step(10.0, SimTime::from_us(1)).unwrap();
        assert!((p.open_circuit_voltage() - p.pack_voltage() - 10.0 * 0.04).abs() < 1e-9);
    }

    #[test]
    fn full_pack_is_about_thirty_volts_nominal() {
        assert!((pack().pack_voltage() - 33.6).abs() < 1e-9);
        let mid = BatteryPack::at_soc(PackId::A, PackConfig::default(), 0.5).unwrap();
        assert!((mid.pack_voltage() - 29.6).abs() < 1e-9);
    }

    #[test]
    fn ocv_interpolates_and_clamps() {
        let c = OcvCurve::default();
        assert_eq!(c.voltage(0.0), 3.0);
        assert_eq!(c.voltage(1.0), 4.2);
        assert!((c.voltage(0.25) - 3.35).abs() < 1e-12);
        assert!((c.voltage(0.75) - 3.95).abs() < 1e-12);
        assert_eq!(c.voltage(-1.0), 3.0);
        assert_eq!(c.voltage(2.0), 4.2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut p = pack();
        assert_eq!(
            p.discharge_step(-1.0, SimTime::from_us(1)),
            Err(PlaneError::InvalidCurrent(-1.0))
        );
        assert_eq!(
            p.discharge_step(1.0, SimTime::ZERO),
            Err(PlaneError::ZeroStep)
        );
        let bad = PackConfig {
            ocv: OcvCurve {
                points: vec![(0.0, 3.0), (0.4, 2.0), (1.0, 4.2)],
            },
            ..PackConfig::default()
        };
        assert!(BatteryPack::full(PackId::A, bad).is_err());
    }
}
