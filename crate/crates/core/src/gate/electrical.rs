//! Lumped electrical model of one switched branch.
//!
//! ```text
//!  bus V ──[R_source]──[R_limiter(t)]──┬── output node
//!                                     C ║  R_load
//!                                      ┴──┴── gnd
//! ```
//!
//! `R_source` lumps wiring and switch on-resistance. The switch current is
//! `(V - Vc) / (R_limiter + R_source)`. While the branch is off the
//! capacitor discharges through the load. Each step holds the limiter
//! resistance at its start-of-step value and integrates the capacitor
//! exactly, so arbitrarily stiff branches stay stable at the fixed step.

use serde::{Deserialize, Serialize};

use super::BranchId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimiterParams {
    pub r_cold_ohm: f64,
    pub r_hot_ohm: f64,
    pub tau_us: u64,
}

impl LimiterParams {
    /// Resistance `elapsed_us` after switch-on.
    pub fn resistance(&self, elapsed_us: u64) -> f64 {
        let decay = (-(elapsed_us as f64) / self.tau_us as f64).exp();
        self.r_hot_ohm + (self.r_cold_ohm - self.r_hot_ohm) * decay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchLoad {
    pub branch: BranchId,
    pub capacitance_f: f64,
    pub steady_resistance_ohm: f64,
    pub limiter: bool,
}

/// Electrical constants of the E-Stop board and its loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub bus_voltage_v: f64,
    pub source_resistance_ohm: f64,
    pub trip_threshold_a: f64,
    pub trip_time_us: u64,
    pub step_us: u64,
    /// Output counts as powered at or above this fraction of the bus.
    pub detect_fraction: f64,
    /// Branches within this fraction of the bus voltage of their
    /// equilibrium are considered settled and stop being stepped.
    pub quiescence_fraction: f64,
    pub limiter: LimiterParams,
    pub branches: Vec<BranchLoad>,
    pub hw_buttons: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            bus_voltage_v: 24.0,
            source_resistance_ohm: 0.2,
            trip_threshold_a: 20.0,
            trip_time_us: 1_000,
            step_us: 100,
            detect_fraction: 0.9,
            quiescence_fraction: 0.01,
            limiter: LimiterParams {
                r_cold_ohm: 5.0,
                r_hot_ohm: 0.05,
                tau_us: 100_000,
            },
            branches: vec![
                // Drive controllers present a small input capacitance and
                // run without a limiter.
                BranchLoad {
                    branch: BranchId::Drive,
                    capacitance_f: 470e-6,
                    steady_resistance_ohm: 4.8,
                    limiter: false,
                },
                BranchLoad {
                    branch: BranchId::Flippers,
                    capacitance_f: 4700e-6,
                    steady_resistance_ohm: 4.8,
                    limiter: true,
                },
                BranchLoad {
                    branch: BranchId::Manipulator,
                    capacitance_f: 4700e-6,
                    steady_resistance_ohm: 4.8,
                    limiter: true,
                },
            ],
            hw_buttons: 2,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("bus_voltage_v", self.bus_voltage_v),
            ("trip_threshold_a", self.trip_threshold_a),
            ("limiter.r_cold_ohm", self.limiter.r_cold_ohm),
            ("limiter.r_hot_ohm", self.limiter.r_hot_ohm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(self.source_resistance_ohm.is_finite() && self.source_resistance_ohm >= 0.0) {
            return Err("source_resistance_ohm must be non-negative".into());
        }
        if self.step_us == 0 || self.limiter.tau_us == 0 {
            return Err("step_us and limiter.tau_us must be positive".into());
        }
        if self.limiter.r_hot_ohm > self.limiter.r_cold_ohm {
            return Err("limiter must not heat up to a higher resistance".into());
        }
        if !(0.0 < self.detect_fraction && self.detect_fraction < 1.0) {
            return Err("detect_fraction must be in (0, 1)".into());
        }
        let ids: Vec<BranchId> = self.branches.iter().map(|b| b.branch).collect();
        if ids != BranchId::ALL {
            return Err(format!(
                "branches must be Drive, Flippers, Manipulator; found {ids:?}"
            ));
        }
        for b in &self.branches {
            if !(b.capacitance_f > 0.0 && b.steady_resistance_ohm > 0.0) {
                return Err(format!("{:?}: load values must be positive", b.branch));
            }
            if !b.limiter && self.source_resistance_ohm == 0.0 {
                return Err(format!("{:?}: no series resistance at all", b.branch));
            }
        }
        Ok(())
    }

    pub fn load(&self, branch: BranchId) -> &BranchLoad {
        &self.branches[branch.index()]
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Capacitor voltage and switch current of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Circuit {
    pub bus_v: f64,
    pub source_ohm: f64,
    pub load: BranchLoad,
}

impl Circuit {
    pub fn series(&self, limiter_ohm: f64) -> f64 {
        limiter_ohm + self.source_ohm
    }

    /// Output voltage the capacitor settles to with the switch closed.
    pub fn equilibrium(&self, limiter_ohm: f64) -> f64 {
        let rl = self.load.steady_resistance_ohm;
        self.bus_v * rl / (rl + self.series(limiter_ohm))
    }

    pub fn switch_current(&self, cap_v: f64, limiter_ohm: f64) -> f64 {
        (self.bus_v - cap_v) / self.series(limiter_ohm)
    }

    pub fn charge(&self, cap_v: f64, limiter_ohm: f64, dt_s: f64) -> f64 {
        let rs = self.series(limiter_ohm);
        let rl = self.load.steady_resistance_ohm;
        let tau = self.load.capacitance_f * rs * rl / (rs + rl);
        let target = self.equilibrium(limiter_ohm);
        target + (cap_v - target) * (-dt_s / tau).exp()
    }

    pub fn discharge(&self, cap_v: f64, dt_s: f64) -> f64 {
        let tau = self.load.capacitance_f * self.load.steady_resistance_ohm;
        cap_v * (-dt_s / tau).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limiter_decays_from_cold_to_hot() {
        let lim = GateConfig::default().limiter;
        assert_eq!(lim.resistance(0), 5.0);
        assert!((lim.resistance(100_000) - (0.05 + 4.95 / std::f64::consts::E)).abs() < 1e-12);
        assert!(lim.resistance(10_000_000) - 0.05 < 1e-12);
        let mut prev = f64::INFINITY;
        for t in (0..1_000_000).step_by(1_000) {
            let r = lim.resistance(t);
            assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn default_config_is_valid_and_matches_committed_file() {
        let cfg = GateConfig::default();
        cfg.validate().unwrap();
        let committed =
            GateConfig::from_json(include_str!("../../config/electrical.json")).unwrap();
        assert_eq!(committed, cfg);
    }

    #[test]
    fn exact_integration_composes() {
        // Two half steps equal one full step for a constant limiter value.
        let c = Circuit {
            bus_v: 24.0,
            source_ohm: 0.2,
            load: *GateConfig::default().load(BranchId::Flippers),
        };
        let one = c.charge(3.0, 1.0, 200e-6);
        let two = c.charge(c.charge(3.0, 1.0, 100e-6), 1.0, 100e-6);
        assert!((one - two).abs() < 1e-12);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let mut cfg = GateConfig::default();
        cfg.branches.swap(0, 1);
        assert!(cfg.validate().is_err());
        let mut cfg = GateConfig::default();
        cfg.limiter.r_hot_ohm = 10.0;
        assert!(cfg.validate().is_err());
        let cfg = GateConfig {
            step_us: 0,
            ..GateConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
