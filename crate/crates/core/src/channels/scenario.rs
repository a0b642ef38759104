use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ChannelError, ChannelSpec};
use crate::protocol::ChannelId;

/// The five evaluation setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioName {
    LineOfSight12m,
    Obstructed3m,
    StoneWall12m,
    GlassDoor12m,
    LoRaOnly12m,
}

impl ScenarioName {
    /// Report and listing order.
    pub const ALL: [ScenarioName; 5] = [
        Self::LineOfSight12m,
        Self::Obstructed3m,
        Self::StoneWall12m,
        Self::GlassDoor12m,
        Self::LoRaOnly12m,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LineOfSight12m => "LineOfSight12m",
            Self::Obstructed3m => "Obstructed3m",
            Self::StoneWall12m => "StoneWall12m",
            Self::GlassDoor12m => "GlassDoor12m",
            Self::LoRaOnly12m => "LoRaOnly12m",
        }
    }

    fn alias(self) -> &'static str {
        match self {
            Self::LineOfSight12m => "los",
            Self::Obstructed3m => "obstructed",
            Self::StoneWall12m => "stone-wall",
            Self::GlassDoor12m => "glass-door",
            Self::LoRaOnly12m => "lora-only",
        }
    }

    pub fn distance_m(self) -> f64 {
        match self {
            Self::Obstructed3m => 3.0,
            _ => 12.0,
        }
    }

    /// Measured release latency: mean ± std and maximum over 1000 toggles.
    pub fn targets(self) -> LatencyTargets {
        let (mean, std, max) = match self {
            Self::LineOfSight12m => (8.0, 3.0, 29.0),
            Self::Obstructed3m => (8.0, 5.0, 113.0),
            Self::StoneWall12m => (33.0, 29.0, 128.0),
            Self::GlassDoor12m => (8.0, 4.0, 62.0),
            Self::LoRaOnly12m => (249.0, 4.0, 268.0),
        };
        LatencyTargets { mean, std, max }
    }

    fn preset_json(self) -> &'static str {
        match self {
            Self::LineOfSight12m => include_str!("../../presets/LineOfSight12m.json"),
            Self::Obstructed3m => include_str!("../../presets/Obstructed3m.json"),
            Self::StoneWall12m => include_str!("../../presets/StoneWall12m.json"),
            Self::GlassDoor12m => include_str!("../../presets/GlassDoor12m.json"),
            Self::LoRaOnly12m => include_str!("../../presets/LoRaOnly12m.json"),
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s) || n.alias().eq_ignore_ascii_case(s))
            .ok_or_else(|| ChannelError::UnknownScenario(s.to_string()))
    }
}

/// Release-latency statistics to fit, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyTargets {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

/// Where a preset's numbers came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub targets: LatencyTargets,
    pub fit_error: f64,
    pub seed: u64,
}

/// A complete link configuration: one spec per channel, in
/// `FastA, FastB, Slow` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub channels: Vec<ChannelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// The shipped, fitted configuration for a named scenario.
pub fn preset(name: ScenarioName) -> ScenarioSpec {
    ScenarioSpec::from_json(name.preset_json())
        .unwrap_or_else(|e| panic!("embedded preset {name} is invalid: {e}"))
}

impl ScenarioSpec {
    /// All three channels lossless with zero delay.
    pub fn ideal() -> Self {
        Self {
            name: "Ideal".to_string(),
            channels: ChannelId::ALL.into_iter().map(ChannelSpec::ideal).collect(),
            provenance: None,
        }
    }

    pub fn from_channels(
        name: impl Into<String>,
        channels: [ChannelSpec; 3],
    ) -> Result<Self, ChannelError> {
        let spec = Self {
            name: name.into(),
            channels: channels.to_vec(),
            provenance: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let ids: Vec<ChannelId> = self.channels.iter().map(|c| c.channel).collect();
        if ids != ChannelId::ALL {
            return Err(ChannelError::InvalidScenario(format!(
                "{}: channels must be listed as FastA, FastB, Slow; found {ids:?}",
                self.name
            )));
        }
        for c in &self.channels {
            c.validate()?;
        }
        if !self.channels.iter().any(|c| c.enabled) {
            return Err(ChannelError::InvalidScenario(format!(
                "{}: no channel enabled",
                self.name
            )));
        }
        Ok(())
    }

    pub fn channel(&self, id: ChannelId) -> &ChannelSpec {
        &self.channels[id.index()]
    }

    pub fn channel_mut(&mut self, id: ChannelId) -> &mut ChannelSpec {
        &mut self.channels[id.index()]
    }

    pub fn enabled_mask(&self) -> [bool; 3] {
        ChannelId::ALL.map(|c| self.channel(c).enabled)
    }

    /// The named scenario this spec was derived from, if any.
    pub fn scenario_name(&self) -> Option<ScenarioName> {
        self.name.parse().ok()
    }

    pub fn distance_m(&self) -> Option<f64> {
        self.scenario_name().map(ScenarioName::distance_m)
    }

    pub fn from_json(text: &str) -> Result<Self, ChannelError> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| ChannelError::Json(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, ChannelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ChannelError::Json(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Resolves a scenario name or, failing that, a path to a preset file.
    pub fn resolve(name_or_path: &str) -> Result<Self, ChannelError> {
        if let Ok(name) = name_or_path.parse::<ScenarioName>() {
            return Ok(preset(name));
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::load(path);
        }
        Err(ChannelError::UnknownScenario(name_or_path.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_is_named() {
        for name in ScenarioName::ALL {
            let spec = preset(name);
            assert_eq!(spec.name, name.as_str());
            assert_eq!(spec.scenario_name(), Some(name));
            let provenance = spec.provenance.expect("presets carry provenance");
            assert_eq!(provenance.targets, name.targets());
        }
    }

    #[test]
    fn lora_only_disables_fast_links() {
        let spec = preset(ScenarioName::LoRaOnly12m);
        assert!(!spec.channel(ChannelId::FastA).enabled);
        assert!(!spec.channel(ChannelId::FastB).enabled);
        assert!(spec.channel(ChannelId::Slow).enabled);
    }

    #[test]
    fn other_presets_enable_everything() {
        for name in ScenarioName::ALL {
            if name != ScenarioName::LoRaOnly12m {
                assert_eq!(preset(name).enabled_mask(), [true; 3], "{name}");
            }
        }
    }

    #[test]
    fn stone_wall_is_lossier_than_line_of_sight() {
        let los = preset(ScenarioName::LineOfSight12m);
        let wall = preset(ScenarioName::StoneWall12m);
        for ch in [ChannelId::FastA, ChannelId::FastB] {
            assert!(wall.channel(ch).loss_probability > los.channel(ch).loss_probability);
        }
    }

    #[test]
    fn names_and_aliases_parse() {
        assert_eq!(
            "LoRaOnly12m".parse::<ScenarioName>().unwrap(),
            ScenarioName::LoRaOnly12m
        );
        assert_eq!(
            "lora-only".parse::<ScenarioName>().unwrap(),
            ScenarioName::LoRaOnly12m
        );
        assert_eq!(
            "los".parse::<ScenarioName>().unwrap(),
            ScenarioName::LineOfSight12m
        );
        assert!(matches!(
            "Basement".parse::<ScenarioName>(),
            Err(ChannelError::UnknownScenario(_))
        ));
        assert!(ScenarioSpec::resolve("/nonexistent/preset.json").is_err());
    }

    #[test]
    fn preset_json_schema_field_names() {
        let json: serde_json::Value =
            serde_json::from_str(ScenarioName::GlassDoor12m.preset_json()).unwrap();
        let channel = &json["channels"][0];
        for key in [
            "id",
            "enabled",
            "loss_probability",
            "base_latency_us",
            "jitter_sigma",
            "jitter_scale_us",
            "airtime_us",
        ] {
            assert!(channel.get(key).is_some(), "missing {key}");
        }
        for key in ["targets", "fit_error", "seed"] {
            assert!(json["provenance"].get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn channel_order_is_enforced() {
        let mut spec = ScenarioSpec::ideal();
        spec.channels.swap(0, 2);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let spec = preset(ScenarioName::StoneWall12m);
        assert_eq!(
            ScenarioSpec::from_json(&spec.to_json_pretty()).unwrap(),
            spec
        );
    }
}
