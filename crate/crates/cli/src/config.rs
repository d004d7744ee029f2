use serde::{Deserialize, Serialize};

use pndr_core::math::Vec3;
use pndr_core::oracle::ShadeConfig;
use pndr_core::randomize::{LightDistribution, MaterialMode, MaterialRanges};
use pndr_core::scenegen::{PlacementConfig, Room, ShapeSet};
use pndr_net::inverse::InverseConfig;
use pndr_net::rendernet::{ArchConfig, TrainConfig};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightMode {
    /// One light for every view.
    Fixed,
    /// A fresh light per view from [`RunConfig::light_distribution`].
    #[default]
    Dynamic,
}

impl std::str::FromStr for LightMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(LightMode::Fixed),
            "dynamic" => Ok(LightMode::Dynamic),
            _ => Err(format!("unknown light mode {s:?} (expected fixed or dynamic)")),
        }
    }
}

/// Everything that determines a run's outputs besides per-command inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub objects: usize,
    pub shape_set: ShapeSet,
    pub room: Room,
    pub placement: PlacementConfig,
    pub materials: MaterialRanges,
    pub light_mode: LightMode,
    pub light_distribution: LightDistribution,
    /// Scene-frame direction used by [`LightMode::Fixed`].
    pub fixed_light_direction: Vec3,
    pub indirect: bool,
    pub shade: ShadeConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub inverse: InverseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            width: 64,
            height: 64,
            seed: 0,
            objects: 3,
            shape_set: ShapeSet::Boxy,
            room: Room::default(),
            placement: PlacementConfig::default(),
            materials: MaterialRanges::default(),
            light_mode: LightMode::Dynamic,
            light_distribution: LightDistribution::Hemisphere,
            fixed_light_direction: Vec3::new(0.5, -0.5, 1.0),
            indirect: true,
            shade: ShadeConfig::default(),
            arch: ArchConfig {
                levels: 3,
                base_channels: 16,
            },
            train: TrainConfig::default(),
            inverse: InverseConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn material_mode(&self) -> MaterialMode {
        self.materials.mode
    }

    /// Checks every field; the error names the first offending one.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate().map_err(|e| CliError::config("arch", e.to_string()))?;
        let d = self.arch.divisor();
        if self.width < pndr_core::gbuffer::MIN_RESOLUTION || self.height < pndr_core::gbuffer::MIN_RESOLUTION {
            return Err(CliError::config(
                "resolution",
                format!("{}x{} is below the minimum", self.width, self.height),
            ));
        }
        if !self.width.is_multiple_of(d) || !self.height.is_multiple_of(d) {
            return Err(CliError::config(
                "resolution",
                format!("{}x{} is not divisible by {d}", self.width, self.height),
            ));
        }
        if self.objects == 0 {
            return Err(CliError::config("objects", "need at least one object"));
        }
        if !(self.room.width > 0.0 && self.room.depth > 0.0 && self.room.height > 0.0) {
            return Err(CliError::config("room", "dimensions must be positive"));
        }
        if self.placement.max_attempts == 0 || !(self.placement.spread > 0.0) || !(self.placement.camera_distance > 0.0) {
            return Err(CliError::config("placement", "attempts, spread and camera distance must be positive"));
        }
        self.materials.validate().map_err(|e| CliError::config("materials", e.to_string()))?;
        if let LightDistribution::Band { z_min, z_max } = self.light_distribution {
            if !(0.0 <= z_min && z_min <= z_max && z_max <= 1.0) {
                return Err(CliError::config("light_distribution", "band must satisfy 0 ≤ z_min ≤ z_max ≤ 1"));
            }
        }
        if !(self.fixed_light_direction.norm() > 0.0) {
            return Err(CliError::config("fixed_light_direction", "must be non-zero"));
        }
        if !(self.shade.shadow_epsilon > 0.0) {
            return Err(CliError::config("shade.shadow_epsilon", "must be positive"));
        }
        self.train.validate().map_err(|e| CliError::config("train", e.to_string()))?;
        self.inverse.validate().map_err(|e| CliError::config("inverse", e.to_string()))?;
        Ok(())
    }

    /// Shading settings with the indirect ablation flag applied.
    pub fn effective_shade(&self) -> ShadeConfig {
        if self.indirect {
            self.shade
        } else {
            ShadeConfig {
                indirect_samples: 0,
                indirect_glossy_samples: 0,
                ..self.shade
            }
        }
    }

    pub fn placement(&self) -> PlacementConfig {
        PlacementConfig {
            resolution: (self.width, self.height),
            ..self.placement.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let partial: RunConfig = serde_json::from_str(r#"{"width": 32, "height": 32}"#).unwrap();
        assert_eq!((partial.width, partial.objects), (32, 3));
    }

    #[test]
    fn errors_name_the_field() {
        let bad = RunConfig {
            width: 60,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(CliError::Config { field, .. }) if field == "resolution"));
        let bad = RunConfig {
            objects: 0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(CliError::Config { field, .. }) if field == "objects"));
    }

    #[test]
    fn indirect_flag_zeroes_samples() {
        let c = RunConfig {
            indirect: false,
            ..Default::default()
        };
        assert_eq!(c.effective_shade().indirect_samples, 0);
        assert_eq!(c.effective_shade().indirect_glossy_samples, 0);
    }
}
