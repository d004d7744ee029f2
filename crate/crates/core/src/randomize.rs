//! Light and material samplers, and the per-pixel maps built from them.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbuffer::GBuffer;
use crate::map::Map;
use crate::math::{Pose, Vec3};
use crate::rng::{self, streams};

/// Distance of the point light from the scene center (m).
pub const LIGHT_RADIUS: f64 = 1.5;
pub const DEFAULT_INTENSITY: f64 = 3.0;
/// Lower roughness bound; GGX degenerates as α → 0.
pub const ROUGHNESS_MIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightSample {
    pub position_scene: Vec3,
    pub position_camera: Vec3,
    pub intensity: f64,
}

impl LightSample {
    pub fn from_scene_position(position_scene: Vec3, world_to_camera: &Pose, intensity: f64) -> Self {
        LightSample {
            position_scene,
            position_camera: world_to_camera.transform_point(position_scene),
            intensity,
        }
    }
}

/// Where light positions are drawn from. All variants stay on the
/// 1.5 m upper hemisphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LightDistribution {
    /// Uniform by solid angle over the whole upper hemisphere.
    Hemisphere,
    /// Uniform by solid angle over the band `z/r ∈ [z_min, z_max]`.
    Band { z_min: f64, z_max: f64 },
    /// Always the same direction (normalized and lifted to the hemisphere).
    Fixed { direction: Vec3 },
}

impl LightDistribution {
    /// Maps two uniforms to a scene-frame position on the hemisphere.
    pub fn position(&self, u: f64, v: f64) -> Vec3 {
        let (z, phi) = match *self {
            LightDistribution::Hemisphere => (u, 2.0 * PI * v),
            LightDistribution::Band { z_min, z_max } => (z_min + (z_max - z_min) * u, 2.0 * PI * v),
            LightDistribution::Fixed { direction } => {
                let d = Vec3::new(direction.x, direction.y, direction.z.abs()).normalize();
                return d * LIGHT_RADIUS;
            }
        };
        let s = (1.0 - z * z).max(0.0).sqrt();
        Vec3::new(s * phi.cos(), s * phi.sin(), z) * LIGHT_RADIUS
    }
}

pub fn sample_light(seed: u64, world_to_camera: &Pose) -> LightSample {
    sample_light_from(&LightDistribution::Hemisphere, seed, world_to_camera, DEFAULT_INTENSITY)
}

pub fn sample_light_from(dist: &LightDistribution, seed: u64, world_to_camera: &Pose, intensity: f64) -> LightSample {
    let mut r = rng::stream_rng(seed, streams::LIGHT, 0);
    let (u, v) = (rng::uniform(&mut r), rng::uniform(&mut r));
    LightSample::from_scene_position(dist.position(u, v), world_to_camera, intensity)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LightMaps {
    /// Unit pixel → light directions, camera frame.
    pub dir: Map,
    /// Pixel → light distances (m).
    pub dist: Map,
}

pub fn light_maps(gbuffer: &GBuffer, light: &LightSample) -> Result<LightMaps> {
    if gbuffer.valid_count() == 0 {
        return Err(Error::EmptyMask);
    }
    let mut dir = Map::zeros(gbuffer.width, gbuffer.height, 3);
    let mut dist = Map::zeros(gbuffer.width, gbuffer.height, 1);
    for i in (0..gbuffer.pixels()).filter(|&i| gbuffer.valid[i]) {
        let d = light.position_camera - gbuffer.x(i);
        let len = d.norm();
        if len < 1e-6 {
            return Err(Error::DegenerateGeometry(format!("pixel {i} coincides with the light")));
        }
        let u = d / len;
        dir.pixel_mut(i).copy_from_slice(&[u.x as f32, u.y as f32, u.z as f32]);
        dist.data[i] = len as f32;
    }
    Ok(LightMaps { dir, dist })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialSample {
    pub object_id: i32,
    pub albedo: [f64; 3],
    pub roughness: f64,
    pub specularity: f64,
}

/// Which material properties are randomized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaterialMode {
    /// Albedo only; roughness and specularity held at [`MaterialRanges::fixed_roughness`] / `fixed_specularity`.
    #[serde(rename = "A")]
    AlbedoOnly,
    #[default]
    #[serde(rename = "A+S+R")]
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialRanges {
    pub albedo: (f64, f64),
    pub roughness: (f64, f64),
    pub specularity: (f64, f64),
    pub mode: MaterialMode,
    pub fixed_roughness: f64,
    pub fixed_specularity: f64,
}

impl Default for MaterialRanges {
    fn default() -> Self {
        MaterialRanges {
            albedo: (0.0, 1.0),
            roughness: (ROUGHNESS_MIN, 1.0),
            specularity: (0.0, 1.0),
            mode: MaterialMode::Full,
            fixed_roughness: 0.5,
            fixed_specularity: 0.5,
        }
    }
}

impl MaterialRanges {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64), min: f64| lo >= min && hi <= 1.0 && lo <= hi;
        if !ok(self.albedo, 0.0) || !ok(self.roughness, ROUGHNESS_MIN) || !ok(self.specularity, 0.0) {
            return Err(Error::InvalidParameter(format!("material ranges out of bounds: {self:?}")));
        }
        Ok(())
    }
}

pub fn sample_materials(object_ids: &[i32], seed: u64) -> Result<Vec<MaterialSample>> {
    sample_materials_with(object_ids, seed, &MaterialRanges::default())
}

/// One independent draw per id, keyed by the id so the result does not depend
/// on list order.
pub fn sample_materials_with(object_ids: &[i32], seed: u64, ranges: &MaterialRanges) -> Result<Vec<MaterialSample>> {
    if object_ids.is_empty() {
        return Err(Error::InvalidParameter("no object ids".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = object_ids.iter().find(|id| !seen.insert(**id)) {
        return Err(Error::InvalidParameter(format!("duplicate object id {dup}")));
    }
    ranges.validate()?;
    let lerp = |(lo, hi): (f64, f64), u: f64| lo + (hi - lo) * u;
    Ok(object_ids
        .iter()
        .map(|&object_id| {
            let mut r = rng::stream_rng(seed, streams::MATERIAL, object_id as u32 as u64);
            let u: [f64; 5] = std::array::from_fn(|_| rng::uniform(&mut r));
            let (roughness, specularity) = match ranges.mode {
                MaterialMode::Full => (lerp(ranges.roughness, u[3]), lerp(ranges.specularity, u[4])),
                MaterialMode::AlbedoOnly => (ranges.fixed_roughness, ranges.fixed_specularity),
            };
            MaterialSample {
                object_id,
                albedo: [lerp(ranges.albedo, u[0]), lerp(ranges.albedo, u[1]), lerp(ranges.albedo, u[2])],
                roughness,
                specularity,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialMaps {
    pub albedo: Map,
    pub roughness: Map,
    pub specularity: Map,
}

pub fn compose_material_maps(gbuffer: &GBuffer, samples: &[MaterialSample]) -> Result<MaterialMaps> {
    let by_id: HashMap<i32, &MaterialSample> = samples.iter().map(|s| (s.object_id, s)).collect();
    let (w, h) = (gbuffer.width, gbuffer.height);
    let mut maps = MaterialMaps {
        albedo: Map::zeros(w, h, 3),
        roughness: Map::zeros(w, h, 1),
        specularity: Map::zeros(w, h, 1),
    };
    for i in (0..gbuffer.pixels()).filter(|&i| gbuffer.valid[i]) {
        let id = gbuffer.instance[i];
        let s = by_id.get(&id).ok_or(Error::MissingMaterial(id))?;
        let base = gbuffer.base_albedo.data[i] as f64;
        let a = maps.albedo.pixel_mut(i);
        for c in 0..3 {
            a[c] = (s.albedo[c] * base) as f32;
        }
        maps.roughness.data[i] = s.roughness as f32;
        maps.specularity.data[i] = s.specularity as f32;
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gbuffer_with(points: &[(Vec3, i32, f32)]) -> GBuffer {
        let mut g = GBuffer::empty(points.len(), 1);
        for (i, &(x, id, a)) in points.iter().enumerate() {
            g.position.pixel_mut(i).copy_from_slice(&[x.x as f32, x.y as f32, x.z as f32]);
            g.normal.pixel_mut(i).copy_from_slice(&[0.0, 0.0, -1.0]);
            g.instance[i] = id;
            g.base_albedo.data[i] = a;
            g.valid[i] = true;
        }
        g
    }

    #[test]
    fn light_map_hand_case() {
        let g = gbuffer_with(&[(Vec3::new(0.0, 0.0, 2.0), 1, 1.0)]);
        let light = LightSample {
            position_scene: Vec3::ZERO,
            position_camera: Vec3::new(0.0, 1.5, 1.0),
            intensity: 3.0,
        };
        let m = light_maps(&g, &light).unwrap();
        // d = (0, 1.5, −1), |d| = sqrt(3.25)
        let dir = m.dir.pixel(0);
        assert!((dir[1] - 0.8321).abs() < 1e-4 && (dir[2] + 0.5547).abs() < 1e-4 && dir[0] == 0.0);
        assert!((m.dist.data[0] - 1.8028).abs() < 1e-4);
    }

    #[test]
    fn light_map_axis_case_and_degenerate() {
        let p = Vec3::new(0.3, -0.2, 1.7);
        let light = LightSample {
            position_scene: Vec3::ZERO,
            position_camera: p,
            intensity: 1.0,
        };
        let g = gbuffer_with(&[(p - Vec3::new(0.0, 0.0, 1.0), 1, 1.0)]);
        let m = light_maps(&g, &light).unwrap();
        assert!((m.dist.data[0] - 1.0).abs() < 1e-6);
        assert!((Vec3::from_slice(m.dir.pixel(0)) - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-6);

        let g = gbuffer_with(&[(p, 1, 1.0)]);
        assert!(matches!(light_maps(&g, &light), Err(Error::DegenerateGeometry(_))));
        assert!(matches!(light_maps(&GBuffer::empty(8, 8), &light), Err(Error::EmptyMask)));
    }

    #[test]
    fn sampled_light_is_on_hemisphere() {
        for seed in 0..500 {
            let l = sample_light(seed, &Pose::IDENTITY);
            assert!((l.position_scene.norm() - LIGHT_RADIUS).abs() < 1e-6);
            assert!(l.position_scene.z >= 0.0);
            assert_eq!(l.position_scene, l.position_camera);
        }
    }

    #[test]
    fn material_sampling_contract() {
        let a = sample_materials(&[0, 1, 2], 5).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a.iter().map(|s| s.object_id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(a, sample_materials(&[0, 1, 2], 5).unwrap());
        // keyed by id, not position
        let rev = sample_materials(&[2, 1, 0], 5).unwrap();
        assert_eq!(rev[0], a[2]);
        for s in &a {
            assert!(s.roughness >= ROUGHNESS_MIN && s.roughness <= 1.0);
            assert!((0.0..=1.0).contains(&s.specularity));
        }
        assert!(sample_materials(&[], 1).is_err());
        assert!(sample_materials(&[1, 1], 1).is_err());
    }

    #[test]
    fn albedo_only_mode_fixes_roughness_and_specularity() {
        let ranges = MaterialRanges {
            mode: MaterialMode::AlbedoOnly,
            ..Default::default()
        };
        for s in sample_materials_with(&[0, 1, 2, 3], 9, &ranges).unwrap() {
            assert_eq!((s.roughness, s.specularity), (0.5, 0.5));
        }
    }

    #[test]
    fn material_map_composition() {
        let g = gbuffer_with(&[(Vec3::new(0.0, 0.0, 1.0), 1, 1.0), (Vec3::new(0.0, 0.0, 1.0), 2, 0.5)]);
        let samples = [
            MaterialSample {
                object_id: 1,
                albedo: [0.2, 0.4, 0.6],
                roughness: 0.3,
                specularity: 0.1,
            },
            MaterialSample {
                object_id: 2,
                albedo: [1.0, 1.0, 1.0],
                roughness: 0.9,
                specularity: 0.7,
            },
        ];
        let m = compose_material_maps(&g, &samples).unwrap();
        assert_eq!(m.albedo.pixel(0), &[0.2, 0.4, 0.6]);
        assert_eq!(m.albedo.pixel(1), &[0.5, 0.5, 0.5]);
        assert_eq!(m.roughness.data, vec![0.3, 0.9]);
        assert!(matches!(compose_material_maps(&g, &samples[..1]), Err(Error::MissingMaterial(2))));
    }
}
