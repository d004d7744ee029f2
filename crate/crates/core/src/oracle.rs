//! Ground-truth shading: direct and one-bounce indirect light split into
//! diffuse and glossy buffers.
//!
//! Diffuse buffers exclude the receiver's albedo and glossy buffers exclude
//! its specular color; both enter later as per-pixel color factors. Diffuse
//! reflection uses the Oren-Nayar qualitative model (exactly Lambertian at
//! σ = 0), glossy reflection uses GGX with height-correlated Smith masking
//! and no Fresnel term.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvh::Bvh;
use crate::error::{Error, Result};
use crate::gbuffer::{hit_albedo, hit_normal, GBuffer};
use crate::map::Map;
use crate::math::{Pose, Vec3};
use crate::randomize::{LightMaps, LightSample, MaterialMaps, MaterialSample};
use crate::rng::{self, streams};

/// GGX width from sampled roughness.
pub fn roughness_to_alpha(roughness: f64) -> f64 {
    roughness * roughness
}

/// Oren-Nayar slope deviation (radians) from sampled roughness.
pub fn roughness_to_sigma(roughness: f64) -> f64 {
    roughness * PI / 4.0
}

/// Oren-Nayar factor `A + B·max(0, cos φ)·sin α·tan β`, relative to Lambertian.
pub fn oren_nayar_factor(n_dot_l: f64, n_dot_v: f64, phi_diff: f64, sigma: f64) -> f64 {
    oren_nayar_cos(n_dot_l, n_dot_v, phi_diff.cos(), sigma)
}

fn oren_nayar_cos(n_dot_l: f64, n_dot_v: f64, cos_phi: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let a = 1.0 - 0.5 * s2 / (s2 + 0.33);
    let b = 0.45 * s2 / (s2 + 0.09);
    let theta_i = n_dot_l.clamp(-1.0, 1.0).acos();
    let theta_o = n_dot_v.clamp(-1.0, 1.0).acos();
    let alpha = theta_i.max(theta_o);
    let beta = theta_i.min(theta_o);
    a + b * cos_phi.max(0.0) * alpha.sin() * beta.tan()
}

/// Oren-Nayar factor for world vectors; azimuths are measured in the tangent plane.
pub fn oren_nayar_vectors(n: Vec3, wi: Vec3, wo: Vec3, sigma: f64) -> f64 {
    let (nl, nv) = (n.dot(wi), n.dot(wo));
    let lp = wi - n * nl;
    let vp = wo - n * nv;
    let denom = lp.norm() * vp.norm();
    let cos_phi = if denom > 1e-12 { lp.dot(vp) / denom } else { 0.0 };
    oren_nayar_cos(nl, nv, cos_phi, sigma)
}

/// Lambertian diffuse factor (relative to `1/π`).
pub fn lambert_factor() -> f64 {
    1.0
}

/// GGX normal distribution `α² / (π((n·h)²(α² − 1) + 1)²)`.
pub fn ggx_distribution(n_dot_h: f64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let d = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    a2 / (PI * d * d)
}

fn smith_lambda(cos_theta: f64, alpha: f64) -> f64 {
    let c2 = cos_theta * cos_theta;
    let tan2 = (1.0 - c2).max(0.0) / c2;
    0.5 * (-1.0 + (1.0 + alpha * alpha * tan2).sqrt())
}

/// Height-correlated Smith masking-shadowing.
pub fn smith_g2(n_dot_i: f64, n_dot_o: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + smith_lambda(n_dot_i, alpha) + smith_lambda(n_dot_o, alpha))
}

/// GGX microfacet BRDF `D·G / (4 cosθi cosθo)`, zero outside the hemisphere.
pub fn ggx_specular(n: Vec3, wi: Vec3, wo: Vec3, alpha: f64) -> f64 {
    let (ni, no) = (n.dot(wi), n.dot(wo));
    if ni <= 0.0 || no <= 0.0 {
        return 0.0;
    }
    let h = (wi + wo).normalize();
    ggx_distribution(n.dot(h), alpha) * smith_g2(ni, no, alpha) / (4.0 * ni * no)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShadeConfig {
    pub indirect_samples: usize,
    pub indirect_glossy_samples: usize,
    pub shadow_epsilon: f64,
    pub seed: u64,
}

impl Default for ShadeConfig {
    fn default() -> Self {
        ShadeConfig {
            indirect_samples: 16,
            indirect_glossy_samples: 16,
            shadow_epsilon: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LightBuffers {
    pub diffuse_direct: Map,
    pub diffuse_indirect: Map,
    pub glossy_direct: Map,
    pub glossy_indirect: Map,
}

impl LightBuffers {
    pub fn zeros(width: usize, height: usize) -> Self {
        LightBuffers {
            diffuse_direct: Map::zeros(width, height, 3),
            diffuse_indirect: Map::zeros(width, height, 3),
            glossy_direct: Map::zeros(width, height, 3),
            glossy_indirect: Map::zeros(width, height, 3),
        }
    }

    pub fn groups(&self) -> [&Map; 4] {
        [&self.diffuse_direct, &self.diffuse_indirect, &self.glossy_direct, &self.glossy_indirect]
    }

    pub fn groups_mut(&mut self) -> [&mut Map; 4] {
        [
            &mut self.diffuse_direct,
            &mut self.diffuse_indirect,
            &mut self.glossy_direct,
            &mut self.glossy_indirect,
        ]
    }

    pub fn width(&self) -> usize {
        self.diffuse_direct.width
    }

    pub fn height(&self) -> usize {
        self.diffuse_direct.height
    }
}

/// Everything the shading passes read, resolved to world space once.
struct ShadingContext<'a> {
    gbuffer: &'a GBuffer,
    maps: &'a MaterialMaps,
    lights: &'a LightMaps,
    light: &'a LightSample,
    light_world: Vec3,
    camera_to_world: Pose,
    bvh: &'a Bvh,
    cfg: &'a ShadeConfig,
}

impl<'a> ShadingContext<'a> {
    fn new(
        gbuffer: &'a GBuffer,
        maps: &'a MaterialMaps,
        lights: &'a LightMaps,
        light: &'a LightSample,
        world_to_camera: &Pose,
        bvh: &'a Bvh,
        cfg: &'a ShadeConfig,
    ) -> Result<Self> {
        for (m, what) in [
            (&maps.albedo, "albedo"),
            (&maps.roughness, "roughness"),
            (&maps.specularity, "specularity"),
            (&lights.dir, "light direction"),
            (&lights.dist, "light distance"),
        ] {
            if m.width != gbuffer.width || m.height != gbuffer.height {
                return Err(Error::ShapeMismatch(format!("{what} map does not match the G-buffer")));
            }
        }
        let camera_to_world = world_to_camera.inverse();
        Ok(ShadingContext {
            gbuffer,
            maps,
            lights,
            light,
            light_world: camera_to_world.transform_point(light.position_camera),
            camera_to_world,
            bvh,
            cfg,
        })
    }

    /// Irradiance from the point light at a world point with normal `n`.
    fn irradiance(&self, p: Vec3, n: Vec3) -> (f64, Vec3) {
        let to_light = self.light_world - p;
        let dist = to_light.norm();
        let l = to_light / dist;
        let cos = n.dot(l);
        if cos <= 0.0 {
            return (0.0, l);
        }
        let origin = p + n * self.cfg.shadow_epsilon;
        let seg = self.light_world - origin;
        let seg_len = seg.norm();
        if self.bvh.occluded(origin, seg / seg_len, seg_len - self.cfg.shadow_epsilon) {
            return (0.0, l);
        }
        (self.light.intensity * cos / (dist * dist), l)
    }

    fn pixel_world(&self, i: usize) -> (Vec3, Vec3, Vec3) {
        let x = self.gbuffer.x(i);
        let p = self.camera_to_world.transform_point(x);
        let n = self.camera_to_world.transform_vector(self.gbuffer.n(i)).normalize();
        let v = self.camera_to_world.transform_vector(-x).normalize();
        (p, n, v)
    }

    fn direct(&self, i: usize) -> (f64, f64) {
        let g = self.gbuffer;
        let n = g.n(i);
        let l = Vec3::from_slice(self.lights.dir.pixel(i));
        let dist = self.lights.dist.data[i] as f64;
        let cos = n.dot(l);
        if cos <= 0.0 {
            return (0.0, 0.0);
        }
        let (p, n_world, _) = self.pixel_world(i);
        let origin = p + n_world * self.cfg.shadow_epsilon;
        let seg = self.light_world - origin;
        let seg_len = seg.norm();
        if self.bvh.occluded(origin, seg / seg_len, seg_len - self.cfg.shadow_epsilon) {
            return (0.0, 0.0);
        }
        let e = self.light.intensity * cos / (dist * dist);
        let v = (-g.x(i)).normalize();
        let r = self.maps.roughness.data[i] as f64;
        let diffuse = e * oren_nayar_vectors(n, l, v, roughness_to_sigma(r)) / PI;
        let glossy = e * ggx_specular(n, l, v, roughness_to_alpha(r));
        (diffuse, glossy)
    }

    /// Diffuse radiance (albedo included) leaving the first surface hit along
    /// `dir`, toward `-dir`.
    fn bounce_radiance(&self, origin: Vec3, dir: Vec3, materials: &MaterialTable) -> Option<[f64; 3]> {
        let hit = self.bvh.intersect(origin, dir, f64::INFINITY)?;
        let q = origin + dir * hit.t;
        let mut nq = hit_normal(self.bvh, &hit);
        if nq.dot(dir) > 0.0 {
            nq = -nq;
        }
        let (e, l) = self.irradiance(q, nq);
        if e == 0.0 {
            return Some([0.0; 3]);
        }
        let tri = &self.bvh.triangles[hit.triangle];
        let m = materials.get(tri.instance)?;
        let base = hit_albedo(self.bvh, &hit);
        let f = e * oren_nayar_vectors(nq, l, -dir, roughness_to_sigma(m.roughness)) / PI * base;
        Some([f * m.albedo[0], f * m.albedo[1], f * m.albedo[2]])
    }

    fn indirect(&self, i: usize, materials: &MaterialTable) -> ([f64; 3], [f64; 3]) {
        let (p, n, v) = self.pixel_world(i);
        let origin = p + n * self.cfg.shadow_epsilon;
        let r = self.maps.roughness.data[i] as f64;
        let sigma = roughness_to_sigma(r);
        let alpha = roughness_to_alpha(r);
        let (t, b) = n.orthonormal_basis();
        let to_world = |l: Vec3| t * l.x + b * l.y + n * l.z;

        let mut diffuse = [0.0; 3];
        if self.cfg.indirect_samples > 0 {
            let mut rng = rng::stream_rng(self.cfg.seed, streams::INDIRECT_DIFFUSE, i as u64);
            for _ in 0..self.cfg.indirect_samples {
                let wi = to_world(cosine_hemisphere(rng.random(), rng.random()));
                if let Some(li) = self.bounce_radiance(origin, wi, materials) {
                    // cosine-weighted pdf cancels cos/π of the receiver
                    let w = oren_nayar_vectors(n, wi, v, sigma);
                    for c in 0..3 {
                        diffuse[c] += li[c] * w;
                    }
                }
            }
            for d in &mut diffuse {
                *d /= self.cfg.indirect_samples as f64;
            }
        }

        let mut glossy = [0.0; 3];
        let n_dot_v = n.dot(v);
        if self.cfg.indirect_glossy_samples > 0 && n_dot_v > 0.0 {
            let mut rng = rng::stream_rng(self.cfg.seed, streams::INDIRECT_GLOSSY, i as u64);
            for _ in 0..self.cfg.indirect_glossy_samples {
                let h = to_world(ggx_sample_half(alpha, rng.random(), rng.random()));
                let v_dot_h = v.dot(h);
                let wi = h * (2.0 * v_dot_h) - v;
                let n_dot_i = n.dot(wi);
                if n_dot_i <= 0.0 || v_dot_h <= 0.0 {
                    continue;
                }
                if let Some(li) = self.bounce_radiance(origin, wi, materials) {
                    // f·cos/pdf with pdf = D·(n·h) / (4 v·h)
                    let w = smith_g2(n_dot_i, n_dot_v, alpha) * v_dot_h / (n_dot_v * n.dot(h));
                    for c in 0..3 {
                        glossy[c] += li[c] * w;
                    }
                }
            }
            for g in &mut glossy {
                *g /= self.cfg.indirect_glossy_samples as f64;
            }
        }
        (diffuse, glossy)
    }
}

/// Cosine-weighted direction about +z (Malley's method).
pub fn cosine_hemisphere(u: f64, v: f64) -> Vec3 {
    let r = u.sqrt();
    let phi = 2.0 * PI * v;
    Vec3::new(r * phi.cos(), r * phi.sin(), (1.0 - u).max(0.0).sqrt())
}

/// Half vector about +z drawn with density `D(h)·cos θh`.
pub fn ggx_sample_half(alpha: f64, u: f64, v: f64) -> Vec3 {
    let phi = 2.0 * PI * v;
    let cos2 = (1.0 - u) / (1.0 + (alpha * alpha - 1.0) * u);
    let cos_t = cos2.sqrt();
    let sin_t = (1.0 - cos2).max(0.0).sqrt();
    Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t)
}

/// Per-instance materials indexed by id.
struct MaterialTable(Vec<Option<MaterialSample>>);

impl MaterialTable {
    fn new(samples: &[MaterialSample]) -> Self {
        let max = samples.iter().map(|s| s.object_id).max().unwrap_or(0).max(0) as usize;
        let mut table = vec![None; max + 1];
        for s in samples.iter().filter(|s| s.object_id >= 0) {
            table[s.object_id as usize] = Some(*s);
        }
        MaterialTable(table)
    }

    fn get(&self, id: i32) -> Option<&MaterialSample> {
        self.0.get(usize::try_from(id).ok()?)?.as_ref()
    }
}

fn fill_rgb(map: &mut Map, i: usize, v: [f64; 3]) {
    map.pixel_mut(i).copy_from_slice(&[v[0] as f32, v[1] as f32, v[2] as f32]);
}

/// Direct diffuse and glossy buffers, each replicated over RGB.
pub fn shade_direct(
    gbuffer: &GBuffer,
    maps: &MaterialMaps,
    lights: &LightMaps,
    light: &LightSample,
    world_to_camera: &Pose,
    bvh: &Bvh,
    cfg: &ShadeConfig,
) -> Result<(Map, Map)> {
    let ctx = ShadingContext::new(gbuffer, maps, lights, light, world_to_camera, bvh, cfg)?;
    let values: Vec<(f64, f64)> = (0..gbuffer.pixels())
        .into_par_iter()
        .map(|i| if gbuffer.valid[i] { ctx.direct(i) } else { (0.0, 0.0) })
        .collect();
    let (w, h) = (gbuffer.width, gbuffer.height);
    let (mut d, mut g) = (Map::zeros(w, h, 3), Map::zeros(w, h, 3));
    for (i, (dv, gv)) in values.into_iter().enumerate() {
        fill_rgb(&mut d, i, [dv; 3]);
        fill_rgb(&mut g, i, [gv; 3]);
    }
    Ok((d, g))
}

/// One-bounce indirect diffuse and glossy buffers. Secondary hits reflect
/// their direct diffuse radiance, colored by their own albedo.
#[allow(clippy::too_many_arguments)]
pub fn shade_indirect(
    gbuffer: &GBuffer,
    maps: &MaterialMaps,
    lights: &LightMaps,
    light: &LightSample,
    materials: &[MaterialSample],
    world_to_camera: &Pose,
    bvh: &Bvh,
    cfg: &ShadeConfig,
) -> Result<(Map, Map)> {
    let ctx = ShadingContext::new(gbuffer, maps, lights, light, world_to_camera, bvh, cfg)?;
    let table = MaterialTable::new(materials);
    let (w, h) = (gbuffer.width, gbuffer.height);
    let (mut d, mut g) = (Map::zeros(w, h, 3), Map::zeros(w, h, 3));
    if cfg.indirect_samples == 0 && cfg.indirect_glossy_samples == 0 {
        return Ok((d, g));
    }
    let values: Vec<([f64; 3], [f64; 3])> = (0..gbuffer.pixels())
        .into_par_iter()
        .map(|i| {
            if gbuffer.valid[i] {
                ctx.indirect(i, &table)
            } else {
                ([0.0; 3], [0.0; 3])
            }
        })
        .collect();
    for (i, (dv, gv)) in values.into_iter().enumerate() {
        fill_rgb(&mut d, i, dv);
        fill_rgb(&mut g, i, gv);
    }
    Ok((d, g))
}

/// All four light buffers for one randomized view.
#[allow(clippy::too_many_arguments)]
pub fn render_buffers(
    gbuffer: &GBuffer,
    maps: &MaterialMaps,
    lights: &LightMaps,
    light: &LightSample,
    materials: &[MaterialSample],
    world_to_camera: &Pose,
    bvh: &Bvh,
    cfg: &ShadeConfig,
) -> Result<LightBuffers> {
    let (diffuse_direct, glossy_direct) = shade_direct(gbuffer, maps, lights, light, world_to_camera, bvh, cfg)?;
    let (diffuse_indirect, glossy_indirect) = shade_indirect(gbuffer, maps, lights, light, materials, world_to_camera, bvh, cfg)?;
    Ok(LightBuffers {
        diffuse_direct,
        diffuse_indirect,
        glossy_direct,
        glossy_indirect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oren_nayar_limits() {
        assert_eq!(oren_nayar_factor(0.3, 0.8, 1.0, 0.0), 1.0);
        let expected = 1.0 - 0.5 * 0.25 / 0.58;
        assert!((oren_nayar_factor(1.0, 1.0, 0.0, 0.5) - expected).abs() < 1e-12);
        assert!((expected - 0.7845).abs() < 1e-4);
        let (a, b) = (oren_nayar_factor(0.4, 0.9, 0.3, 0.6), oren_nayar_factor(0.9, 0.4, 0.3, 0.6));
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn ggx_mirror_peak() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        assert!((ggx_distribution(1.0, 0.5) - 1.0 / (PI * 0.25)).abs() < 1e-12);
        assert!((ggx_distribution(1.0, 0.5) - 1.2732).abs() < 1e-4);
        let wi = Vec3::new(0.3, 0.1, 0.9).normalize();
        let wo = Vec3::new(-0.5, 0.2, 0.6).normalize();
        for alpha in [0.0025, 0.1, 0.5, 1.0] {
            let f = ggx_specular(n, wi, wo, alpha);
            assert!(f.is_finite() && f >= 0.0);
            assert!((f - ggx_specular(n, wo, wi, alpha)).abs() <= 1e-9 * f.max(1.0));
        }
        assert_eq!(ggx_specular(n, -wi, wo, 0.3), 0.0);
    }

    #[test]
    fn ggx_half_vector_sampler_matches_density() {
        // P(cos θh > c) from the sampler vs midpoint quadrature of D(h)·cos θh
        let alpha = 0.4;
        let c: f64 = 0.9;
        let steps = 100_000;
        let theta_max = c.acos();
        let dt = theta_max / steps as f64;
        let mass: f64 = (0..steps)
            .map(|k| {
                let t = (k as f64 + 0.5) * dt;
                ggx_distribution(t.cos(), alpha) * t.cos() * t.sin() * dt * 2.0 * PI
            })
            .sum();
        let mut rng = rng::stream_rng(1, 99, 0);
        let n = 200_000;
        let hits = (0..n).filter(|_| ggx_sample_half(alpha, rng.random(), rng.random()).z > c).count();
        let p = hits as f64 / n as f64;
        assert!((p - mass).abs() < 0.005, "{p} vs {mass}");
    }
}
