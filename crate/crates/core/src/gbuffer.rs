//! Primary-ray G-buffer: camera-space positions and normals, instance ids,
//! decolorized albedo and the validity mask.

use rayon::prelude::*;

use crate::bvh::{Bvh, Hit};
use crate::map::Map;
use crate::math::{Pose, Vec3};
use crate::scenegen::{Intrinsics, SceneGraph};

pub const MIN_RESOLUTION: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    /// Camera-space hit positions (m); camera looks down +z.
    pub position: Map,
    /// Camera-space unit normals facing the camera.
    pub normal: Map,
    /// 0 = room, ≥ 1 = object, −1 = miss.
    pub instance: Vec<i32>,
    pub base_albedo: Map,
    pub valid: Vec<bool>,
}

impl GBuffer {
    pub fn empty(width: usize, height: usize) -> Self {
        GBuffer {
            width,
            height,
            position: Map::zeros(width, height, 3),
            normal: Map::zeros(width, height, 3),
            instance: vec![-1; width * height],
            base_albedo: Map::zeros(width, height, 1),
            valid: vec![false; width * height],
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn x(&self, i: usize) -> Vec3 {
        Vec3::from_slice(self.position.pixel(i))
    }

    pub fn n(&self, i: usize) -> Vec3 {
        Vec3::from_slice(self.normal.pixel(i))
    }

    /// Instance ids present in the image, ascending.
    pub fn instances(&self) -> Vec<i32> {
        let mut ids: Vec<i32> = self.instance.iter().copied().filter(|&i| i >= 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Unnormalized camera-space direction through the center of pixel `(px, py)`.
pub fn pixel_ray(k: &Intrinsics, px: usize, py: usize) -> Vec3 {
    Vec3::new((px as f64 + 0.5 - k.cx) / k.fx, (py as f64 + 0.5 - k.cy) / k.fy, 1.0)
}

/// Interpolated, renormalized shading normal at a hit.
pub fn hit_normal(bvh: &Bvh, hit: &Hit) -> Vec3 {
    let t = &bvh.triangles[hit.triangle];
    let w0 = 1.0 - hit.u - hit.v;
    let n = t.n[0] * w0 + t.n[1] * hit.u + t.n[2] * hit.v;
    if n.norm() > 1e-12 {
        n.normalize()
    } else {
        (t.v[1] - t.v[0]).cross(t.v[2] - t.v[0]).normalize()
    }
}

pub fn hit_albedo(bvh: &Bvh, hit: &Hit) -> f64 {
    let t = &bvh.triangles[hit.triangle];
    (t.albedo[0] * (1.0 - hit.u - hit.v) + t.albedo[1] * hit.u + t.albedo[2] * hit.v).clamp(0.0, 1.0)
}

struct PixelSample {
    x: Vec3,
    n: Vec3,
    instance: i32,
    albedo: f64,
}

fn shade_primary(bvh: &Bvh, world_to_camera: &Pose, camera_to_world: &Pose, dir_cam: Vec3) -> Option<PixelSample> {
    let origin = camera_to_world.translation;
    let dir = camera_to_world.transform_vector(dir_cam).normalize();
    let hit = bvh.intersect(origin, dir, f64::INFINITY)?;
    let p_world = origin + dir * hit.t;
    let mut n_world = hit_normal(bvh, &hit);
    if n_world.dot(dir) > 0.0 {
        n_world = -n_world;
    }
    Some(PixelSample {
        x: world_to_camera.transform_point(p_world),
        n: world_to_camera.transform_vector(n_world).normalize(),
        instance: bvh.triangles[hit.triangle].instance,
        albedo: hit_albedo(bvh, &hit),
    })
}

/// Casts one ray through every pixel center. Rows are processed in parallel;
/// the result does not depend on the thread count.
pub fn raycast_gbuffer(scene: &SceneGraph, bvh: &Bvh, width: usize, height: usize) -> GBuffer {
    assert!(width >= MIN_RESOLUTION && height >= MIN_RESOLUTION, "G-buffer must be at least 8x8");
    let k = scene.camera.intrinsics.scaled_to(width, height);
    let w2c = scene.world_to_camera();
    let c2w = w2c.inverse();
    let rows: Vec<Vec<Option<PixelSample>>> = (0..height)
        .into_par_iter()
        .map(|py| (0..width).map(|px| shade_primary(bvh, &w2c, &c2w, pixel_ray(&k, px, py))).collect())
        .collect();

    let mut g = GBuffer::empty(width, height);
    for (i, sample) in rows.into_iter().flatten().enumerate() {
        if let Some(s) = sample {
            g.position.pixel_mut(i).copy_from_slice(&[s.x.x as f32, s.x.y as f32, s.x.z as f32]);
            g.normal.pixel_mut(i).copy_from_slice(&[s.n.x as f32, s.n.y as f32, s.n.z as f32]);
            g.instance[i] = s.instance;
            g.base_albedo.data[i] = s.albedo as f32;
            g.valid[i] = true;
        }
    }
    g
}
