//! In-memory pipeline stages shared by the commands and the test suites.

use rand::Rng;

use pndr_core::bvh::{build_bvh, Bvh};
use pndr_core::compose::{render_ldr, LdrImage};
use pndr_core::gbuffer::{raycast_gbuffer, GBuffer};
use pndr_core::math::Pose;
use pndr_core::oracle::{render_buffers, LightBuffers, ShadeConfig};
use pndr_core::randomize::{
    compose_material_maps, light_maps, sample_light_from, sample_materials_with, LightDistribution, LightMaps, LightSample, MaterialMaps,
    MaterialSample, DEFAULT_INTENSITY,
};
use pndr_core::rng::{stream_rng, streams};
use pndr_core::scenegen::{place_objects, SceneGraph};
use pndr_net::rendernet::{infer_render, NetParams, TrainSample};

use crate::config::{LightMode, RunConfig};
use crate::error::Result;

/// Places the configured objects for one scene.
pub fn build_scene(cfg: &RunConfig, scene_id: u32, seed: u64) -> Result<SceneGraph> {
    let mut scene = place_objects(
        &cfg.shape_set.meshes(),
        cfg.room,
        cfg.objects,
        scene_seed(seed, scene_id),
        &cfg.placement(),
    )?;
    scene.scene_id = scene_id;
    Ok(scene)
}

fn scene_seed(seed: u64, scene_id: u32) -> u64 {
    stream_rng(seed, streams::PLACEMENT, scene_id as u64).random()
}

/// Light and material seeds of draw `k` of a scene.
pub fn draw_seeds(seed: u64, scene_id: u32, k: usize) -> (u64, u64) {
    let index = ((scene_id as u64) << 32) | k as u64;
    (
        stream_rng(seed, streams::LIGHT, index).random(),
        stream_rng(seed, streams::MATERIAL, index).random(),
    )
}

/// Ray-cast geometry of a scene at the configured resolution.
pub struct Geometry {
    pub scene: SceneGraph,
    pub bvh: Bvh,
    pub gbuffer: GBuffer,
}

impl Geometry {
    pub fn new(cfg: &RunConfig, scene: SceneGraph) -> Self {
        Self::at_resolution(scene, cfg.width, cfg.height)
    }

    pub fn at_resolution(scene: SceneGraph, width: usize, height: usize) -> Self {
        let bvh = build_bvh(&scene);
        let gbuffer = raycast_gbuffer(&scene, &bvh, width, height);
        Geometry { scene, bvh, gbuffer }
    }

    pub fn world_to_camera(&self) -> Pose {
        self.scene.world_to_camera()
    }
}

/// One randomized view: a light and a material draw applied to a G-buffer.
#[derive(Clone, Debug)]
pub struct View {
    pub light_seed: u64,
    pub material_seed: u64,
    pub light: LightSample,
    pub materials: Vec<MaterialSample>,
    pub maps: MaterialMaps,
    pub lights: LightMaps,
}

pub fn draw_light(cfg: &RunConfig, light_seed: u64, world_to_camera: &Pose) -> LightSample {
    let dist = match cfg.light_mode {
        LightMode::Fixed => LightDistribution::Fixed {
            direction: cfg.fixed_light_direction,
        },
        LightMode::Dynamic => cfg.light_distribution,
    };
    sample_light_from(&dist, light_seed, world_to_camera, DEFAULT_INTENSITY)
}

pub fn randomize_view(cfg: &RunConfig, geo: &Geometry, light_seed: u64, material_seed: u64) -> Result<View> {
    let light = draw_light(cfg, light_seed, &geo.world_to_camera());
    let materials = sample_materials_with(&geo.scene.instance_ids(), material_seed, &cfg.materials)?;
    view_with(geo, light_seed, material_seed, light, materials)
}

/// A view with explicitly given light and materials.
pub fn view_with(geo: &Geometry, light_seed: u64, material_seed: u64, light: LightSample, materials: Vec<MaterialSample>) -> Result<View> {
    let maps = compose_material_maps(&geo.gbuffer, &materials)?;
    let lights = light_maps(&geo.gbuffer, &light)?;
    Ok(View {
        light_seed,
        material_seed,
        light,
        materials,
        maps,
        lights,
    })
}

/// Shading noise is keyed by the view so different draws decorrelate.
pub fn view_shade(cfg: &ShadeConfig, view: &View) -> ShadeConfig {
    ShadeConfig {
        seed: cfg.seed ^ view.light_seed ^ view.material_seed.rotate_left(29),
        ..*cfg
    }
}

pub fn oracle_buffers(geo: &Geometry, view: &View, shade: &ShadeConfig) -> Result<LightBuffers> {
    let shade = view_shade(shade, view);
    Ok(render_buffers(
        &geo.gbuffer,
        &view.maps,
        &view.lights,
        &view.light,
        &view.materials,
        &geo.world_to_camera(),
        &geo.bvh,
        &shade,
    )?)
}

pub fn oracle_image(buffers: &LightBuffers, view: &View) -> Result<LdrImage> {
    Ok(render_ldr(buffers, &view.maps)?)
}

pub fn net_image(params: &NetParams, geo: &Geometry, view: &View) -> Result<LdrImage> {
    Ok(infer_render(params, &geo.gbuffer, &view.maps, &view.lights)?)
}

pub fn train_sample(geo: &Geometry, view: &View, buffers: &LightBuffers) -> Result<TrainSample> {
    Ok(TrainSample::new(&geo.gbuffer, &view.maps, &view.lights, buffers)?)
}

/// Draws `count` views of one scene and shades them with the oracle.
pub fn oracle_dataset(cfg: &RunConfig, geo: &Geometry, seed: u64, count: usize) -> Result<Vec<(View, LightBuffers)>> {
    let shade = cfg.effective_shade();
    (0..count)
        .map(|k| {
            let (ls, ms) = draw_seeds(seed, geo.scene.scene_id, k);
            let view = randomize_view(cfg, geo, ls, ms)?;
            let buffers = oracle_buffers(geo, &view, &shade)?;
            Ok((view, buffers))
        })
        .collect()
}
