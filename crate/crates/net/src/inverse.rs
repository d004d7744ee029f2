//! Scene-property recovery: a light network and a material network are fit
//! through the frozen renderer so its rendering matches a target image.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pndr_core::compose::LdrImage;
use pndr_core::gbuffer::GBuffer;
use pndr_core::math::{Pose, Vec3};
use pndr_core::randomize::{LightSample, MaterialMaps, MaterialSample, DEFAULT_INTENSITY, LIGHT_RADIUS, ROUGHNESS_MIN};
use pndr_core::rng::{stream_rng, streams};

use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::rendernet::{build_forward, normalize, Field, NamedTensor, NetParams, NORM_RADIUS};
use crate::scalar::Scalar;
use crate::tape::{Graph, Unary, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoverMode {
    Light,
    Material,
    Both,
}

impl RecoverMode {
    pub fn recovers_light(self) -> bool {
        matches!(self, RecoverMode::Light | RecoverMode::Both)
    }

    pub fn recovers_materials(self) -> bool {
        matches!(self, RecoverMode::Material | RecoverMode::Both)
    }
}

impl std::str::FromStr for RecoverMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "light" => Ok(RecoverMode::Light),
            "material" => Ok(RecoverMode::Material),
            "both" => Ok(RecoverMode::Both),
            _ => Err(format!("unknown mode {s:?} (expected light, material or both)")),
        }
    }
}

fn record<T: Scalar>(tensors: &[NamedTensor], g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
    tensors
        .iter()
        .map(|t| {
            let data = t.data.iter().map(|&v| T::of(v as f64)).collect();
            if trainable {
                g.param(t.shape, data)
            } else {
                g.constant(t.shape, data)
            }
        })
        .collect()
}

fn uniform_tensor(rng: &mut impl Rng, name: String, shape: [usize; 3], bound: f64) -> NamedTensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * bound) as f32).collect();
    NamedTensor { name, shape, data }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightNetConfig {
    pub hidden: usize,
    pub hidden_layers: usize,
    pub omega0: f64,
    pub embed_dim: usize,
}

impl Default for LightNetConfig {
    fn default() -> Self {
        LightNetConfig {
            hidden: 64,
            hidden_layers: 3,
            omega0: 30.0,
            embed_dim: 16,
        }
    }
}

/// SIREN conditioned on a scene embedding; its raw 3-vector output is
/// reparameterized onto the upper light hemisphere.
#[derive(Clone, Debug, PartialEq)]
pub struct LightNet {
    pub cfg: LightNetConfig,
    pub scene_ids: Vec<u32>,
    /// Embedding table, then a weight/bias pair per layer.
    pub tensors: Vec<NamedTensor>,
}

impl LightNet {
    /// SIREN initialization. With `initial_direction` the output bias is set
    /// to it, so the first iterate points there.
    pub fn init(cfg: LightNetConfig, scene_ids: &[u32], seed: u64, initial_direction: Option<Vec3>) -> Self {
        let mut rng = stream_rng(seed, streams::INIT, 1);
        let mut tensors = vec![uniform_tensor(&mut rng, "embedding".into(), [scene_ids.len() * cfg.embed_dim, 1, 1], 1.0)];
        let mut n_in = cfg.embed_dim;
        for l in 0..cfg.hidden_layers {
            let bound = if l == 0 {
                1.0 / n_in as f64
            } else {
                (6.0 / n_in as f64).sqrt() / cfg.omega0
            };
            tensors.push(uniform_tensor(&mut rng, format!("hidden{l}.w"), [cfg.hidden, n_in, 1], bound));
            tensors.push(uniform_tensor(&mut rng, format!("hidden{l}.b"), [cfg.hidden, 1, 1], bound));
            n_in = cfg.hidden;
        }
        let bound = (6.0 / n_in as f64).sqrt() / cfg.omega0;
        tensors.push(uniform_tensor(&mut rng, "out.w".into(), [3, n_in, 1], bound));
        let mut bias = uniform_tensor(&mut rng, "out.b".into(), [3, 1, 1], bound);
        if let Some(d) = initial_direction {
            bias.data = vec![d.x as f32, d.y as f32, d.z as f32];
        }
        tensors.push(bias);
        LightNet {
            cfg,
            scene_ids: scene_ids.to_vec(),
            tensors,
        }
    }

    fn row(&self, scene_id: u32) -> Result<usize> {
        self.scene_ids.iter().position(|&s| s == scene_id).ok_or(Error::UnknownId {
            kind: "scene",
            id: scene_id as i64,
        })
    }

    /// Records the network; returns the scene-frame light position `[3]`.
    pub fn record<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], scene_id: u32) -> Result<Var> {
        let row = self.row(scene_id)?;
        let mut h = g.gather(vars[0], self.cfg.embed_dim, &[row as i32], 1, 1);
        for l in 0..self.cfg.hidden_layers {
            let z = g.linear(h, vars[1 + 2 * l], vars[2 + 2 * l]);
            let z = g.scale(z, self.cfg.omega0);
            h = g.sin(z);
        }
        let k = 1 + 2 * self.cfg.hidden_layers;
        let raw = g.linear(h, vars[k], vars[k + 1]);
        Ok(g.hemisphere(raw, LIGHT_RADIUS))
    }

    pub fn forward(&self, scene_id: u32, world_to_camera: &Pose) -> Result<LightSample> {
        let mut g = Graph::<f64>::new();
        let vars = record(&self.tensors, &mut g, false);
        let p = self.record(&mut g, &vars, scene_id)?;
        let v = g.value(p);
        Ok(LightSample::from_scene_position(
            Vec3::new(v[0], v[1], v[2]),
            world_to_camera,
            DEFAULT_INTENSITY,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialNetConfig {
    pub hidden: usize,
    pub hidden_layers: usize,
    pub embed_dim: usize,
}

impl Default for MaterialNetConfig {
    fn default() -> Self {
        MaterialNetConfig {
            hidden: 32,
            hidden_layers: 2,
            embed_dim: 8,
        }
    }
}

/// Material row layout on the tape: albedo RGB, specularity, roughness
/// (the renderer's input order).
pub const MATERIAL_ROW: usize = 5;

/// ReLU MLP over concatenated object and scene embeddings with sigmoid
/// outputs mapped to the material ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialNet {
    pub cfg: MaterialNetConfig,
    pub object_ids: Vec<i32>,
    pub scene_ids: Vec<u32>,
    /// Object embedding, scene embedding, then a weight/bias pair per layer.
    pub tensors: Vec<NamedTensor>,
}

impl MaterialNet {
    pub fn init(cfg: MaterialNetConfig, object_ids: &[i32], scene_ids: &[u32], seed: u64) -> Self {
        let mut rng = stream_rng(seed, streams::INIT, 2);
        let d = cfg.embed_dim;
        let mut tensors = vec![
            uniform_tensor(&mut rng, "object_embedding".into(), [object_ids.len() * d, 1, 1], 1.0),
            uniform_tensor(&mut rng, "scene_embedding".into(), [scene_ids.len() * d, 1, 1], 1.0),
        ];
        let mut n_in = 2 * d;
        for l in 0..cfg.hidden_layers {
            tensors.push(uniform_tensor(
                &mut rng,
                format!("hidden{l}.w"),
                [cfg.hidden, n_in, 1],
                (6.0 / n_in as f64).sqrt(),
            ));
            tensors.push(NamedTensor {
                name: format!("hidden{l}.b"),
                shape: [cfg.hidden, 1, 1],
                data: vec![0.0; cfg.hidden],
            });
            n_in = cfg.hidden;
        }
        tensors.push(uniform_tensor(
            &mut rng,
            "out.w".into(),
            [MATERIAL_ROW, n_in, 1],
            (3.0 / n_in as f64).sqrt(),
        ));
        tensors.push(NamedTensor {
            name: "out.b".into(),
            shape: [MATERIAL_ROW, 1, 1],
            data: vec![0.0; MATERIAL_ROW],
        });
        MaterialNet {
            cfg,
            object_ids: object_ids.to_vec(),
            scene_ids: scene_ids.to_vec(),
            tensors,
        }
    }

    /// Records the network for one object; returns its `[5]` material row.
    pub fn record<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], object_id: i32, scene_id: u32) -> Result<Var> {
        let orow = self.object_ids.iter().position(|&o| o == object_id).ok_or(Error::UnknownId {
            kind: "object",
            id: object_id as i64,
        })?;
        let srow = self.scene_ids.iter().position(|&s| s == scene_id).ok_or(Error::UnknownId {
            kind: "scene",
            id: scene_id as i64,
        })?;
        let d = self.cfg.embed_dim;
        let eo = g.gather(vars[0], d, &[orow as i32], 1, 1);
        let es = g.gather(vars[1], d, &[srow as i32], 1, 1);
        let mut h = g.concat(eo, es);
        for l in 0..self.cfg.hidden_layers {
            let z = g.linear(h, vars[2 + 2 * l], vars[3 + 2 * l]);
            h = g.relu(z);
        }
        let k = 2 + 2 * self.cfg.hidden_layers;
        let raw = g.linear(h, vars[k], vars[k + 1]);
        let s = g.sigmoid(raw);
        // roughness = Rmin + (1 − Rmin)·σ; the other four pass through
        let scale = g.constant([MATERIAL_ROW, 1, 1], [1.0, 1.0, 1.0, 1.0, 1.0 - ROUGHNESS_MIN].map(T::of).to_vec());
        let offset = g.constant([MATERIAL_ROW, 1, 1], [0.0, 0.0, 0.0, 0.0, ROUGHNESS_MIN].map(T::of).to_vec());
        let scaled = g.mul(s, scale);
        Ok(g.add(scaled, offset))
    }

    pub fn forward(&self, object_id: i32, scene_id: u32) -> Result<MaterialSample> {
        let mut g = Graph::<f64>::new();
        let vars = record(&self.tensors, &mut g, false);
        let row = self.record(&mut g, &vars, object_id, scene_id)?;
        Ok(row_to_sample(object_id, g.value(row)))
    }
}

fn row_to_sample<T: Scalar>(object_id: i32, v: &[T]) -> MaterialSample {
    MaterialSample {
        object_id,
        albedo: [v[0].f64(), v[1].f64(), v[2].f64()],
        specularity: v[3].f64(),
        roughness: v[4].f64(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InverseConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Light initializations, stratified in azimuth.
    pub n_inits: usize,
    /// Elevation of the initial light directions (degrees).
    pub init_elevation_deg: f64,
    pub seed: u64,
    pub light_net: LightNetConfig,
    pub material_net: MaterialNetConfig,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            steps: 500,
            learning_rate: 1e-2,
            n_inits: 8,
            init_elevation_deg: 45.0,
            seed: 0,
            light_net: LightNetConfig::default(),
            material_net: MaterialNetConfig::default(),
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_inits == 0 || !(self.learning_rate > 0.0) || !(0.0..90.0).contains(&self.init_elevation_deg) {
            return Err(Error::InvalidConfig(format!("bad inverse configuration {self:?}")));
        }
        Ok(())
    }

    /// Scene-frame unit direction of initialization `k`.
    pub fn init_direction(&self, k: usize) -> Vec3 {
        let phi = 2.0 * PI * (k as f64 + 0.5) / self.n_inits as f64;
        let el = self.init_elevation_deg.to_radians();
        Vec3::new(el.cos() * phi.cos(), el.cos() * phi.sin(), el.sin())
    }
}

/// What is known about the target view. The parts not being recovered must
/// be supplied: the light for `Material` mode, the materials for `Light` mode.
#[derive(Clone, Debug)]
pub struct RecoveryProblem<'a> {
    pub gbuffer: &'a GBuffer,
    pub world_to_camera: Pose,
    pub scene_id: u32,
    pub target: &'a LdrImage,
    pub known_light: Option<LightSample>,
    pub known_materials: Option<Vec<MaterialSample>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub light: LightSample,
    pub materials: Vec<MaterialSample>,
    pub loss: f64,
    /// Initialization that produced the result.
    pub init: usize,
    pub initial_loss: f64,
    /// Best loss reached by every initialization.
    pub init_losses: Vec<f64>,
}

/// Constant per-view data shared by every optimization step.
struct ViewData {
    h: usize,
    w: usize,
    /// Camera-space positions in meters, channel-major, zero where invalid.
    x: Vec<f32>,
    x_norm: Vec<f32>,
    normal: Vec<f32>,
    base_albedo: Vec<f32>,
    mask: Vec<bool>,
    mask_field: Vec<f32>,
    /// Row of each pixel's instance in `ids`, −1 where invalid.
    rows: Vec<i32>,
    ids: Vec<i32>,
    target: Vec<f32>,
    scale: f64,
}

impl ViewData {
    fn new(p: &RecoveryProblem) -> Result<Self> {
        let g = p.gbuffer;
        let (h, w) = (g.height, g.width);
        let t = &p.target.0;
        if (t.width, t.height, t.channels) != (w, h, 3) {
            return Err(Error::ShapeMismatch(format!(
                "target {}x{}x{} vs G-buffer {w}x{h}",
                t.width, t.height, t.channels
            )));
        }
        let n_valid = g.valid_count();
        if n_valid == 0 {
            return Err(pndr_core::Error::EmptyMask.into());
        }
        let ids = g.instances();
        let rows = g
            .instance
            .iter()
            .zip(&g.valid)
            .map(|(&id, &v)| {
                if v {
                    ids.iter().position(|&i| i == id).expect("listed instance") as i32
                } else {
                    -1
                }
            })
            .collect();
        let x = Field::from_map(&g.position).data;
        Ok(ViewData {
            h,
            w,
            x_norm: x.iter().map(|&v| normalize(v)).collect(),
            x,
            normal: Field::from_map(&g.normal).data,
            base_albedo: g.base_albedo.data.clone(),
            mask: g.valid.clone(),
            mask_field: g.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
            rows,
            ids,
            target: Field::from_map(t).data,
            scale: 1.0 / (3.0 * n_valid as f64),
        })
    }

    fn constant<T: Scalar>(&self, g: &mut Graph<T>, c: usize, data: &[f32]) -> Var {
        g.constant([c, self.h, self.w], data.iter().map(|&v| T::of(v as f64)).collect())
    }

    /// Records the whole differentiable rendering for a camera-frame light
    /// `[3]` and a per-pixel material field `[5, H, W]`; returns the LDR
    /// image `[3, H, W]`.
    fn render<T: Scalar>(&self, g: &mut Graph<T>, net: &NetParams, net_vars: &[Var], light_cam: Var, materials: Var) -> Var {
        let (h, w) = (self.h, self.w);
        let mask = self.constant(g, 1, &self.mask_field);
        let x = self.constant(g, 3, &self.x);
        let lb = g.broadcast_pixels(light_cam, h, w);
        let d = g.sub(lb, x);
        let sq = g.unary(d, Unary::Square);
        let s = g.sum_channels(sq);
        let dist = g.unary(s, Unary::Sqrt);
        let inv = g.unary(dist, Unary::Recip);
        let dir = g.mul_channel(d, inv);
        let dir = g.mul_channel(dir, mask);
        let dist = g.mul(dist, mask);
        let dist = g.scale(dist, 1.0 / NORM_RADIUS);
        let xn = self.constant(g, 3, &self.x_norm);
        let n = self.constant(g, 3, &self.normal);
        let albedo = g.slice(materials, 0, 3);
        let spec = g.slice(materials, 3, 1);
        let input = g.concat_all(&[xn, n, materials, dir, dist]);
        let out = build_forward(g, &net.arch, net_vars, input);
        let (dd, di, gd, gi) = (g.slice(out, 0, 3), g.slice(out, 3, 3), g.slice(out, 6, 3), g.slice(out, 9, 3));
        let diffuse = g.add(dd, di);
        let glossy = g.add(gd, gi);
        let dc = g.mul(diffuse, albedo);
        let gc = g.mul_channel(glossy, spec);
        let hdr = g.add(dc, gc);
        g.unary(hdr, Unary::ToneMap)
    }

    /// Per-pixel `[A, S, R]` field of known materials, base albedo applied.
    fn known_material_field(&self, samples: &[MaterialSample], gbuffer: &GBuffer) -> Result<Vec<f32>> {
        let maps: MaterialMaps = pndr_core::randomize::compose_material_maps(gbuffer, samples)?;
        let mut f = Field::zeros(MATERIAL_ROW, self.h, self.w);
        let hw = self.h * self.w;
        for p in 0..hw {
            let a = maps.albedo.pixel(p);
            f.data[p] = a[0];
            f.data[hw + p] = a[1];
            f.data[2 * hw + p] = a[2];
            f.data[3 * hw + p] = maps.specularity.data[p];
            f.data[4 * hw + p] = maps.roughness.data[p];
        }
        Ok(f.data)
    }
}

struct Evaluation {
    loss: f64,
    grads: Vec<Vec<f32>>,
    light: LightSample,
    materials: Vec<MaterialSample>,
    image: LdrImage,
}

struct Solver<'a> {
    net: &'a NetParams,
    problem: &'a RecoveryProblem<'a>,
    view: ViewData,
    fit_light: bool,
    fit_materials: bool,
    cfg: InverseConfig,
    known_materials: Option<Vec<f32>>,
}

impl<'a> Solver<'a> {
    fn new(net: &'a NetParams, problem: &'a RecoveryProblem<'a>, fit_light: bool, fit_materials: bool, cfg: InverseConfig) -> Result<Self> {
        if !fit_light && problem.known_light.is_none() {
            return Err(Error::InvalidConfig("material-only recovery needs the light".into()));
        }
        let view = ViewData::new(problem)?;
        let known_materials = match &problem.known_materials {
            _ if fit_materials => None,
            Some(m) => Some(view.known_material_field(m, problem.gbuffer)?),
            None => return Err(Error::InvalidConfig("light-only recovery needs the materials".into())),
        };
        Ok(Solver {
            net,
            problem,
            view,
            fit_light,
            fit_materials,
            cfg,
            known_materials,
        })
    }

    /// Loss, gradients for the fitted tensors (when asked), the decoded
    /// light and materials, and the rendering of the current iterate.
    fn evaluate(&self, light_net: &LightNet, material_net: &MaterialNet, want_grads: bool) -> Result<Evaluation> {
        let mut g = Graph::<f32>::new();
        let net_vars = self.net.leaves(&mut g, false);
        let p = self.problem;
        let (light_vars, light_cam, light) = if self.fit_light {
            let vars = record(&light_net.tensors, &mut g, want_grads);
            let pos = light_net.record(&mut g, &vars, p.scene_id)?;
            let v = g.value(pos);
            let light = LightSample::from_scene_position(Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64), &p.world_to_camera, DEFAULT_INTENSITY);
            let r = &p.world_to_camera.rotation;
            let rot = g.constant([3, 3, 1], (0..9).map(|i| r.rows[i / 3][i % 3] as f32).collect());
            let t = p.world_to_camera.translation;
            let tr = g.constant([3, 1, 1], vec![t.x as f32, t.y as f32, t.z as f32]);
            (vars, g.linear(pos, rot, tr), light)
        } else {
            let light = p.known_light.expect("checked in Solver::new");
            let c = light.position_camera;
            (Vec::new(), g.constant([3, 1, 1], vec![c.x as f32, c.y as f32, c.z as f32]), light)
        };
        let (mat_vars, materials, samples) = if self.fit_materials {
            let vars = record(&material_net.tensors, &mut g, want_grads);
            let mut rows = Vec::with_capacity(self.view.ids.len());
            let mut samples = Vec::with_capacity(self.view.ids.len());
            for &id in &self.view.ids {
                let row = material_net.record(&mut g, &vars, id, p.scene_id)?;
                samples.push(row_to_sample(id, g.value(row)));
                rows.push(row);
            }
            let table = g.concat_all(&rows);
            let field = g.gather(table, MATERIAL_ROW, &self.view.rows, self.view.h, self.view.w);
            let base = self.view.constant(&mut g, 1, &self.view.base_albedo);
            let albedo = g.slice(field, 0, 3);
            let albedo = g.mul_channel(albedo, base);
            let rest = g.slice(field, 3, 2);
            (vars, g.concat(albedo, rest), samples)
        } else {
            let field = self.known_materials.as_ref().expect("checked in Solver::new");
            let var = self.view.constant(&mut g, MATERIAL_ROW, field);
            (Vec::new(), var, p.known_materials.clone().unwrap_or_default())
        };
        let ldr = self.view.render(&mut g, self.net, &net_vars, light_cam, materials);
        let loss = g.masked_l1(ldr, &self.view.target, &self.view.mask, self.view.scale);
        let image = Field {
            channels: 3,
            height: self.view.h,
            width: self.view.w,
            data: g.value(ldr).to_vec(),
        }
        .to_map(0, 3);
        let mut grads = Vec::new();
        if want_grads {
            let mut gr = g.backward(loss);
            for (v, t) in light_vars
                .iter()
                .zip(&light_net.tensors)
                .chain(mat_vars.iter().zip(&material_net.tensors))
            {
                grads.push(gr.take(*v).unwrap_or_else(|| vec![0.0; t.data.len()]));
            }
        }
        Ok(Evaluation {
            loss: g.scalar(loss) as f64,
            grads,
            light,
            materials: samples,
            image: LdrImage(image),
        })
    }

    fn run(&self, init: usize) -> Result<Recovery> {
        let p = self.problem;
        let (mut light_net, mut material_net) = initial_nets(&self.cfg, init, p.scene_id, &self.view.ids);
        let light_len = if self.fit_light { light_net.tensors.len() } else { 0 };
        let mat_len = if self.fit_materials { material_net.tensors.len() } else { 0 };
        let sizes = light_net.tensors[..light_len]
            .iter()
            .chain(&material_net.tensors[..mat_len])
            .map(|t| t.data.len());
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: self.cfg.learning_rate,
                ..Default::default()
            },
            sizes,
        );
        let mut best: Option<Recovery> = None;
        let mut initial_loss = f64::NAN;
        for step in 0..=self.cfg.steps {
            let last = step == self.cfg.steps;
            let e = self.evaluate(&light_net, &material_net, !last)?;
            if !e.loss.is_finite() {
                return Err(Error::Divergence { init, step });
            }
            if step == 0 {
                initial_loss = e.loss;
            }
            if best.as_ref().is_none_or(|b| e.loss < b.loss) {
                best = Some(Recovery {
                    light: e.light,
                    materials: e.materials,
                    loss: e.loss,
                    init,
                    initial_loss,
                    init_losses: Vec::new(),
                });
            }
            if last || e.loss == 0.0 {
                break;
            }
            let mut data: Vec<Vec<f32>> = light_net.tensors[..light_len]
                .iter_mut()
                .chain(&mut material_net.tensors[..mat_len])
                .map(|t| std::mem::take(&mut t.data))
                .collect();
            adam.step(&mut data, &e.grads);
            for (t, d) in light_net.tensors[..light_len]
                .iter_mut()
                .chain(&mut material_net.tensors[..mat_len])
                .zip(data)
            {
                t.data = d;
            }
        }
        Ok(best.expect("at least one evaluation"))
    }
}

/// The light and material networks that initialization `init` starts from.
pub fn initial_nets(cfg: &InverseConfig, init: usize, scene_id: u32, object_ids: &[i32]) -> (LightNet, MaterialNet) {
    let seed = cfg.seed.wrapping_add(init as u64);
    (
        LightNet::init(cfg.light_net, &[scene_id], seed, Some(cfg.init_direction(init))),
        MaterialNet::init(cfg.material_net, object_ids, &[scene_id], seed),
    )
}

/// Renders the iterate given by the two networks exactly as the optimizer
/// sees it; returns the loss against `problem.target` and the image.
pub fn render_candidate(
    net: &NetParams,
    problem: &RecoveryProblem,
    mode: RecoverMode,
    light_net: &LightNet,
    material_net: &MaterialNet,
) -> Result<(f64, LdrImage)> {
    let solver = Solver::new(net, problem, mode.recovers_light(), mode.recovers_materials(), InverseConfig::default())?;
    let e = solver.evaluate(light_net, material_net, false)?;
    Ok((e.loss, e.image))
}

/// Renders known light and materials through the same differentiable path
/// the optimizer uses (the target is only used for its shape).
pub fn render_view(net: &NetParams, gbuffer: &GBuffer, world_to_camera: Pose, light: LightSample, materials: &[MaterialSample]) -> Result<LdrImage> {
    let black = LdrImage(pndr_core::Map::zeros(gbuffer.width, gbuffer.height, 3));
    let problem = RecoveryProblem {
        gbuffer,
        world_to_camera,
        scene_id: 0,
        target: &black,
        known_light: Some(light),
        known_materials: Some(materials.to_vec()),
    };
    let solver = Solver::new(net, &problem, false, false, InverseConfig::default())?;
    let (l, m) = initial_nets(&solver.cfg, 0, 0, &solver.view.ids);
    Ok(solver.evaluate(&l, &m, false)?.image)
}

/// Fits the light and/or materials of one view. Inits may run in parallel;
/// the lowest loss wins, ties going to the lower init index.
pub fn recover_scene(net: &NetParams, problem: &RecoveryProblem, mode: RecoverMode, cfg: &InverseConfig) -> Result<Recovery> {
    cfg.validate()?;
    let solver = Solver::new(net, problem, mode.recovers_light(), mode.recovers_materials(), *cfg)?;
    let n_inits = if mode.recovers_light() { cfg.n_inits } else { 1 };
    let attempts: Vec<Recovery> = (0..n_inits).into_par_iter().map(|k| solver.run(k)).collect::<Result<_>>()?;
    let init_losses: Vec<f64> = attempts.iter().map(|a| a.loss).collect();
    let best = attempts
        .into_iter()
        .reduce(|a, b| if b.loss < a.loss { b } else { a })
        .expect("at least one init");
    Ok(Recovery { init_losses, ..best })
}

/// Angle between the directions from the scene center to two lights (degrees).
pub fn light_angle_deg(a: &LightSample, b: &LightSample) -> f64 {
    let c = a.position_scene.normalize().dot(b.position_scene.normalize()).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}
