//! The learned deferred renderer: a U-shaped convolutional network mapping the
//! 15-channel geometry/material/light field to the four light buffers, with
//! its training loop and checkpoint format.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pndr_core::compose::{render_ldr, LdrImage};
use pndr_core::dataio::{write_bytes, Tensor};
use pndr_core::gbuffer::GBuffer;
use pndr_core::oracle::LightBuffers;
use pndr_core::randomize::{LightMaps, MaterialMaps};
use pndr_core::rng::{stream_rng, streams};
use pndr_core::Map;

use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::tape::{Graph, Shape, Var};

/// Input channel order: X(3) N(3) A(3) S(1) R(1) Ldir(3) Ldist(1).
pub const IN_CHANNELS: usize = 15;
/// Output channel order: Ddir(3) Dind(3) Gdir(3) Gind(3).
pub const OUT_CHANNELS: usize = 12;
/// Positions and light distances are divided by this (m).
pub const NORM_RADIUS: f64 = 3.0;
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PNDRCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Number of ×2 downsamplings.
    pub levels: usize,
    /// Channels at full resolution; doubled at every level.
    pub base_channels: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            levels: 3,
            base_channels: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 6 || self.base_channels == 0 {
            return Err(Error::InvalidConfig(format!("unsupported architecture {self:?}")));
        }
        Ok(())
    }

    /// Spatial dimensions must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.levels
    }

    fn width(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Convolutions in evaluation order: encoder, bottleneck, decoder
    /// (deepest first), 1×1 head.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let spec = |name: String, cin, cout, kernel| LayerSpec { name, cin, cout, kernel };
        let mut out = Vec::new();
        for l in 0..self.levels {
            let cin = if l == 0 { IN_CHANNELS } else { self.width(l - 1) };
            out.push(spec(format!("enc{l}"), cin, self.width(l), 3));
        }
        out.push(spec("bottleneck".into(), self.width(self.levels - 1), self.width(self.levels), 3));
        for l in (0..self.levels).rev() {
            out.push(spec(format!("dec{l}"), self.width(l + 1) + self.width(l), self.width(l), 3));
        }
        out.push(spec("head".into(), self.width(0), OUT_CHANNELS, 1));
        out
    }

    /// Multiply-accumulates of one forward pass at `h × w`.
    pub fn forward_macs(&self, h: usize, w: usize) -> usize {
        let mut total = 0;
        for (i, layer) in self.layers().iter().enumerate() {
            let level = match i {
                i if i < self.levels => i,
                i if i == self.levels => self.levels,
                i if i <= 2 * self.levels => 2 * self.levels - i,
                _ => 0,
            };
            total += (h >> level) * (w >> level) * layer.cin * layer.cout * layer.kernel * layer.kernel;
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Shape,
    pub data: Vec<f32>,
}

/// Network weights: for each layer a `.w` kernel `[cout, cin·k·k, 1]` and a
/// `.b` bias `[cout, 1, 1]`, in [`ArchConfig::layers`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub arch: ArchConfig,
    pub tensors: Vec<NamedTensor>,
}

impl NetParams {
    /// He-uniform kernels (LeCun-uniform for the head), zero biases.
    pub fn init(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = stream_rng(seed, streams::INIT, 0);
        let mut tensors = Vec::new();
        for layer in arch.layers() {
            let fan_in = layer.cin * layer.kernel * layer.kernel;
            let gain = if layer.name == "head" { 3.0 } else { 6.0 };
            let bound = (gain / fan_in as f64).sqrt();
            let w = (0..layer.cout * fan_in)
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
                .map(|v| v as f32)
                .collect();
            tensors.push(NamedTensor {
                name: format!("{}.w", layer.name),
                shape: [layer.cout, fan_in, 1],
                data: w,
            });
            tensors.push(NamedTensor {
                name: format!("{}.b", layer.name),
                shape: [layer.cout, 1, 1],
                data: vec![0.0; layer.cout],
            });
        }
        Ok(NetParams { arch, tensors })
    }

    pub fn num_weights(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NamedTensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    /// Records every tensor on the tape, tracked or constant.
    pub fn leaves<T: Scalar>(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.tensors
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

    fn check_shapes(&self) -> Result<()> {
        let layers = self.arch.layers();
        if self.tensors.len() != 2 * layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} tensors for {} layers",
                self.tensors.len(),
                layers.len()
            )));
        }
        for (l, pair) in layers.iter().zip(self.tensors.chunks(2)) {
            let fan_in = l.cin * l.kernel * l.kernel;
            let expect = [(format!("{}.w", l.name), [l.cout, fan_in, 1]), (format!("{}.b", l.name), [l.cout, 1, 1])];
            for (t, (name, shape)) in pair.iter().zip(expect) {
                if t.name != name || t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                    return Err(Error::ShapeMismatch(format!(
                        "tensor {} {:?}, expected {name} {shape:?}",
                        t.name, t.shape
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A channel-major `[C, H, W]` image, the layout the network works in.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Field {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Field {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_map(map: &Map) -> Self {
        let mut f = Field::zeros(map.channels, map.height, map.width);
        f.write_map(0, map);
        f
    }

    /// Copies the channels of `map` into this field starting at `offset`.
    fn write_map(&mut self, offset: usize, map: &Map) {
        let hw = self.height * self.width;
        for p in 0..hw {
            for (c, &v) in map.pixel(p).iter().enumerate() {
                self.data[(offset + c) * hw + p] = v;
            }
        }
    }

    /// Channels `start .. start + len` as an interleaved map.
    pub fn to_map(&self, start: usize, len: usize) -> Map {
        let hw = self.height * self.width;
        let mut m = Map::zeros(self.width, self.height, len);
        for p in 0..hw {
            for c in 0..len {
                m.data[p * len + c] = self.data[(start + c) * hw + p];
            }
        }
        m
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }
}

/// Meters to network units.
pub fn normalize(v: f32) -> f32 {
    (v as f64 / NORM_RADIUS) as f32
}

/// Concatenates the network input in the fixed channel order, normalizing
/// positions and distances and zeroing invalid pixels.
pub fn assemble_input(g: &GBuffer, maps: &MaterialMaps, lights: &LightMaps) -> Result<Field> {
    let parts: [(&Map, bool); 7] = [
        (&g.position, true),
        (&g.normal, false),
        (&maps.albedo, false),
        (&maps.specularity, false),
        (&maps.roughness, false),
        (&lights.dir, false),
        (&lights.dist, true),
    ];
    let mut f = Field::zeros(IN_CHANNELS, g.height, g.width);
    let hw = g.height * g.width;
    let mut offset = 0;
    for (map, normalized) in parts {
        if map.width != g.width || map.height != g.height {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} map for a {}x{} G-buffer",
                map.width, map.height, g.width, g.height
            )));
        }
        for p in (0..hw).filter(|&p| g.valid[p]) {
            for (c, &v) in map.pixel(p).iter().enumerate() {
                f.data[(offset + c) * hw + p] = if normalized { normalize(v) } else { v };
            }
        }
        offset += map.channels;
    }
    debug_assert_eq!(offset, IN_CHANNELS);
    Ok(f)
}

/// Records the network on `g`; `weights` are the leaves from
/// [`NetParams::leaves`]. Returns the `[12, H, W]` output.
pub fn build_forward<T: Scalar>(g: &mut Graph<T>, arch: &ArchConfig, weights: &[Var], input: Var) -> Var {
    let mut layer = 0;
    let mut conv = |g: &mut Graph<T>, x: Var, k: usize| {
        let y = g.conv2d(x, weights[2 * layer], weights[2 * layer + 1], k);
        layer += 1;
        y
    };
    let mut skips = Vec::with_capacity(arch.levels);
    let mut x = input;
    for l in 0..arch.levels {
        if l > 0 {
            x = g.avg_pool2(x);
        }
        let y = conv(g, x, 3);
        x = g.relu(y);
        skips.push(x);
    }
    x = g.avg_pool2(x);
    let y = conv(g, x, 3);
    x = g.relu(y);
    for skip in skips.into_iter().rev() {
        let up = g.upsample2(x);
        let cat = g.concat(up, skip);
        let y = conv(g, cat, 3);
        x = g.relu(y);
    }
    let y = conv(g, x, 1);
    g.softplus(y)
}

fn check_input(params: &NetParams, input: &Field) -> Result<()> {
    if input.channels != IN_CHANNELS {
        return Err(Error::ShapeMismatch(format!("{} input channels, expected {IN_CHANNELS}", input.channels)));
    }
    let d = params.arch.divisor();
    if !input.height.is_multiple_of(d) || !input.width.is_multiple_of(d) || input.height == 0 || input.width == 0 {
        return Err(Error::BadResolution {
            width: input.width,
            height: input.height,
            divisor: d,
        });
    }
    Ok(())
}

/// Deterministic evaluation of the network on one input field.
pub fn forward(params: &NetParams, input: &Field) -> Result<Field> {
    check_input(params, input)?;
    let mut g = Graph::<f32>::new();
    let w = params.leaves(&mut g, false);
    let x = g.constant([IN_CHANNELS, input.height, input.width], input.data.clone());
    let y = build_forward(&mut g, &params.arch, &w, x);
    Ok(Field {
        channels: OUT_CHANNELS,
        height: input.height,
        width: input.width,
        data: g.value(y).to_vec(),
    })
}

pub fn buffers_to_field(b: &LightBuffers) -> Field {
    let mut f = Field::zeros(OUT_CHANNELS, b.height(), b.width());
    for (i, m) in b.groups().into_iter().enumerate() {
        f.write_map(3 * i, m);
    }
    f
}

pub fn field_to_buffers(f: &Field) -> LightBuffers {
    LightBuffers {
        diffuse_direct: f.to_map(0, 3),
        diffuse_indirect: f.to_map(3, 3),
        glossy_direct: f.to_map(6, 3),
        glossy_indirect: f.to_map(9, 3),
    }
}

/// `1 / (3·valid pixels)`: turns a masked absolute sum over 12 channels into
/// the sum of the four per-group means.
fn l1_scale(mask: &[bool]) -> f64 {
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        0.0
    } else {
        1.0 / (3.0 * n as f64)
    }
}

/// Sum over the four buffer groups of the mean absolute error on valid pixels.
pub fn l1_loss(pred: &Field, gt: &LightBuffers, mask: &[bool]) -> Result<f64> {
    let target = buffers_to_field(gt);
    if (pred.channels, pred.height, pred.width) != (OUT_CHANNELS, target.height, target.width) {
        return Err(Error::ShapeMismatch(format!(
            "prediction {}x{}x{} vs buffers {}x{}",
            pred.channels, pred.height, pred.width, target.height, target.width
        )));
    }
    if mask.len() != pred.height * pred.width {
        return Err(Error::ShapeMismatch("mask size".into()));
    }
    let hw = mask.len();
    let sum: f64 = (0..pred.data.len())
        .filter(|&i| mask[i % hw])
        .map(|i| (pred.data[i] as f64 - target.data[i] as f64).abs())
        .sum();
    Ok(sum * l1_scale(mask))
}

/// One supervised example, already in network layout.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub input: Field,
    pub target: Field,
    pub mask: Vec<bool>,
}

impl TrainSample {
    pub fn new(g: &GBuffer, maps: &MaterialMaps, lights: &LightMaps, buffers: &LightBuffers) -> Result<Self> {
        let input = assemble_input(g, maps, lights)?;
        let target = buffers_to_field(buffers);
        if (target.height, target.width) != (input.height, input.width) {
            return Err(Error::ShapeMismatch("light buffers do not match the G-buffer".into()));
        }
        Ok(TrainSample {
            input,
            target,
            mask: g.valid.clone(),
        })
    }
}

/// Loss of one sample and its gradient for every parameter tensor.
pub fn sample_gradients(params: &NetParams, sample: &TrainSample) -> Result<(f64, Vec<Vec<f32>>)> {
    check_input(params, &sample.input)?;
    let (h, w) = (sample.input.height, sample.input.width);
    let mut g = Graph::<f32>::new();
    let leaves = params.leaves(&mut g, true);
    let x = g.constant([IN_CHANNELS, h, w], sample.input.data.clone());
    let y = build_forward(&mut g, &params.arch, &leaves, x);
    let loss = g.masked_l1(y, &sample.target.data, &sample.mask, l1_scale(&sample.mask));
    let mut grads = g.backward(loss);
    let out = leaves
        .iter()
        .zip(&params.tensors)
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| vec![0.0; t.data.len()]))
        .collect();
    Ok((g.scalar(loss) as f64, out))
}

/// Summed loss and gradients over a batch. Per-sample work may run in
/// parallel; the sum is taken in batch order.
pub fn backward(params: &NetParams, batch: &[&TrainSample]) -> Result<(f64, Vec<Vec<f32>>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let parts: Vec<(f64, Vec<Vec<f32>>)> = batch.par_iter().map(|s| sample_gradients(params, s)).collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty batch");
    for (l, gs) in iter {
        loss += l;
        for (acc, g) in grads.iter_mut().zip(gs) {
            acc.iter_mut().zip(g).for_each(|(a, v)| *a += v);
        }
    }
    Ok((loss, grads))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 4,
            epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(format!("bad training configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetParams,
    /// Mean per-sample loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// Adam over shuffled mini-batches. `on_epoch(epoch, params, mean_loss)` runs
/// after every epoch (checkpointing, logging).
pub fn train(
    samples: &[TrainSample],
    arch: ArchConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &NetParams, f64) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    let expected = (first.input.height, first.input.width);
    for (index, s) in samples.iter().enumerate() {
        let got = (s.input.height, s.input.width);
        if got != expected || (s.target.height, s.target.width) != expected {
            return Err(Error::ResolutionMismatch { index, expected, got });
        }
    }
    let mut params = NetParams::init(arch, cfg.seed)?;
    train_from(&mut params, samples, cfg, &mut on_epoch).map(|loss_history| TrainOutcome { params, loss_history })
}

/// Continues training `params` in place; returns the per-epoch mean losses.
pub fn train_from(
    params: &mut NetParams,
    samples: &[TrainSample],
    cfg: &TrainConfig,
    on_epoch: &mut impl FnMut(usize, &NetParams, f64) -> Result<()>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let adam_cfg = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..Default::default()
    };
    let mut adam = Adam::new(adam_cfg, params.tensors.iter().map(|t| t.data.len()));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream_rng(cfg.seed, streams::SHUFFLE, epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, grads) = backward(params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    init: 0,
                    step: adam.steps() as usize,
                });
            }
            total += loss;
            let mut data: Vec<Vec<f32>> = params.tensors.iter_mut().map(|t| std::mem::take(&mut t.data)).collect();
            adam.step(&mut data, &grads);
            for (t, d) in params.tensors.iter_mut().zip(data) {
                t.data = d;
            }
        }
        let mean = total / samples.len() as f64;
        history.push(mean);
        on_epoch(epoch, params, mean)?;
    }
    Ok(history)
}

/// Network buffers composited with the material maps and tone mapped.
pub fn infer_render(params: &NetParams, g: &GBuffer, maps: &MaterialMaps, lights: &LightMaps) -> Result<LdrImage> {
    let out = forward(params, &assemble_input(g, maps, lights)?)?;
    Ok(render_ldr(&field_to_buffers(&out), maps)?)
}

pub fn encode_checkpoint(params: &NetParams) -> Vec<u8> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    for v in [
        CHECKPOINT_VERSION,
        params.arch.levels as u32,
        params.arch.base_channels as u32,
        params.tensors.len() as u32,
    ] {
        out.extend(v.to_le_bytes());
    }
    for t in &params.tensors {
        out.extend((t.name.len() as u32).to_le_bytes());
        out.extend(t.name.as_bytes());
        out.extend(Tensor::f32(t.shape.to_vec(), t.data.clone()).encode());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<NetParams> {
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 24 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint (bad magic)".into()));
    }
    let u32_at = |o: usize| -> Result<u32> {
        let b = bytes.get(o..o + 4).ok_or_else(|| bad("truncated".into()))?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    };
    let version = u32_at(8)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let arch = ArchConfig {
        levels: u32_at(12)? as usize,
        base_channels: u32_at(16)? as usize,
    };
    arch.validate()?;
    let count = u32_at(20)? as usize;
    let mut pos = 24;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let n = u32_at(pos)? as usize;
        let name = bytes.get(pos + 4..pos + 4 + n).ok_or_else(|| bad("truncated name".into()))?;
        let name = String::from_utf8(name.to_vec()).map_err(|_| bad("tensor name is not UTF-8".into()))?;
        pos += 4 + n;
        let (tensor, used) = Tensor::decode(&bytes[pos..], path)?;
        pos += used;
        let (dims, data) = tensor.into_f32().ok_or_else(|| bad(format!("tensor {name} is not f32")))?;
        let shape: Shape = dims.try_into().map_err(|_| bad(format!("tensor {name} is not 3-D")))?;
        tensors.push(NamedTensor { name, shape, data });
    }
    if pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
    }
    let params = NetParams { arch, tensors };
    params.check_shapes()?;
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &NetParams) -> Result<()> {
    Ok(write_bytes(path, &encode_checkpoint(params))?)
}

pub fn load_checkpoint(path: &Path) -> Result<NetParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    decode_checkpoint(&bytes, path)
}
