//! HDR compositing of the light buffers and the filmic tone map.

use crate::error::{Error, Result};
use crate::map::Map;
use crate::oracle::LightBuffers;
use crate::randomize::MaterialMaps;

/// Linear radiance, H×W×3.
#[derive(Clone, Debug, PartialEq)]
pub struct HdrImage(pub Map);

/// Display values in `[0, 1)`, H×W×3.
#[derive(Clone, Debug, PartialEq)]
pub struct LdrImage(pub Map);

impl LdrImage {
    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }
}

/// Black level subtracted before the curve.
pub const TONE_THRESHOLD: f64 = 0.004;

/// Hejl / Burgess-Dawson filmic curve on one linear value.
pub fn tone_map_value(hdr: f64) -> f64 {
    let s = (hdr - TONE_THRESHOLD).max(0.0);
    s * (6.2 * s + 0.5) / (s * (6.2 * s + 1.7) + 0.06)
}

/// Derivative of [`tone_map_value`]; 0 at and below the threshold.
pub fn tone_map_derivative(hdr: f64) -> f64 {
    let s = hdr - TONE_THRESHOLD;
    if s <= 0.0 {
        return 0.0;
    }
    let num = s * (6.2 * s + 0.5);
    let den = s * (6.2 * s + 1.7) + 0.06;
    let dnum = 12.4 * s + 0.5;
    let dden = 12.4 * s + 1.7;
    (dnum * den - num * dden) / (den * den)
}

/// `(D_dir + D_ind)·D_col + (G_dir + G_ind)·G_col`, elementwise.
pub fn composite_hdr(buffers: &LightBuffers, diffuse_color: &Map, glossy_color: &Map) -> Result<HdrImage> {
    let d = &buffers.diffuse_direct;
    for m in buffers.groups().into_iter().chain([diffuse_color, glossy_color]) {
        if m.dims() != d.dims() {
            return Err(Error::ShapeMismatch(format!("compositing {:?} with {:?}", m.dims(), d.dims())));
        }
    }
    let data = (0..d.data.len())
        .map(|k| {
            (buffers.diffuse_direct.data[k] + buffers.diffuse_indirect.data[k]) * diffuse_color.data[k]
                + (buffers.glossy_direct.data[k] + buffers.glossy_indirect.data[k]) * glossy_color.data[k]
        })
        .collect();
    Ok(HdrImage(Map { data, ..d.clone() }))
}

/// Composites with `D_col = A` and achromatic `G_col = S`.
pub fn composite_with_materials(buffers: &LightBuffers, maps: &MaterialMaps) -> Result<HdrImage> {
    composite_hdr(buffers, &maps.albedo, &maps.specularity.broadcast(3))
}

pub fn tone_map(hdr: &HdrImage) -> LdrImage {
    let m = &hdr.0;
    LdrImage(Map {
        data: m.data.iter().map(|&v| tone_map_value(v as f64) as f32).collect(),
        ..m.clone()
    })
}

/// Tone-mapped rendering of a set of buffers with their materials.
pub fn render_ldr(buffers: &LightBuffers, maps: &MaterialMaps) -> Result<LdrImage> {
    Ok(tone_map(&composite_with_materials(buffers, maps)?))
}
