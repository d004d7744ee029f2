//! On-disk formats: raw tensors, dataset manifests, scene JSON and PNG previews.
//!
//! Tensor file layout (little-endian):
//!
//! ```text
//! magic    8 bytes  "PNDRTNSR"
//! version  u32      1
//! dtype    u32      1 = f32, 2 = u8, 3 = i32
//! ndim     u32
//! dims     u64 × ndim
//! payload  row-major, product(dims) × sizeof(dtype)
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compose::LdrImage;
use crate::error::{Error, Result};
use crate::gbuffer::GBuffer;
use crate::map::Map;
use crate::oracle::LightBuffers;
use crate::randomize::{LightMaps, LightSample, MaterialMaps, MaterialSample};
use crate::scenegen::SceneGraph;

pub const TENSOR_MAGIC: &[u8; 8] = b"PNDRTNSR";
pub const TENSOR_VERSION: u32 = 1;
/// Environment variable naming the default run directory.
pub const RUN_DIR_ENV: &str = "PNDR_RUN_DIR";

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    I32(Vec<i32>),
}

impl TensorData {
    fn code(&self) -> u32 {
        match self {
            TensorData::F32(_) => 1,
            TensorData::U8(_) => 2,
            TensorData::I32(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(dims: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor {
            dims,
            data: TensorData::F32(data),
        }
    }

    pub fn i32(dims: Vec<usize>, data: Vec<i32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor {
            dims,
            data: TensorData::I32(data),
        }
    }

    pub fn from_map(map: &Map) -> Self {
        Tensor::f32(map.dims().to_vec(), map.data.clone())
    }

    pub fn into_f32(self) -> Option<(Vec<usize>, Vec<f32>)> {
        match self.data {
            TensorData::F32(v) => Some((self.dims, v)),
            _ => None,
        }
    }

    /// Serialized bytes.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.extend_from_slice(&self.data.code().to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Parses one tensor from the front of `bytes`; returns it and the bytes consumed.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<(Tensor, usize)> {
        let truncated = |expected: usize| Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        };
        if bytes.len() < 8 || &bytes[..8] != TENSOR_MAGIC {
            return Err(Error::BadMagic { path: path.to_path_buf() });
        }
        if bytes.len() < 20 {
            return Err(truncated(20));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(8);
        if version != TENSOR_VERSION {
            return Err(Error::Unsupported {
                path: path.to_path_buf(),
                what: format!("version {version}"),
            });
        }
        let code = u32_at(12);
        let ndim = u32_at(16) as usize;
        let header = 20 + 8 * ndim;
        if bytes.len() < header {
            return Err(truncated(header));
        }
        let dims: Vec<usize> = (0..ndim)
            .map(|k| u64::from_le_bytes(bytes[20 + 8 * k..28 + 8 * k].try_into().unwrap()) as usize)
            .collect();
        let count: usize = dims.iter().product();
        let width = match code {
            1 | 3 => 4,
            2 => 1,
            _ => {
                return Err(Error::Unsupported {
                    path: path.to_path_buf(),
                    what: format!("dtype {code}"),
                })
            }
        };
        let end = header + count * width;
        if bytes.len() < end {
            return Err(truncated(end));
        }
        let payload = &bytes[header..end];
        let data = match code {
            1 => TensorData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            2 => TensorData::U8(payload.to_vec()),
            _ => TensorData::I32(payload.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()),
        };
        Ok((Tensor { dims, data }, end))
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    write_bytes(path, &tensor.encode())
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (t, used) = Tensor::decode(&bytes, path)?;
    if used != bytes.len() {
        return Err(Error::Unsupported {
            path: path.to_path_buf(),
            what: format!("{} trailing bytes", bytes.len() - used),
        });
    }
    Ok(t)
}

pub fn load_map(path: &Path) -> Result<Map> {
    let t = load_tensor(path)?;
    let dims = t.dims.clone();
    let (_, data) = t.into_f32().ok_or_else(|| Error::Unsupported {
        path: path.to_path_buf(),
        what: "dtype (expected f32)".into(),
    })?;
    if dims.len() != 3 {
        return Err(Error::Unsupported {
            path: path.to_path_buf(),
            what: format!("rank {}", dims.len()),
        });
    }
    Map::from_vec(dims[1], dims[0], dims[2], data)
}

fn concat_channels(maps: &[&Map]) -> Map {
    let channels: usize = maps.iter().map(|m| m.channels).sum();
    let mut out = Map::zeros(maps[0].width, maps[0].height, channels);
    for i in 0..out.pixels() {
        let mut c = 0;
        for m in maps {
            out.pixel_mut(i)[c..c + m.channels].copy_from_slice(m.pixel(i));
            c += m.channels;
        }
    }
    out
}

/// G-buffer as two tensors: `[H,W,7]` f32 (X, N, base albedo) and `[H,W]` i32 instances.
pub fn save_gbuffer(geom_path: &Path, instance_path: &Path, g: &GBuffer) -> Result<()> {
    save_tensor(geom_path, &Tensor::from_map(&concat_channels(&[&g.position, &g.normal, &g.base_albedo])))?;
    save_tensor(instance_path, &Tensor::i32(vec![g.height, g.width], g.instance.clone()))
}

pub fn load_gbuffer(geom_path: &Path, instance_path: &Path) -> Result<GBuffer> {
    let geom = load_map(geom_path)?;
    let inst = load_tensor(instance_path)?;
    let TensorData::I32(instance) = inst.data else {
        return Err(Error::Unsupported {
            path: instance_path.to_path_buf(),
            what: "dtype (expected i32)".into(),
        });
    };
    if geom.channels != 7 || inst.dims != [geom.height, geom.width] {
        return Err(Error::ShapeMismatch(format!("G-buffer tensors {:?} / {:?}", geom.dims(), inst.dims)));
    }
    Ok(GBuffer {
        width: geom.width,
        height: geom.height,
        position: geom.slice_channels(0, 3),
        normal: geom.slice_channels(3, 3),
        base_albedo: geom.slice_channels(6, 1),
        valid: instance.iter().map(|&i| i >= 0).collect(),
        instance,
    })
}

/// `[H,W,5]`: albedo (3), roughness, specularity.
pub fn save_material_maps(path: &Path, m: &MaterialMaps) -> Result<()> {
    save_tensor(path, &Tensor::from_map(&concat_channels(&[&m.albedo, &m.roughness, &m.specularity])))
}

pub fn load_material_maps(path: &Path) -> Result<MaterialMaps> {
    let m = load_map(path)?;
    if m.channels != 5 {
        return Err(Error::ShapeMismatch(format!("material maps with {} channels", m.channels)));
    }
    Ok(MaterialMaps {
        albedo: m.slice_channels(0, 3),
        roughness: m.slice_channels(3, 1),
        specularity: m.slice_channels(4, 1),
    })
}

/// `[H,W,4]`: direction (3), distance.
pub fn save_light_maps(path: &Path, m: &LightMaps) -> Result<()> {
    save_tensor(path, &Tensor::from_map(&concat_channels(&[&m.dir, &m.dist])))
}

pub fn load_light_maps(path: &Path) -> Result<LightMaps> {
    let m = load_map(path)?;
    if m.channels != 4 {
        return Err(Error::ShapeMismatch(format!("light maps with {} channels", m.channels)));
    }
    Ok(LightMaps {
        dir: m.slice_channels(0, 3),
        dist: m.slice_channels(3, 1),
    })
}

/// `[H,W,12]`: D_dir, D_ind, G_dir, G_ind.
pub fn save_light_buffers(path: &Path, b: &LightBuffers) -> Result<()> {
    save_tensor(path, &Tensor::from_map(&concat_channels(&b.groups())))
}

pub fn load_light_buffers(path: &Path) -> Result<LightBuffers> {
    let m = load_map(path)?;
    if m.channels != 12 {
        return Err(Error::ShapeMismatch(format!("light buffers with {} channels", m.channels)));
    }
    Ok(LightBuffers {
        diffuse_direct: m.slice_channels(0, 3),
        diffuse_indirect: m.slice_channels(3, 3),
        glossy_direct: m.slice_channels(6, 3),
        glossy_indirect: m.slice_channels(9, 3),
    })
}

/// 8-bit value for a display value: `⌊v·255 + 0.5⌋`, clamped to `[0, 255]`.
pub fn quantize(v: f32) -> u8 {
    (v as f64 * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn save_png(image: &LdrImage, path: &Path) -> Result<()> {
    let m = &image.0;
    let bytes: Vec<u8> = match m.channels {
        3 => m.data.iter().map(|&v| quantize(v)).collect(),
        1 => m.data.iter().flat_map(|&v| [quantize(v); 3]).collect(),
        c => return Err(Error::ShapeMismatch(format!("PNG export of {c} channels"))),
    };
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), m.width as u32, m.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| Error::Png(e.to_string()))?;
    writer.write_image_data(&bytes).map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    Ok(())
}

/// Reads an 8-bit RGB PNG back into display values `byte / 255`.
pub fn load_png(path: &Path) -> Result<LdrImage> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        other => {
            return Err(Error::Unsupported {
                path: path.to_path_buf(),
                what: format!("PNG color type {other:?}"),
            })
        }
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Unsupported {
            path: path.to_path_buf(),
            what: "PNG bit depth".into(),
        });
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut map = Map::zeros(w, h, 3);
    for i in 0..w * h {
        let px = &buf[i * channels..(i + 1) * channels];
        for c in 0..3 {
            map.pixel_mut(i)[c] = px[if channels == 1 { 0 } else { c }] as f32 / 255.0;
        }
    }
    Ok(LdrImage(map))
}

pub fn save_scene(path: &Path, scene: &SceneGraph) -> Result<()> {
    write_bytes(path, scene.to_json().as_bytes())
}

pub fn load_scene(path: &Path) -> Result<SceneGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SceneGraph::from_json(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// One randomized view of a scene. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub scene_id: u32,
    pub scene: String,
    pub light_seed: u64,
    pub material_seed: u64,
    pub light: LightSample,
    pub materials: Vec<MaterialSample>,
    pub gbuffer: String,
    pub instances: String,
    pub material_maps: String,
    pub light_maps: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub light_buffers: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ldr_preview: Option<String>,
}

impl ManifestSample {
    pub fn paths(&self) -> Vec<&str> {
        let mut p = vec![self.scene.as_str(), &self.gbuffer, &self.instances, &self.material_maps, &self.light_maps];
        p.extend(self.light_buffers.as_deref());
        p.extend(self.ldr_preview.as_deref());
        p
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub samples: Vec<ManifestSample>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    write_bytes(path, text.as_bytes())
}

/// Reads a manifest and checks that every file it references exists.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let base = manifest_dir(path);
    let missing: Vec<PathBuf> = manifest
        .samples
        .iter()
        .flat_map(|s| s.paths())
        .map(|p| base.join(p))
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    Ok(manifest)
}

pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Buffered text writer that creates parent directories.
pub fn create_text(path: &Path) -> Result<BufWriter<fs::File>> {
    create_parent(path)?;
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create_text(path)?;
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_tensor_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tnsr");
        let t = Tensor::f32(vec![2, 2], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5]);
        save_tensor(&path, &t).unwrap();
        let back = load_tensor(&path).unwrap();
        let (TensorData::F32(a), TensorData::F32(b)) = (&t.data, &back.data) else {
            panic!()
        };
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back.dims, vec![2, 2]);

        let mut bytes = t.encode();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_tensor(&path), Err(Error::BadMagic { .. })));

        let bytes = t.encode();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_tensor(&path), Err(Error::Truncated { .. })));
        assert!(matches!(load_tensor(&dir.path().join("nope")), Err(Error::Io { .. })));
    }

    #[test]
    fn quantization_rule() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.9999), 255);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let black = LdrImage(Map::zeros(4, 3, 3));
        save_png(&black, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!((back.width(), back.height()), (4, 3));
        assert!(back.0.data.iter().all(|&v| v == 0.0));

        let half = LdrImage(Map::filled(2, 2, 3, 0.5));
        save_png(&half, &path).unwrap();
        assert!(load_png(&path).unwrap().0.data.iter().all(|&v| v == 128.0 / 255.0));
    }
}
