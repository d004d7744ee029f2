//! Dense per-pixel maps stored height × width × channels, row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Map {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Map {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Map {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Map {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width}x{channels} map",
                data.len()
            )));
        }
        Ok(Map {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn pixel(&self, i: usize) -> &[f32] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn pixel_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.channels;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, x: usize, y: usize) -> &[f32] {
        self.pixel(y * self.width + x)
    }

    pub fn same_size(&self, other: &Map) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_size(&self, other: &Map, what: &str) -> Result<()> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Replicates a single-channel map into `channels` channels.
    pub fn broadcast(&self, channels: usize) -> Map {
        assert_eq!(self.channels, 1);
        let mut out = Map::zeros(self.width, self.height, channels);
        for (dst, &v) in out.data.chunks_mut(channels).zip(&self.data) {
            dst.fill(v);
        }
        out
    }

    pub fn scaled(&self, s: f32) -> Map {
        Map {
            data: self.data.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    /// Channels `start..start+len` as a new map.
    pub fn slice_channels(&self, start: usize, len: usize) -> Map {
        let mut out = Map::zeros(self.width, self.height, len);
        for (dst, src) in out.data.chunks_mut(len).zip(self.data.chunks(self.channels)) {
            dst.copy_from_slice(&src[start..start + len]);
        }
        out
    }
}
