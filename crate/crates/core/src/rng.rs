//! Counter-based random streams.
//!
//! Every draw is addressed by `(seed, stream, index)`, so a parallel loop that
//! opens one stream per pixel or per object produces the same numbers no matter
//! how the work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream identifiers. Kept distinct so samplers sharing a seed never collide.
pub mod streams {
    pub const LIGHT: u64 = 1;
    pub const MATERIAL: u64 = 2;
    pub const PLACEMENT: u64 = 3;
    pub const CAMERA: u64 = 4;
    pub const INDIRECT_DIFFUSE: u64 = 5;
    pub const INDIRECT_GLOSSY: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const INIT: u64 = 8;
}

/// Opens the generator for one `(seed, stream, index)` address.
pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(b"pndr-rng");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Uniform in `[0, 1)`.
pub fn uniform<R: Rng>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
