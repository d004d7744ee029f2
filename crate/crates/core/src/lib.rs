//! Geometry, shading and evaluation core of the neural domain-randomization
//! pipeline.
//!
//! A scene ([`scenegen`]) is ray cast into a G-buffer ([`gbuffer`]), decorated
//! with randomized materials and a point light ([`randomize`]), shaded into four
//! light buffers by the physically based [`oracle`], and composited and
//! tone mapped into a display image ([`compose`]).

pub mod bvh;
pub mod compose;
pub mod dataio;
pub mod error;
pub mod gbuffer;
pub mod map;
pub mod math;
pub mod metrics;
pub mod oracle;
pub mod randomize;
pub mod rng;
pub mod scenegen;

pub use error::{Error, Result};
pub use map::Map;
pub use math::{Mat3, Pose, Vec3};
