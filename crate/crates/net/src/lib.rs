//! Learned deferred renderer and inverse scene recovery on top of a small
//! reverse-mode autodiff tape.

pub mod error;
pub mod gradcheck;
pub mod inverse;
pub mod optim;
pub mod rendernet;
pub mod scalar;
pub mod tape;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tape::{Graph, Var};
