//! Quality-driven multi-degradation image restoration.
//!
//! The crate covers the whole pipeline: ordered degradation synthesis
//! ([`degrade`]), per-degradation perception ([`perceive`]), no-reference
//! quality scoring ([`iqa`]), a classical restoration toolbox ([`restore`]),
//! the greedy scheduler and its baselines ([`agent`]) and full-reference
//! evaluation ([`evaluate`]).

pub mod error;
pub mod imagecore;

pub use error::{Error, Result};
pub use imagecore::{Image, Kernel2D, Plane, Scalar};

/// `f32` RGB image in `[0, 1]`, the pixel carrier used throughout the pipeline.
pub type ImageF = Image<f32>;
/// Double-precision image, for oracles and accumulation-heavy code.
pub type ImageD = Image<f64>;
pub type PlaneF = Plane<f32>;
pub type PlaneD = Plane<f64>;

pub mod agent;
pub mod calibration;
pub mod degrade;
pub mod evaluate;
pub mod iqa;
pub mod labels;
pub mod perceive;
pub mod restore;
pub mod stats;
pub mod synth;
