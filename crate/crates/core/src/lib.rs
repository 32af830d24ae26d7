//! Structured-light 3D scanning toolkit built around phase shifting
//! profilometry (PSP).
//!
//! The crate covers the full reconstruction pipeline plus the synthetic
//! oracle used to verify it:
//!
//! 1. **[`patterns`]** – N-step sinusoidal fringe sequences (the 3+3 pattern
//!    and general variants) at projector resolution.
//! 2. **[`simulator`]** – renders camera image sequences of parametric scenes
//!    lit by a pattern sequence through a calibrated camera/projector rig,
//!    with optional sensor noise and per-frame linear sensor motion.
//! 3. **[`sync`]** – groups timestamped images into complete frame sets from
//!    projector trigger timings.
//! 4. **[`register`]** – phase-correlation image registration and constrained
//!    linear-motion compensation applied before decoding.
//! 5. **[`decode`]** – wrapped phase, modulation/shading maps, temporal phase
//!    unwrapping, and projector-coordinate maps.
//! 6. **[`triangulate`]** – camera-pixel → projector-coordinate maps into 3D
//!    point clouds, accelerated by a per-pixel precomputed coefficient table.
//! 7. **[`evaluate`]** – precision (per-pixel depth std), plane-fit roughness
//!    (ESD), cone-distance accuracy, and cross-section ripple metrics.
//!
//! [`geometry`] holds the shared pinhole/lens models and [`io`] the image,
//! map and point-cloud file formats. The `sl` binary wires everything into a
//! staged command-line pipeline (see [`pipeline`]).

pub mod decode;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod patterns;
pub mod pipeline;
pub mod register;
pub mod simulator;
pub mod sync;
pub mod triangulate;

pub use error::{Error, Result};
pub use grid::Grid;
