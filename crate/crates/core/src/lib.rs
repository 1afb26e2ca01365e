//! Desk-scale constructive machinery for partially hyperbolic dynamics.
//!
//! The crate covers subshifts of finite type and their entropy-preserving
//! extractions, locally constant linear cocycles, standard affine horseshoes,
//! central iterated function systems with recurrent compact certification,
//! blender verification against Lipschitz graphs, uniform shadowing of
//! pseudo-orbits, Katok-style horseshoe selection on symbolic systems, and an
//! exact interval covering of the circle.
//!
//! All randomness is derived from a single `u64` master seed through
//! [`seed::stream_rng`], so every result is reproducible.

pub mod affine_horseshoe;
pub mod blender_verify;
pub mod circle_cover;
pub mod cocycle;
pub mod error;
pub mod ifs_blender;
pub mod interval;
pub mod katok;
pub mod seed;
pub mod shadowing;
pub mod subshift;

pub use affine_horseshoe::{Itinerary, LinearPart, StandardAffineHorseshoe};
pub use blender_verify::{LipschitzGraph, TransversalRecurrentSet};
pub use circle_cover::CircleCover;
pub use cocycle::{LocallyConstantCocycle, SymbolicPoint};
pub use error::{Error, Result};
pub use ifs_blender::{CenterIfs, GridSet};
pub use interval::Interval;
pub use shadowing::{HyperbolicSequence, PseudoOrbit, ShadowOrbit};
pub use subshift::{ParryMeasure, Sft, Word};

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
