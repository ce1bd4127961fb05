//! Room-layout learning toolkit for Manhattan-world indoor scenes.
//!
//! The crate covers the full loop on synthetic cuboid rooms:
//!
//! - [`layout`]: label masks, polygon layouts, the room-type table and the
//!   degeneration graph between room types;
//! - [`synth`]: a deterministic generator of layouts, images and datasets;
//! - [`degen`]: topology-preserving degeneration plus flip and photometric
//!   augmentation;
//! - [`losses`]: every training loss as a value-and-gradient kernel, with a
//!   finite-difference checker;
//! - [`model`]: a small task-conditioned query segmenter trained with
//!   hand-written backpropagation and AdamW;
//! - [`metrics`]: pixel error and corner error with optimal matching.
//!
//! The `layoutforge` binary wraps these behind subcommands; see [`cli`].

pub mod ablation;
pub mod cli;
pub mod degen;
pub mod imageio;
pub mod layout;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synth;
pub mod verify;

pub use layout::{LayoutMask, PolyLayout, RoomTaxonomy, Surface, SurfaceSet};
