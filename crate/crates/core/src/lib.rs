//! Spatial referent toolkit for 3D vision-language pipelines.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure computation:
//!
//! - [`geometry`]: farthest point sampling, ball grouping, k-NN graphs, box IoU.
//! - [`diff`]: a small reverse-mode tape over dense `f64` matrices.
//! - [`scheme`]: referent voting, graph message passing, contextual attention,
//!   location refinement and the spatial losses.
//! - [`codec`]: the `<loc>`/`<gap>` token grammar and the `[0, 255]` coordinate grid.
//! - [`synth`]: the distance / movement / placement instruction synthesizer.
//! - [`eval`]: Acc@IoU, F1@IoU, mARE@IoU and editing accuracy.
//!
//! File formats and the command-line front end live in the `spatial3d` crate.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
// `!(x > 0.0)` is how NaN gets rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod codec;
pub mod diff;
pub mod error;
pub mod eval;
pub mod geometry;
mod math;
pub mod scene;
pub mod scheme;
pub mod synth;

pub use error::{Error, Result};
