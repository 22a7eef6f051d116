//! Coarse-to-fine multi-view stereo with cross-scale linear attention.
//!
//! The crate is a CPU reference implementation of a cascade plane-sweep
//! depth estimator:
//!
//! ```text
//! images ─▶ feature pyramid ─▶ attention (intra/inter, per stage)
//!        ─▶ plane-sweep feature volumes ─▶ variance-style cost
//!        ─▶ guided aggregation with the coarser cost (stages 2, 3)
//!        ─▶ 3-D U-Net ─▶ softmax ─▶ winner-take-all depth
//! ```
//!
//! Network weights are seeded rather than trained; the library is meant to be
//! checked against geometric and numerical oracles (see the `acceptance`
//! test target) rather than benchmark scores.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod costvolume;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod losses;
pub mod numerics;

pub use error::{Error, Result};
