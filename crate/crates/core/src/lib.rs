//! Local feature description with disentangled invariances.
//!
//! Every keypoint carries four local descriptors, one per combination of
//! {rotation-variant, rotation-invariant} x {illumination-variant,
//! illumination-invariant}. Descriptors of each image tile are aggregated
//! into per-channel meta descriptors whose cross-image similarities weight
//! the four descriptor distances at matching time, so the invariance that
//! fits the actual image change dominates.

mod binio;
pub mod benchmark;
pub mod commands;
pub mod config;
pub mod error;
pub mod features;
pub mod geometry;
pub mod image;
pub mod matching;
pub mod meta;
pub mod photometric;
pub mod pipeline;
pub mod training;
pub mod warp;

pub use error::{Error, Result};
pub use features::{Channel, DescriptorBundle, Keypoint};
pub use geometry::{Homography, Point2};
pub use image::{Image, Mask};
