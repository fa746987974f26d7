//! Keypoints and the four invariance channels of local descriptors.

mod describe;
mod detect;
pub mod dump;
mod orientation;
mod scale_space;

use serde::{Deserialize, Serialize};

pub use describe::{describe, describe_with, DescriptorConfig, Descriptions};
pub use detect::{detect, detect_with, DetectorConfig};
pub use orientation::{assign_orientation, assign_orientation_with};
pub use scale_space::ScaleSpace;

/// Length of each local descriptor: 4x4 spatial cells of 8 orientation bins.
pub const DESCRIPTOR_DIM: usize = 128;
pub const NUM_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Detector score, |DoG| at the refined extremum.
    pub response: f64,
    /// Dominant gradient angle in `[-pi, pi)`.
    pub orientation: f64,
    /// Gaussian scale (sigma) in base-image pixels.
    pub scale: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, scale: f64) -> Self {
        Self { x, y, response: 0.0, orientation: 0.0, scale }
    }

    pub fn position(&self) -> crate::geometry::Point2 {
        crate::geometry::Point2::new(self.x, self.y)
    }
}

/// One of the four local descriptors, indexed by
/// `2 * rot_invariant + illum_invariant`. The order is part of every file
/// format and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    /// Upright, brightness-sensitive.
    RotVarIllumVar = 0,
    /// Upright, brightness-normalized.
    RotVarIllumInv = 1,
    /// Orientation-normalized, brightness-sensitive.
    RotInvIllumVar = 2,
    /// Orientation-normalized, brightness-normalized.
    RotInvIllumInv = 3,
}

impl Channel {
    pub const ALL: [Channel; NUM_CHANNELS] =
        [Channel::RotVarIllumVar, Channel::RotVarIllumInv, Channel::RotInvIllumVar, Channel::RotInvIllumInv];

    pub fn from_flags(rot_invariant: bool, illum_invariant: bool) -> Self {
        Self::ALL[2 * rot_invariant as usize + illum_invariant as usize]
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn rot_invariant(self) -> bool {
        self.index() >= 2
    }

    pub fn illum_invariant(self) -> bool {
        self.index() % 2 == 1
    }

    /// Short tag used in reports: `rv-iv`, `rv-ii`, `ri-iv`, `ri-ii`.
    pub fn tag(self) -> &'static str {
        ["rv-iv", "rv-ii", "ri-iv", "ri-ii"][self.index()]
    }
}

/// The four unit-norm local descriptors of one keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorBundle {
    pub channels: [Vec<f32>; NUM_CHANNELS],
}

impl DescriptorBundle {
    pub fn new(channels: [Vec<f32>; NUM_CHANNELS]) -> Self {
        debug_assert!(channels.iter().all(|c| c.len() == channels[0].len()));
        Self { channels }
    }

    pub fn dim(&self) -> usize {
        self.channels[0].len()
    }

    pub fn channel(&self, c: Channel) -> &[f32] {
        &self.channels[c.index()]
    }

    /// Same descriptor on every channel.
    pub fn replicated(d: Vec<f32>) -> Self {
        Self { channels: [d.clone(), d.clone(), d.clone(), d] }
    }
}

pub(crate) fn l2_normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        v.iter_mut().for_each(|x| *x /= norm);
        true
    } else {
        false
    }
}
