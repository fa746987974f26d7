//! Image to matchable features: detection, description and aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{describe_with, detect_with, DescriptorBundle, DescriptorConfig, DetectorConfig, Keypoint, ScaleSpace};
use crate::image::Image;
use crate::matching::ImageFeatures;
use crate::meta::{aggregate, Codebook};
use crate::training::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub detector: DetectorConfig,
    pub descriptor: DescriptorConfig,
    /// Keypoints kept per image, strongest first.
    pub max_keypoints: usize,
    /// Side of the tile grid.
    pub tiles: usize,
    /// Codebook size per channel.
    pub clusters: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            descriptor: DescriptorConfig::default(),
            max_keypoints: 1000,
            tiles: 3,
            clusters: 8,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_keypoints == 0 || self.tiles == 0 || self.clusters == 0 {
            return Err(Error::DegenerateConfig("max_keypoints, tiles and clusters must be positive".into()));
        }
        if self.descriptor.cell_scale <= 0.0 || self.detector.sigma <= 0.0 {
            return Err(Error::DegenerateConfig("scales must be positive".into()));
        }
        Ok(())
    }
}

/// Scale space plus every detection of one image.
pub struct Detections {
    pub width: usize,
    pub height: usize,
    pub scale_space: ScaleSpace,
    /// Sorted by decreasing response.
    pub keypoints: Vec<Keypoint>,
}

pub fn detect_all(img: &Image, cfg: &FeatureConfig, max_count: usize) -> Detections {
    let scale_space = ScaleSpace::new(img, &cfg.detector);
    let keypoints = detect_with(&scale_space, &cfg.detector, max_count);
    Detections { width: img.width(), height: img.height(), scale_space, keypoints }
}

/// Local descriptors only; keypoints whose patch leaves the image are dropped.
pub fn describe_keypoints(det: &Detections, kps: &[Keypoint], cfg: &FeatureConfig) -> (Vec<Keypoint>, Vec<DescriptorBundle>) {
    let d = describe_with(&det.scale_space, kps, &cfg.descriptor);
    (d.keypoints, d.bundles)
}

/// Maps raw descriptors into the space the codebook lives in.
pub trait Encoder: Sync {
    fn codebook(&self) -> &Codebook;

    fn encode(&self, bundles: Vec<DescriptorBundle>) -> Vec<DescriptorBundle> {
        bundles
    }
}

impl Encoder for Codebook {
    fn codebook(&self) -> &Codebook {
        self
    }
}

/// Trained projections with the codebook taken from the same checkpoint.
pub struct TrainedEncoder {
    pub model: Model,
    codebook: Codebook,
}

impl TrainedEncoder {
    pub fn new(model: Model) -> Result<Self> {
        let codebook = model.codebook()?;
        Ok(Self { model, codebook })
    }
}

impl Encoder for TrainedEncoder {
    fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    fn encode(&self, bundles: Vec<DescriptorBundle>) -> Vec<DescriptorBundle> {
        bundles.iter().map(|b| self.model.project_bundle(b)).collect()
    }
}

/// Describes `kps`, encodes them and aggregates them into a tile grid.
pub fn features_for(
    det: &Detections,
    kps: &[Keypoint],
    cfg: &FeatureConfig,
    encoder: &(impl Encoder + ?Sized),
    tiles: usize,
) -> Result<ImageFeatures> {
    let (keypoints, bundles) = describe_keypoints(det, kps, cfg);
    let bundles = encoder.encode(bundles);
    let grid = aggregate(&bundles, &keypoints, (det.width, det.height), encoder.codebook(), tiles)?;
    Ok(ImageFeatures { keypoints, bundles, grid })
}

pub fn extract_features(img: &Image, cfg: &FeatureConfig, encoder: &(impl Encoder + ?Sized)) -> Result<ImageFeatures> {
    let det = detect_all(img, cfg, cfg.max_keypoints);
    features_for(&det, &det.keypoints, cfg, encoder, cfg.tiles)
}

/// Fits the per-channel codebooks on the descriptors of `images`.
pub fn train_codebook_on_images(images: &[Image], cfg: &FeatureConfig, seed: u64) -> Result<Codebook> {
    let mut bundles = Vec::new();
    for img in images {
        let det = detect_all(img, cfg, cfg.max_keypoints);
        bundles.extend(describe_keypoints(&det, &det.keypoints, cfg).1);
    }
    Codebook::train(&bundles, cfg.clusters, seed)
}
