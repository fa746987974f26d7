//! Synthetic illumination changes.
//!
//! Each pixel value `v` is mapped to
//! `clamp(contrast_scale * v^gamma + brightness_shift + noise, 0, 1)` with
//! `noise ~ N(0, noise_sigma)` drawn from a seeded generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhotometricParams {
    pub gamma: f64,
    pub brightness_shift: f64,
    pub contrast_scale: f64,
    pub noise_sigma: f64,
}

impl Default for PhotometricParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl PhotometricParams {
    pub const IDENTITY: Self = Self { gamma: 1.0, brightness_shift: 0.0, contrast_scale: 1.0, noise_sigma: 0.0 };

    pub fn validate(&self) -> Result<()> {
        let finite = [self.gamma, self.brightness_shift, self.contrast_scale, self.noise_sigma].iter().all(|v| v.is_finite());
        if !finite || self.gamma <= 0.0 || self.contrast_scale <= 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::InvalidArgument(format!("invalid photometric parameters {self:?}")));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

pub fn apply_photometric(img: &Image, p: &PhotometricParams, seed: u64) -> Result<Image> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, p.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let (gamma, scale, shift) = (p.gamma as f32, p.contrast_scale as f32, p.brightness_shift as f32);
    let mut map = |v: f32| {
        let g = if gamma == 1.0 { v } else { v.powf(gamma) };
        let n = if p.noise_sigma > 0.0 { noise.sample(&mut rng) as f32 } else { 0.0 };
        (scale * g + shift + n).clamp(0.0, 1.0)
    };
    match img.rgb() {
        Some(rgb) => {
            let mapped: Vec<f32> = rgb.iter().map(|&v| map(v)).collect();
            Image::from_rgb(img.width(), img.height(), mapped)
        }
        None => {
            let mapped: Vec<f32> = img.gray().iter().map(|&v| map(v)).collect();
            Image::new(img.width(), img.height(), mapped)
        }
    }
}

/// Ranges from which random illumination changes are drawn. Gamma is
/// sampled log-uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhotometricSamplerConfig {
    /// Probability that a pair receives an illumination change at all.
    pub probability: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub brightness_min: f64,
    pub brightness_max: f64,
    pub contrast_min: f64,
    pub contrast_max: f64,
    pub noise_sigma_max: f64,
}

impl Default for PhotometricSamplerConfig {
    fn default() -> Self {
        Self {
            probability: 0.5,
            gamma_min: 0.4,
            gamma_max: 2.5,
            brightness_min: -0.25,
            brightness_max: 0.25,
            contrast_min: 0.5,
            contrast_max: 1.5,
            noise_sigma_max: 0.01,
        }
    }
}

impl PhotometricSamplerConfig {
    /// A sampler that never changes illumination.
    pub fn disabled() -> Self {
        Self { probability: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.probability)
            && self.gamma_min > 0.0
            && self.gamma_min <= self.gamma_max
            && self.brightness_min <= self.brightness_max
            && self.contrast_min > 0.0
            && self.contrast_min <= self.contrast_max
            && self.noise_sigma_max >= 0.0;
        if !ok {
            return Err(Error::DegenerateConfig(format!("invalid photometric sampler {self:?}")));
        }
        Ok(())
    }

    /// Draws parameters unconditionally (ignores `probability`).
    pub fn sample(&self, rng: &mut impl Rng) -> PhotometricParams {
        let log_gamma = range(rng, self.gamma_min.ln(), self.gamma_max.ln());
        PhotometricParams {
            gamma: log_gamma.exp(),
            brightness_shift: range(rng, self.brightness_min, self.brightness_max),
            contrast_scale: range(rng, self.contrast_min, self.contrast_max),
            noise_sigma: range(rng, 0.0, self.noise_sigma_max),
        }
    }
}

fn range(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Image {
        Image::from_fn(16, 8, |x, y| (x + y) as f32 / 22.0)
    }

    #[test]
    fn identity_params_are_noop() {
        let img = ramp();
        assert_eq!(apply_photometric(&img, &PhotometricParams::IDENTITY, 5).unwrap(), img);
    }

    #[test]
    fn gamma_and_clamp() {
        let img = Image::constant(1, 1, 0.5);
        let p = PhotometricParams { gamma: 2.0, ..PhotometricParams::IDENTITY };
        assert_eq!(apply_photometric(&img, &p, 0).unwrap().gray()[0], 0.25);
        let p = PhotometricParams { brightness_shift: 0.9, ..PhotometricParams::IDENTITY };
        assert_eq!(apply_photometric(&img, &p, 0).unwrap().gray()[0], 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let img = ramp();
        let p = PhotometricParams { gamma: 0.7, brightness_shift: 0.05, contrast_scale: 1.2, noise_sigma: 0.03 };
        let a = apply_photometric(&img, &p, 9).unwrap();
        let b = apply_photometric(&img, &p, 9).unwrap();
        let c = apply_photometric(&img, &p, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_invalid_params() {
        let p = PhotometricParams { gamma: 0.0, ..PhotometricParams::IDENTITY };
        assert!(apply_photometric(&ramp(), &p, 0).is_err());
    }
}
