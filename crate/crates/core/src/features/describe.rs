//! Gradient-histogram descriptors in four invariance flavors.
//!
//! Every keypoint is described on a 16x16 sample grid (4x4 cells of 4x4
//! samples, 8 orientation bins per cell, trilinear binning) taken from the
//! scale-space level matching its scale. The grid spacing is
//! `cell_scale * scale / 4` and samples are weighted by a Gaussian whose
//! sigma is half the grid width.
//!
//! * rotation-invariant channels rotate the grid and the gradient angles by
//!   `-orientation`; rotation-variant channels use the upright grid.
//! * illumination-invariant channels L2-normalize the histogram, clamp every
//!   entry at `clamp` and renormalize.
//! * illumination-variant channels L2-normalize the histogram, multiply the
//!   eight bins of cell `c` by `(brightness_floor + mean_c + std_c)^brightness_power`
//!   (mean and standard deviation of the cell's sample intensities) and renormalize, so
//!   the intensity layout of the patch changes the descriptor direction.
//!
//! A patch without any gradient yields the uniform histogram before the
//! channel-specific step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::{bilinear_clamped, Image};

use super::{l2_normalize, DescriptorBundle, DetectorConfig, Keypoint, ScaleSpace, DESCRIPTOR_DIM, NUM_CHANNELS};

const GRID: usize = 16;
const CELLS: usize = 4;
const BINS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptorConfig {
    /// Width of one spatial cell, in multiples of the keypoint scale.
    pub cell_scale: f64,
    /// Entry clamp of the illumination-invariant normalization.
    pub clamp: f32,
    /// Constant added to the per-cell weights of illumination-variant channels.
    pub brightness_floor: f32,
    /// Exponent applied to those per-cell weights.
    pub brightness_power: f32,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self { cell_scale: 3.0, clamp: 0.2, brightness_floor: 0.1, brightness_power: 4.0 }
    }
}

/// Output of [`describe`]: one bundle per kept keypoint, in input order.
#[derive(Debug, Clone, Default)]
pub struct Descriptions {
    /// Input indices of the described keypoints.
    pub indices: Vec<usize>,
    pub keypoints: Vec<Keypoint>,
    pub bundles: Vec<DescriptorBundle>,
    /// Keypoints dropped because their patch leaves the image.
    pub dropped: usize,
}

impl Descriptions {
    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }
}

pub fn describe(img: &Image, kps: &[Keypoint]) -> Descriptions {
    if img.is_empty() {
        return Descriptions { dropped: kps.len(), ..Default::default() };
    }
    let ss = ScaleSpace::new(img, &DetectorConfig::default());
    describe_with(&ss, kps, &DescriptorConfig::default())
}

pub fn describe_with(ss: &ScaleSpace, kps: &[Keypoint], cfg: &DescriptorConfig) -> Descriptions {
    let results: Vec<Option<DescriptorBundle>> = kps.par_iter().map(|kp| describe_one(ss, kp, cfg)).collect();
    let mut out = Descriptions::default();
    for (i, (kp, res)) in kps.iter().zip(results).enumerate() {
        match res {
            Some(bundle) => {
                out.indices.push(i);
                out.keypoints.push(*kp);
                out.bundles.push(bundle);
            }
            None => out.dropped += 1,
        }
    }
    out
}

struct Patch {
    hist: [f32; DESCRIPTOR_DIM],
    cell_sum: [f32; CELLS * CELLS],
    cell_sq: [f32; CELLS * CELLS],
}

fn describe_one(ss: &ScaleSpace, kp: &Keypoint, cfg: &DescriptorConfig) -> Option<DescriptorBundle> {
    if !(kp.x.is_finite() && kp.y.is_finite() && kp.scale > 0.0) {
        return None;
    }
    let (o, l) = ss.level_for(kp.scale);
    let octave = &ss.octaves[o];
    let factor = 2f64.powi(o as i32);
    let (kx, ky) = (kp.x / factor, kp.y / factor);
    let spacing = cfg.cell_scale * kp.scale / factor / CELLS as f64;
    let radius = std::f64::consts::SQRT_2 * 0.5 * GRID as f64 * spacing + 1.5;
    let (w, h) = (octave.width as f64, octave.height as f64);
    if kx - radius < 0.0 || ky - radius < 0.0 || kx + radius > w - 1.0 || ky + radius > h - 1.0 {
        return None;
    }
    let plane = &octave.levels[l];
    let upright = sample_patch(plane, octave.width, octave.height, kx, ky, spacing, 0.0);
    let rotated = sample_patch(plane, octave.width, octave.height, kx, ky, spacing, kp.orientation);

    let mut channels: [Vec<f32>; NUM_CHANNELS] = Default::default();
    for (c, slot) in channels.iter_mut().enumerate() {
        let patch = if c >= 2 { &rotated } else { &upright };
        *slot = if c % 2 == 1 { illum_invariant(patch, cfg) } else { illum_variant(patch, cfg) };
    }
    Some(DescriptorBundle::new(channels))
}

fn sample_patch(plane: &[f32], w: usize, h: usize, kx: f64, ky: f64, spacing: f64, theta: f64) -> Patch {
    let (sin, cos) = (theta.sin() as f32, theta.cos() as f32);
    let sp = spacing as f32;
    let half = GRID as f32 * 0.5;
    let inv_two_sigma2 = 1.0 / (2.0 * half * half);
    let two_pi = std::f32::consts::TAU;
    let mut patch = Patch { hist: [0.0; DESCRIPTOR_DIM], cell_sum: [0.0; CELLS * CELLS], cell_sq: [0.0; CELLS * CELLS] };
    for j in 0..GRID {
        let v = j as f32 + 0.5 - half;
        for i in 0..GRID {
            let u = i as f32 + 0.5 - half;
            let px = kx as f32 + (cos * u - sin * v) * sp;
            let py = ky as f32 + (sin * u + cos * v) * sp;
            let at = |x: f32, y: f32| bilinear_clamped(plane, w, h, x, y);
            let intensity = at(px, py);
            let gx = at(px + 1.0, py) - at(px - 1.0, py);
            let gy = at(px, py + 1.0) - at(px, py - 1.0);
            let cell = (j / CELLS) * CELLS + i / CELLS;
            patch.cell_sum[cell] += intensity;
            patch.cell_sq[cell] += intensity * intensity;

            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = (-(u * u + v * v) * inv_two_sigma2).exp() * mag;
            let angle = (gy.atan2(gx) - theta as f32).rem_euclid(two_pi);
            let ob = angle * BINS as f32 / two_pi;
            let cx = (i as f32 + 0.5) / CELLS as f32 - 0.5;
            let cy = (j as f32 + 0.5) / CELLS as f32 - 0.5;
            let (x0, y0, o0) = (cx.floor(), cy.floor(), ob.floor());
            let (fx, fy, fo) = (cx - x0, cy - y0, ob - o0);
            for (dy, wy) in [(0i32, 1.0 - fy), (1, fy)] {
                let yy = y0 as i32 + dy;
                if !(0..CELLS as i32).contains(&yy) {
                    continue;
                }
                for (dx, wx) in [(0i32, 1.0 - fx), (1, fx)] {
                    let xx = x0 as i32 + dx;
                    if !(0..CELLS as i32).contains(&xx) {
                        continue;
                    }
                    let base = (yy as usize * CELLS + xx as usize) * BINS;
                    let b0 = (o0 as usize) % BINS;
                    let b1 = (b0 + 1) % BINS;
                    patch.hist[base + b0] += weight * wx * wy * (1.0 - fo);
                    patch.hist[base + b1] += weight * wx * wy * fo;
                }
            }
        }
    }
    patch
}

fn normalized_hist(patch: &Patch) -> Vec<f32> {
    let mut d = patch.hist.to_vec();
    if !l2_normalize(&mut d) {
        d.iter_mut().for_each(|v| *v = 1.0);
        l2_normalize(&mut d);
    }
    d
}

fn illum_invariant(patch: &Patch, cfg: &DescriptorConfig) -> Vec<f32> {
    let mut d = normalized_hist(patch);
    d.iter_mut().for_each(|v| *v = v.min(cfg.clamp));
    l2_normalize(&mut d);
    d
}

fn illum_variant(patch: &Patch, cfg: &DescriptorConfig) -> Vec<f32> {
    let mut d = normalized_hist(patch);
    let n = (CELLS * CELLS) as f32;
    for cell in 0..CELLS * CELLS {
        let mean = patch.cell_sum[cell] / n;
        let std = (patch.cell_sq[cell] / n - mean * mean).max(0.0).sqrt();
        let gain = (cfg.brightness_floor + mean + std).powf(cfg.brightness_power);
        d[cell * BINS..(cell + 1) * BINS].iter_mut().for_each(|v| *v *= gain);
    }
    if !l2_normalize(&mut d) {
        return normalized_hist(patch);
    }
    d
}
