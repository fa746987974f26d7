//! Difference-of-Gaussians keypoint detector with subpixel refinement.

use serde::{Deserialize, Serialize};

use crate::image::Image;

use super::orientation::orientation_at;
use super::{Keypoint, ScaleSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub octaves: usize,
    pub scales_per_octave: usize,
    /// Blur of the first level of every octave.
    pub sigma: f64,
    /// Blur assumed present in the input image.
    pub initial_blur: f64,
    /// Minimum |DoG| at the refined extremum.
    pub contrast_threshold: f64,
    /// Maximum ratio of principal curvatures.
    pub edge_threshold: f64,
    /// Extrema closer than this to an octave border are ignored.
    pub border: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            octaves: 3,
            scales_per_octave: 3,
            sigma: 1.6,
            initial_blur: 0.5,
            contrast_threshold: 0.01,
            edge_threshold: 10.0,
            border: 5,
        }
    }
}

/// Detects up to `max_count` keypoints, strongest first, with orientations.
pub fn detect(img: &Image, max_count: usize) -> Vec<Keypoint> {
    if img.is_empty() {
        return Vec::new();
    }
    let cfg = DetectorConfig::default();
    detect_with(&ScaleSpace::new(img, &cfg), &cfg, max_count)
}

pub fn detect_with(ss: &ScaleSpace, cfg: &DetectorConfig, max_count: usize) -> Vec<Keypoint> {
    let s = ss.scales;
    let mut found = Vec::new();
    for (o, octave) in ss.octaves.iter().enumerate() {
        let (w, h) = (octave.width, octave.height);
        let border = cfg.border.max(1);
        if w <= 2 * border || h <= 2 * border {
            continue;
        }
        let dog: Vec<Vec<f32>> = octave
            .levels
            .windows(2)
            .map(|pair| pair[1].iter().zip(&pair[0]).map(|(a, b)| a - b).collect())
            .collect();
        let pre = (0.5 * cfg.contrast_threshold) as f32;
        for l in 1..=s {
            let (below, cur, above) = (&dog[l - 1], &dog[l], &dog[l + 1]);
            for y in border..h - border {
                for x in border..w - border {
                    let v = cur[y * w + x];
                    if v.abs() <= pre || !is_extremum(below, cur, above, w, x, y, v) {
                        continue;
                    }
                    if let Some(kp) = refine(&dog, w, h, border, l, x, y, o, ss, cfg) {
                        found.push(kp);
                    }
                }
            }
        }
    }
    found.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
            .then(a.scale.total_cmp(&b.scale))
    });
    found.truncate(max_count);
    for kp in found.iter_mut() {
        kp.orientation = orientation_at(ss, kp);
    }
    found
}

#[allow(clippy::too_many_arguments)]
fn is_extremum(below: &[f32], cur: &[f32], above: &[f32], w: usize, x: usize, y: usize, v: f32) -> bool {
    let neighbors = |plane: &[f32], skip_center: bool| {
        let mut out = [0.0f32; 9];
        let mut n = 0;
        for dy in 0..3 {
            for dx in 0..3 {
                if skip_center && dx == 1 && dy == 1 {
                    continue;
                }
                out[n] = plane[(y + dy - 1) * w + x + dx - 1];
                n += 1;
            }
        }
        (out, n)
    };
    let planes = [(below, false), (cur, true), (above, false)];
    if v > 0.0 {
        planes.iter().all(|&(p, skip)| {
            let (vals, n) = neighbors(p, skip);
            vals[..n].iter().all(|&u| v > u)
        })
    } else {
        planes.iter().all(|&(p, skip)| {
            let (vals, n) = neighbors(p, skip);
            vals[..n].iter().all(|&u| v < u)
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn refine(
    dog: &[Vec<f32>],
    w: usize,
    h: usize,
    border: usize,
    level: usize,
    x: usize,
    y: usize,
    octave: usize,
    ss: &ScaleSpace,
    cfg: &DetectorConfig,
) -> Option<Keypoint> {
    let s = ss.scales;
    let (mut l, mut xi, mut yi) = (level, x, y);
    for _ in 0..5 {
        let at = |ll: usize, xx: usize, yy: usize| dog[ll][yy * w + xx] as f64;
        let c = at(l, xi, yi);
        let dx = 0.5 * (at(l, xi + 1, yi) - at(l, xi - 1, yi));
        let dy = 0.5 * (at(l, xi, yi + 1) - at(l, xi, yi - 1));
        let ds = 0.5 * (at(l + 1, xi, yi) - at(l - 1, xi, yi));
        let dxx = at(l, xi + 1, yi) + at(l, xi - 1, yi) - 2.0 * c;
        let dyy = at(l, xi, yi + 1) + at(l, xi, yi - 1) - 2.0 * c;
        let dss = at(l + 1, xi, yi) + at(l - 1, xi, yi) - 2.0 * c;
        let dxy = 0.25 * (at(l, xi + 1, yi + 1) - at(l, xi - 1, yi + 1) - at(l, xi + 1, yi - 1) + at(l, xi - 1, yi - 1));
        let dxs = 0.25 * (at(l + 1, xi + 1, yi) - at(l + 1, xi - 1, yi) - at(l - 1, xi + 1, yi) + at(l - 1, xi - 1, yi));
        let dys = 0.25 * (at(l + 1, xi, yi + 1) - at(l + 1, xi, yi - 1) - at(l - 1, xi, yi + 1) + at(l - 1, xi, yi - 1));
        let hess = nalgebra::Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
        let grad = nalgebra::Vector3::new(dx, dy, ds);
        let offset = -(hess.try_inverse()? * grad);
        if offset.iter().all(|v| v.abs() < 0.5) {
            let contrast = c + 0.5 * grad.dot(&offset);
            if contrast.abs() < cfg.contrast_threshold {
                return None;
            }
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            let r = cfg.edge_threshold;
            if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
                return None;
            }
            let factor = 2f64.powi(octave as i32);
            let x_out = (xi as f64 + offset[0]) * factor;
            let y_out = (yi as f64 + offset[1]) * factor;
            let scale = ss.sigma * 2f64.powf(octave as f64 + (l as f64 + offset[2]) / s as f64);
            return Some(Keypoint { x: x_out, y: y_out, response: contrast.abs(), orientation: 0.0, scale });
        }
        if offset.iter().any(|v| !v.is_finite() || v.abs() > 1e3) {
            return None;
        }
        let step = |v: f64| v.round() as isize;
        let nx = xi as isize + step(offset[0]);
        let ny = yi as isize + step(offset[1]);
        let nl = l as isize + step(offset[2]);
        if nl < 1 || nl > s as isize || nx < border as isize || ny < border as isize || nx >= (w - border) as isize || ny >= (h - border) as isize {
            return None;
        }
        l = nl as usize;
        xi = nx as usize;
        yi = ny as usize;
    }
    None
}
