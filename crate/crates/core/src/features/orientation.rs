use std::f64::consts::PI;

use crate::image::Image;

use super::{DetectorConfig, Keypoint, ScaleSpace};

const BINS: usize = 36;

/// Dominant gradient orientation around `kp`, in `[-pi, pi)`.
pub fn assign_orientation(img: &Image, kp: &Keypoint) -> f64 {
    assign_orientation_with(&ScaleSpace::new(img, &DetectorConfig::default()), kp)
}

pub fn assign_orientation_with(ss: &ScaleSpace, kp: &Keypoint) -> f64 {
    orientation_at(ss, kp)
}

/// 36-bin histogram of gradient angles over a Gaussian window of
/// 1.5 x the keypoint scale, smoothed, with parabolic refinement of the
/// peak. Empty or uniform histograms resolve to the lowest bin.
pub(crate) fn orientation_at(ss: &ScaleSpace, kp: &Keypoint) -> f64 {
    let (o, l) = ss.level_for(kp.scale);
    let octave = &ss.octaves[o];
    let plane = &octave.levels[l];
    let (w, h) = (octave.width as isize, octave.height as isize);
    let factor = 2f64.powi(o as i32);
    let sigma = 1.5 * kp.scale / factor;
    let radius = (3.0 * sigma).round().max(1.0) as isize;
    let cx = (kp.x / factor).round() as isize;
    let cy = (kp.y / factor).round() as isize;
    let denom = 2.0 * sigma * sigma;

    let mut hist = [0.0f64; BINS];
    for dy in -radius..=radius {
        let y = cy + dy;
        if y <= 0 || y >= h - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let x = cx + dx;
            if x <= 0 || x >= w - 1 {
                continue;
            }
            let r2 = (dx * dx + dy * dy) as f64;
            if r2 > (radius * radius) as f64 {
                continue;
            }
            let at = |xx: isize, yy: isize| plane[(yy * w + xx) as usize] as f64;
            let gx = at(x + 1, y) - at(x - 1, y);
            let gy = at(x, y + 1) - at(x, y - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(2.0 * PI);
            let bin = ((angle * BINS as f64 / (2.0 * PI)).round() as usize) % BINS;
            hist[bin] += mag * (-r2 / denom).exp();
        }
    }

    // Two passes of a [1, 2, 1] / 4 circular smoothing.
    for _ in 0..2 {
        let prev = hist;
        for b in 0..BINS {
            hist[b] = 0.25 * prev[(b + BINS - 1) % BINS] + 0.5 * prev[b] + 0.25 * prev[(b + 1) % BINS];
        }
    }

    let mut peak = 0;
    for b in 1..BINS {
        if hist[b] > hist[peak] {
            peak = b;
        }
    }
    let left = hist[(peak + BINS - 1) % BINS];
    let right = hist[(peak + 1) % BINS];
    let curvature = left - 2.0 * hist[peak] + right;
    let offset = if curvature < 0.0 { (0.5 * (left - right) / curvature).clamp(-0.5, 0.5) } else { 0.0 };
    wrap_angle((peak as f64 + offset) * 2.0 * PI / BINS as f64)
}

/// Maps any angle into `[-pi, pi)`.
pub(crate) fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Homography;
    use crate::warp::warp_image;

    fn angle_diff(a: f64, b: f64) -> f64 {
        wrap_angle(a - b).abs()
    }

    #[test]
    fn vertical_step_edge_points_along_x() {
        let img = Image::from_fn(64, 64, |x, _| if x < 32 { 0.2 } else { 0.8 });
        let kp = Keypoint::new(32.0, 32.0, 2.0);
        let theta = assign_orientation(&img, &kp);
        assert!(angle_diff(theta, 0.0) < 10f64.to_radians(), "{theta}");
        let flipped = Image::from_fn(64, 64, |x, _| if x < 32 { 0.8 } else { 0.2 });
        let theta = assign_orientation(&flipped, &kp);
        assert!(angle_diff(theta, PI) < 10f64.to_radians(), "{theta}");
    }

    #[test]
    fn follows_image_rotation() {
        // An asymmetric corner-like pattern so one orientation dominates.
        let img = Image::from_fn(96, 96, |x, y| {
            let (dx, dy) = (x as f32 - 48.0, y as f32 - 48.0);
            let base = if dx > 0.0 { 0.8 } else { 0.2 };
            base + if dy > 0.0 && dx > 0.0 { 0.15 } else { 0.0 }
        });
        let kp = Keypoint::new(48.0, 48.0, 3.0);
        let before = assign_orientation(&img, &kp);
        let rot = 40f64.to_radians();
        let h = Homography::rotation_about(rot, 48.0, 48.0);
        let (rotated, _) = warp_image(&img, &h).unwrap();
        let after = assign_orientation(&rotated, &kp);
        assert!(angle_diff(after - before, rot) < 10f64.to_radians(), "{before} -> {after}");
    }

    #[test]
    fn flat_patch_resolves_to_lowest_bin() {
        let img = Image::constant(48, 48, 0.4);
        assert_eq!(assign_orientation(&img, &Keypoint::new(24.0, 24.0, 2.0)), 0.0);
    }

    #[test]
    fn isotropic_blob_is_deterministic() {
        let img = Image::from_fn(64, 64, |x, y| {
            let d2 = (x as f32 - 32.0).powi(2) + (y as f32 - 32.0).powi(2);
            (-d2 / 50.0).exp()
        });
        let kp = Keypoint::new(32.0, 32.0, 3.0);
        let a = assign_orientation(&img, &kp);
        assert_eq!(a, assign_orientation(&img, &kp));
        assert!((-PI..PI).contains(&a));
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }
}
