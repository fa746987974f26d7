//! Homography estimation, precision and recall of predicted matches.

use nalgebra::{DMatrix, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Keypoint;
use crate::geometry::{Homography, Point2};
use crate::matching::Match;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Reprojection error (pixels) below which a match is an inlier.
    pub inlier_threshold: f64,
    pub iterations: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { inlier_threshold: 3.0, iterations: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Correctness threshold in pixels.
    pub epsilon: f64,
    /// Keypoints kept per image among those visible in both views.
    pub max_keypoints: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub ransac: RansacConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { epsilon: 3.0, max_keypoints: 1000, image_width: 640, image_height: 480, ransac: RansacConfig::default() }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.max_keypoints == 0 || self.image_width == 0 || self.image_height == 0 {
            return Err(Error::DegenerateConfig("epsilon, max_keypoints and image size must be positive".into()));
        }
        if !(self.ransac.inlier_threshold > 0.0) || self.ransac.iterations == 0 {
            return Err(Error::DegenerateConfig("ransac threshold and iterations must be positive".into()));
        }
        Ok(())
    }
}

fn inside(p: Point2, size: (usize, usize)) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= (size.0 - 1) as f64 && p.y <= (size.1 - 1) as f64
}

fn strongest(mut kps: Vec<Keypoint>, cap: usize) -> Vec<Keypoint> {
    kps.sort_by(|a, b| b.response.total_cmp(&a.response));
    kps.truncate(cap);
    kps
}

/// Keeps keypoints of `a` that `h_gt` maps inside image `b`, keypoints of
/// `b` whose preimage lies inside image `a`, and truncates each side to the
/// `cap` strongest. Sizes are `(width, height)`.
pub fn shared_keypoints(
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_gt: &Homography,
    size_a: (usize, usize),
    size_b: (usize, usize),
    cap: usize,
) -> Result<(Vec<Keypoint>, Vec<Keypoint>)> {
    let inv = h_gt.inverse()?;
    let a = kps_a.iter().filter(|k| h_gt.warp_point(k.position()).is_ok_and(|p| inside(p, size_b))).copied().collect();
    let b = kps_b.iter().filter(|k| inv.warp_point(k.position()).is_ok_and(|p| inside(p, size_a))).copied().collect();
    Ok((strongest(a, cap), strongest(b, cap)))
}

/// Mean distance between the image corners mapped by `h_pred` and by
/// `h_gt`. Infinite when either projection degenerates.
pub fn corner_error(h_pred: &Homography, h_gt: &Homography, size: (usize, usize)) -> f64 {
    let (w, h) = ((size.0 - 1) as f64, (size.1 - 1) as f64);
    let corners = [Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(0.0, h), Point2::new(w, h)];
    let mut total = 0.0;
    for c in corners {
        match (h_pred.warp_point(c), h_gt.warp_point(c)) {
            (Ok(p), Ok(g)) => total += p.distance(&g),
            _ => return f64::INFINITY,
        }
    }
    total / 4.0
}

/// Least-squares homography through at least four correspondences
/// (normalized direct linear transform).
pub fn fit_homography(src: &[Point2], dst: &[Point2]) -> Result<Homography> {
    if src.len() < 4 || src.len() != dst.len() {
        return Err(Error::InsufficientData { needed: 4, got: src.len().min(dst.len()) });
    }
    let (ts, ns) = normalizer(src);
    let (td, nd) = normalizer(dst);
    let rows = (2 * src.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in ns.iter().zip(&nd).enumerate() {
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]);
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::DegenerateConfig("SVD failed".into()))?;
    let smallest = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .unwrap_or(8);
    let h = vt.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or_else(|| Error::DegenerateConfig("degenerate normalization".into()))?;
    Homography::from_matrix(&(td_inv * hn * ts))
}

fn normalizer(pts: &[Point2]) -> (Matrix3<f64>, Vec<Point2>) {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_d = pts.iter().map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()).sum::<f64>() / n;
    let s = if mean_d > 1e-12 { std::f64::consts::SQRT_2 / mean_d } else { 1.0 };
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    (t, pts.iter().map(|p| Point2::new(s * (p.x - cx), s * (p.y - cy))).collect())
}

fn count_inliers(h: &Homography, src: &[Point2], dst: &[Point2], thr: f64, mask: &mut [bool]) -> usize {
    let mut n = 0;
    for ((p, q), m) in src.iter().zip(dst).zip(mask.iter_mut()) {
        *m = h.warp_point(*p).is_ok_and(|w| w.distance(q) <= thr);
        n += *m as usize;
    }
    n
}

/// RANSAC over four-point minimal samples followed by a least-squares refit
/// on the best consensus set. Returns the model and its inlier mask.
pub fn ransac_homography(src: &[Point2], dst: &[Point2], cfg: &RansacConfig, seed: u64) -> Option<(Homography, Vec<bool>)> {
    let n = src.len();
    if n < 4 || dst.len() != n {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Homography)> = None;
    let mut mask = vec![false; n];
    for _ in 0..cfg.iterations {
        let mut idx = [0usize; 4];
        for k in 0..4 {
            loop {
                let c = rng.random_range(0..n);
                if !idx[..k].contains(&c) {
                    idx[k] = c;
                    break;
                }
            }
        }
        let Ok(h) = Homography::from_four_points(&idx.map(|i| src[i]), &idx.map(|i| dst[i])) else {
            continue;
        };
        let count = count_inliers(&h, src, dst, cfg.inlier_threshold, &mut mask);
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, h));
            if count == n {
                break;
            }
        }
    }
    let (_, h) = best?;
    count_inliers(&h, src, dst, cfg.inlier_threshold, &mut mask);
    let (s, d): (Vec<Point2>, Vec<Point2>) =
        src.iter().zip(dst).zip(&mask).filter(|(_, m)| **m).map(|((p, q), _)| (*p, *q)).unzip();
    let refined = fit_homography(&s, &d).ok().filter(|r| {
        let mut tmp = vec![false; n];
        count_inliers(r, src, dst, cfg.inlier_threshold, &mut tmp) >= s.len()
    });
    let h = refined.unwrap_or(h);
    count_inliers(&h, src, dst, cfg.inlier_threshold, &mut mask);
    Some((h, mask))
}

fn matched_points(matches: &[Match], kps_a: &[Keypoint], kps_b: &[Keypoint]) -> (Vec<Point2>, Vec<Point2>) {
    matches.iter().map(|m| (kps_a[m.a].position(), kps_b[m.b].position())).unzip()
}

/// Whether the homography fitted to the matches maps the corners of image
/// `a` (size `(width, height)`) within `epsilon` of their true positions.
pub fn h_estimation_score(
    matches: &[Match],
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_gt: &Homography,
    size_a: (usize, usize),
    cfg: &MetricsConfig,
    seed: u64,
) -> bool {
    let (src, dst) = matched_points(matches, kps_a, kps_b);
    match ransac_homography(&src, &dst, &cfg.ransac, seed) {
        Some((h, _)) => corner_error(&h, h_gt, size_a) <= cfg.epsilon,
        None => false,
    }
}

/// Fraction of matches whose reprojection error is at most `epsilon`;
/// 0 when there are no matches.
pub fn precision(matches: &[Match], kps_a: &[Keypoint], kps_b: &[Keypoint], h_gt: &Homography, epsilon: f64) -> f64 {
    if matches.is_empty() {
        return 0.0;
    }
    let correct = matches
        .iter()
        .filter(|m| h_gt.warp_point(kps_a[m.a].position()).is_ok_and(|p| p.distance(&kps_b[m.b].position()) <= epsilon))
        .count();
    correct as f64 / matches.len() as f64
}

/// For every keypoint of `a`, the closest keypoint of `b` to its warp if
/// that one lies within `epsilon` (ties to the lower index).
pub fn ground_truth_matches(kps_a: &[Keypoint], kps_b: &[Keypoint], h_gt: &Homography, epsilon: f64) -> Vec<Option<usize>> {
    kps_a
        .iter()
        .map(|k| {
            let p = h_gt.warp_point(k.position()).ok()?;
            let mut best: Option<(usize, f64)> = None;
            for (j, kb) in kps_b.iter().enumerate() {
                let d = p.distance(&kb.position());
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            best.filter(|(_, d)| *d <= epsilon).map(|(j, _)| j)
        })
        .collect()
}

/// Recall and whether any ground-truth match exists. Only a prediction of
/// the closest point counts; 0 when nothing could be matched.
pub fn recall_with_flag(matches: &[Match], kps_a: &[Keypoint], kps_b: &[Keypoint], h_gt: &Homography, epsilon: f64) -> (f64, bool) {
    let gt = ground_truth_matches(kps_a, kps_b, h_gt, epsilon);
    let total = gt.iter().filter(|g| g.is_some()).count();
    if total == 0 {
        return (0.0, false);
    }
    let hit = matches.iter().filter(|m| gt[m.a] == Some(m.b)).count();
    (hit as f64 / total as f64, true)
}

pub fn recall(matches: &[Match], kps_a: &[Keypoint], kps_b: &[Keypoint], h_gt: &Homography, epsilon: f64) -> f64 {
    recall_with_flag(matches, kps_a, kps_b, h_gt, epsilon).0
}
