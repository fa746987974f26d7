//! Training triplets and the descriptor samples extracted from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{assign_orientation_with, describe_with, Keypoint, ScaleSpace, NUM_CHANNELS};
use crate::geometry::{sample_homography_with, Homography, HomographySamplerConfig, Point2};
use crate::image::Image;
use crate::photometric::{apply_photometric, PhotometricSamplerConfig};
use crate::pipeline::{detect_all, FeatureConfig};
use crate::warp::warp_image;

use super::loss::ChannelSet;

/// An anchor image, a variant image (no rotation, same illumination) and an
/// invariant image (possibly rotated and relit).
#[derive(Debug, Clone)]
pub struct TrainingTriplet {
    pub anchor: Image,
    pub variant: Image,
    pub invariant: Image,
    pub h_av: Homography,
    pub h_ai: Homography,
    /// Rotation embedded in `h_ai`.
    pub theta_i: f64,
    pub illum_changed: bool,
}

/// Draws `count` triplets from `sources` (used round-robin after resizing
/// to `size`). The variant homography uses the ranges of `sampler` with
/// rotation disabled; the invariant one uses `sampler` as is.
pub fn generate_triplets(
    sources: &[Image],
    sampler: &HomographySamplerConfig,
    photometric: &PhotometricSamplerConfig,
    size: (usize, usize),
    count: usize,
    seed: u64,
) -> Result<Vec<TrainingTriplet>> {
    if sources.is_empty() {
        return Err(Error::InvalidArgument("at least one source image is required".into()));
    }
    photometric.validate()?;
    let invariant_cfg = HomographySamplerConfig { width: size.0 as f64, height: size.1 as f64, ..sampler.clone() };
    let variant_cfg = HomographySamplerConfig { rotation_probability: 0.0, ..invariant_cfg.clone() };
    let prepared: Vec<Image> = sources.iter().map(|s| s.resize_and_crop(size.0, size.1)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let anchor = prepared[i % prepared.len()].clone();
            let v = sample_homography_with(&variant_cfg, &mut rng)?;
            let inv = sample_homography_with(&invariant_cfg, &mut rng)?;
            let relit = photometric.probability > 0.0 && rng.random_bool(photometric.probability);
            let params = relit.then(|| photometric.sample(&mut rng));
            let noise_seed: u64 = rng.random();
            let variant = warp_image(&anchor, &v.homography)?.0;
            let warped = warp_image(&anchor, &inv.homography)?.0;
            let invariant = match &params {
                Some(p) => apply_photometric(&warped, p, noise_seed)?,
                None => warped,
            };
            Ok(TrainingTriplet {
                anchor,
                variant,
                invariant,
                h_av: v.homography,
                h_ai: inv.homography,
                theta_i: inv.rotation,
                illum_changed: params.is_some(),
            })
        })
        .collect()
}

/// Raw (unprojected) descriptors of anchor keypoints and of their images
/// in the variant and invariant images, aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSample {
    pub points_a: Vec<Point2>,
    pub points_i: Vec<Point2>,
    pub size_a: (usize, usize),
    pub size_i: (usize, usize),
    pub anchor: ChannelSet,
    pub variant: ChannelSet,
    pub invariant: ChannelSet,
    pub theta: f64,
    pub illum_changed: bool,
}

impl TripletSample {
    pub fn len(&self) -> usize {
        self.points_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points_a.is_empty()
    }
}

/// Square root of the local area magnification of `h` at `p`.
fn local_scale(h: &Homography, p: Point2) -> Result<f64> {
    let o = h.warp_point(p)?;
    let dx = h.warp_point(Point2::new(p.x + 1.0, p.y))?;
    let dy = h.warp_point(Point2::new(p.x, p.y + 1.0))?;
    let det = (dx.x - o.x) * (dy.y - o.y) - (dx.y - o.y) * (dy.x - o.x);
    Ok(det.abs().sqrt())
}

/// Moves `kp` through `h`, rescales it and assigns a fresh orientation in
/// the target scale space.
fn transfer(kp: &Keypoint, h: &Homography, target: &ScaleSpace, size: (usize, usize)) -> Option<Keypoint> {
    let q = h.warp_point(kp.position()).ok()?;
    if !(q.x >= 0.0 && q.y >= 0.0 && q.x <= (size.0 - 1) as f64 && q.y <= (size.1 - 1) as f64) {
        return None;
    }
    let scale = kp.scale * local_scale(h, kp.position()).ok()?;
    let mut out = Keypoint { x: q.x, y: q.y, response: kp.response, orientation: 0.0, scale };
    out.orientation = assign_orientation_with(target, &out);
    Some(out)
}

fn to_f64(channels: &[Vec<f32>; NUM_CHANNELS]) -> [Vec<f64>; NUM_CHANNELS] {
    std::array::from_fn(|c| channels[c].iter().map(|&v| v as f64).collect())
}

/// Detects keypoints in the anchor, follows them into the other two images
/// and keeps the strongest `max_points` described in all three.
pub fn prepare_triplet(t: &TrainingTriplet, cfg: &FeatureConfig, max_points: usize) -> Result<TripletSample> {
    let det = detect_all(&t.anchor, cfg, cfg.max_keypoints);
    let size_v = (t.variant.width(), t.variant.height());
    let size_i = (t.invariant.width(), t.invariant.height());
    let ss_v = ScaleSpace::new(&t.variant, &cfg.detector);
    let ss_i = ScaleSpace::new(&t.invariant, &cfg.detector);

    let mut kps_a = Vec::new();
    let mut kps_v = Vec::new();
    let mut kps_i = Vec::new();
    for kp in &det.keypoints {
        if let (Some(v), Some(i)) = (transfer(kp, &t.h_av, &ss_v, size_v), transfer(kp, &t.h_ai, &ss_i, size_i)) {
            kps_a.push(*kp);
            kps_v.push(v);
            kps_i.push(i);
        }
    }
    let da = describe_with(&det.scale_space, &kps_a, &cfg.descriptor);
    let dv = describe_with(&ss_v, &kps_v, &cfg.descriptor);
    let di = describe_with(&ss_i, &kps_i, &cfg.descriptor);

    let pos = |d: &crate::features::Descriptions| {
        let mut m = vec![None; kps_a.len()];
        for (slot, &idx) in d.indices.iter().enumerate() {
            m[idx] = Some(slot);
        }
        m
    };
    let (pa, pv, pi) = (pos(&da), pos(&dv), pos(&di));
    let mut sample = TripletSample {
        points_a: Vec::new(),
        points_i: Vec::new(),
        size_a: (t.anchor.width(), t.anchor.height()),
        size_i,
        anchor: Default::default(),
        variant: Default::default(),
        invariant: Default::default(),
        theta: t.theta_i,
        illum_changed: t.illum_changed,
    };
    for idx in 0..kps_a.len() {
        if sample.len() == max_points {
            break;
        }
        let (Some(a), Some(v), Some(i)) = (pa[idx], pv[idx], pi[idx]) else { continue };
        sample.points_a.push(kps_a[idx].position());
        sample.points_i.push(kps_i[idx].position());
        for (set, bundle) in [(&mut sample.anchor, &da.bundles[a]), (&mut sample.variant, &dv.bundles[v]), (&mut sample.invariant, &di.bundles[i])] {
            let ch = to_f64(&bundle.channels);
            for (dst, src) in set.iter_mut().zip(ch) {
                dst.push(src);
            }
        }
    }
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::synthetic_scene;

    #[test]
    fn variant_is_unrotated_and_unlit() {
        let srcs = [synthetic_scene(160, 120, 1), synthetic_scene(160, 120, 2)];
        let sampler = HomographySamplerConfig { rotation_probability: 1.0, ..HomographySamplerConfig::default() };
        let phot = PhotometricSamplerConfig { probability: 1.0, ..PhotometricSamplerConfig::default() };
        let ts = generate_triplets(&srcs, &sampler, &phot, (160, 120), 4, 3).unwrap();
        for t in &ts {
            let warped = warp_image(&t.anchor, &t.h_av).unwrap().0;
            assert_eq!(warped, t.variant);
            assert!(t.theta_i != 0.0 && t.illum_changed);
        }
        let again = generate_triplets(&srcs, &sampler, &phot, (160, 120), 4, 3).unwrap();
        assert_eq!(again[3].invariant, ts[3].invariant);
        assert!(generate_triplets(&[], &sampler, &phot, (160, 120), 1, 0).is_err());
    }

    #[test]
    fn prepared_samples_are_aligned() {
        let srcs = [synthetic_scene(200, 150, 4)];
        let ts = generate_triplets(&srcs, &HomographySamplerConfig::default(), &PhotometricSamplerConfig::default(), (200, 150), 2, 8).unwrap();
        for t in &ts {
            let s = prepare_triplet(t, &FeatureConfig::default(), 30).unwrap();
            assert!(s.len() >= 2 && s.len() <= 30, "{}", s.len());
            for set in [&s.anchor, &s.variant, &s.invariant] {
                assert!(set.iter().all(|d| d.len() == s.len() && d.iter().all(|v| v.len() == 128)));
            }
            for (a, i) in s.points_a.iter().zip(&s.points_i) {
                let q = t.h_ai.warp_point(*a).unwrap();
                assert!(q.distance(i) < 1e-9);
            }
        }
    }
}
