//! Labeled image pairs related by a known homography and an optional
//! illumination change, plus their JSON manifest.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_homography_with, Homography, HomographySamplerConfig};
use crate::image::{Image, Mask};
use crate::photometric::{apply_photometric, PhotometricParams, PhotometricSamplerConfig};
use crate::warp::warp_image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairLabels {
    pub rotated: bool,
    pub illum_changed: bool,
}

/// How the second image of a pair is derived from the first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairParams {
    pub source: usize,
    pub homography: Homography,
    /// Rotation embedded in the homography, 0 for upright pairs.
    pub rotation: f64,
    /// `None` when illumination is left unchanged.
    pub photometric: Option<PhotometricParams>,
    pub noise_seed: u64,
}

impl PairParams {
    pub fn labels(&self) -> PairLabels {
        PairLabels { rotated: self.rotation != 0.0, illum_changed: self.photometric.is_some() }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkPair {
    pub img_a: Image,
    pub img_b: Image,
    /// Maps coordinates of `img_a` to coordinates of `img_b`.
    pub h_gt: Homography,
    pub labels: PairLabels,
    pub params: PairParams,
    /// Pixels of `img_b` that were sampled from inside `img_a`.
    pub valid_b: Mask,
}

/// Draws the parameters of `count` pairs over `num_sources` source images.
/// Sources are used round-robin. Homographies are sampled for `size`
/// (width, height) regardless of the sampler's own size fields.
pub fn sample_pair_params(
    num_sources: usize,
    sampler: &HomographySamplerConfig,
    photometric: &PhotometricSamplerConfig,
    size: (usize, usize),
    count: usize,
    seed: u64,
) -> Result<Vec<PairParams>> {
    if num_sources == 0 {
        return Err(Error::InvalidArgument("at least one source image is required".into()));
    }
    photometric.validate()?;
    let sampler = HomographySamplerConfig { width: size.0 as f64, height: size.1 as f64, ..sampler.clone() };
    sampler.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let sampled = sample_homography_with(&sampler, &mut rng)?;
            let relit = photometric.probability > 0.0 && rng.random_bool(photometric.probability);
            let params = relit.then(|| photometric.sample(&mut rng));
            Ok(PairParams {
                source: i % num_sources,
                homography: sampled.homography,
                rotation: sampled.rotation,
                photometric: params,
                noise_seed: rng.random(),
            })
        })
        .collect()
}

/// Renders one pair from an already resized source image.
pub fn render_pair(img_a: &Image, params: &PairParams) -> Result<BenchmarkPair> {
    let (warped, valid_b) = warp_image(img_a, &params.homography)?;
    let img_b = match &params.photometric {
        Some(p) => apply_photometric(&warped, p, params.noise_seed)?,
        None => warped,
    };
    Ok(BenchmarkPair { img_a: img_a.clone(), img_b, h_gt: params.homography, labels: params.labels(), params: *params, valid_b })
}

/// Resizes and center-crops every source to `size` (width, height), then
/// derives `count` pairs. Deterministic given `seed`.
pub fn generate_pairs(
    sources: &[Image],
    sampler: &HomographySamplerConfig,
    photometric: &PhotometricSamplerConfig,
    size: (usize, usize),
    count: usize,
    seed: u64,
) -> Result<Vec<BenchmarkPair>> {
    let params = sample_pair_params(sources.len(), sampler, photometric, size, count, seed)?;
    let prepared: Vec<Image> = sources.iter().map(|s| s.resize_and_crop(size.0, size.1)).collect::<Result<_>>()?;
    params.iter().map(|p| render_pair(&prepared[p.source], p)).collect()
}

/// Images for codebook training: both halves of `count` pairs derived from
/// `sources` with every pair rotated and half of them relit, so that the
/// codebook reflects the full range of orientations and lighting.
pub fn codebook_training_images(sources: &[Image], size: (usize, usize), count: usize, seed: u64) -> Result<Vec<Image>> {
    let sampler = HomographySamplerConfig { rotation_probability: 1.0, ..HomographySamplerConfig::default() };
    let photometric = PhotometricSamplerConfig { probability: 0.5, ..PhotometricSamplerConfig::default() };
    let pairs = generate_pairs(sources, &sampler, &photometric, size, count, seed)?;
    Ok(pairs.into_iter().flat_map(|p| [p.img_a, p.img_b]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    /// Paths relative to the manifest's directory.
    pub image_a: String,
    pub image_b: String,
    pub homography: [f64; 9],
    pub rotated: bool,
    pub illum_changed: bool,
    pub rotation: f64,
    pub photometric: Option<PhotometricParams>,
}

/// Pairs manifest: image paths, ground-truth homographies and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsManifest {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub pairs: Vec<ManifestEntry>,
}

impl PairsManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// Writes both images of every pair as PNG next to a `pairs.json` manifest.
pub fn write_pairs(pairs: &[BenchmarkPair], seed: u64, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let (width, height) = pairs.first().map_or((0, 0), |p| (p.img_a.width(), p.img_a.height()));
    let mut entries = Vec::with_capacity(pairs.len());
    for (id, p) in pairs.iter().enumerate() {
        let (a, b) = (format!("pair_{id:04}_a.png"), format!("pair_{id:04}_b.png"));
        p.img_a.save_png(dir.join(&a))?;
        p.img_b.save_png(dir.join(&b))?;
        entries.push(ManifestEntry {
            id,
            image_a: a,
            image_b: b,
            homography: *p.h_gt.coefficients(),
            rotated: p.labels.rotated,
            illum_changed: p.labels.illum_changed,
            rotation: p.params.rotation,
            photometric: p.params.photometric,
        });
    }
    let manifest = PairsManifest { seed, width, height, pairs: entries };
    let path = dir.join("pairs.json");
    manifest.save(&path)?;
    Ok(path)
}

/// Loads the pairs listed in a manifest file.
pub fn read_pairs(manifest_path: impl AsRef<Path>) -> Result<Vec<BenchmarkPair>> {
    let path = manifest_path.as_ref();
    let manifest = PairsManifest::load(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    manifest
        .pairs
        .iter()
        .map(|e| {
            let img_a = Image::load(dir.join(&e.image_a))?;
            let img_b = Image::load(dir.join(&e.image_b))?;
            let h_gt = Homography::new(e.homography)?;
            let labels = PairLabels { rotated: e.rotated, illum_changed: e.illum_changed };
            let params = PairParams { source: e.id, homography: h_gt, rotation: e.rotation, photometric: e.photometric, noise_seed: 0 };
            let valid_b = warp_image(&Image::constant(img_a.width(), img_a.height(), 1.0), &h_gt)?.1;
            Ok(BenchmarkPair { img_a, img_b, h_gt, labels, params, valid_b })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::synthetic_scene;

    #[test]
    fn identity_sampler_reproduces_source() {
        let src = synthetic_scene(80, 60, 1);
        let pairs = generate_pairs(
            &[src.clone()],
            &HomographySamplerConfig::identity(80.0, 60.0),
            &PhotometricSamplerConfig::disabled(),
            (80, 60),
            2,
            5,
        )
        .unwrap();
        for p in &pairs {
            assert_eq!(p.img_b, p.img_a);
            assert_eq!(p.labels, PairLabels { rotated: false, illum_changed: false });
        }
    }

    #[test]
    fn label_fractions_are_balanced() {
        let params = sample_pair_params(
            3,
            &HomographySamplerConfig::default(),
            &PhotometricSamplerConfig::default(),
            (640, 480),
            1000,
            7,
        )
        .unwrap();
        let rotated = params.iter().filter(|p| p.labels().rotated).count() as f64 / 1000.0;
        let relit = params.iter().filter(|p| p.labels().illum_changed).count() as f64 / 1000.0;
        assert!((0.45..=0.55).contains(&rotated), "{rotated}");
        assert!((0.45..=0.55).contains(&relit), "{relit}");
    }

    #[test]
    fn generation_is_deterministic() {
        let srcs = [synthetic_scene(90, 70, 2), synthetic_scene(120, 60, 3)];
        let cfg = HomographySamplerConfig::default();
        let phot = PhotometricSamplerConfig::default();
        let a = generate_pairs(&srcs, &cfg, &phot, (80, 60), 4, 11).unwrap();
        let b = generate_pairs(&srcs, &cfg, &phot, (80, 60), 4, 11).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.img_b, q.img_b);
            assert_eq!(p.h_gt, q.h_gt);
        }
    }

    #[test]
    fn empty_source_fails() {
        let empty = Image::new(0, 0, vec![]).unwrap();
        let err = generate_pairs(&[empty], &HomographySamplerConfig::default(), &PhotometricSamplerConfig::disabled(), (64, 48), 1, 0);
        assert!(matches!(err, Err(Error::SourceTooSmall(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let srcs = [synthetic_scene(64, 48, 9)];
        let pairs = generate_pairs(&srcs, &HomographySamplerConfig::default(), &PhotometricSamplerConfig::default(), (64, 48), 3, 2).unwrap();
        let path = write_pairs(&pairs, 2, dir.path()).unwrap();
        let back = read_pairs(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (p, q) in pairs.iter().zip(&back) {
            assert_eq!(p.labels, q.labels);
            assert_eq!(p.h_gt, q.h_gt);
            let expected = p.img_b.quantized();
            assert!(q.img_b.gray().iter().zip(expected.gray()).all(|(x, y)| (x - y).abs() < 1e-6));
        }
    }
}
