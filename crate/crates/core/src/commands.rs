//! The operations behind the command-line tool. Each one reads its inputs,
//! runs the pipeline and writes its artifacts into an output directory.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmark::{codebook_training_images, generate_pairs, precision, read_pairs, run_benchmark, synthetic_scene, write_pairs, BenchmarkReport, ReportMode};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::{Channel, DESCRIPTOR_DIM, NUM_CHANNELS};
use crate::geometry::Homography;
use crate::image::Image;
use crate::matching::{match_features, ImageFeatures, MatchMode, MatchSet};
use crate::meta::{invariance_weights, Codebook, InvarianceWeights};
use crate::pipeline::{extract_features, train_codebook_on_images, Encoder, TrainedEncoder};
use crate::training::{generate_triplets, prepare_triplet, train, Model, TrainOutcome, TripletSample};

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        2
    } else {
        1
    }
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];
/// Synthetic scenes used when a command is given no source images.
const SYNTHETIC_SOURCES: u64 = 8;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", dir.display())))
}

fn load_image(path: &Path) -> Result<Image> {
    if !path.is_file() {
        return Err(Error::InvalidArgument(format!("image {} not found", path.display())));
    }
    Image::load(path)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Image files of `dir` in name order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().and_then(|e| e.to_str()).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("no images in {}", dir.display())));
    }
    Ok(out)
}

fn synthetic_sources(size: (usize, usize), seed: u64) -> Vec<Image> {
    (0..SYNTHETIC_SOURCES).map(|i| synthetic_scene(size.0, size.1, seed.wrapping_mul(SYNTHETIC_SOURCES).wrapping_add(i))).collect()
}

/// The configured checkpoint or codebook, else a codebook fitted on the
/// images returned by `fallback`.
fn encoder_for(cfg: &PipelineConfig, fallback: impl FnOnce() -> Result<Vec<Image>>) -> Result<Box<dyn Encoder>> {
    if let Some(p) = &cfg.model {
        return Ok(Box::new(TrainedEncoder::new(Model::load(p)?)?));
    }
    if let Some(p) = &cfg.codebook {
        return Ok(Box::new(Codebook::load(p)?));
    }
    Ok(Box::new(train_codebook_on_images(&fallback()?, &cfg.features, cfg.seed)?))
}

/// `matches.json`: the match set plus the keypoints it indexes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchesFile {
    pub image_a: String,
    pub image_b: String,
    #[serde(flatten)]
    pub matches: MatchSet,
    pub keypoints_a: Vec<[f64; 2]>,
    pub keypoints_b: Vec<[f64; 2]>,
    /// Homography the precision is measured against.
    pub ground_truth: [f64; 9],
    pub epsilon: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileWeights {
    pub tile_a: usize,
    pub tile_b: usize,
    pub weights: InvarianceWeights,
    pub argmax: String,
}

/// `weights.json`: channel weights of every tile pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub tiles: usize,
    pub channels: Vec<String>,
    pub pairs: Vec<TileWeights>,
}

fn tile_weights(fa: &ImageFeatures, fb: &ImageFeatures) -> WeightsFile {
    let mut pairs = Vec::with_capacity(fa.grid.tiles.len() * fb.grid.tiles.len());
    for (i, ta) in fa.grid.tiles.iter().enumerate() {
        for (j, tb) in fb.grid.tiles.iter().enumerate() {
            let weights = invariance_weights(ta, tb);
            let argmax = Channel::ALL[weights.argmax()].tag().to_string();
            pairs.push(TileWeights { tile_a: i, tile_b: j, weights, argmax });
        }
    }
    WeightsFile { tiles: fa.grid.c, channels: Channel::ALL.iter().map(|c| c.tag().to_string()).collect(), pairs }
}

/// Line colour per channel index.
pub const CHANNEL_COLORS: [[f32; 3]; NUM_CHANNELS] = [[0.90, 0.10, 0.29], [0.96, 0.51, 0.19], [0.24, 0.71, 0.29], [0.0, 0.51, 0.78]];

fn put(rgb: &mut [f32], width: usize, height: usize, x: i64, y: i64, color: [f32; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
        let o = 3 * (y as usize * width + x as usize);
        rgb[o..o + 3].copy_from_slice(&color);
    }
}

/// Both images side by side with one line per match, coloured by the
/// channel carrying the largest weight for the tiles it connects.
pub fn render_overlay(a: &Image, b: &Image, fa: &ImageFeatures, fb: &ImageFeatures, matches: &MatchSet) -> Result<Image> {
    let width = a.width() + b.width();
    let height = a.height().max(b.height());
    let mut rgb = vec![0.0f32; 3 * width * height];
    for (img, dx) in [(a, 0), (b, a.width())] {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let v = img.get(x, y);
                put(&mut rgb, width, height, (x + dx) as i64, y as i64, [v, v, v]);
            }
        }
    }
    let (tiles_a, tiles_b) = (fa.tiles(), fb.tiles());
    for m in &matches.pairs {
        let color = CHANNEL_COLORS[invariance_weights(&fa.grid.tiles[tiles_a[m.a]], &fb.grid.tiles[tiles_b[m.b]]).argmax()];
        let (p, q) = (&fa.keypoints[m.a], &fb.keypoints[m.b]);
        let (x0, y0, x1, y1) = (p.x, p.y, q.x + a.width() as f64, q.y);
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            put(&mut rgb, width, height, (x0 + t * (x1 - x0)).round() as i64, (y0 + t * (y1 - y0)).round() as i64, color);
        }
        for (cx, cy) in [(x0, y0), (x1, y1)] {
            for d in -1..=1 {
                for e in -1..=1 {
                    put(&mut rgb, width, height, cx.round() as i64 + d, cy.round() as i64 + e, color);
                }
            }
        }
    }
    Image::from_rgb(width, height, rgb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSummary {
    pub n_matches: usize,
    pub precision: f64,
}

/// Matches two images and writes `matches.json`, `weights.json` and
/// `overlay.png` into `out`.
pub fn cmd_match(img_a: &Path, img_b: &Path, cfg: &PipelineConfig, mode: MatchMode, out: &Path) -> Result<MatchSummary> {
    let a = load_image(img_a)?;
    let b = load_image(img_b)?;
    create_dir(out)?;
    let encoder = encoder_for(cfg, || Ok(vec![a.clone(), b.clone()]))?;
    let fa = extract_features(&a, &cfg.features, encoder.as_ref())?;
    let fb = extract_features(&b, &cfg.features, encoder.as_ref())?;
    let matches = match_features(&fa, &fb, mode, cfg.ratio_threshold);
    let gt = match cfg.ground_truth {
        Some(h) => Homography::new(h)?,
        None => Homography::identity(),
    };
    let prec = precision(&matches.pairs, &fa.keypoints, &fb.keypoints, &gt, cfg.metrics.epsilon);
    log::info!("{} matches, precision {prec:.4}", matches.len());

    render_overlay(&a, &b, &fa, &fb, &matches)?.save_png(out.join("overlay.png"))?;
    write_json(&out.join("weights.json"), &tile_weights(&fa, &fb))?;
    let file = MatchesFile {
        image_a: img_a.display().to_string(),
        image_b: img_b.display().to_string(),
        keypoints_a: fa.keypoints.iter().map(|k| [k.x, k.y]).collect(),
        keypoints_b: fb.keypoints.iter().map(|k| [k.x, k.y]).collect(),
        ground_truth: *gt.coefficients(),
        epsilon: cfg.metrics.epsilon,
        precision: prec,
        matches,
    };
    write_json(&out.join("matches.json"), &file)?;
    Ok(MatchSummary { n_matches: file.matches.len(), precision: prec })
}

/// Renders `count` labeled pairs from the images of `sources` (synthetic
/// scenes when `None`) and writes them with their manifest. Returns the
/// manifest path.
pub fn cmd_generate(sources: Option<&Path>, cfg: &PipelineConfig, count: usize, out: &Path) -> Result<PathBuf> {
    let size = (cfg.metrics.image_width, cfg.metrics.image_height);
    let images = match sources {
        Some(dir) => list_images(dir)?.iter().map(|p| load_image(p)).collect::<Result<Vec<_>>>()?,
        None => synthetic_sources(size, cfg.seed),
    };
    create_dir(out)?;
    let pairs = generate_pairs(&images, &cfg.sampler, &cfg.photometric, size, count, cfg.seed)?;
    write_pairs(&pairs, cfg.seed, out)
}

/// Scores every mode on the pairs of `manifest` and writes `report.json`,
/// `table.csv`, `curves.csv` and the codebook used.
pub fn cmd_benchmark(manifest: &Path, cfg: &PipelineConfig, modes: &[ReportMode], out: &Path) -> Result<BenchmarkReport> {
    if !manifest.is_file() {
        return Err(Error::InvalidArgument(format!("manifest {} not found", manifest.display())));
    }
    let pairs = read_pairs(manifest)?;
    create_dir(out)?;
    let encoder: Box<dyn Encoder> = if pairs.is_empty() && cfg.model.is_none() && cfg.codebook.is_none() {
        // Nothing to describe; any codebook yields the same empty report.
        Box::new(Codebook::new(1, DESCRIPTOR_DIM, std::array::from_fn(|_| vec![0.0; DESCRIPTOR_DIM]))?)
    } else {
        encoder_for(cfg, || {
            let mut sources: Vec<Image> = Vec::new();
            for p in &pairs {
                if !sources.contains(&p.img_a) {
                    sources.push(p.img_a.clone());
                }
            }
            let size = (sources[0].width(), sources[0].height());
            codebook_training_images(&sources, size, cfg.codebook_pairs, cfg.seed)
        })?
    };
    if !pairs.is_empty() {
        encoder.codebook().save(out.join("codebook.bin"))?;
    }
    let report = run_benchmark(&pairs, &cfg.features, encoder.as_ref(), modes, &cfg.benchmark_config())?;
    report.save_json(out.join("report.json"))?;
    report.save_csvs(out.join("table.csv"), out.join("curves.csv"))?;
    Ok(report)
}

/// Source images for training, listed relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub sources: Vec<PathBuf>,
}

impl TrainingManifest {
    pub fn load(path: &Path) -> Result<Vec<Image>> {
        let file = File::open(path).map_err(|e| Error::InvalidArgument(format!("cannot open manifest {}: {e}", path.display())))?;
        let m: Self = serde_json::from_reader(BufReader::new(file))?;
        if m.sources.is_empty() {
            return Err(Error::InvalidArgument("training manifest lists no sources".into()));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        m.sources.iter().map(|s| load_image(&base.join(s))).collect()
    }
}

/// Runs both training stages on triplets drawn from the manifest's sources
/// (synthetic scenes when `None`). Writes `checkpoint.bin`, `loss.csv` and
/// `codebook.bin`.
pub fn cmd_train(manifest: Option<&Path>, cfg: &PipelineConfig, out: &Path) -> Result<TrainOutcome> {
    let t = &cfg.training;
    let size = (t.image_width, t.image_height);
    let sources = match manifest {
        Some(p) => TrainingManifest::load(p)?,
        None => synthetic_sources(size, cfg.seed),
    };
    create_dir(out)?;
    let triplets = generate_triplets(&sources, &cfg.sampler, &cfg.photometric, size, t.triplets, cfg.seed)?;
    let samples: Vec<TripletSample> = triplets
        .par_iter()
        .map(|tr| prepare_triplet(tr, &cfg.features, t.points_per_triplet))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|s| s.len() >= 2)
        .collect();
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 2, got: 0 });
    }
    log::info!("{} of {} triplets usable", samples.len(), triplets.len());
    let init = match &cfg.model {
        Some(p) => Model::load(p)?,
        None => {
            let codebook = match &cfg.codebook {
                Some(p) => Codebook::load(p)?,
                None => {
                    let anchors: Vec<Image> = triplets.iter().map(|tr| tr.anchor.clone()).collect();
                    train_codebook_on_images(&anchors, &cfg.features, cfg.seed)?
                }
            };
            Model::from_codebook(&codebook, cfg.features.tiles)?
        }
    };
    let outcome = train(&samples, init, &cfg.train_config())?;
    outcome.model.save(out.join("checkpoint.bin"))?;
    outcome.model.codebook()?.save(out.join("codebook.bin"))?;
    outcome.write_loss_csv(out.join("loss.csv"))?;
    Ok(outcome)
}
