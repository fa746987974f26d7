//! Pipeline configuration shared by every command: built-in defaults,
//! overridden by a JSON file, overridden by command-line flags.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmark::{BenchmarkConfig, MetricsConfig};
use crate::error::{Error, Result};
use crate::geometry::{Homography, HomographySamplerConfig};
use crate::photometric::PhotometricSamplerConfig;
use crate::pipeline::FeatureConfig;
use crate::training::{LossConfig, OptimizerConfig, TrainConfig};

/// Training options that are not shared with the other commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingOptions {
    pub optimizer: OptimizerConfig,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub points_per_triplet: usize,
    /// Triplets drawn from the training sources.
    pub triplets: usize,
    pub image_width: usize,
    pub image_height: usize,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            optimizer: t.optimizer,
            stage1_steps: t.stage1_steps,
            stage2_steps: t.stage2_steps,
            points_per_triplet: t.points_per_triplet,
            triplets: 20,
            image_width: 320,
            image_height: 240,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub features: FeatureConfig,
    /// Codebook file; when absent one is fitted on the command's own images.
    pub codebook: Option<PathBuf>,
    /// Trained checkpoint; takes precedence over `codebook`.
    pub model: Option<PathBuf>,
    pub loss: LossConfig,
    pub metrics: MetricsConfig,
    /// Ratio test threshold, `None` disables the test.
    pub ratio_threshold: Option<f32>,
    pub sampler: HomographySamplerConfig,
    pub photometric: PhotometricSamplerConfig,
    pub training: TrainingOptions,
    /// Pairs rendered per source when a benchmark fits its own codebook.
    pub codebook_pairs: usize,
    /// Homography from the first to the second image of `match`, used only
    /// for the reported precision. Identity when absent.
    pub ground_truth: Option<[f64; 9]>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            features: FeatureConfig::default(),
            codebook: None,
            model: None,
            loss: LossConfig::default(),
            metrics: MetricsConfig::default(),
            ratio_threshold: None,
            sampler: HomographySamplerConfig::default(),
            photometric: PhotometricSamplerConfig::default(),
            training: TrainingOptions::default(),
            codebook_pairs: 12,
            ground_truth: None,
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tiles: Option<usize>,
    pub clusters: Option<usize>,
    pub ratio_threshold: Option<f32>,
}

impl PipelineConfig {
    /// Reads a config file. Relative file references are resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::InvalidArgument(format!("cannot open config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_reader(BufReader::new(file))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.codebook, &mut cfg.model].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Defaults, then `file`, then `overrides`. Validation failures are
    /// reported as invalid arguments.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        // Out-of-range settings are the caller's mistake here.
        cfg.validate().map_err(|e| match e {
            Error::DegenerateConfig(m) => Error::InvalidArgument(m),
            e => e,
        })?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.tiles {
            self.features.tiles = t;
        }
        if let Some(k) = o.clusters {
            self.features.clusters = k;
        }
        if let Some(r) = o.ratio_threshold {
            self.ratio_threshold = Some(r);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.metrics.validate()?;
        self.sampler.validate()?;
        self.photometric.validate()?;
        self.train_config().validate()?;
        if let Some(r) = self.ratio_threshold {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::DegenerateConfig(format!("ratio threshold {r} outside (0, 1]")));
            }
        }
        let t = &self.training;
        if t.image_width == 0 || t.image_height == 0 || t.triplets == 0 || self.codebook_pairs == 0 {
            return Err(Error::DegenerateConfig("training size, triplet count and codebook_pairs must be positive".into()));
        }
        if let Some(h) = self.ground_truth {
            Homography::new(h)?;
        }
        for p in [&self.codebook, &self.model].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::InvalidArgument(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn benchmark_config(&self) -> BenchmarkConfig {
        BenchmarkConfig { metrics: self.metrics.clone(), ratio_threshold: self.ratio_threshold, seed: self.seed }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            loss: self.loss,
            optimizer: t.optimizer,
            stage1_steps: t.stage1_steps,
            stage2_steps: t.stage2_steps,
            tiles: self.features.tiles,
            clusters: self.features.clusters,
            points_per_triplet: t.points_per_triplet,
            seed: self.seed,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 5, "features": {"tiles": 2}, "loss": {"M": 0.5}}"#).unwrap();
        let file_only = PipelineConfig::resolve(Some(&path), &Overrides::default()).unwrap();
        assert_eq!((file_only.seed, file_only.features.tiles, file_only.loss.margin), (5, 2, 0.5));
        assert_eq!(file_only.features.clusters, 8);
        let o = Overrides { seed: Some(9), tiles: Some(4), clusters: Some(3), ratio_threshold: Some(0.8) };
        let both = PipelineConfig::resolve(Some(&path), &o).unwrap();
        assert_eq!((both.seed, both.features.tiles, both.features.clusters, both.ratio_threshold), (9, 4, 3, Some(0.8)));
        assert_eq!(both.train_config().tiles, 4);
    }

    #[test]
    fn rejects_bad_values_and_missing_files() {
        let o = Overrides { tiles: Some(0), ..Overrides::default() };
        assert!(matches!(PipelineConfig::resolve(None, &o), Err(Error::InvalidArgument(_))));
        let o = Overrides { ratio_threshold: Some(1.5), ..Overrides::default() };
        assert!(PipelineConfig::resolve(None, &o).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"codebook": "nope.bin"}"#).unwrap();
        let err = PipelineConfig::resolve(Some(&path), &Overrides::default()).unwrap_err();
        assert!(err.is_usage());
        std::fs::write(&path, r#"{"unknown_field": 1}"#).unwrap();
        assert!(PipelineConfig::resolve(Some(&path), &Overrides::default()).unwrap_err().is_usage());
        assert!(PipelineConfig::resolve(Some(&dir.path().join("absent.json")), &Overrides::default()).unwrap_err().is_usage());
    }

    #[test]
    fn default_round_trips() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
        cfg.validate().unwrap();
    }
}
