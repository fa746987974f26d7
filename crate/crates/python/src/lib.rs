//! Python bindings: the command operations plus the weighting primitives.

use pyo3::prelude::*;

#[pymodule]
mod lisrd {
    use std::path::{Path, PathBuf};

    use lisrd_core::benchmark::{synthetic_scene as scene, ReportMode};
    use lisrd_core::commands::{cmd_benchmark, cmd_generate, cmd_match, cmd_train};
    use lisrd_core::config::{Overrides, PipelineConfig};
    use lisrd_core::matching::{lisrd_distance as weighted_distance, MatchMode};
    use lisrd_core::meta::{softmax, InvarianceWeights};
    use lisrd_core::{DescriptorBundle, Error};
    use pyo3::exceptions::{PyRuntimeError, PyValueError};
    use pyo3::prelude::*;

    fn to_py(e: Error) -> PyErr {
        if e.is_usage() {
            PyValueError::new_err(e.to_string())
        } else {
            PyRuntimeError::new_err(e.to_string())
        }
    }

    fn config(path: Option<PathBuf>, seed: Option<u64>) -> PyResult<PipelineConfig> {
        PipelineConfig::resolve(path.as_deref(), &Overrides { seed, ..Overrides::default() }).map_err(to_py)
    }

    /// Writes a procedural test scene as PNG.
    #[pyfunction]
    fn synthetic_scene(width: usize, height: usize, seed: u64, path: PathBuf) -> PyResult<()> {
        scene(width, height, seed).save_png(path).map_err(to_py)
    }

    /// Matches two images into `out_dir`; returns (match count, precision).
    #[pyfunction]
    #[pyo3(signature = (image_a, image_b, out_dir, mode = "lisrd", config_path = None))]
    fn match_images(image_a: PathBuf, image_b: PathBuf, out_dir: PathBuf, mode: &str, config_path: Option<PathBuf>) -> PyResult<(usize, f64)> {
        let cfg = config(config_path, None)?;
        let mode: MatchMode = mode.parse().map_err(to_py)?;
        let s = cmd_match(&image_a, &image_b, &cfg, mode, &out_dir).map_err(to_py)?;
        Ok((s.n_matches, s.precision))
    }

    /// Renders benchmark pairs; returns the manifest path.
    #[pyfunction]
    #[pyo3(signature = (out_dir, count, seed = None, sources = None, config_path = None))]
    fn generate(out_dir: PathBuf, count: usize, seed: Option<u64>, sources: Option<PathBuf>, config_path: Option<PathBuf>) -> PyResult<PathBuf> {
        let cfg = config(config_path, seed)?;
        cmd_generate(sources.as_deref(), &cfg, count, &out_dir).map_err(to_py)
    }

    /// Runs the benchmark; returns the path of `report.json`.
    #[pyfunction]
    #[pyo3(signature = (manifest, out_dir, modes = vec!["lisrd".to_string()], config_path = None))]
    fn benchmark(manifest: PathBuf, out_dir: PathBuf, modes: Vec<String>, config_path: Option<PathBuf>) -> PyResult<PathBuf> {
        let cfg = config(config_path, None)?;
        let modes: Vec<ReportMode> = modes.iter().map(|m| m.parse()).collect::<Result<_, _>>().map_err(to_py)?;
        cmd_benchmark(&manifest, &cfg, &modes, &out_dir).map_err(to_py)?;
        Ok(Path::new(&out_dir).join("report.json"))
    }

    /// Trains into `out_dir`; returns (initial, final) total loss.
    #[pyfunction]
    #[pyo3(signature = (out_dir, manifest = None, config_path = None))]
    fn train(out_dir: PathBuf, manifest: Option<PathBuf>, config_path: Option<PathBuf>) -> PyResult<(f64, f64)> {
        let cfg = config(config_path, None)?;
        let o = cmd_train(manifest.as_deref(), &cfg, &out_dir).map_err(to_py)?;
        Ok((o.initial().total, o.final_loss.total))
    }

    /// Softmax of four meta-descriptor similarities.
    #[pyfunction]
    fn invariance_weights(similarities: [f64; 4]) -> [f64; 4] {
        softmax(&similarities)
    }

    /// Weighted sum of the four channel distances of two descriptor bundles.
    #[pyfunction]
    fn lisrd_distance(a: [Vec<f32>; 4], b: [Vec<f32>; 4], weights: [f64; 4]) -> PyResult<f64> {
        let dim = a[0].len();
        if a.iter().chain(&b).any(|d| d.len() != dim) {
            return Err(PyValueError::new_err("all eight descriptors must share one length"));
        }
        Ok(weighted_distance(&DescriptorBundle::new(a), &DescriptorBundle::new(b), &InvarianceWeights { w: weights }))
    }
}
