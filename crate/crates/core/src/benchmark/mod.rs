//! Synthetic benchmark: labeled pairs, metrics and mode comparisons.

mod metrics;
mod pairs;
mod report;
mod scene;

pub use metrics::{
    corner_error, fit_homography, ground_truth_matches, h_estimation_score, precision, ransac_homography, recall,
    recall_with_flag, shared_keypoints, MetricsConfig, RansacConfig,
};
pub use pairs::{
    codebook_training_images, generate_pairs, read_pairs, render_pair, sample_pair_params, write_pairs, BenchmarkPair, ManifestEntry, PairLabels,
    PairParams, PairsManifest,
};
pub use report::{
    run_benchmark, stratum_of, BenchmarkConfig, BenchmarkReport, Metric, ModeSummary, PairResult, ReportMode,
    StratumSummary, CURVE_THRESHOLDS, STRATA,
};
pub use scene::synthetic_scene;
