//! Runs every requested matching mode over a set of pairs and aggregates
//! the scores per label stratum.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{h_estimation_score, precision, recall_with_flag, shared_keypoints, MetricsConfig};
use super::pairs::{BenchmarkPair, PairLabels};
use crate::error::{Error, Result};
use crate::features::Channel;
use crate::matching::{match_with, ChannelDistances, MatchMode};
use crate::meta::WeightTable;
use crate::pipeline::{detect_all, features_for, Encoder, FeatureConfig};

/// Pixel thresholds of the precision curves.
pub const CURVE_THRESHOLDS: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

/// A column of the report: a matcher run at a given tile grid, or the
/// post-hoc best of the four single-channel runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReportMode {
    /// `tiles: None` uses the pipeline's grid side.
    Match { mode: MatchMode, tiles: Option<usize> },
    BestOf4,
}

impl ReportMode {
    pub fn matcher(mode: MatchMode) -> Self {
        ReportMode::Match { mode, tiles: None }
    }
}

impl fmt::Display for ReportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportMode::BestOf4 => f.write_str("best_of_4"),
            ReportMode::Match { mode, tiles: None } => write!(f, "{mode}"),
            ReportMode::Match { mode, tiles: Some(t) } => write!(f, "{mode}@{t}"),
        }
    }
}

impl FromStr for ReportMode {
    type Err = Error;

    /// Matching mode names, optionally suffixed `@<tiles>`, plus
    /// `best_of_4` and `no_tiling` (the weighted mode on a single tile).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best_of_4" => return Ok(ReportMode::BestOf4),
            "no_tiling" => return Ok(ReportMode::Match { mode: MatchMode::Lisrd, tiles: Some(1) }),
            _ => {}
        }
        let (name, tiles) = match s.split_once('@') {
            Some((n, t)) => {
                let t: usize = t.parse().map_err(|_| Error::InvalidArgument(format!("bad tile count in `{s}`")))?;
                if t == 0 {
                    return Err(Error::InvalidArgument("tile count must be positive".into()));
                }
                (n, Some(t))
            }
            None => (s, None),
        };
        Ok(ReportMode::Match { mode: name.parse()?, tiles })
    }
}

fn single_channel_modes() -> [ReportMode; 4] {
    Channel::ALL.map(|c| ReportMode::matcher(MatchMode::SingleChannel(c)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub metrics: MetricsConfig,
    /// Ratio test threshold; `None` keeps every mutual nearest neighbor.
    pub ratio_threshold: Option<f32>,
    /// Seed of the RANSAC sampling.
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { metrics: MetricsConfig::default(), ratio_threshold: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair: usize,
    pub mode: String,
    pub rotated: bool,
    pub illum_changed: bool,
    pub keypoints_a: usize,
    pub keypoints_b: usize,
    pub n_matches: usize,
    pub h_estimation: bool,
    pub precision: f64,
    pub recall: f64,
    /// No match was predicted, so precision is reported as 0.
    pub no_matches: bool,
    /// No keypoint had a ground-truth match, so recall is reported as 0.
    pub no_ground_truth: bool,
    pub precision_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub stratum: String,
    pub count: usize,
    pub h_estimation: f64,
    pub precision: f64,
    pub recall: f64,
    pub precision_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: String,
    pub strata: Vec<StratumSummary>,
}

impl ModeSummary {
    pub fn stratum(&self, name: &str) -> Option<&StratumSummary> {
        self.strata.iter().find(|s| s.stratum == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub modes: Vec<String>,
    pub num_pairs: usize,
    pub curve_thresholds: Vec<f64>,
    pub aggregates: Vec<ModeSummary>,
    pub per_pair: Vec<PairResult>,
}

/// Stratum names, `all` first.
pub const STRATA: [&str; 5] = ["all", "upright_same", "upright_illum", "rotated_same", "rotated_illum"];

pub fn stratum_of(labels: PairLabels) -> &'static str {
    STRATA[1 + 2 * labels.rotated as usize + labels.illum_changed as usize]
}

impl BenchmarkReport {
    pub fn summary(&self, mode: &str) -> Option<&ModeSummary> {
        self.aggregates.iter().find(|m| m.mode == mode)
    }

    /// Mean of a metric for a mode over a stratum.
    pub fn value(&self, mode: &str, stratum: &str, metric: Metric) -> Option<f64> {
        let s = self.summary(mode)?.stratum(stratum)?;
        Some(match metric {
            Metric::HEstimation => s.h_estimation,
            Metric::Precision => s.precision,
            Metric::Recall => s.recall,
        })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// One row per mode; `<metric>_<stratum>` columns.
    pub fn write_table_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["mode".to_string()];
        for s in STRATA {
            header.push(format!("count_{s}"));
            for m in ["HEstimation", "Precision", "Recall"] {
                header.push(format!("{m}_{s}"));
            }
        }
        out.write_record(&header).map_err(csv_err)?;
        for summary in &self.aggregates {
            let mut row = vec![summary.mode.clone()];
            for s in STRATA {
                let st = summary.stratum(s).ok_or_else(|| Error::Format(format!("missing stratum {s}")))?;
                row.push(st.count.to_string());
                row.extend([st.h_estimation, st.precision, st.recall].iter().map(|v| format!("{v:.6}")));
            }
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Precision per threshold (rows) and mode (columns) over all pairs.
    pub fn write_curves_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["threshold".to_string()];
        header.extend(self.aggregates.iter().map(|m| m.mode.clone()));
        out.write_record(&header).map_err(csv_err)?;
        for (i, t) in self.curve_thresholds.iter().enumerate() {
            let mut row = vec![format!("{t}")];
            for m in &self.aggregates {
                let all = m.stratum("all").ok_or_else(|| Error::Format("missing stratum all".into()))?;
                row.push(format!("{:.6}", all.precision_curve[i]));
            }
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csvs(&self, table: impl AsRef<Path>, curves: impl AsRef<Path>) -> Result<()> {
        self.write_table_csv(BufWriter::new(File::create(table)?))?;
        self.write_curves_csv(BufWriter::new(File::create(curves)?))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    HEstimation,
    Precision,
    Recall,
}

/// Scores of every computed matcher column on one pair.
fn evaluate_pair(
    index: usize,
    pair: &BenchmarkPair,
    columns: &[(MatchMode, usize, String)],
    feature_cfg: &FeatureConfig,
    codebook: &(impl Encoder + ?Sized),
    cfg: &BenchmarkConfig,
) -> Result<Vec<PairResult>> {
    let m = &cfg.metrics;
    let size_a = (pair.img_a.width(), pair.img_a.height());
    let size_b = (pair.img_b.width(), pair.img_b.height());
    let det_a = detect_all(&pair.img_a, feature_cfg, usize::MAX);
    let det_b = detect_all(&pair.img_b, feature_cfg, usize::MAX);
    let (ka, kb) = shared_keypoints(&det_a.keypoints, &det_b.keypoints, &pair.h_gt, size_a, size_b, m.max_keypoints)?;

    let tile_sizes: BTreeSet<usize> = columns.iter().map(|c| c.1).collect();
    let mut feats = Vec::new();
    for &t in &tile_sizes {
        feats.push((t, features_for(&det_a, &ka, feature_cfg, codebook, t)?, features_for(&det_b, &kb, feature_cfg, codebook, t)?));
    }
    let (_, fa0, fb0) = &feats[0];
    let dists = ChannelDistances::compute(&fa0.bundles, &fb0.bundles);

    let mut out = Vec::with_capacity(columns.len());
    for (mode, tiles, name) in columns {
        let (_, fa, fb) = feats.iter().find(|f| f.0 == *tiles).expect("tile size prepared");
        let table = WeightTable::new(&fa.grid, &fb.grid);
        let ms = match_with(&dists, &fa.tiles(), &fb.tiles(), &table, *mode, cfg.ratio_threshold);
        let (kpa, kpb) = (&fa.keypoints, &fb.keypoints);
        let (rec, has_gt) = recall_with_flag(&ms.pairs, kpa, kpb, &pair.h_gt, m.epsilon);
        out.push(PairResult {
            pair: index,
            mode: name.clone(),
            rotated: pair.labels.rotated,
            illum_changed: pair.labels.illum_changed,
            keypoints_a: kpa.len(),
            keypoints_b: kpb.len(),
            n_matches: ms.len(),
            h_estimation: h_estimation_score(&ms.pairs, kpa, kpb, &pair.h_gt, size_a, m, cfg.seed.wrapping_add(index as u64)),
            precision: precision(&ms.pairs, kpa, kpb, &pair.h_gt, m.epsilon),
            recall: rec,
            no_matches: ms.is_empty(),
            no_ground_truth: !has_gt,
            precision_curve: CURVE_THRESHOLDS.iter().map(|&t| precision(&ms.pairs, kpa, kpb, &pair.h_gt, t)).collect(),
        });
    }
    Ok(out)
}

fn summarize(mode: &str, results: &[&PairResult]) -> ModeSummary {
    let strata = STRATA
        .iter()
        .map(|&s| {
            let rows: Vec<&&PairResult> = results
                .iter()
                .filter(|r| s == "all" || stratum_of(PairLabels { rotated: r.rotated, illum_changed: r.illum_changed }) == s)
                .collect();
            let n = rows.len();
            let mean = |f: &dyn Fn(&PairResult) -> f64| if n == 0 { 0.0 } else { rows.iter().map(|r| f(r)).sum::<f64>() / n as f64 };
            StratumSummary {
                stratum: s.to_string(),
                count: n,
                h_estimation: mean(&|r| r.h_estimation as u8 as f64),
                precision: mean(&|r| r.precision),
                recall: mean(&|r| r.recall),
                precision_curve: (0..CURVE_THRESHOLDS.len()).map(|i| mean(&|r| r.precision_curve[i])).collect(),
            }
        })
        .collect();
    ModeSummary { mode: mode.to_string(), strata }
}

/// Elementwise maximum of the four single-channel summaries.
fn best_of(parts: &[&ModeSummary]) -> ModeSummary {
    let strata = STRATA
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let rows: Vec<&StratumSummary> = parts.iter().map(|p| &p.strata[i]).collect();
            let max = |f: &dyn Fn(&StratumSummary) -> f64| rows.iter().map(|r| f(r)).fold(f64::NEG_INFINITY, f64::max);
            StratumSummary {
                stratum: s.to_string(),
                count: rows[0].count,
                h_estimation: max(&|r| r.h_estimation),
                precision: max(&|r| r.precision),
                recall: max(&|r| r.recall),
                precision_curve: (0..CURVE_THRESHOLDS.len()).map(|k| max(&|r| r.precision_curve[k])).collect(),
            }
        })
        .collect();
    ModeSummary { mode: "best_of_4".into(), strata }
}

pub fn run_benchmark(
    pairs: &[BenchmarkPair],
    feature_cfg: &FeatureConfig,
    codebook: &(impl Encoder + ?Sized),
    modes: &[ReportMode],
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    feature_cfg.validate()?;
    cfg.metrics.validate()?;
    let mut computed: Vec<ReportMode> = Vec::new();
    for m in modes {
        let needed: Vec<ReportMode> = match m {
            ReportMode::BestOf4 => single_channel_modes().to_vec(),
            other => vec![*other],
        };
        for n in needed {
            if !computed.contains(&n) {
                computed.push(n);
            }
        }
    }
    let columns: Vec<(MatchMode, usize, String)> = computed
        .iter()
        .map(|m| match m {
            ReportMode::Match { mode, tiles } => (*mode, tiles.unwrap_or(feature_cfg.tiles), m.to_string()),
            ReportMode::BestOf4 => unreachable!("expanded above"),
        })
        .collect();

    let per_pair: Vec<PairResult> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| evaluate_pair(i, p, &columns, feature_cfg, codebook, cfg))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut summaries: Vec<ModeSummary> = columns
        .iter()
        .map(|(_, _, name)| summarize(name, &per_pair.iter().filter(|r| &r.mode == name).collect::<Vec<_>>()))
        .collect();
    let mut aggregates = Vec::new();
    for m in modes {
        let name = m.to_string();
        if aggregates.iter().any(|a: &ModeSummary| a.mode == name) {
            continue;
        }
        let summary = match m {
            ReportMode::BestOf4 => {
                let parts: Vec<&ModeSummary> = single_channel_modes()
                    .iter()
                    .map(|sm| summaries.iter().find(|s| s.mode == sm.to_string()).expect("computed"))
                    .collect();
                best_of(&parts)
            }
            _ => summaries.iter().find(|s| s.mode == name).expect("computed").clone(),
        };
        aggregates.push(summary);
    }
    // Helper columns needed only for best_of_4 are reported as well.
    for s in summaries.drain(..) {
        if !aggregates.iter().any(|a| a.mode == s.mode) {
            aggregates.push(s);
        }
    }
    Ok(BenchmarkReport {
        modes: modes.iter().map(|m| m.to_string()).collect(),
        num_pairs: pairs.len(),
        curve_thresholds: CURVE_THRESHOLDS.to_vec(),
        aggregates,
        per_pair,
    })
}
