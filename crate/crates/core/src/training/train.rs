//! Two-stage gradient descent: projections under the local loss, then
//! projections and centroids under the total loss.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::NUM_CHANNELS;

use super::data::TripletSample;
use super::loss::{loss_local, total_loss, LossConfig, LossParts};
use super::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Gd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Adam moment decay rates.
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Gd, learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Training configuration, also the schema of the training config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    /// Steps on the local loss, projections only.
    pub stage1_steps: usize,
    /// Steps on the total loss, projections and centroids.
    pub stage2_steps: usize,
    pub tiles: usize,
    pub clusters: usize,
    /// Correspondences kept per triplet, strongest keypoints first.
    pub points_per_triplet: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            stage1_steps: 250,
            stage2_steps: 250,
            tiles: 3,
            clusters: 8,
            points_per_triplet: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let o = &self.optimizer;
        if !(o.learning_rate >= 0.0 && o.learning_rate.is_finite()) {
            return Err(Error::DegenerateConfig("learning rate must be finite and non-negative".into()));
        }
        if o.kind == OptimizerKind::Adam && !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.epsilon > 0.0) {
            return Err(Error::DegenerateConfig("Adam needs betas in [0, 1) and a positive epsilon".into()));
        }
        if self.tiles == 0 || self.clusters == 0 || self.points_per_triplet < 2 {
            return Err(Error::DegenerateConfig("tiles, clusters must be positive and points_per_triplet at least 2".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Batch gradient, averaged over triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub projections: [Vec<f64>; NUM_CHANNELS],
    pub centroids: [Vec<Vec<f64>>; NUM_CHANNELS],
}

impl Gradient {
    fn zeros(model: &Model) -> Self {
        Self {
            projections: std::array::from_fn(|_| vec![0.0; model.dim * model.dim]),
            centroids: std::array::from_fn(|_| vec![vec![0.0; model.dim]; model.k]),
        }
    }

    fn add(mut self, other: &Gradient) -> Self {
        for (a, b) in self.projections.iter_mut().zip(&other.projections) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.centroids.iter_mut().zip(&other.centroids) {
            for (x, y) in a.iter_mut().zip(b) {
                x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
            }
        }
        self
    }

    fn scale(mut self, s: f64) -> Self {
        self.projections.iter_mut().flatten().for_each(|v| *v *= s);
        self.centroids.iter_mut().flatten().flatten().for_each(|v| *v *= s);
        self
    }
}

fn add_parts(a: LossParts, b: &LossParts) -> LossParts {
    LossParts { local: a.local + b.local, meta: a.meta + b.meta, total: a.total + b.total, skipped: a.skipped + b.skipped }
}

/// Sums in a fixed pairwise tree so the result does not depend on how the
/// per-triplet terms were scheduled.
fn tree_reduce<T: Clone>(mut items: Vec<T>, add: impl Fn(T, &T) -> T) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => add(a, &b),
                None => a,
            });
        }
        items = next;
    }
    items.pop()
}

/// Mean loss over `samples`. With `meta` false the meta term is left out of
/// the gradient (the reported parts always include it).
pub fn evaluate(model: &Model, samples: &[TripletSample], cfg: &LossConfig, meta: bool) -> Result<(LossParts, Gradient)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training triplets".into()));
    }
    let per: Vec<(LossParts, Gradient)> = samples
        .par_iter()
        .map(|s| {
            let (t, parts) = model.forward(s);
            let (lp, grad) = total_loss(&t, &model.centroids, model.tiles, cfg)?;
            let (desc_grad, centroid_grad) = if meta {
                (grad.descriptors, grad.centroids)
            } else {
                (loss_local(&t, cfg)?.grad, Gradient::zeros(model).centroids)
            };
            let projections = model.backward(s, &parts, &desc_grad);
            Ok((lp, Gradient { projections, centroids: centroid_grad }))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let (parts, grads): (Vec<LossParts>, Vec<Gradient>) = per.into_iter().unzip();
    let sum = tree_reduce(parts, add_parts).expect("non-empty");
    let grad = tree_reduce(grads, Gradient::add).expect("non-empty").scale(1.0 / n);
    let mean = LossParts { local: sum.local / n, meta: sum.meta / n, total: sum.total / n, skipped: sum.skipped };
    Ok((mean, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub stage: u8,
    pub local: f64,
    pub meta: f64,
    pub total: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Loss before each step.
    pub curve: Vec<LossRecord>,
    /// Loss of the returned model.
    pub final_loss: LossRecord,
}

impl TrainOutcome {
    /// Loss of the initial model.
    pub fn initial(&self) -> &LossRecord {
        self.curve.first().unwrap_or(&self.final_loss)
    }

    /// Writes `step,stage,local,meta,total,skipped`, one row per step.
    pub fn write_loss_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        for r in &self.curve {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn flatten(model: &Model) -> Vec<f64> {
    model.projections.iter().flatten().chain(model.centroids.iter().flatten().flatten()).copied().collect()
}

fn flatten_grad(g: &Gradient, with_centroids: bool) -> Vec<f64> {
    let proj = g.projections.iter().flatten().copied();
    let cent = g.centroids.iter().flatten().flatten().map(move |&v| if with_centroids { v } else { 0.0 });
    proj.chain(cent).collect()
}

fn unflatten(model: &mut Model, params: &[f64]) {
    let mut it = params.iter().copied();
    for p in model.projections.iter_mut() {
        p.iter_mut().for_each(|v| *v = it.next().expect("parameter count"));
    }
    for ch in model.centroids.iter_mut() {
        ch.iter_mut().flatten().for_each(|v| *v = it.next().expect("parameter count"));
    }
}

/// Runs both stages from `init`. Deterministic for fixed inputs.
pub fn train(samples: &[TripletSample], init: Model, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.iter().any(|s| s.len() < 2) {
        return Err(Error::InvalidArgument("every training triplet needs at least 2 correspondences".into()));
    }
    let mut model = init;
    let mut params = flatten(&model);
    let mut adam = Adam { m: vec![0.0; params.len()], v: vec![0.0; params.len()], t: 0 };
    let opt = cfg.optimizer;
    let total_steps = cfg.stage1_steps + cfg.stage2_steps;
    let mut curve = Vec::with_capacity(total_steps);
    for step in 0..=total_steps {
        let stage = if step < cfg.stage1_steps { 1 } else { 2 };
        let (parts, grad) = evaluate(&model, samples, &cfg.loss, stage == 2)?;
        if !parts.total.is_finite() {
            return Err(Error::DivergenceDetected { step });
        }
        let record = LossRecord { step, stage, local: parts.local, meta: parts.meta, total: parts.total, skipped: parts.skipped };
        if step == total_steps {
            return Ok(TrainOutcome { model, curve, final_loss: record });
        }
        curve.push(record);
        let g = flatten_grad(&grad, stage == 2);
        match opt.kind {
            OptimizerKind::Gd => params.iter_mut().zip(&g).for_each(|(p, d)| *p -= opt.learning_rate * d),
            OptimizerKind::Adam => {
                adam.t += 1;
                let (b1, b2) = (opt.beta1, opt.beta2);
                let (c1, c2) = (1.0 - b1.powi(adam.t), 1.0 - b2.powi(adam.t));
                for i in 0..params.len() {
                    if stage == 1 && i >= NUM_CHANNELS * model.dim * model.dim {
                        break;
                    }
                    adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * g[i];
                    adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * g[i] * g[i];
                    params[i] -= opt.learning_rate * (adam.m[i] / c1) / ((adam.v[i] / c2).sqrt() + opt.epsilon);
                }
            }
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergenceDetected { step });
        }
        unflatten(&mut model, &params);
        log::debug!("step {step} stage {stage} total {:.6}", parts.total);
    }
    unreachable!("the loop returns after the last step")
}
