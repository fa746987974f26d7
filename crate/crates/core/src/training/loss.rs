//! Triplet objectives with analytic gradients.
//!
//! Hinges have subgradient 0 at the kink and mined negatives are treated as
//! locally constant, so every gradient here is exact away from those sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Channel, NUM_CHANNELS};
use crate::geometry::Point2;

use super::vlad::{backward_tiles, forward_tiles, Centroids};

/// Rotations smaller than this (radians) count as no rotation at all.
pub const NEGLIGIBLE_ROTATION: f64 = 1e-3;

/// One descriptor per point.
pub type Descriptors = Vec<Vec<f64>>;
/// Descriptors of every channel, indexed like [`Channel::index`].
pub type ChannelSet = [Descriptors; NUM_CHANNELS];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Minimum pixel distance between a mined negative and the true match.
    #[serde(alias = "T")]
    pub distance_threshold: f64,
    #[serde(alias = "M")]
    pub margin: f64,
    /// Rotation at which rotation-variant descriptors must fully differ.
    pub theta_max: f64,
    /// Weight of the meta term in the total loss.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { distance_threshold: 8.0, margin: 1.0, theta_max: std::f64::consts::FRAC_PI_4, lambda: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.distance_threshold > 0.0 && self.margin > 0.0 && self.theta_max > 0.0 && self.lambda >= 0.0;
        if !ok || !self.lambda.is_finite() || !self.theta_max.is_finite() {
            return Err(Error::DegenerateConfig(format!("invalid loss configuration {self:?}")));
        }
        Ok(())
    }
}

/// Aligned correspondences between two images: point `i` of `a` maps to
/// point `i` of `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    pub points_a: Vec<Point2>,
    pub points_b: Vec<Point2>,
    /// Image sizes (width, height), used to tile the points.
    pub size_a: (usize, usize),
    pub size_b: (usize, usize),
    pub desc_a: ChannelSet,
    pub desc_b: ChannelSet,
}

impl Correspondences {
    pub fn len(&self) -> usize {
        self.points_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points_a.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        let aligned = self.points_b.len() == n
            && self.desc_a.iter().chain(&self.desc_b).all(|d| d.len() == n);
        if !aligned {
            return Err(Error::InvalidArgument("correspondence lists differ in length".into()));
        }
        Ok(())
    }
}

/// Descriptors of one training triplet. Entry `i` of every list belongs to
/// the same anchor keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletDescriptors {
    /// Anchor to invariant image.
    pub corr: Correspondences,
    /// Descriptors of the variant image.
    pub variant: ChannelSet,
    /// Absolute rotation between anchor and invariant image.
    pub theta: f64,
    pub illum_changed: bool,
}

/// A loss value, the number of correspondences left out of its mean and
/// the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated<G> {
    pub loss: f64,
    pub skipped: usize,
    pub grad: G,
}

/// The pair realizing a mined negative distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Negative {
    pub a: usize,
    pub b: usize,
    pub dist: f64,
}

/// Mines, for every correspondence `i`, the closest non-matching point
/// under `dist[a][b]`. Candidates on the `b` side must lie farther than
/// `threshold` from `points_b[i]`, candidates on the `a` side farther than
/// `threshold` from `points_a[i]`. The smaller of the two minima is kept;
/// ties go to the `b` side, then to the lower index. `None` when no point
/// is far enough.
pub fn mine_negatives(dist: &[Vec<f64>], points_a: &[Point2], points_b: &[Point2], threshold: f64) -> Vec<Option<Negative>> {
    let n = points_a.len();
    (0..n)
        .map(|i| {
            let mut best: Option<Negative> = None;
            let mut offer = |a: usize, b: usize| {
                let d = dist[a][b];
                if best.is_none_or(|cur| d < cur.dist) {
                    best = Some(Negative { a, b, dist: d });
                }
            };
            for j in 0..n {
                if points_b[i].distance(&points_b[j]) > threshold {
                    offer(i, j);
                }
            }
            for j in 0..n {
                if points_a[i].distance(&points_a[j]) > threshold {
                    offer(j, i);
                }
            }
            best
        })
        .collect()
}

/// Generic triplet margin loss over a precomputed distance matrix
/// `dist[a][b]`. The gradient is returned with respect to matrix entries.
pub fn triplet_loss(
    dist: &[Vec<f64>],
    points_a: &[Point2],
    points_b: &[Point2],
    cfg: &LossConfig,
) -> Result<Evaluated<Vec<(usize, usize, f64)>>> {
    let n = points_a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("triplet loss needs at least 2 correspondences, got {n}")));
    }
    if points_b.len() != n || dist.len() != n || dist.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("distance matrix does not match the correspondences".into()));
    }
    let negatives = mine_negatives(dist, points_a, points_b, cfg.distance_threshold);
    let used = negatives.iter().filter(|n| n.is_some()).count();
    let skipped = n - used;
    let mut loss = 0.0;
    let mut grad = Vec::new();
    if used == 0 {
        return Ok(Evaluated { loss, skipped, grad });
    }
    let scale = 1.0 / used as f64;
    for (i, neg) in negatives.iter().enumerate() {
        let Some(neg) = neg else { continue };
        let p = dist[i][i];
        let hinge = cfg.margin + p * p - neg.dist * neg.dist;
        if hinge > 0.0 {
            loss += hinge;
            grad.push((i, i, 2.0 * p * scale));
            grad.push((neg.a, neg.b, -2.0 * neg.dist * scale));
        }
    }
    Ok(Evaluated { loss: loss * scale, skipped, grad })
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn sq_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn zeros_like(d: &[Vec<f64>]) -> Descriptors {
    d.iter().map(|v| vec![0.0; v.len()]).collect()
}

fn axpy(out: &mut [f64], alpha: f64, x: &[f64]) {
    out.iter_mut().zip(x).for_each(|(o, v)| *o += alpha * v);
}

/// Adds `g * d||a - b|| / da` to `ga` and the opposite to `gb`.
fn push_l2_grad(a: &[f64], b: &[f64], g: f64, ga: &mut [f64], gb: &mut [f64]) {
    let d = l2(a, b);
    if d == 0.0 {
        return;
    }
    for k in 0..a.len() {
        let v = g * (a[k] - b[k]) / d;
        ga[k] += v;
        gb[k] -= v;
    }
}

/// Gradients for the two sides of a correspondence set.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub a: Descriptors,
    pub b: Descriptors,
}

/// Triplet loss with the plain L2 descriptor distance.
pub fn loss_invariant(
    desc_a: &[Vec<f64>],
    desc_b: &[Vec<f64>],
    points_a: &[Point2],
    points_b: &[Point2],
    cfg: &LossConfig,
) -> Result<Evaluated<PairGrad>> {
    if desc_a.len() != points_a.len() || desc_b.len() != points_b.len() {
        return Err(Error::InvalidArgument("descriptor and point counts differ".into()));
    }
    let dist: Vec<Vec<f64>> = desc_a.iter().map(|a| desc_b.iter().map(|b| l2(a, b)).collect()).collect();
    let t = triplet_loss(&dist, points_a, points_b, cfg)?;
    let mut grad = PairGrad { a: zeros_like(desc_a), b: zeros_like(desc_b) };
    for &(i, j, g) in &t.grad {
        push_l2_grad(&desc_a[i], &desc_b[j], g, &mut grad.a[i], &mut grad.b[j]);
    }
    Ok(Evaluated { loss: t.loss, skipped: t.skipped, grad })
}

/// `(1/n) sum max(f M + |A - V|^2 - |A - I|^2, 0)` with gradients for the
/// anchor, variant and invariant descriptors.
pub fn loss_variant(
    anchor: &[Vec<f64>],
    variant: &[Vec<f64>],
    invariant: &[Vec<f64>],
    f: f64,
    cfg: &LossConfig,
) -> Result<Evaluated<[Descriptors; 3]>> {
    let n = anchor.len();
    if variant.len() != n || invariant.len() != n {
        return Err(Error::InvalidArgument("descriptor triplets are not aligned".into()));
    }
    let mut grad = [zeros_like(anchor), zeros_like(variant), zeros_like(invariant)];
    if n == 0 {
        return Ok(Evaluated { loss: 0.0, skipped: 0, grad });
    }
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    for i in 0..n {
        let (a, v, inv) = (&anchor[i], &variant[i], &invariant[i]);
        let hinge = f * cfg.margin + sq_l2(a, v) - sq_l2(a, inv);
        if hinge > 0.0 {
            loss += hinge;
            for k in 0..a.len() {
                grad[0][i][k] += 2.0 * scale * (inv[k] - v[k]);
                grad[1][i][k] -= 2.0 * scale * (a[k] - v[k]);
                grad[2][i][k] += 2.0 * scale * (a[k] - inv[k]);
            }
        }
    }
    Ok(Evaluated { loss: loss * scale, skipped: 0, grad })
}

/// `min(1, |theta| / theta_max)`.
pub fn rotation_factor(theta: f64, theta_max: f64) -> f64 {
    (theta.abs() / theta_max).min(1.0)
}

fn rotated(theta: f64) -> bool {
    theta.abs() >= NEGLIGIBLE_ROTATION
}

/// Whether `channel` is invariant to every change present in the triplet,
/// in which case it is trained with the invariant loss.
pub fn uses_invariant_loss(channel: Channel, theta: f64, illum_changed: bool) -> bool {
    (channel.rot_invariant() || !rotated(theta)) && (channel.illum_invariant() || !illum_changed)
}

/// Margin factor of the variant loss for `channel`: the largest factor
/// among the changes the channel is meant to be sensitive to.
pub fn variant_factor(channel: Channel, theta: f64, illum_changed: bool, theta_max: f64) -> f64 {
    let rot = if !channel.rot_invariant() && rotated(theta) { rotation_factor(theta, theta_max) } else { 0.0 };
    let illum = if !channel.illum_invariant() && illum_changed { 1.0 } else { 0.0 };
    rot.max(illum)
}

/// Gradients with respect to the descriptors of a triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGrad {
    pub anchor: ChannelSet,
    pub variant: ChannelSet,
    pub invariant: ChannelSet,
}

impl DescriptorGrad {
    pub fn zeros(t: &TripletDescriptors) -> Self {
        Self {
            anchor: t.corr.desc_a.clone().map(|d| zeros_like(&d)),
            variant: t.variant.clone().map(|d| zeros_like(&d)),
            invariant: t.corr.desc_b.clone().map(|d| zeros_like(&d)),
        }
    }

    fn add_scaled(&mut self, other: &DescriptorGrad, alpha: f64) {
        for (dst, src) in [(&mut self.anchor, &other.anchor), (&mut self.variant, &other.variant), (&mut self.invariant, &other.invariant)] {
            for (dc, sc) in dst.iter_mut().zip(src) {
                for (d, s) in dc.iter_mut().zip(sc) {
                    axpy(d, alpha, s);
                }
            }
        }
    }
}

/// Local loss: per channel, the invariant loss if the channel is invariant
/// to every change present, the variant loss otherwise; averaged over the
/// four channels.
pub fn loss_local(t: &TripletDescriptors, cfg: &LossConfig) -> Result<Evaluated<DescriptorGrad>> {
    t.corr.check()?;
    if t.variant.iter().any(|d| d.len() != t.corr.len()) {
        return Err(Error::InvalidArgument("variant descriptors are not aligned".into()));
    }
    let mut grad = DescriptorGrad::zeros(t);
    let (mut loss, mut skipped) = (0.0, 0);
    let w = 1.0 / NUM_CHANNELS as f64;
    for c in 0..NUM_CHANNELS {
        let channel = Channel::from_index(c).expect("channel index in range");
        if uses_invariant_loss(channel, t.theta, t.illum_changed) {
            let e = loss_invariant(&t.corr.desc_a[c], &t.corr.desc_b[c], &t.corr.points_a, &t.corr.points_b, cfg)?;
            loss += w * e.loss;
            skipped += e.skipped;
            for (d, s) in grad.anchor[c].iter_mut().zip(&e.grad.a) {
                axpy(d, w, s);
            }
            for (d, s) in grad.invariant[c].iter_mut().zip(&e.grad.b) {
                axpy(d, w, s);
            }
        } else {
            let f = variant_factor(channel, t.theta, t.illum_changed, cfg.theta_max);
            let e = loss_variant(&t.corr.desc_a[c], &t.variant[c], &t.corr.desc_b[c], f, cfg)?;
            loss += w * e.loss;
            let [ga, gv, gi] = &e.grad;
            for (dst, src) in [(&mut grad.anchor[c], ga), (&mut grad.variant[c], gv), (&mut grad.invariant[c], gi)] {
                for (d, s) in dst.iter_mut().zip(src) {
                    axpy(d, w, s);
                }
            }
        }
    }
    Ok(Evaluated { loss, skipped, grad })
}

/// Gradients of the meta loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaGrad {
    pub a: ChannelSet,
    pub b: ChannelSet,
    pub centroids: Centroids,
}

/// Triplet loss under the weighted distance
/// `sum_c softmax(s)_c |d_a_c - d_b_c|`, where `s` holds the meta
/// similarities of the tiles containing the two points. Meta descriptors
/// are aggregated from the correspondence descriptors themselves on a
/// `tiles x tiles` grid.
pub fn loss_meta(corr: &Correspondences, centroids: &Centroids, tiles: usize, cfg: &LossConfig) -> Result<Evaluated<MetaGrad>> {
    corr.check()?;
    if tiles == 0 {
        return Err(Error::InvalidArgument("tile grid side must be at least 1".into()));
    }
    let n = corr.len();
    let fa = forward_tiles(&corr.desc_a, &corr.points_a, corr.size_a, centroids, tiles);
    let fb = forward_tiles(&corr.desc_b, &corr.points_b, corr.size_b, centroids, tiles);
    let nt = tiles * tiles;

    let mut weights = vec![[0.0f64; NUM_CHANNELS]; nt * nt];
    for ta in 0..nt {
        for tb in 0..nt {
            let mut s = [0.0; NUM_CHANNELS];
            for (c, sc) in s.iter_mut().enumerate() {
                if let (Some(x), Some(y)) = (&fa.channels[c][ta].meta, &fb.channels[c][tb].meta) {
                    *sc = x.iter().zip(y).map(|(p, q)| p * q).sum();
                }
            }
            weights[ta * nt + tb] = crate::meta::softmax(&s);
        }
    }

    let mut local = vec![vec![[0.0f64; NUM_CHANNELS]; n]; n];
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let w = &weights[fa.tile_of[i] * nt + fb.tile_of[j]];
            let mut d = 0.0;
            for c in 0..NUM_CHANNELS {
                let e = l2(&corr.desc_a[c][i], &corr.desc_b[c][j]);
                local[i][j][c] = e;
                d += w[c] * e;
            }
            dist[i][j] = d;
        }
    }

    let t = triplet_loss(&dist, &corr.points_a, &corr.points_b, cfg)?;
    let mut ga = corr.desc_a.clone().map(|d| zeros_like(&d));
    let mut gb = corr.desc_b.clone().map(|d| zeros_like(&d));
    let mut g_sims = vec![[0.0f64; NUM_CHANNELS]; nt * nt];
    for &(i, j, g) in &t.grad {
        let pair = fa.tile_of[i] * nt + fb.tile_of[j];
        let w = &weights[pair];
        for c in 0..NUM_CHANNELS {
            push_l2_grad(&corr.desc_a[c][i], &corr.desc_b[c][j], g * w[c], &mut ga[c][i], &mut gb[c][j]);
            g_sims[pair][c] += g * w[c] * (local[i][j][c] - dist[i][j]);
        }
    }

    let meta_len = |f: &super::vlad::Forward, c: usize| f.channels[c].iter().find_map(|t| t.meta.as_ref().map(Vec::len));
    let mut gm_a: Vec<Vec<Vec<f64>>> = Vec::with_capacity(NUM_CHANNELS);
    let mut gm_b: Vec<Vec<Vec<f64>>> = Vec::with_capacity(NUM_CHANNELS);
    for c in 0..NUM_CHANNELS {
        let len = meta_len(&fa, c).or(meta_len(&fb, c)).unwrap_or(0);
        let mut ma = vec![vec![0.0; len]; nt];
        let mut mb = vec![vec![0.0; len]; nt];
        for ta in 0..nt {
            for tb in 0..nt {
                let g = g_sims[ta * nt + tb][c];
                if g == 0.0 {
                    continue;
                }
                if let (Some(x), Some(y)) = (&fa.channels[c][ta].meta, &fb.channels[c][tb].meta) {
                    axpy(&mut ma[ta], g, y);
                    axpy(&mut mb[tb], g, x);
                }
            }
        }
        gm_a.push(ma);
        gm_b.push(mb);
    }
    let mut g_centroids = centroids.clone().map(|c| zeros_like(&c));
    backward_tiles(&fa, &gm_a, centroids, &mut ga, &mut g_centroids);
    backward_tiles(&fb, &gm_b, centroids, &mut gb, &mut g_centroids);
    Ok(Evaluated { loss: t.loss, skipped: t.skipped, grad: MetaGrad { a: ga, b: gb, centroids: g_centroids } })
}

/// Gradients of the total loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalGrad {
    pub descriptors: DescriptorGrad,
    pub centroids: Centroids,
}

/// Parts of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub local: f64,
    pub meta: f64,
    pub total: f64,
    pub skipped: usize,
}

/// `L_l + lambda L_m`.
pub fn total_loss(t: &TripletDescriptors, centroids: &Centroids, tiles: usize, cfg: &LossConfig) -> Result<(LossParts, TotalGrad)> {
    let local = loss_local(t, cfg)?;
    let mut descriptors = local.grad;
    let (meta_loss, meta_skipped, g_centroids) = if cfg.lambda > 0.0 {
        let m = loss_meta(&t.corr, centroids, tiles, cfg)?;
        let extra = DescriptorGrad { anchor: m.grad.a, variant: t.variant.clone().map(|d| zeros_like(&d)), invariant: m.grad.b };
        descriptors.add_scaled(&extra, cfg.lambda);
        let gc = m.grad.centroids.map(|ch| ch.into_iter().map(|v| v.into_iter().map(|x| x * cfg.lambda).collect()).collect());
        (m.loss, m.skipped, gc)
    } else {
        (0.0, 0, centroids.clone().map(|c| zeros_like(&c)))
    };
    let parts = LossParts {
        local: local.loss,
        meta: meta_loss,
        total: local.loss + cfg.lambda * meta_loss,
        skipped: local.skipped + meta_skipped,
    };
    Ok((parts, TotalGrad { descriptors, centroids: g_centroids }))
}
