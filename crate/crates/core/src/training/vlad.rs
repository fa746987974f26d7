//! Differentiable tile aggregation in f64, mirroring [`crate::meta::vlad`].
//! Cluster assignments are treated as locally constant.

use crate::features::NUM_CHANNELS;
use crate::geometry::Point2;
use crate::meta::{tile_index, VANISHING_NORM};

/// Per channel, `k` centroids of length `dim`.
pub type Centroids = [Vec<Vec<f64>>; NUM_CHANNELS];

/// Forward state of one tile and channel.
#[derive(Debug, Clone)]
pub(crate) struct TileState {
    pub members: Vec<usize>,
    pub assign: Vec<usize>,
    /// Residual sum per cluster.
    pub sums: Vec<Vec<f64>>,
    pub sum_norms: Vec<f64>,
    pub counts: Vec<usize>,
    /// Norm of the concatenated intra-normalized residuals.
    pub total_norm: f64,
    pub meta: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub tile_of: Vec<usize>,
    /// `channels[c][tile]`.
    pub channels: Vec<Vec<TileState>>,
}

pub(crate) fn nearest(centroids: &[Vec<f64>], d: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let dist: f64 = c.iter().zip(d).map(|(x, y)| (x - y) * (x - y)).sum();
        if dist < best.1 {
            best = (k, dist);
        }
    }
    best.0
}

fn forward_tile(members: Vec<usize>, descs: &[Vec<f64>], centroids: &[Vec<f64>]) -> TileState {
    let k = centroids.len();
    let dim = centroids.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0; k];
    let assign: Vec<usize> = members.iter().map(|&i| nearest(centroids, &descs[i])).collect();
    for (&i, &a) in members.iter().zip(&assign) {
        counts[a] += 1;
        for ((s, v), c) in sums[a].iter_mut().zip(&descs[i]).zip(&centroids[a]) {
            *s += v - c;
        }
    }
    let sum_norms: Vec<f64> = sums.iter().map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut u = Vec::with_capacity(k * dim);
    for (s, &n) in sums.iter().zip(&sum_norms) {
        if n > VANISHING_NORM {
            u.extend(s.iter().map(|v| v / n));
        } else {
            u.extend(std::iter::repeat_n(0.0, dim));
        }
    }
    let total_norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let meta = (total_norm > VANISHING_NORM).then(|| u.iter().map(|v| v / total_norm).collect());
    TileState { members, assign, sums, sum_norms, counts, total_norm, meta }
}

/// Aggregates every channel of `descs` on a `c x c` grid over `size`.
pub(crate) fn forward_tiles(
    descs: &[Vec<Vec<f64>>; NUM_CHANNELS],
    points: &[Point2],
    size: (usize, usize),
    centroids: &Centroids,
    c: usize,
) -> Forward {
    let tile_of: Vec<usize> = points.iter().map(|p| tile_index(p.x, p.y, size.0, size.1, c)).collect();
    let mut members = vec![Vec::new(); c * c];
    for (i, &t) in tile_of.iter().enumerate() {
        members[t].push(i);
    }
    let channels = (0..NUM_CHANNELS)
        .map(|ch| members.iter().map(|m| forward_tile(m.clone(), &descs[ch], &centroids[ch])).collect())
        .collect();
    Forward { tile_of, channels }
}

/// Propagates `grad_meta[c][tile]` (gradient with respect to each meta
/// descriptor) into descriptor and centroid gradients.
pub(crate) fn backward_tiles(
    fwd: &Forward,
    grad_meta: &[Vec<Vec<f64>>],
    centroids: &Centroids,
    grad_desc: &mut [Vec<Vec<f64>>; NUM_CHANNELS],
    grad_centroids: &mut Centroids,
) {
    for ch in 0..NUM_CHANNELS {
        let dim = centroids[ch].first().map_or(0, Vec::len);
        for (tile, state) in fwd.channels[ch].iter().enumerate() {
            let Some(m) = &state.meta else { continue };
            let gm = &grad_meta[ch][tile];
            if gm.iter().all(|v| *v == 0.0) {
                continue;
            }
            let dot: f64 = m.iter().zip(gm).map(|(a, b)| a * b).sum();
            let gu: Vec<f64> = m.iter().zip(gm).map(|(mv, g)| (g - mv * dot) / state.total_norm).collect();
            for (k, (sum, &norm)) in state.sums.iter().zip(&state.sum_norms).enumerate() {
                if norm <= VANISHING_NORM {
                    continue;
                }
                let gk = &gu[k * dim..(k + 1) * dim];
                let vdot: f64 = sum.iter().zip(gk).map(|(s, g)| s * g).sum::<f64>() / norm;
                let gs: Vec<f64> = sum.iter().zip(gk).map(|(s, g)| (g - s / norm * vdot) / norm).collect();
                for (&i, &a) in state.members.iter().zip(&state.assign) {
                    if a == k {
                        grad_desc[ch][i].iter_mut().zip(&gs).for_each(|(o, v)| *o += v);
                    }
                }
                let count = state.counts[k] as f64;
                grad_centroids[ch][k].iter_mut().zip(&gs).for_each(|(o, v)| *o -= count * v);
            }
        }
    }
}

/// Meta descriptors of a tile grid, `None` for the sentinel.
pub fn meta_descriptors(
    descs: &[Vec<Vec<f64>>; NUM_CHANNELS],
    points: &[Point2],
    size: (usize, usize),
    centroids: &Centroids,
    c: usize,
) -> Vec<[Option<Vec<f64>>; NUM_CHANNELS]> {
    let fwd = forward_tiles(descs, points, size, centroids, c);
    (0..c * c).map(|t| std::array::from_fn(|ch| fwd.channels[ch][t].meta.clone())).collect()
}
