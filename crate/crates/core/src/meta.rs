//! Tiled meta descriptors and the softmax invariance weights.
//!
//! The image is split into a `c x c` grid. For every tile and every
//! invariance channel, the local descriptors of the keypoints falling in the
//! tile are aggregated VLAD-style against that channel's codebook: each
//! descriptor adds its residual to its nearest centroid's slot, slots are
//! L2-normalized individually, concatenated and L2-normalized again. A tile
//! (or channel) whose residuals all vanish holds the all-zeros sentinel.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{expect_end, expect_magic, expect_version, read_f32s, read_u32, write_f32s, write_u32};
use crate::error::{Error, Result};
use crate::features::{DescriptorBundle, Keypoint, NUM_CHANNELS};

/// Per-channel k-means centroids, stored row-major (`k * dim` floats each).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub k: usize,
    pub dim: usize,
    pub centroids: [Vec<f32>; NUM_CHANNELS],
}

impl Codebook {
    pub fn new(k: usize, dim: usize, centroids: [Vec<f32>; NUM_CHANNELS]) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::InvalidArgument("codebook needs k >= 1 and dim >= 1".into()));
        }
        if centroids.iter().any(|c| c.len() != k * dim) {
            return Err(Error::Format(format!("every channel needs {} centroid values", k * dim)));
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Format("codebook contains non-finite values".into()));
        }
        Ok(Self { k, dim, centroids })
    }

    pub fn centroid(&self, channel: usize, i: usize) -> &[f32] {
        &self.centroids[channel][i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the closest centroid; ties go to the lower index.
    pub fn nearest(&self, channel: usize, d: &[f32]) -> usize {
        nearest_centroid(&self.centroids[channel], self.dim, d)
    }

    /// Trains one codebook per channel on the descriptors of `bundles`.
    pub fn train(bundles: &[DescriptorBundle], k: usize, seed: u64) -> Result<Self> {
        let sets: Vec<Vec<Vec<f32>>> =
            (0..NUM_CHANNELS).map(|c| bundles.iter().map(|b| b.channels[c].clone()).collect()).collect();
        train_codebook(&sets, k, seed)
    }

    pub fn min_pairwise_distance(&self) -> f32 {
        let mut best = f32::INFINITY;
        for c in 0..NUM_CHANNELS {
            for i in 0..self.k {
                for j in i + 1..self.k {
                    best = best.min(sq_dist(self.centroid(c, i), self.centroid(c, j)).sqrt());
                }
            }
        }
        best
    }
}

#[inline]
fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(centroids: &[f32], dim: usize, d: &[f32]) -> usize {
    let mut best = (0, f32::INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let dist = sq_dist(c, d);
        if dist < best.1 {
            best = (i, dist);
        }
    }
    best.0
}

/// Trains one codebook per descriptor set (one set per channel).
pub fn train_codebook(descriptor_sets: &[Vec<Vec<f32>>], k: usize, seed: u64) -> Result<Codebook> {
    if descriptor_sets.len() != NUM_CHANNELS {
        return Err(Error::InvalidArgument(format!("expected {NUM_CHANNELS} descriptor sets, got {}", descriptor_sets.len())));
    }
    let dim = descriptor_sets.iter().flat_map(|s| s.first()).map(|d| d.len()).next().unwrap_or(0);
    let mut centroids: [Vec<f32>; NUM_CHANNELS] = Default::default();
    for (c, set) in descriptor_sets.iter().enumerate() {
        if set.iter().any(|d| d.len() != dim) {
            return Err(Error::InvalidArgument("descriptors of mixed dimension".into()));
        }
        centroids[c] = kmeans(set, k, seed.wrapping_add(c as u64))?.concat();
    }
    Codebook::new(k, dim, centroids)
}

const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_TOL: f64 = 1e-5;

/// k-means++ seeding followed by Lloyd iterations, until the largest
/// centroid shift drops below 1e-5 or 100 iterations ran.
pub fn kmeans(data: &[Vec<f32>], k: usize, seed: u64) -> Result<Vec<Vec<f32>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let distinct = count_distinct(data, k);
    if distinct < k {
        return Err(Error::InsufficientData { needed: k, got: distinct });
    }
    let dim = data[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers: Vec<Vec<f32>> = vec![data[rng.random_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &centers[0]) as f64).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut idx = d2.iter().rposition(|&v| v > 0.0).unwrap_or(0);
            for (i, &v) in d2.iter().enumerate() {
                if v > 0.0 && r < v {
                    idx = i;
                    break;
                }
                r -= v;
            }
            idx
        } else {
            d2.iter().position(|&v| v > 0.0).unwrap_or(0)
        };
        centers.push(data[pick].clone());
        let last = centers.last().expect("just pushed");
        for (p, v) in data.iter().zip(d2.iter_mut()) {
            *v = v.min(sq_dist(p, last) as f64);
        }
    }

    let mut flat: Vec<f32> = centers.concat();
    let mut assign = vec![0usize; data.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        for (a, p) in assign.iter_mut().zip(data) {
            *a = nearest_centroid(&flat, dim, p);
        }
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(data) {
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
                *s += *v as f64;
            }
        }
        let mut shift = 0.0f64;
        let mut next = flat.clone();
        for c in 0..k {
            let slot = &mut next[c * dim..(c + 1) * dim];
            if counts[c] == 0 {
                // Re-seed an empty cluster with the point farthest from its centroid.
                let far = data
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &flat[assign[i] * dim..(assign[i] + 1) * dim])))
                    .fold((0, -1.0f32), |best, cur| if cur.1 > best.1 { cur } else { best })
                    .0;
                slot.copy_from_slice(&data[far]);
            } else {
                for (s, v) in slot.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *s = (*v / counts[c] as f64) as f32;
                }
            }
            shift = shift.max(sq_dist(slot, &flat[c * dim..(c + 1) * dim]).sqrt() as f64);
        }
        flat = next;
        if shift < KMEANS_TOL {
            break;
        }
    }
    Ok(flat.chunks_exact(dim).map(|c| c.to_vec()).collect())
}

fn count_distinct(data: &[Vec<f32>], enough: usize) -> usize {
    let mut seen: Vec<&Vec<f32>> = Vec::new();
    for d in data {
        if !seen.iter().any(|s| *s == d) {
            seen.push(d);
            if seen.len() >= enough {
                break;
            }
        }
    }
    seen.len()
}

/// Four meta descriptors of one tile; `None` marks the all-zeros sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaTile {
    pub meta: [Option<Vec<f32>>; NUM_CHANNELS],
}

impl MetaTile {
    /// Meta descriptor of `channel`, with the sentinel expanded to zeros.
    pub fn descriptor(&self, channel: usize, len: usize) -> Vec<f32> {
        self.meta[channel].clone().unwrap_or_else(|| vec![0.0; len])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaDescriptorGrid {
    pub c: usize,
    pub width: usize,
    pub height: usize,
    pub meta_dim: usize,
    /// Row-major, `c * c` tiles.
    pub tiles: Vec<MetaTile>,
}

impl MetaDescriptorGrid {
    pub fn tile_of(&self, x: f64, y: f64) -> usize {
        tile_index(x, y, self.width, self.height, self.c)
    }

    pub fn num_tiles(&self) -> usize {
        self.c * self.c
    }
}

/// Tile containing `(x, y)`: `floor(x * c / width)` clamped to `[0, c-1]`,
/// likewise for rows.
pub fn tile_index(x: f64, y: f64, width: usize, height: usize, c: usize) -> usize {
    let col = ((x * c as f64 / width as f64).floor().max(0.0) as usize).min(c - 1);
    let row = ((y * c as f64 / height as f64).floor().max(0.0) as usize).min(c - 1);
    row * c + col
}

/// Residual sums below this norm count as cancelled (descriptors are unit
/// norm, so genuine residuals are orders of magnitude larger).
pub(crate) const VANISHING_NORM: f64 = 1e-6;

/// VLAD aggregation of one channel's descriptors. Returns `None` when every
/// residual vanishes.
pub fn vlad(descriptors: &[&[f32]], centroids: &[f32], k: usize, dim: usize) -> Option<Vec<f32>> {
    let mut acc = vec![0.0f64; k * dim];
    for d in descriptors {
        let a = nearest_centroid(centroids, dim, d);
        for ((s, v), c) in acc[a * dim..(a + 1) * dim].iter_mut().zip(d.iter()).zip(&centroids[a * dim..(a + 1) * dim]) {
            *s += (*v - *c) as f64;
        }
    }
    for slot in acc.chunks_exact_mut(dim) {
        let n = slot.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > VANISHING_NORM {
            slot.iter_mut().for_each(|v| *v /= n);
        } else {
            slot.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let n = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n <= VANISHING_NORM {
        return None;
    }
    Some(acc.iter().map(|v| (v / n) as f32).collect())
}

pub fn aggregate(
    bundles: &[DescriptorBundle],
    kps: &[Keypoint],
    img_size: (usize, usize),
    codebook: &Codebook,
    c: usize,
) -> Result<MetaDescriptorGrid> {
    if bundles.len() != kps.len() {
        return Err(Error::InvalidArgument(format!("{} bundles for {} keypoints", bundles.len(), kps.len())));
    }
    if c == 0 {
        return Err(Error::InvalidArgument("tile grid side must be at least 1".into()));
    }
    let (width, height) = img_size;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c * c];
    for (i, kp) in kps.iter().enumerate() {
        members[tile_index(kp.x, kp.y, width, height, c)].push(i);
    }
    let tiles = members
        .iter()
        .map(|idx| {
            let mut meta: [Option<Vec<f32>>; NUM_CHANNELS] = Default::default();
            for (ch, slot) in meta.iter_mut().enumerate() {
                let descs: Vec<&[f32]> = idx.iter().map(|&i| bundles[i].channels[ch].as_slice()).collect();
                *slot = vlad(&descs, &codebook.centroids[ch], codebook.k, codebook.dim);
            }
            MetaTile { meta }
        })
        .collect();
    Ok(MetaDescriptorGrid { c, width, height, meta_dim: codebook.k * codebook.dim, tiles })
}

/// Softmax of the four meta-descriptor similarities of a tile pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceWeights {
    pub w: [f64; NUM_CHANNELS],
}

impl InvarianceWeights {
    pub fn uniform() -> Self {
        Self { w: [1.0 / NUM_CHANNELS as f64; NUM_CHANNELS] }
    }

    /// Channel carrying the largest weight (lowest index on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.w)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// `s_i = m_a_i . m_b_i`, zero when either side is the sentinel.
pub fn similarities(a: &MetaTile, b: &MetaTile) -> [f64; NUM_CHANNELS] {
    let mut s = [0.0; NUM_CHANNELS];
    for (i, out) in s.iter_mut().enumerate() {
        if let (Some(x), Some(y)) = (&a.meta[i], &b.meta[i]) {
            *out = x.iter().zip(y).map(|(p, q)| *p as f64 * *q as f64).sum();
        }
    }
    s
}

pub fn softmax(s: &[f64; NUM_CHANNELS]) -> [f64; NUM_CHANNELS] {
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = s.map(|v| (v - max).exp());
    let z: f64 = e.iter().sum();
    e.map(|v| v / z)
}

pub fn invariance_weights(a: &MetaTile, b: &MetaTile) -> InvarianceWeights {
    InvarianceWeights { w: softmax(&similarities(a, b)) }
}

/// Weights and similarities for every (tile of A, tile of B) pair.
#[derive(Debug, Clone)]
pub struct WeightTable {
    tiles_b: usize,
    weights: Vec<[f32; NUM_CHANNELS]>,
    best: Vec<usize>,
}

impl WeightTable {
    pub fn new(a: &MetaDescriptorGrid, b: &MetaDescriptorGrid) -> Self {
        let mut weights = Vec::with_capacity(a.tiles.len() * b.tiles.len());
        let mut best = Vec::with_capacity(a.tiles.len() * b.tiles.len());
        for ta in &a.tiles {
            for tb in &b.tiles {
                let s = similarities(ta, tb);
                weights.push(softmax(&s).map(|v| v as f32));
                best.push(argmax(&s));
            }
        }
        Self { tiles_b: b.tiles.len(), weights, best }
    }

    pub fn weights(&self, tile_a: usize, tile_b: usize) -> &[f32; NUM_CHANNELS] {
        &self.weights[tile_a * self.tiles_b + tile_b]
    }

    /// Channel with the largest meta similarity for the tile pair.
    pub fn best_channel(&self, tile_a: usize, tile_b: usize) -> usize {
        self.best[tile_a * self.tiles_b + tile_b]
    }
}

/// Codebook file: magic `LSRDCBK1`, version, `k`, `dim`, channel count (all
/// u32 little-endian), then channel-major f32 centroids.
pub const CODEBOOK_MAGIC: &[u8; 8] = b"LSRDCBK1";
pub const CODEBOOK_VERSION: u32 = 1;

impl Codebook {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CODEBOOK_MAGIC)?;
        write_u32(w, CODEBOOK_VERSION)?;
        write_u32(w, self.k as u32)?;
        write_u32(w, self.dim as u32)?;
        write_u32(w, NUM_CHANNELS as u32)?;
        for c in &self.centroids {
            write_f32s(w, c)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, CODEBOOK_MAGIC)?;
        expect_version(r, CODEBOOK_VERSION)?;
        let k = read_u32(r)? as usize;
        let dim = read_u32(r)? as usize;
        if read_u32(r)? as usize != NUM_CHANNELS {
            return Err(Error::Format("codebook must hold 4 channels".into()));
        }
        let mut centroids: [Vec<f32>; NUM_CHANNELS] = Default::default();
        for c in centroids.iter_mut() {
            *c = read_f32s(r, k * dim)?;
        }
        Self::new(k, dim, centroids)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let cb = Self::read_from(&mut r)?;
        expect_end(&mut r)?;
        Ok(cb)
    }

    /// Human-readable mirror of the binary file.
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn codebook_file_round_trip() {
        let cb = Codebook::new(2, 3, [0, 1, 2, 3].map(|c| (0..6).map(|i| (c * 6 + i) as f32 * 0.1).collect())).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cb.bin");
        cb.save(&path).unwrap();
        assert_eq!(Codebook::load(&path).unwrap(), cb);
        let json = dir.path().join("cb.json");
        cb.save_json(&json).unwrap();
        let back: Codebook = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
        assert_eq!(back, cb);
    }

    fn unit(v: Vec<f32>) -> Vec<f32> {
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn tile_with(sims: [f64; 4]) -> (MetaTile, MetaTile) {
        // Two-dimensional meta descriptors with prescribed dot products.
        let a = MetaTile { meta: [0; 4].map(|_| Some(vec![1.0f32, 0.0])) };
        let mut b = a.clone();
        for (i, s) in sims.iter().enumerate() {
            let s = *s as f32;
            b.meta[i] = Some(vec![s, (1.0 - s * s).max(0.0).sqrt()]);
        }
        (a, b)
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let data = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]];
        let c = kmeans(&data, 1, 0).unwrap();
        assert!((c[0][0] - 2.0).abs() < 1e-6 && (c[0][1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut data = Vec::new();
        for i in 0..400 {
            let center = if i % 2 == 0 { [0.0, 0.0] } else { [5.0, 5.0] };
            data.push(vec![center[0] + noise.sample(&mut rng), center[1] + noise.sample(&mut rng)]);
        }
        let means: Vec<[f32; 2]> = (0..2)
            .map(|p| {
                let pts: Vec<_> = data.iter().skip(p).step_by(2).collect();
                let n = pts.len() as f32;
                [pts.iter().map(|v| v[0]).sum::<f32>() / n, pts.iter().map(|v| v[1]).sum::<f32>() / n]
            })
            .collect();
        let mut c = kmeans(&data, 2, 3).unwrap();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (got, want) in c.iter().zip(&means) {
            assert!((got[0] - want[0]).abs() < 0.05 && (got[1] - want[1]).abs() < 0.05);
        }
    }

    #[test]
    fn kmeans_with_k_equal_to_distinct_points() {
        let data = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let c = kmeans(&data, 3, 9).unwrap();
        for centroid in &c {
            assert!(data.contains(centroid), "{centroid:?}");
        }
        assert!(matches!(kmeans(&data, 4, 0), Err(Error::InsufficientData { needed: 4, got: 3 })));
    }

    #[test]
    fn kmeans_is_deterministic() {
        let data: Vec<Vec<f32>> = (0..50).map(|i| vec![(i % 7) as f32, (i % 5) as f32 * 0.5]).collect();
        assert_eq!(kmeans(&data, 4, 12).unwrap(), kmeans(&data, 4, 12).unwrap());
    }

    #[test]
    fn vlad_single_residual() {
        let d = unit(vec![1.0, 2.0, 2.0]);
        let c0 = vec![0.0f32, 1.0, 0.0];
        let out = vlad(&[&d], &c0, 1, 3).unwrap();
        let r: Vec<f32> = d.iter().zip(&c0).map(|(a, b)| a - b).collect();
        let expected = unit(r);
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn vlad_vanishing_residuals_give_sentinel() {
        let c = vec![0.5f32, 0.5, 1.0, 0.0];
        assert_eq!(vlad(&[&c[0..2]], &c, 2, 2), None);
        let a = [0.75f32, 0.5];
        let b = [0.25f32, 0.5];
        assert_eq!(vlad(&[&a, &b], &c, 2, 2), None);
        assert_eq!(vlad(&[], &c, 2, 2), None);
    }

    #[test]
    fn tile_boundaries_go_to_larger_index() {
        assert_eq!(tile_index(0.0, 0.0, 90, 90, 3), 0);
        assert_eq!(tile_index(30.0, 0.0, 90, 90, 3), 1);
        assert_eq!(tile_index(89.9, 89.9, 90, 90, 3), 8);
        assert_eq!(tile_index(90.0, 60.0, 90, 90, 3), 8);
    }

    #[test]
    fn aggregate_marks_empty_tiles() {
        let cb = Codebook::new(1, 2, [0; 4].map(|_| vec![0.0, 1.0])).unwrap();
        let bundles = vec![DescriptorBundle::replicated(vec![1.0, 0.0])];
        let kps = vec![Keypoint::new(5.0, 5.0, 1.0)];
        let grid = aggregate(&bundles, &kps, (30, 30), &cb, 3).unwrap();
        assert_eq!(grid.tiles.len(), 9);
        assert!(grid.tiles[0].meta.iter().all(|m| m.is_some()));
        assert!(grid.tiles[1..].iter().all(|t| t.meta.iter().all(|m| m.is_none())));
        let m = grid.tiles[0].meta[0].as_ref().unwrap();
        assert!((m.iter().map(|v| v * v).sum::<f32>().sqrt() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn weights_from_similarities() {
        let (a, b) = tile_with([0.3; 4]);
        let w = invariance_weights(&a, &b);
        assert!(w.w.iter().all(|v| (v - 0.25).abs() < 1e-9));

        let (a, b) = tile_with([1.0, 0.0, 0.0, 0.0]);
        let w = invariance_weights(&a, &b).w;
        let e = std::f64::consts::E;
        assert!((w[0] - e / (e + 3.0)).abs() < 1e-6);
        assert!((w[0] - 0.4754).abs() < 1e-4);
        for v in &w[1..] {
            assert!((v - 1.0 / (e + 3.0)).abs() < 1e-6 && (v - 0.1749).abs() < 1e-4);
        }
    }

    #[test]
    fn sentinel_counts_as_zero_similarity() {
        let (a, mut b) = tile_with([1.0; 4]);
        b.meta[2] = None;
        let s = similarities(&a, &b);
        assert!((s[0] - 1.0).abs() < 1e-6);
        assert_eq!(s[2], 0.0);
    }

    proptest! {
        #[test]
        fn softmax_is_shift_invariant_probability(s in proptest::array::uniform4(-1.0f64..1.0), shift in -5.0f64..5.0) {
            let w = softmax(&s);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(w.iter().all(|v| *v >= 0.0));
            let shifted = softmax(&s.map(|v| v + shift));
            for (a, b) in w.iter().zip(&shifted) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn aggregate_ignores_keypoint_order(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 6;
            let rand_unit = |rng: &mut ChaCha8Rng| unit((0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect());
            let cents: [Vec<f32>; 4] = [0; 4].map(|_| (0..3).flat_map(|_| rand_unit(&mut rng)).collect());
            let cb = Codebook::new(3, dim, cents).unwrap();
            let n = 12;
            let bundles: Vec<DescriptorBundle> = (0..n).map(|_| DescriptorBundle::new([0; 4].map(|_| rand_unit(&mut rng)))).collect();
            let kps: Vec<Keypoint> = (0..n).map(|_| Keypoint::new(rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), 1.0)).collect();
            let grid = aggregate(&bundles, &kps, (40, 40), &cb, 2).unwrap();
            let mut order: Vec<usize> = (0..n).collect();
            order.reverse();
            order.rotate_left(seed as usize % n);
            let b2: Vec<_> = order.iter().map(|&i| bundles[i].clone()).collect();
            let k2: Vec<_> = order.iter().map(|&i| kps[i]).collect();
            let grid2 = aggregate(&b2, &k2, (40, 40), &cb, 2).unwrap();
            for (t1, t2) in grid.tiles.iter().zip(&grid2.tiles) {
                for (m1, m2) in t1.meta.iter().zip(&t2.meta) {
                    match (m1, m2) {
                        (Some(a), Some(b)) => prop_assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6)),
                        (None, None) => {}
                        _ => prop_assert!(false, "sentinel mismatch"),
                    }
                }
            }
        }
    }
}
