//! Weighted descriptor distance and mutual nearest-neighbor matching.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Channel, DescriptorBundle, Keypoint, NUM_CHANNELS};
use crate::meta::{InvarianceWeights, MetaDescriptorGrid, WeightTable};

/// How the four channel distances of a candidate pair are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchMode {
    /// Meta-similarity weighted sum of the four channel distances.
    Lisrd,
    SingleChannel(Channel),
    /// Smallest of the four channel distances.
    Greedy,
    /// Distance on the channel whose meta descriptors agree best.
    HardAssignment,
}

impl MatchMode {
    pub const ALL: [MatchMode; 7] = [
        MatchMode::Lisrd,
        MatchMode::Greedy,
        MatchMode::HardAssignment,
        MatchMode::SingleChannel(Channel::RotVarIllumVar),
        MatchMode::SingleChannel(Channel::RotVarIllumInv),
        MatchMode::SingleChannel(Channel::RotInvIllumVar),
        MatchMode::SingleChannel(Channel::RotInvIllumInv),
    ];

    /// Whether the mode reads the meta descriptors at all.
    pub fn uses_meta(self) -> bool {
        matches!(self, MatchMode::Lisrd | MatchMode::HardAssignment)
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchMode::Lisrd => f.write_str("lisrd"),
            MatchMode::Greedy => f.write_str("greedy"),
            MatchMode::HardAssignment => f.write_str("hard_assignment"),
            MatchMode::SingleChannel(c) => write!(f, "single_channel:{}", c.tag()),
        }
    }
}

impl FromStr for MatchMode {
    type Err = Error;

    /// Accepts `lisrd`, `greedy`, `hard_assignment` and
    /// `single_channel:<i>` with `i` a channel index or tag.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lisrd" => Ok(MatchMode::Lisrd),
            "greedy" => Ok(MatchMode::Greedy),
            "hard_assignment" => Ok(MatchMode::HardAssignment),
            _ => {
                let arg = s
                    .strip_prefix("single_channel:")
                    .or_else(|| s.strip_prefix("single_channel(").and_then(|r| r.strip_suffix(')')))
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown matching mode `{s}`")))?;
                let channel = match arg.parse::<usize>() {
                    Ok(i) => Channel::from_index(i),
                    Err(_) => Channel::ALL.into_iter().find(|c| c.tag() == arg),
                };
                channel
                    .map(MatchMode::SingleChannel)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown channel `{arg}`")))
            }
        }
    }
}

/// Euclidean distance, accumulated in eight interleaved lanes.
pub fn l2_distance(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += (x - y) * (x - y);
    }
    (((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail).sqrt()
}

/// `sum_i w_i * ||d_a_i - d_b_i||` with unsquared channel norms.
pub fn lisrd_distance(a: &DescriptorBundle, b: &DescriptorBundle, w: &InvarianceWeights) -> f64 {
    (0..NUM_CHANNELS).map(|c| w.w[c] * l2_distance(&a.channels[c], &b.channels[c]) as f64).sum()
}

/// Everything the matcher needs from one image.
#[derive(Debug, Clone)]
pub struct ImageFeatures {
    pub keypoints: Vec<Keypoint>,
    pub bundles: Vec<DescriptorBundle>,
    pub grid: MetaDescriptorGrid,
}

impl ImageFeatures {
    pub fn tiles(&self) -> Vec<usize> {
        self.keypoints.iter().map(|k| self.grid.tile_of(k.x, k.y)).collect()
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// The four `n x m` channel distance matrices of two descriptor sets,
/// row-major. Computed once and shared by every matching mode.
#[derive(Debug, Clone)]
pub struct ChannelDistances {
    pub n: usize,
    pub m: usize,
    pub d: [Vec<f32>; NUM_CHANNELS],
}

impl ChannelDistances {
    pub fn compute(a: &[DescriptorBundle], b: &[DescriptorBundle]) -> Self {
        let (n, m) = (a.len(), b.len());
        let d = [0, 1, 2, 3].map(|c| {
            let mut out = vec![0.0f32; n * m];
            if m > 0 {
                out.par_chunks_mut(m).zip(a.par_iter()).for_each(|(row, da)| {
                    for (v, db) in row.iter_mut().zip(b) {
                        *v = l2_distance(&da.channels[c], &db.channels[c]);
                    }
                });
            }
            out
        });
        Self { n, m, d }
    }

    pub fn get(&self, channel: usize, i: usize, j: usize) -> f32 {
        self.d[channel][i * self.m + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub a: usize,
    pub b: usize,
    pub dist: f32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    /// Rows that have a nearest neighbor.
    pub candidates: usize,
    pub mutual: usize,
    pub after_ratio: usize,
}

/// Mutual nearest neighbors sorted by ascending distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub mode: String,
    pub pairs: Vec<Match>,
    pub counts: MatchCounts,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Default ratio-test threshold when the test is switched on.
pub const DEFAULT_RATIO: f32 = 0.8;

/// Pair distance under `mode`, reading precomputed channel distances.
#[inline]
fn combined(dists: &ChannelDistances, table: &WeightTable, ta: usize, tb: usize, i: usize, j: usize, mode: MatchMode) -> f32 {
    let k = i * dists.m + j;
    match mode {
        MatchMode::Lisrd => {
            let w = table.weights(ta, tb);
            w[0] * dists.d[0][k] + w[1] * dists.d[1][k] + w[2] * dists.d[2][k] + w[3] * dists.d[3][k]
        }
        MatchMode::SingleChannel(c) => dists.d[c.index()][k],
        MatchMode::Greedy => dists.d[0][k].min(dists.d[1][k]).min(dists.d[2][k]).min(dists.d[3][k]),
        MatchMode::HardAssignment => dists.d[table.best_channel(ta, tb)][k],
    }
}

/// Matching on precomputed distances. `tiles_a`/`tiles_b` give each
/// keypoint's tile in its own grid; `table` covers those grids.
pub fn match_with(
    dists: &ChannelDistances,
    tiles_a: &[usize],
    tiles_b: &[usize],
    table: &WeightTable,
    mode: MatchMode,
    ratio_threshold: Option<f32>,
) -> MatchSet {
    let (n, m) = (dists.n, dists.m);
    let mut full = vec![0.0f32; n * m];
    for i in 0..n {
        for j in 0..m {
            full[i * m + j] = combined(dists, table, tiles_a[i], tiles_b[j], i, j, mode);
        }
    }
    mutual_nearest(&full, n, m, ratio_threshold, mode.to_string())
}

/// Mutual nearest neighbors of a row-major `n x m` distance matrix.
/// Ties go to the lower index on both sides.
pub fn mutual_nearest(full: &[f32], n: usize, m: usize, ratio_threshold: Option<f32>, mode: String) -> MatchSet {
    let mut counts = MatchCounts::default();
    if n == 0 || m == 0 {
        return MatchSet { mode, pairs: Vec::new(), counts };
    }
    let mut col_best = vec![(usize::MAX, f32::INFINITY); m];
    let mut row_best = Vec::with_capacity(n);
    for i in 0..n {
        let row = &full[i * m..(i + 1) * m];
        let (mut best, mut bd, mut second) = (0, f32::INFINITY, f32::INFINITY);
        for (j, &d) in row.iter().enumerate() {
            if d < bd {
                second = bd;
                best = j;
                bd = d;
            } else if d < second {
                second = d;
            }
            if d < col_best[j].1 {
                col_best[j] = (i, d);
            }
        }
        row_best.push((best, bd, second));
    }
    counts.candidates = n;
    let mut pairs = Vec::new();
    for (i, &(j, d, second)) in row_best.iter().enumerate() {
        if col_best[j].0 != i {
            continue;
        }
        counts.mutual += 1;
        if let Some(t) = ratio_threshold {
            let ratio = if second.is_infinite() {
                0.0
            } else if second > 0.0 {
                d / second
            } else {
                1.0
            };
            if ratio > t {
                continue;
            }
        }
        pairs.push(Match { a: i, b: j, dist: d });
    }
    counts.after_ratio = pairs.len();
    pairs.sort_by(|p, q| p.dist.total_cmp(&q.dist).then(p.a.cmp(&q.a)));
    MatchSet { mode, pairs, counts }
}

/// Exhaustive matching of two feature sets under `mode`.
pub fn match_features(a: &ImageFeatures, b: &ImageFeatures, mode: MatchMode, ratio_threshold: Option<f32>) -> MatchSet {
    let dists = ChannelDistances::compute(&a.bundles, &b.bundles);
    let table = WeightTable::new(&a.grid, &b.grid);
    match_with(&dists, &a.tiles(), &b.tiles(), &table, mode, ratio_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::{Codebook, MetaTile};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(v: Vec<f32>) -> Vec<f32> {
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn rand_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
        unit((0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
    }

    fn random_features(rng: &mut ChaCha8Rng, n: usize, dim: usize, cb: &Codebook, same_channels: bool) -> ImageFeatures {
        let bundles: Vec<DescriptorBundle> = (0..n)
            .map(|_| {
                if same_channels {
                    DescriptorBundle::replicated(rand_unit(rng, dim))
                } else {
                    DescriptorBundle::new([0; 4].map(|_| rand_unit(rng, dim)))
                }
            })
            .collect();
        let keypoints: Vec<Keypoint> =
            (0..n).map(|_| Keypoint::new(rng.random_range(0.0..60.0), rng.random_range(0.0..60.0), 1.6)).collect();
        let grid = crate::meta::aggregate(&bundles, &keypoints, (60, 60), cb, 2).unwrap();
        ImageFeatures { keypoints, bundles, grid }
    }

    fn random_codebook(rng: &mut ChaCha8Rng, dim: usize) -> Codebook {
        Codebook::new(2, dim, [0; 4].map(|_| (0..2).flat_map(|_| rand_unit(rng, dim)).collect())).unwrap()
    }

    /// Straightforward reference: per-pair distance, then scan rows and columns.
    fn naive_match(a: &ImageFeatures, b: &ImageFeatures, mode: MatchMode, ratio: Option<f32>) -> Vec<(usize, usize, f32)> {
        let dist = |i: usize, j: usize| -> f32 {
            let ta = &a.grid.tiles[a.grid.tile_of(a.keypoints[i].x, a.keypoints[i].y)];
            let tb = &b.grid.tiles[b.grid.tile_of(b.keypoints[j].x, b.keypoints[j].y)];
            let ch: Vec<f32> =
                (0..4).map(|c| l2_distance(&a.bundles[i].channels[c], &b.bundles[j].channels[c])).collect();
            let s = crate::meta::similarities(ta, tb);
            match mode {
                MatchMode::Lisrd => {
                    let w = crate::meta::softmax(&s).map(|v| v as f32);
                    w[0] * ch[0] + w[1] * ch[1] + w[2] * ch[2] + w[3] * ch[3]
                }
                MatchMode::SingleChannel(c) => ch[c.index()],
                MatchMode::Greedy => ch.iter().cloned().fold(f32::INFINITY, f32::min),
                MatchMode::HardAssignment => {
                    let best = (0..4).fold(0, |b, c| if s[c] > s[b] { c } else { b });
                    ch[best]
                }
            }
        };
        let (n, m) = (a.len(), b.len());
        let mut out = Vec::new();
        for i in 0..n {
            let j = (0..m).fold(0, |bj, j| if dist(i, j) < dist(i, bj) { j } else { bj });
            let i_back = (0..n).fold(0, |bi, k| if dist(k, j) < dist(bi, j) { k } else { bi });
            if i_back != i {
                continue;
            }
            if let Some(t) = ratio {
                let mut others: Vec<f32> = (0..m).filter(|&k| k != j).map(|k| dist(i, k)).collect();
                others.sort_by(f32::total_cmp);
                if let Some(&second) = others.first() {
                    let r = if second > 0.0 { dist(i, j) / second } else { 1.0 };
                    if r > t {
                        continue;
                    }
                }
            }
            out.push((i, j, dist(i, j)));
        }
        out.sort_by(|p, q| p.2.total_cmp(&q.2).then(p.0.cmp(&q.0)));
        out
    }

    #[test]
    fn distance_examples() {
        let a = DescriptorBundle::replicated(vec![1.0, 0.0]);
        assert_eq!(lisrd_distance(&a, &a, &InvarianceWeights { w: [0.7, 0.1, 0.1, 0.1] }), 0.0);

        let b = DescriptorBundle::new([vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        let c = DescriptorBundle::new([vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        let w = InvarianceWeights { w: [0.4754, 0.1749, 0.1749, 0.1749] };
        assert!((lisrd_distance(&b, &c, &w) - 0.4754).abs() < 1e-9);

        let zero = DescriptorBundle::replicated(vec![0.0]);
        let d = DescriptorBundle::new([vec![0.2], vec![0.4], vec![0.6], vec![0.8]]);
        assert!((lisrd_distance(&zero, &d, &InvarianceWeights::uniform()) - 0.5).abs() < 1e-7);
    }

    #[test]
    fn l2_matches_sequential_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for dim in [1, 7, 8, 13, 128] {
            let a: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let exact = a.iter().zip(&b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt();
            assert!((l2_distance(&a, &b) as f64 - exact).abs() < 1e-5);
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in MatchMode::ALL {
            assert_eq!(mode.to_string().parse::<MatchMode>().unwrap(), mode);
        }
        assert_eq!("single_channel:2".parse::<MatchMode>().unwrap(), MatchMode::SingleChannel(Channel::RotInvIllumVar));
        assert_eq!("single_channel(1)".parse::<MatchMode>().unwrap(), MatchMode::SingleChannel(Channel::RotVarIllumInv));
        assert!("nearest".parse::<MatchMode>().is_err());
        assert!("single_channel:4".parse::<MatchMode>().is_err());
    }

    #[test]
    fn self_match_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cb = random_codebook(&mut rng, 8);
        let f = random_features(&mut rng, 15, 8, &cb, false);
        let ms = match_features(&f, &f, MatchMode::Lisrd, None);
        assert_eq!(ms.len(), 15);
        assert!(ms.pairs.iter().all(|p| p.a == p.b && p.dist == 0.0));
    }

    fn two_point_features(descs: Vec<DescriptorBundle>, grid: &MetaDescriptorGrid) -> ImageFeatures {
        let keypoints = (0..descs.len()).map(|_| Keypoint::new(1.0, 1.0, 1.6)).collect();
        ImageFeatures { keypoints, bundles: descs, grid: grid.clone() }
    }

    #[test]
    fn lisrd_and_single_channel_can_disagree() {
        // One tile; channel 1 meta descriptors agree strongly, the rest are orthogonal.
        let ta = MetaTile { meta: [Some(vec![1.0, 0.0]), Some(vec![1.0, 0.0]), Some(vec![1.0, 0.0]), Some(vec![1.0, 0.0])] };
        let tb = MetaTile { meta: [Some(vec![0.0, 1.0]), Some(vec![1.0, 0.0]), Some(vec![0.0, 1.0]), Some(vec![0.0, 1.0])] };
        let ga = MetaDescriptorGrid { c: 1, width: 4, height: 4, meta_dim: 2, tiles: vec![ta] };
        let gb = MetaDescriptorGrid { c: 1, width: 4, height: 4, meta_dim: 2, tiles: vec![tb] };
        let x = vec![1.0f32, 0.0];
        let y = vec![0.0f32, 1.0];
        // Weights favour channel 1. a0 equals b0 on channel 0 and b1 on the other three.
        let a = two_point_features(vec![DescriptorBundle::new([x.clone(), y.clone(), y.clone(), y.clone()])], &ga);
        let b = two_point_features(vec![DescriptorBundle::replicated(x.clone()), DescriptorBundle::replicated(y.clone())], &gb);
        let single = match_features(&a, &b, MatchMode::SingleChannel(Channel::RotVarIllumVar), None);
        let lisrd = match_features(&a, &b, MatchMode::Lisrd, None);
        assert_eq!(single.pairs[0].b, 0);
        assert_eq!(lisrd.pairs[0].b, 1);
    }

    #[test]
    fn asymmetric_neighbors_are_dropped() {
        let g = MetaDescriptorGrid { c: 1, width: 4, height: 4, meta_dim: 2, tiles: vec![MetaTile { meta: Default::default() }] };
        let d = |v: f32| DescriptorBundle::replicated(vec![v]);
        // a0 -> b0, but b0 is closer to a1.
        let a = two_point_features(vec![d(0.0), d(0.9)], &g);
        let b = two_point_features(vec![d(0.6), d(5.0)], &g);
        let ms = match_features(&a, &b, MatchMode::SingleChannel(Channel::RotVarIllumVar), None);
        assert_eq!(ms.pairs.len(), 1);
        assert_eq!((ms.pairs[0].a, ms.pairs[0].b), (1, 0));
        assert_eq!(ms.counts, MatchCounts { candidates: 2, mutual: 1, after_ratio: 1 });
    }

    #[test]
    fn ratio_test_drops_ambiguous_rows() {
        let g = MetaDescriptorGrid { c: 1, width: 4, height: 4, meta_dim: 2, tiles: vec![MetaTile { meta: Default::default() }] };
        let d = |v: f32| DescriptorBundle::replicated(vec![v]);
        let a = two_point_features(vec![d(0.0)], &g);
        let b = two_point_features(vec![d(1.0), d(-1.1)], &g);
        let mode = MatchMode::Greedy;
        assert_eq!(match_features(&a, &b, mode, None).len(), 1);
        let ms = match_features(&a, &b, mode, Some(DEFAULT_RATIO));
        assert!(ms.is_empty());
        assert_eq!(ms.counts.mutual, 1);
        assert_eq!(match_features(&a, &b, mode, Some(0.95)).len(), 1);
    }

    #[test]
    fn json_schema() {
        let ms = MatchSet { mode: "lisrd".into(), pairs: vec![Match { a: 1, b: 2, dist: 0.5 }], counts: MatchCounts { candidates: 3, mutual: 1, after_ratio: 1 } };
        let v: serde_json::Value = serde_json::to_value(&ms).unwrap();
        assert_eq!(v["pairs"][0]["a"], 1);
        assert_eq!(v["pairs"][0]["dist"], 0.5);
        assert_eq!(v["counts"]["after_ratio"], 1);
        assert_eq!(v["mode"], "lisrd");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_naive_reference(seed in 0u64..10_000, n in 1usize..20, m in 1usize..20, mode_idx in 0usize..7, ratio in proptest::option::of(0.5f32..1.0)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cb = random_codebook(&mut rng, 6);
            let a = random_features(&mut rng, n, 6, &cb, false);
            let b = random_features(&mut rng, m, 6, &cb, false);
            let mode = MatchMode::ALL[mode_idx];
            let ms = match_features(&a, &b, mode, ratio);
            let got: Vec<_> = ms.pairs.iter().map(|p| (p.a, p.b, p.dist)).collect();
            prop_assert_eq!(got, naive_match(&a, &b, mode, ratio));
        }

        #[test]
        fn matches_form_partial_injection(seed in 0u64..10_000, n in 1usize..25, m in 1usize..25) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cb = random_codebook(&mut rng, 6);
            let a = random_features(&mut rng, n, 6, &cb, false);
            let b = random_features(&mut rng, m, 6, &cb, false);
            let ms = match_features(&a, &b, MatchMode::Lisrd, None);
            let mut sa: Vec<_> = ms.pairs.iter().map(|p| p.a).collect();
            let mut sb: Vec<_> = ms.pairs.iter().map(|p| p.b).collect();
            sa.dedup();
            sb.sort();
            sb.dedup();
            prop_assert_eq!(sb.len(), ms.len());
            prop_assert!(ms.pairs.windows(2).all(|w| w[0].dist <= w[1].dist));
            prop_assert!(ms.pairs.iter().all(|p| p.dist >= 0.0 && p.dist <= 2.0 + 1e-5));
        }

        #[test]
        fn identical_channels_make_modes_agree(seed in 0u64..10_000, n in 1usize..15, m in 1usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cb = random_codebook(&mut rng, 6);
            let a = random_features(&mut rng, n, 6, &cb, true);
            let b = random_features(&mut rng, m, 6, &cb, true);
            let reference: Vec<_> = match_features(&a, &b, MatchMode::Greedy, None).pairs.iter().map(|p| (p.a, p.b)).collect();
            for mode in MatchMode::ALL {
                let got: Vec<_> = match_features(&a, &b, mode, None).pairs.iter().map(|p| (p.a, p.b)).collect();
                prop_assert_eq!(&got, &reference);
            }
        }

        #[test]
        fn weighted_distance_is_symmetric(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cb = random_codebook(&mut rng, 6);
            let a = random_features(&mut rng, 4, 6, &cb, false);
            let b = random_features(&mut rng, 4, 6, &cb, false);
            for i in 0..4 {
                for j in 0..4 {
                    let ta = &a.grid.tiles[a.grid.tile_of(a.keypoints[i].x, a.keypoints[i].y)];
                    let tb = &b.grid.tiles[b.grid.tile_of(b.keypoints[j].x, b.keypoints[j].y)];
                    let ab = lisrd_distance(&a.bundles[i], &b.bundles[j], &crate::meta::invariance_weights(ta, tb));
                    let ba = lisrd_distance(&b.bundles[j], &a.bundles[i], &crate::meta::invariance_weights(tb, ta));
                    prop_assert!((ab - ba).abs() < 1e-12);
                    prop_assert!((0.0..=2.0 + 1e-6).contains(&ab));
                }
            }
        }
    }
}
