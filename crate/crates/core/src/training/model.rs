//! Trainable parameters: one linear projection per channel and the
//! codebook centroids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::binio::{expect_end, expect_magic, expect_version, read_f64s, read_u32, write_f64s, write_u32};
use crate::error::{Error, Result};
use crate::features::{DescriptorBundle, NUM_CHANNELS};
use crate::meta::Codebook;

use super::data::TripletSample;
use super::loss::{ChannelSet, Correspondences, DescriptorGrad, TripletDescriptors};
use super::vlad::Centroids;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LSRDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub dim: usize,
    pub k: usize,
    /// Side of the tile grid used by the meta loss.
    pub tiles: usize,
    /// Row-major `dim x dim` matrices.
    pub projections: [Vec<f64>; NUM_CHANNELS],
    pub centroids: Centroids,
}

fn identity(dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
    m
}

/// Projected descriptors of one channel with the pre-normalization norms.
pub(crate) struct Projected {
    pub unit: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
}

impl Model {
    /// Identity projections around an existing codebook.
    pub fn from_codebook(codebook: &Codebook, tiles: usize) -> Result<Self> {
        if tiles == 0 {
            return Err(Error::DegenerateConfig("tile grid side must be at least 1".into()));
        }
        let centroids = std::array::from_fn(|c| {
            (0..codebook.k).map(|i| codebook.centroid(c, i).iter().map(|&v| v as f64).collect()).collect()
        });
        Ok(Self {
            dim: codebook.dim,
            k: codebook.k,
            tiles,
            projections: std::array::from_fn(|_| identity(codebook.dim)),
            centroids,
        })
    }

    pub fn codebook(&self) -> Result<Codebook> {
        let centroids = self.centroids.clone().map(|ch| ch.iter().flatten().map(|&v| v as f32).collect());
        Codebook::new(self.k, self.dim, centroids)
    }

    /// Projects and renormalizes one raw descriptor.
    pub fn project(&self, channel: usize, raw: &[f64]) -> Vec<f64> {
        let p = &self.projections[channel];
        let mut u: Vec<f64> = (0..self.dim).map(|r| p[r * self.dim..(r + 1) * self.dim].iter().zip(raw).map(|(a, b)| a * b).sum()).collect();
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            u.iter_mut().for_each(|v| *v /= n);
        }
        u
    }

    pub fn project_bundle(&self, bundle: &DescriptorBundle) -> DescriptorBundle {
        DescriptorBundle::new(std::array::from_fn(|c| {
            let raw: Vec<f64> = bundle.channels[c].iter().map(|&v| v as f64).collect();
            self.project(c, &raw).into_iter().map(|v| v as f32).collect()
        }))
    }

    pub(crate) fn project_all(&self, channel: usize, raw: &[Vec<f64>]) -> Projected {
        let n = raw.len();
        if n == 0 {
            return Projected { unit: Vec::new(), norms: Vec::new() };
        }
        let r = DMatrix::from_row_iterator(n, self.dim, raw.iter().flatten().copied());
        let p = DMatrix::from_row_slice(self.dim, self.dim, &self.projections[channel]);
        let u = r * p.transpose();
        let mut unit = Vec::with_capacity(n);
        let mut norms = Vec::with_capacity(n);
        for row in u.row_iter() {
            let v: Vec<f64> = row.iter().copied().collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            unit.push(if norm > 0.0 { v.iter().map(|x| x / norm).collect() } else { v });
            norms.push(norm);
        }
        Projected { unit, norms }
    }

    fn project_set(&self, raw: &ChannelSet) -> [Projected; NUM_CHANNELS] {
        std::array::from_fn(|c| self.project_all(c, &raw[c]))
    }

    /// Projected descriptors of a sample, plus the norms needed by
    /// [`Model::backward`].
    pub(crate) fn forward(&self, s: &TripletSample) -> (TripletDescriptors, [[Projected; NUM_CHANNELS]; 3]) {
        let parts = [self.project_set(&s.anchor), self.project_set(&s.variant), self.project_set(&s.invariant)];
        let take = |p: &[Projected; NUM_CHANNELS]| -> ChannelSet { std::array::from_fn(|c| p[c].unit.clone()) };
        let t = TripletDescriptors {
            corr: Correspondences {
                points_a: s.points_a.clone(),
                points_b: s.points_i.clone(),
                size_a: s.size_a,
                size_b: s.size_i,
                desc_a: take(&parts[0]),
                desc_b: take(&parts[2]),
            },
            variant: take(&parts[1]),
            theta: s.theta,
            illum_changed: s.illum_changed,
        };
        (t, parts)
    }

    /// Gradient of the loss with respect to each projection matrix
    /// (row-major), given gradients with respect to the projected
    /// descriptors.
    pub(crate) fn backward(&self, s: &TripletSample, parts: &[[Projected; NUM_CHANNELS]; 3], grad: &DescriptorGrad) -> [Vec<f64>; NUM_CHANNELS] {
        let raws = [&s.anchor, &s.variant, &s.invariant];
        let grads = [&grad.anchor, &grad.variant, &grad.invariant];
        std::array::from_fn(|c| {
            let mut acc = DMatrix::<f64>::zeros(self.dim, self.dim);
            for side in 0..3 {
                let raw = &raws[side][c];
                let n = raw.len();
                if n == 0 {
                    continue;
                }
                let proj = &parts[side][c];
                let gu = DMatrix::from_row_iterator(
                    n,
                    self.dim,
                    (0..n).flat_map(|i| {
                        let d = &proj.unit[i];
                        let g = &grads[side][c][i];
                        let norm = proj.norms[i];
                        let dot: f64 = d.iter().zip(g).map(|(a, b)| a * b).sum();
                        (0..self.dim).map(move |k| if norm > 0.0 { (g[k] - d[k] * dot) / norm } else { 0.0 })
                    }),
                );
                let r = DMatrix::from_row_iterator(n, self.dim, raw.iter().flatten().copied());
                acc += gu.transpose() * r;
            }
            acc.transpose().as_slice().to_vec()
        })
    }

    /// Checkpoint: magic `LSRDCKPT`, version, `dim`, `k`, `tiles`, channel
    /// count (u32 little-endian), the four row-major projections, then the
    /// channel-major centroids, all as f64.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        for v in [CHECKPOINT_VERSION, self.dim as u32, self.k as u32, self.tiles as u32, NUM_CHANNELS as u32] {
            write_u32(w, v)?;
        }
        for p in &self.projections {
            write_f64s(w, p)?;
        }
        for ch in &self.centroids {
            for c in ch {
                write_f64s(w, c)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, CHECKPOINT_MAGIC)?;
        expect_version(r, CHECKPOINT_VERSION)?;
        let dim = read_u32(r)? as usize;
        let k = read_u32(r)? as usize;
        let tiles = read_u32(r)? as usize;
        let channels = read_u32(r)? as usize;
        if channels != NUM_CHANNELS || dim == 0 || k == 0 || tiles == 0 {
            return Err(Error::Format(format!("bad checkpoint header dim={dim} k={k} tiles={tiles} channels={channels}")));
        }
        let mut projections: [Vec<f64>; NUM_CHANNELS] = Default::default();
        for p in projections.iter_mut() {
            *p = read_f64s(r, dim * dim)?;
        }
        let mut centroids: Centroids = Default::default();
        for ch in centroids.iter_mut() {
            *ch = (0..k).map(|_| read_f64s(r, dim)).collect::<Result<_>>()?;
        }
        expect_end(r)?;
        Ok(Self { dim, k, tiles, projections, centroids })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::training::{evaluate, LossConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_model(seed: u64, dim: usize, k: usize) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centroids = std::array::from_fn(|_| (0..k * dim).map(|_| rng.random_range(-0.4f32..0.4)).collect());
        let mut m = Model::from_codebook(&Codebook::new(k, dim, centroids).unwrap(), 2).unwrap();
        for p in m.projections.iter_mut() {
            p.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
        }
        m
    }

    pub(crate) fn toy_sample(seed: u64, n: usize, dim: usize, theta: f64, illum: bool) -> TripletSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = || -> ChannelSet { std::array::from_fn(|_| (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()) };
        let (anchor, variant, invariant) = (set(), set(), set());
        let points_a: Vec<Point2> = (0..n).map(|i| Point2::new(5.0 + 7.0 * i as f64, 10.0 + 3.0 * (i % 3) as f64)).collect();
        let points_i = points_a.iter().map(|p| Point2::new(p.x + 1.0, p.y - 0.5)).collect();
        TripletSample { points_a, points_i, size_a: (64, 32), size_i: (64, 32), anchor, variant, invariant, theta, illum_changed: illum }
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let m = toy_model(1, 5, 3);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        assert_eq!(Model::read_from(&mut buf.as_slice()).unwrap(), m);
        assert!(matches!(Model::read_from(&mut &buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(Model::read_from(&mut extra.as_slice()), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Model::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path().join("m.ckpt")).unwrap();
        assert_eq!(Model::load(dir.path().join("m.ckpt")).unwrap(), m);
    }

    #[test]
    fn identity_projection_keeps_unit_descriptors() {
        let cb = Codebook::new(1, 3, std::array::from_fn(|_| vec![0.0, 0.0, 1.0])).unwrap();
        let m = Model::from_codebook(&cb, 1).unwrap();
        let d = [0.6, 0.0, 0.8];
        assert_eq!(m.project(2, &d), d.to_vec());
        assert_eq!(m.codebook().unwrap(), cb);
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let cfg = LossConfig { distance_threshold: 3.0, ..LossConfig::default() };
        let samples = [toy_sample(2, 6, 4, 0.9, false), toy_sample(3, 5, 4, 0.0, true)];
        let model = toy_model(4, 4, 2);
        let (_, grad) = evaluate(&model, &samples, &cfg, true).unwrap();
        let h = 1e-6;
        let loss = |m: &Model| evaluate(m, &samples, &cfg, true).unwrap().0.total;
        let mut worst = 0.0f64;
        for c in 0..NUM_CHANNELS {
            let (mut num, mut den) = (0.0, 0.0f64);
            for i in 0..16 {
                let mut up = model.clone();
                up.projections[c][i] += h;
                let mut down = model.clone();
                down.projections[c][i] -= h;
                let fd = (loss(&up) - loss(&down)) / (2.0 * h);
                num += (fd - grad.projections[c][i]).powi(2);
                den += fd * fd;
            }
            worst = worst.max(num.sqrt() / den.sqrt().max(1e-12));
            let (mut num, mut den) = (0.0, 0.0f64);
            for k in 0..2 {
                for j in 0..4 {
                    let mut up = model.clone();
                    up.centroids[c][k][j] += h;
                    let mut down = model.clone();
                    down.centroids[c][k][j] -= h;
                    let fd = (loss(&up) - loss(&down)) / (2.0 * h);
                    num += (fd - grad.centroids[c][k][j]).powi(2);
                    den += fd * fd;
                }
            }
            if den > 0.0 {
                worst = worst.max(num.sqrt() / den.sqrt());
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }
}
