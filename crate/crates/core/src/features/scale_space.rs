use crate::image::{gaussian_blur, Image};

use super::DetectorConfig;

pub(crate) struct Octave {
    pub width: usize,
    pub height: usize,
    /// `scales + 3` progressively blurred planes.
    pub levels: Vec<Vec<f32>>,
}

/// Gaussian scale space shared by detection, orientation and description.
pub struct ScaleSpace {
    pub(crate) octaves: Vec<Octave>,
    pub(crate) sigma: f64,
    pub(crate) scales: usize,
}

impl ScaleSpace {
    pub fn new(img: &Image, cfg: &DetectorConfig) -> Self {
        let scales = cfg.scales_per_octave.max(1);
        let k = 2f64.powf(1.0 / scales as f64);
        let pre = (cfg.sigma * cfg.sigma - cfg.initial_blur * cfg.initial_blur).max(0.01).sqrt();
        let mut base = gaussian_blur(img.gray(), img.width(), img.height(), pre as f32);
        let (mut w, mut h) = (img.width(), img.height());
        let mut octaves = Vec::new();
        for _ in 0..cfg.octaves.max(1) {
            if w < 8 || h < 8 {
                break;
            }
            let mut levels = Vec::with_capacity(scales + 3);
            levels.push(base);
            for i in 1..scales + 3 {
                let prev = cfg.sigma * k.powi(i as i32 - 1);
                let cur = prev * k;
                let step = (cur * cur - prev * prev).sqrt();
                let next = gaussian_blur(&levels[i - 1], w, h, step as f32);
                levels.push(next);
            }
            let (nw, nh) = (w / 2, h / 2);
            let src = &levels[scales];
            let mut down = Vec::with_capacity(nw * nh);
            for y in 0..nh {
                for x in 0..nw {
                    down.push(src[2 * y * w + 2 * x]);
                }
            }
            octaves.push(Octave { width: w, height: h, levels });
            base = down;
            w = nw;
            h = nh;
        }
        Self { octaves, sigma: cfg.sigma, scales }
    }

    pub fn num_octaves(&self) -> usize {
        self.octaves.len()
    }

    /// Octave and level whose blur is closest to `scale` (base pixels).
    pub(crate) fn level_for(&self, scale: f64) -> (usize, usize) {
        let rel = (scale.max(1e-6) / self.sigma).log2();
        let o = (rel.floor().max(0.0) as usize).min(self.octaves.len().saturating_sub(1));
        let i = ((rel - o as f64) * self.scales as f64).round().clamp(0.0, (self.scales + 2) as f64) as usize;
        (o, i)
    }
}
