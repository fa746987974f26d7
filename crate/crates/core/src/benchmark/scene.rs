//! Procedural grayscale scenes with distinctive, orientation-biased content.
//!
//! Scenes are built from axis-aligned panels, half of them horizontally
//! striped and many of them flattened into bars, over a vertically shaded
//! background. Blob-like texture is added on top, then the image is blurred.
//! The dominant horizontal structure means upright statistics change
//! visibly under rotation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{gaussian_blur, Image};

const PALETTE: usize = 4;
const TEXTURE_AMPLITUDE: f32 = 0.35;
const TEXTURE_SIGMA: f32 = 3.0;

pub fn synthetic_scene(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f32, height as f32);
    let top = rng.random_range(0.2f32..0.5);
    let bottom = rng.random_range(0.5f32..0.8);
    let mut px: Vec<f32> = (0..width * height).map(|i| top + (bottom - top) * (i / width) as f32 / h).collect();

    let n_rects = ((width * height) as f32 / 5000.0).round() as usize + 8;
    for _ in 0..n_rects {
        let rw = rng.random_range(0.03f32..0.22) * w;
        let flat = if rng.random_bool(0.5) { 0.25 } else { 1.0 };
        let rh = rng.random_range(0.03f32..0.22) * h * flat;
        let x0 = rng.random_range(-0.05f32..1.0) * w;
        let y0 = rng.random_range(-0.05f32..1.0) * h;
        let value = (rng.random_range(0..PALETTE) as f32 + 0.5) / PALETTE as f32;
        let striped = rng.random_bool(0.5);
        let period = rng.random_range(5.0f32..14.0);
        fill(&mut px, width, height, (x0, y0, x0 + rw, y0 + rh), |y| {
            if striped && ((y - y0) / period).floor() as i64 % 2 == 1 {
                1.0 - value
            } else {
                value
            }
        });
    }

    let noise: Vec<f32> = (0..width * height).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let texture = gaussian_blur(&noise, width, height, TEXTURE_SIGMA);
    let rms = (texture.iter().map(|v| v * v).sum::<f32>() / texture.len().max(1) as f32).sqrt();
    if rms > 0.0 {
        for (v, t) in px.iter_mut().zip(&texture) {
            *v += TEXTURE_AMPLITUDE * t / rms;
        }
    }
    for v in px.iter_mut() {
        *v += rng.random_range(-0.03f32..0.03);
    }
    let blurred = gaussian_blur(&px, width, height, 1.0);
    Image::from_fn(width, height, |x, y| blurred[y * width + x].clamp(0.0, 1.0))
}

fn fill(px: &mut [f32], width: usize, height: usize, rect: (f32, f32, f32, f32), value: impl Fn(f32) -> f32) {
    let (x0, y0, x1, y1) = rect;
    for y in y0.max(0.0) as usize..(y1.ceil().max(0.0) as usize).min(height) {
        for x in x0.max(0.0) as usize..(x1.ceil().max(0.0) as usize).min(width) {
            px[y * width + x] = value(y as f32);
        }
    }
}
