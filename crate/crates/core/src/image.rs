//! Owned float images, validity masks, resampling and file IO.
//!
//! Pixel values are stored row-major in `[0, 1]`. The grayscale plane is
//! always present; an RGB plane is kept only when the image was loaded from
//! a color file.

use std::path::Path;

use crate::error::{Error, Result};

/// Luma weights used for every RGB to gray conversion.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    gray: Vec<f32>,
    rgb: Option<Vec<f32>>,
}

impl Image {
    /// Builds a grayscale image, rejecting non-finite or out-of-range values.
    pub fn new(width: usize, height: usize, gray: Vec<f32>) -> Result<Self> {
        if gray.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "gray plane has {} values, expected {}x{}",
                gray.len(),
                width,
                height
            )));
        }
        check_range(&gray)?;
        Ok(Self { width, height, gray, rgb: None })
    }

    /// Builds an RGB image; the gray plane is derived with [`LUMA_WEIGHTS`].
    pub fn from_rgb(width: usize, height: usize, rgb: Vec<f32>) -> Result<Self> {
        if rgb.len() != 3 * width * height {
            return Err(Error::InvalidImage(format!(
                "rgb plane has {} values, expected 3x{}x{}",
                rgb.len(),
                width,
                height
            )));
        }
        check_range(&rgb)?;
        let gray = rgb
            .chunks_exact(3)
            .map(|p| (LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2]).clamp(0.0, 1.0))
            .collect();
        Ok(Self { width, height, gray, rgb: Some(rgb) })
    }

    /// Grayscale image from a per-pixel closure; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut gray = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                gray.push(if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
            }
        }
        Self { width, height, gray, rgb: None }
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn gray(&self) -> &[f32] {
        &self.gray
    }

    pub fn rgb(&self) -> Option<&[f32]> {
        self.rgb.as_deref()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.gray[y * self.width + x]
    }

    /// Drops the color plane.
    pub fn into_gray(self) -> Self {
        Self { rgb: None, ..self }
    }

    pub(crate) fn from_parts_unchecked(width: usize, height: usize, gray: Vec<f32>, rgb: Option<Vec<f32>>) -> Self {
        debug_assert_eq!(gray.len(), width * height);
        Self { width, height, gray, rgb }
    }

    /// Bilinear sample of the gray plane. Returns `None` outside
    /// `[0, w-1] x [0, h-1]` (with a tolerance of 1e-6 px).
    pub fn sample(&self, x: f64, y: f64) -> Option<f32> {
        bilinear(&self.gray, self.width, self.height, 1, 0, x, y)
    }

    /// Resizes to exactly `width` x `height` with bilinear interpolation,
    /// pre-smoothing when shrinking by more than 2x.
    pub fn resize(&self, width: usize, height: usize) -> Result<Self> {
        if self.is_empty() {
            return Err(Error::InvalidImage("cannot resize an empty image".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("target size must be non-zero".into()));
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let shrink = sx.max(sy);
        let src = if shrink > 2.0 {
            let sigma = 0.5 * shrink;
            let mut blurred = self.clone();
            blurred.gray = gaussian_blur(&self.gray, self.width, self.height, sigma as f32);
            if let Some(rgb) = &self.rgb {
                let mut planes = [Vec::new(), Vec::new(), Vec::new()];
                for (c, plane) in planes.iter_mut().enumerate() {
                    let chan: Vec<f32> = rgb.iter().skip(c).step_by(3).copied().collect();
                    *plane = gaussian_blur(&chan, self.width, self.height, sigma as f32);
                }
                blurred.rgb = Some((0..self.width * self.height).flat_map(|i| [planes[0][i], planes[1][i], planes[2][i]]).collect());
            }
            blurred
        } else {
            self.clone()
        };
        let map = |x: usize, y: usize| {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (src.width - 1) as f64);
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (src.height - 1) as f64);
            (fx, fy)
        };
        let mut gray = Vec::with_capacity(width * height);
        let mut rgb = src.rgb.as_ref().map(|_| Vec::with_capacity(3 * width * height));
        for y in 0..height {
            for x in 0..width {
                let (fx, fy) = map(x, y);
                gray.push(bilinear(&src.gray, src.width, src.height, 1, 0, fx, fy).unwrap_or(0.0));
                if let (Some(out), Some(plane)) = (rgb.as_mut(), src.rgb.as_ref()) {
                    for c in 0..3 {
                        out.push(bilinear(plane, src.width, src.height, 3, c, fx, fy).unwrap_or(0.0));
                    }
                }
            }
        }
        Ok(Self { width, height, gray, rgb })
    }

    /// Crops the `width` x `height` window centered in the image.
    pub fn center_crop(&self, width: usize, height: usize) -> Result<Self> {
        if width > self.width || height > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {}x{} exceeds image {}x{}",
                width, height, self.width, self.height
            )));
        }
        let x0 = (self.width - width) / 2;
        let y0 = (self.height - height) / 2;
        let mut gray = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            gray.extend_from_slice(&self.gray[y * self.width + x0..y * self.width + x0 + width]);
        }
        let rgb = self.rgb.as_ref().map(|plane| {
            let mut out = Vec::with_capacity(3 * width * height);
            for y in y0..y0 + height {
                out.extend_from_slice(&plane[3 * (y * self.width + x0)..3 * (y * self.width + x0 + width)]);
            }
            out
        });
        Ok(Self { width, height, gray, rgb })
    }

    /// Upscales or downscales so that both edges reach at least the target,
    /// then center-crops to exactly `width` x `height`.
    pub fn resize_and_crop(&self, width: usize, height: usize) -> Result<Self> {
        if self.is_empty() {
            return Err(Error::SourceTooSmall(format!("{}x{}", self.width, self.height)));
        }
        let scale = (width as f64 / self.width as f64).max(height as f64 / self.height as f64);
        let rw = ((self.width as f64 * scale).round() as usize).max(width);
        let rh = ((self.height as f64 * scale).round() as usize).max(height);
        let resized = if rw == self.width && rh == self.height { self.clone() } else { self.resize(rw, rh)? };
        resized.center_crop(width, height)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let dynamic = image::open(path.as_ref())?;
        let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
        if dynamic.color().has_color() {
            let rgb = dynamic.to_rgb32f();
            Self::from_rgb(w, h, rgb.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
        } else {
            let luma = dynamic.to_luma32f();
            Self::new(w, h, luma.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
        }
    }

    /// Writes an 8-bit PNG (RGB when a color plane is present).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let to_u8 = |v: f32| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        match &self.rgb {
            Some(rgb) => {
                let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, rgb.iter().map(|&v| to_u8(v)).collect())
                    .ok_or_else(|| Error::InvalidImage("rgb buffer size mismatch".into()))?;
                buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
            }
            None => {
                let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.gray.iter().map(|&v| to_u8(v)).collect())
                    .ok_or_else(|| Error::InvalidImage("gray buffer size mismatch".into()))?;
                buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
            }
        }
        Ok(())
    }

    /// Rounds pixel values to 8-bit levels, i.e. what a PNG round trip yields.
    pub fn quantized(&self) -> Self {
        let q = |v: &f32| (v * 255.0).round().clamp(0.0, 255.0) / 255.0;
        match &self.rgb {
            Some(rgb) => Self::from_rgb(self.width, self.height, rgb.iter().map(q).collect()).expect("quantized values stay in range"),
            None => Self { width: self.width, height: self.height, gray: self.gray.iter().map(q).collect(), rgb: None },
        }
    }
}

/// Per-pixel validity flags, row-major, same size as the image they describe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn full(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// True when the nearest pixel to `(x, y)` is valid.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (xi, yi) = (x.round(), y.round());
        if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
            return false;
        }
        self.get(xi as usize, yi as usize)
    }
}

fn check_range(values: &[f32]) -> Result<()> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
        return Err(Error::InvalidImage(format!("pixel value {bad} outside [0, 1]")));
    }
    Ok(())
}

const BOUNDS_TOL: f64 = 1e-6;

/// Bilinear lookup in an interleaved plane (`stride` values per pixel).
pub(crate) fn bilinear(plane: &[f32], width: usize, height: usize, stride: usize, channel: usize, x: f64, y: f64) -> Option<f32> {
    let (wmax, hmax) = ((width - 1) as f64, (height - 1) as f64);
    if !(x >= -BOUNDS_TOL && y >= -BOUNDS_TOL && x <= wmax + BOUNDS_TOL && y <= hmax + BOUNDS_TOL) {
        return None;
    }
    let x = x.clamp(0.0, wmax);
    let y = y.clamp(0.0, hmax);
    let x0 = (x.floor() as usize).min(width.saturating_sub(2));
    let y0 = (y.floor() as usize).min(height.saturating_sub(2));
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let at = |xx: usize, yy: usize| plane[(yy * width + xx) * stride + channel];
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Unchecked bilinear lookup with edge clamping; the caller guarantees the
/// point lies within the plane.
#[inline]
pub(crate) fn bilinear_clamped(plane: &[f32], width: usize, height: usize, x: f32, y: f32) -> f32 {
    let x = x.clamp(0.0, (width - 1) as f32);
    let y = y.clamp(0.0, (height - 1) as f32);
    let x0 = (x as usize).min(width.saturating_sub(2));
    let y0 = (y as usize).min(height.saturating_sub(2));
    let fx = x - x0 as f32;
    let fy = y - y0 as f32;
    let i = y0 * width + x0;
    let (a, b) = (plane[i], plane[i + 1]);
    let (c, d) = (plane[i + width], plane[i + width + 1]);
    let top = a + (b - a) * fx;
    let bottom = c + (d - c) * fx;
    top + (bottom - top) * fy
}

/// Separable Gaussian blur with edge replication, kernel radius `ceil(3 sigma)`.
pub fn gaussian_blur(plane: &[f32], width: usize, height: usize, sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f32> = (-radius..=radius).map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);

    let (w, h) = (width as isize, height as isize);
    let mut tmp = vec![0.0f32; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        let out = &mut tmp[y * width..(y + 1) * width];
        for x in 0..w {
            let mut acc = 0.0;
            if x >= radius && x + radius < w {
                let base = (x - radius) as usize;
                for (k, v) in kernel.iter().zip(&row[base..]) {
                    acc += k * v;
                }
            } else {
                for (j, k) in kernel.iter().enumerate() {
                    let xx = (x + j as isize - radius).clamp(0, w - 1) as usize;
                    acc += k * row[xx];
                }
            }
            out[x as usize] = acc;
        }
    }
    let mut out = vec![0.0f32; plane.len()];
    for y in 0..h {
        let dst = &mut out[y as usize * width..(y as usize + 1) * width];
        for (j, k) in kernel.iter().enumerate() {
            let yy = (y + j as isize - radius).clamp(0, h - 1) as usize;
            let src = &tmp[yy * width..(yy + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(Image::new(2, 1, vec![0.0, 1.5]).is_err());
        assert!(Image::new(2, 1, vec![0.0, f32::NAN]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn rgb_uses_fixed_luma() {
        let img = Image::from_rgb(1, 1, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(img.gray()[0], 0.299);
        let img = Image::from_rgb(1, 1, vec![0.2, 0.4, 0.6]).unwrap();
        let expected = 0.299f32 * 0.2 + 0.587 * 0.4 + 0.114 * 0.6;
        assert_eq!(img.gray()[0], expected);
    }

    #[test]
    fn bilinear_is_exact_on_pixel_centers() {
        let img = Image::from_fn(4, 3, |x, y| (x + 4 * y) as f32 / 12.0);
        assert_eq!(img.sample(2.0, 1.0), Some(img.get(2, 1)));
        let mid = img.sample(0.5, 0.0).unwrap();
        assert!((mid - 0.5 / 12.0).abs() < 1e-7);
        assert_eq!(img.sample(-0.1, 0.0), None);
        assert_eq!(img.sample(3.0, 2.0), Some(img.get(3, 2)));
    }

    #[test]
    fn resize_and_crop_hits_target() {
        let img = Image::from_fn(100, 50, |x, y| ((x + y) % 7) as f32 / 7.0);
        let out = img.resize_and_crop(64, 48).unwrap();
        assert_eq!((out.width(), out.height()), (64, 48));
        let big = Image::from_fn(2000, 1000, |x, _| (x % 2) as f32);
        let out = big.resize_and_crop(640, 480).unwrap();
        assert_eq!((out.width(), out.height()), (640, 480));
        assert!(Image::constant(0, 0, 0.0).resize_and_crop(640, 480).is_err());
    }

    #[test]
    fn blur_preserves_constant() {
        let plane = vec![0.3f32; 20 * 10];
        let out = gaussian_blur(&plane, 20, 10, 1.7);
        assert!(out.iter().all(|v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn png_round_trip_matches_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::from_fn(7, 5, |x, y| (x * y) as f32 / 24.0);
        img.save_png(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert_eq!(back, img.quantized());
    }
}
