//! Homography warping of whole images.

use crate::error::Result;
use crate::geometry::{Homography, Point2};
use crate::image::{bilinear, Image, Mask};

/// Warps `img` by `h`: output pixel `(x, y)` is the bilinear sample of `img`
/// at `h^-1 (x, y)`. Pixels whose source falls outside `img` are set to 0
/// and flagged false in the returned mask.
pub fn warp_image(img: &Image, h: &Homography) -> Result<(Image, Mask)> {
    let (w, hgt) = (img.width(), img.height());
    let inv = h.inverse()?;
    let mut gray = vec![0.0f32; w * hgt];
    let mut rgb = img.rgb().map(|_| vec![0.0f32; 3 * w * hgt]);
    let mut mask = Mask::full(w, hgt, false);
    for y in 0..hgt {
        for x in 0..w {
            let src = inv.warp_point(Point2::new(x as f64, y as f64))?;
            let i = y * w + x;
            if let Some(v) = bilinear(img.gray(), w, hgt, 1, 0, src.x, src.y) {
                gray[i] = v;
                mask.data[i] = true;
                if let (Some(out), Some(plane)) = (rgb.as_mut(), img.rgb()) {
                    for c in 0..3 {
                        out[3 * i + c] = bilinear(plane, w, hgt, 3, c, src.x, src.y).unwrap_or(0.0);
                    }
                }
            }
        }
    }
    Ok((Image::from_parts_unchecked(w, hgt, gray, rgb), mask))
}
