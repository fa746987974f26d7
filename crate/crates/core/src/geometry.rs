//! Points, homographies and the random homography sampler.

use nalgebra::{Matrix3, SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

const DET_EPS: f64 = 1e-12;
const W_EPS: f64 = 1e-12;

/// A 3x3 projective transform stored row-major, normalized so that the
/// bottom-right coefficient is 1 whenever it is non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography {
    m: [f64; 9],
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = Error;

    fn try_from(m: [f64; 9]) -> Result<Self> {
        Homography::new(m)
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.m
    }
}

impl Homography {
    pub fn new(mut m: [f64; 9]) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateConfig("homography has non-finite coefficients".into()));
        }
        if m[8] != 0.0 {
            let s = m[8];
            m.iter_mut().for_each(|v| *v /= s);
        }
        let h = Self { m };
        let det = h.determinant();
        if det.abs() <= DET_EPS {
            return Err(Error::DegenerateConfig(format!("homography is singular (det = {det:e})")));
        }
        Ok(h)
    }

    pub fn identity() -> Self {
        Self { m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { m: [1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0] }
    }

    /// Counter-clockwise rotation (in the x-right, y-down pixel frame this
    /// turns +x towards +y) about the origin.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { m: [c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0] }
    }

    pub fn rotation_about(theta: f64, cx: f64, cy: f64) -> Self {
        Self::translation(-cx, -cy).then(&Self::rotation(theta)).then(&Self::translation(cx, cy))
    }

    pub fn scaling(s: f64) -> Result<Self> {
        Self::new([s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0])
    }

    pub fn coefficients(&self) -> &[f64; 9] {
        &self.m
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.m)
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = m[(r, c)];
            }
        }
        Self::new(out)
    }

    pub fn determinant(&self) -> f64 {
        self.matrix().determinant()
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .matrix()
            .try_inverse()
            .ok_or_else(|| Error::DegenerateConfig("homography is not invertible".into()))?;
        Self::from_matrix(&inv)
    }

    /// The transform applying `self` first and `next` afterwards.
    pub fn then(&self, next: &Homography) -> Homography {
        let prod = next.matrix() * self.matrix();
        let mut m = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                m[3 * r + c] = prod[(r, c)];
            }
        }
        if m[8] != 0.0 {
            let s = m[8];
            m.iter_mut().for_each(|v| *v /= s);
        }
        Homography { m }
    }

    pub fn warp_point(&self, p: Point2) -> Result<Point2> {
        let m = &self.m;
        let w = m[6] * p.x + m[7] * p.y + m[8];
        if w.abs() <= W_EPS {
            return Err(Error::DegenerateProjection(w));
        }
        Ok(Point2::new((m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w))
    }

    /// Rotation angle of the upper-left 2x2 block, exact for similarity
    /// transforms.
    pub fn rotation_angle(&self) -> f64 {
        self.m[3].atan2(self.m[0])
    }

    /// Maps `src[i]` onto `dst[i]` exactly (four-point direct linear solve).
    pub fn from_four_points(src: &[Point2; 4], dst: &[Point2; 4]) -> Result<Self> {
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for i in 0..4 {
            let (x, y) = (src[i].x, src[i].y);
            let (u, v) = (dst[i].x, dst[i].y);
            let r = 2 * i;
            a[(r, 0)] = x;
            a[(r, 1)] = y;
            a[(r, 2)] = 1.0;
            a[(r, 6)] = -u * x;
            a[(r, 7)] = -u * y;
            b[r] = u;
            a[(r + 1, 3)] = x;
            a[(r + 1, 4)] = y;
            a[(r + 1, 5)] = 1.0;
            a[(r + 1, 6)] = -v * x;
            a[(r + 1, 7)] = -v * y;
            b[r + 1] = v;
        }
        let sol = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::DegenerateConfig("four-point configuration is degenerate".into()))?;
        Self::new([sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7], 1.0])
    }
}

/// Ranges for [`sample_homography`]. Translation and perspective amounts are
/// fractions of the image size; angles are radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HomographySamplerConfig {
    pub width: f64,
    pub height: f64,
    /// Maximum translation along each axis, as a fraction of that axis' size.
    pub translation: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub rotation_min: f64,
    pub rotation_max: f64,
    /// Probability that the rotation component is sampled at all; otherwise
    /// it is exactly zero.
    pub rotation_probability: f64,
    /// Maximum displacement of each image corner, as a fraction of the size.
    pub perspective: f64,
}

impl Default for HomographySamplerConfig {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 480.0,
            translation: 0.1,
            scale_min: 0.8,
            scale_max: 1.2,
            rotation_min: -std::f64::consts::FRAC_PI_2,
            rotation_max: std::f64::consts::FRAC_PI_2,
            rotation_probability: 0.5,
            perspective: 0.05,
        }
    }
}

impl HomographySamplerConfig {
    /// Every range collapsed onto the identity transform.
    pub fn identity(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            translation: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            rotation_min: 0.0,
            rotation_max: 0.0,
            rotation_probability: 0.0,
            perspective: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::DegenerateConfig(msg.to_string()));
        let all = [
            self.width,
            self.height,
            self.translation,
            self.scale_min,
            self.scale_max,
            self.rotation_min,
            self.rotation_max,
            self.rotation_probability,
            self.perspective,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("sampler ranges must be finite");
        }
        if self.width <= 0.0 || self.height <= 0.0 {
            return bad("image size must be positive");
        }
        if self.scale_min <= 0.0 || self.scale_min > self.scale_max {
            return bad("scale range must satisfy 0 < scale_min <= scale_max");
        }
        if self.rotation_min > self.rotation_max {
            return bad("rotation_min exceeds rotation_max");
        }
        if !(0.0..=1.0).contains(&self.rotation_probability) {
            return bad("rotation_probability must lie in [0, 1]");
        }
        if self.translation < 0.0 {
            return bad("translation must be non-negative");
        }
        if !(0.0..0.25).contains(&self.perspective) {
            return bad("perspective must lie in [0, 0.25)");
        }
        Ok(())
    }
}

/// A sampled homography together with the rotation angle embedded in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledHomography {
    pub homography: Homography,
    pub rotation: f64,
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Samples perspective distortion, then scaling and rotation about the image
/// center, then translation.
pub fn sample_homography(cfg: &HomographySamplerConfig, seed: u64) -> Result<SampledHomography> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_homography_with(cfg, &mut rng)
}

pub fn sample_homography_with(cfg: &HomographySamplerConfig, rng: &mut impl Rng) -> Result<SampledHomography> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let (cx, cy) = (0.5 * w, 0.5 * h);

    let perspective = if cfg.perspective > 0.0 {
        let corners = [Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(w, h), Point2::new(0.0, h)];
        let mut moved = corners;
        for c in moved.iter_mut() {
            c.x += uniform(rng, -cfg.perspective, cfg.perspective) * w;
            c.y += uniform(rng, -cfg.perspective, cfg.perspective) * h;
        }
        Homography::from_four_points(&corners, &moved)?
    } else {
        Homography::identity()
    };

    let rotate = cfg.rotation_probability > 0.0 && rng.random_bool(cfg.rotation_probability);
    let rotation = if rotate { uniform(rng, cfg.rotation_min, cfg.rotation_max) } else { 0.0 };
    let scale = uniform(rng, cfg.scale_min, cfg.scale_max);
    let tx = uniform(rng, -cfg.translation, cfg.translation) * w;
    let ty = uniform(rng, -cfg.translation, cfg.translation) * h;

    let mut homography = perspective;
    if scale != 1.0 {
        homography = homography
            .then(&Homography::translation(-cx, -cy))
            .then(&Homography::scaling(scale)?)
            .then(&Homography::translation(cx, cy));
    }
    if rotation != 0.0 {
        homography = homography.then(&Homography::rotation_about(rotation, cx, cy));
    }
    if tx != 0.0 || ty != 0.0 {
        homography = homography.then(&Homography::translation(tx, ty));
    }
    if homography.determinant().abs() <= DET_EPS {
        return Err(Error::DegenerateConfig("sampled homography is singular".into()));
    }
    Ok(SampledHomography { homography, rotation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_and_translation() {
        let p = Homography::identity().warp_point(Point2::new(10.0, 20.0)).unwrap();
        assert_eq!(p, Point2::new(10.0, 20.0));
        let p = Homography::translation(5.0, -3.0).warp_point(Point2::new(0.0, 0.0)).unwrap();
        assert_eq!(p, Point2::new(5.0, -3.0));
    }

    #[test]
    fn composition_matches_sequential_application() {
        let rot = Homography::rotation(30f64.to_radians());
        let tr = Homography::translation(4.0, -7.5);
        let composed = rot.then(&tr);
        let p = Point2::new(3.25, -11.0);
        let (s, c) = 30f64.to_radians().sin_cos();
        let expected = Point2::new(c * p.x - s * p.y + 4.0, s * p.x + c * p.y - 7.5);
        let got = composed.warp_point(p).unwrap();
        assert!(got.distance(&expected) < 1e-12);
    }

    #[test]
    fn degenerate_projection_is_reported() {
        let h = Homography::new([0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(h.warp_point(Point2::new(0.0, 5.0)), Err(Error::DegenerateProjection(_))));
        assert!(Homography::new([1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn normalizes_last_coefficient() {
        let h = Homography::new([2.0, 0.0, 4.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(h.coefficients(), &[1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn four_point_solve_recovers_transform() {
        let truth = Homography::new([1.1, 0.05, 3.0, -0.02, 0.95, -4.0, 1e-4, -2e-4, 1.0]).unwrap();
        let src = [Point2::new(0.0, 0.0), Point2::new(100.0, 0.0), Point2::new(100.0, 80.0), Point2::new(0.0, 80.0)];
        let dst = src.map(|p| truth.warp_point(p).unwrap());
        let est = Homography::from_four_points(&src, &dst).unwrap();
        for (a, b) in est.coefficients().iter().zip(truth.coefficients()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_sampler_gives_identity() {
        let cfg = HomographySamplerConfig::identity(640.0, 480.0);
        let s = sample_homography(&cfg, 3).unwrap();
        assert_eq!(s.homography, Homography::identity());
        assert_eq!(s.rotation, 0.0);
    }

    #[test]
    fn forced_rotation_range() {
        let mut cfg = HomographySamplerConfig::identity(640.0, 480.0);
        cfg.rotation_min = PI / 6.0;
        cfg.rotation_max = PI / 6.0;
        cfg.rotation_probability = 1.0;
        let s = sample_homography(&cfg, 11).unwrap();
        assert_eq!(s.rotation, PI / 6.0);
        let expected = Homography::rotation_about(PI / 6.0, 320.0, 240.0);
        for (a, b) in s.homography.coefficients().iter().zip(expected.coefficients()) {
            assert!((a - b).abs() < 1e-12);
        }
        let m = s.homography.coefficients();
        assert!((m[0] - (PI / 6.0).cos()).abs() < 1e-12 && (m[3] - (PI / 6.0).sin()).abs() < 1e-12);
    }

    #[test]
    fn rotation_branch_is_taken_half_the_time() {
        let cfg = HomographySamplerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let rotated = (0..n)
            .filter(|_| sample_homography_with(&cfg, &mut rng).unwrap().rotation.abs() > 0.0)
            .count();
        let frac = rotated as f64 / n as f64;
        assert!((0.45..=0.55).contains(&frac), "{frac}");
    }

    #[test]
    fn rejects_bad_ranges() {
        let mut cfg = HomographySamplerConfig::default();
        cfg.scale_min = 0.0;
        assert!(matches!(sample_homography(&cfg, 0), Err(Error::DegenerateConfig(_))));
        let mut cfg = HomographySamplerConfig::default();
        cfg.rotation_min = 1.0;
        cfg.rotation_max = 0.0;
        assert!(sample_homography(&cfg, 0).is_err());
    }

    proptest! {
        #[test]
        fn inverse_round_trip(seed in 0u64..10_000, x in 0.0f64..640.0, y in 0.0f64..480.0) {
            let h = sample_homography(&HomographySamplerConfig::default(), seed).unwrap().homography;
            let inv = h.inverse().unwrap();
            let p = Point2::new(x, y);
            let back = h.warp_point(inv.warp_point(p).unwrap()).unwrap();
            prop_assert!(back.distance(&p) < 1e-6);
        }

        #[test]
        fn sampler_is_deterministic_and_angle_is_embedded(seed in 0u64..10_000) {
            let mut cfg = HomographySamplerConfig::default();
            cfg.perspective = 0.0;
            let a = sample_homography(&cfg, seed).unwrap();
            let b = sample_homography(&cfg, seed).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((a.homography.rotation_angle() - a.rotation).abs() < 1e-6);
        }
    }
}
