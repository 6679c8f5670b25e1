use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::image::sample_bilinear;
use super::{FaceError, GrayImage};

/// Five facial points: left eye, right eye, nose, left and right mouth corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub points: [(f64, f64); 5],
}

impl Landmarks {
    /// Fixed template for a 160×160 aligned face.
    pub const CANONICAL_160: Landmarks = Landmarks {
        points: [(54.0, 58.0), (106.0, 58.0), (80.0, 92.0), (60.0, 120.0), (100.0, 120.0)],
    };

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|(x, y)| x.is_finite() && y.is_finite())
    }

    pub fn map(&self, f: impl Fn((f64, f64)) -> (f64, f64)) -> Landmarks {
        Landmarks { points: self.points.map(f) }
    }
}

impl Default for Landmarks {
    fn default() -> Self {
        Self::CANONICAL_160
    }
}

/// `p ↦ s·R(θ)·p + (dx, dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub s: f64,
    pub theta: f64,
    pub dx: f64,
    pub dy: f64,
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform { s: 1.0, theta: 0.0, dx: 0.0, dy: 0.0 };

    pub fn new(s: f64, theta: f64, dx: f64, dy: f64) -> Result<Self, FaceError> {
        if !(s > 0.0 && s.is_finite() && dx.is_finite() && dy.is_finite() && theta > -PI && theta <= PI) {
            return Err(FaceError::InvalidTransform(format!("s={s} theta={theta} dx={dx} dy={dy}")));
        }
        Ok(Self { s, theta, dx, dy })
    }

    pub fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (sin, cos) = self.theta.sin_cos();
        (self.s * (cos * x - sin * y) + self.dx, self.s * (sin * x + cos * y) + self.dy)
    }

    pub fn apply_inverse(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (sin, cos) = self.theta.sin_cos();
        let (u, v) = (x - self.dx, y - self.dy);
        ((cos * u + sin * v) / self.s, (-sin * u + cos * v) / self.s)
    }

    /// Translation applied before rotation and scaling, i.e. the `Δ` with
    /// `apply(p) = s·R(θ)·(p + Δ)`.
    pub fn pre_translation(&self) -> (f64, f64) {
        let inv = SimilarityTransform { dx: 0.0, dy: 0.0, ..*self };
        inv.apply_inverse((self.dx, self.dy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentFit {
    pub transform: SimilarityTransform,
    /// Root-mean-square distance between transformed and target points.
    pub residual: f64,
}

/// Closed-form least-squares similarity mapping `detected` onto `canonical`.
pub fn estimate_alignment_fit(detected: &Landmarks, canonical: &Landmarks) -> Result<AlignmentFit, FaceError> {
    if !detected.is_finite() || !canonical.is_finite() {
        return Err(FaceError::DegenerateLandmarks);
    }
    let n = detected.points.len() as f64;
    let centroid = |l: &Landmarks| {
        let (sx, sy) = l.points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        (sx / n, sy / n)
    };
    let (px, py) = centroid(detected);
    let (qx, qy) = centroid(canonical);
    let (mut norm, mut dot, mut cross) = (0.0, 0.0, 0.0);
    for (&(x, y), &(u, v)) in detected.points.iter().zip(&canonical.points) {
        let (x, y, u, v) = (x - px, y - py, u - qx, v - qy);
        norm += x * x + y * y;
        dot += x * u + y * v;
        cross += x * v - y * u;
    }
    if norm < 1e-12 {
        return Err(FaceError::DegenerateLandmarks);
    }
    let a = dot / norm;
    let b = cross / norm;
    let s = a.hypot(b);
    if s < 1e-12 {
        return Err(FaceError::DegenerateLandmarks);
    }
    let mut theta = b.atan2(a);
    if theta <= -PI {
        theta = PI;
    }
    let dx = qx - (a * px - b * py);
    let dy = qy - (b * px + a * py);
    let transform = SimilarityTransform::new(s, theta, dx, dy)?;
    let sq: f64 = detected
        .points
        .iter()
        .zip(&canonical.points)
        .map(|(&p, &(u, v))| {
            let (x, y) = transform.apply(p);
            (x - u).powi(2) + (y - v).powi(2)
        })
        .sum();
    Ok(AlignmentFit { transform, residual: (sq / n).sqrt() })
}

pub fn estimate_alignment(detected: &Landmarks, canonical: &Landmarks) -> Result<SimilarityTransform, FaceError> {
    estimate_alignment_fit(detected, canonical).map(|f| f.transform)
}

/// Renders `img` under `t` by inverse mapping each output pixel; samples
/// falling outside the source are 0.
pub fn warp(img: &GrayImage, t: &SimilarityTransform, width: usize, height: usize) -> GrayImage {
    let src = img.to_matrix();
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (sx, sy) = t.apply_inverse((x as f64, y as f64));
            pixels.push(sample_bilinear(&src, sx, sy).unwrap_or(0.0).clamp(0.0, 1.0));
        }
    }
    GrayImage::new(width, height, pixels).expect("warp output is a valid image")
}
