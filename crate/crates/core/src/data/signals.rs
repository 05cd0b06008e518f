//! Procedural grayscale images with class labels.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    /// Class 0 has one Gaussian blob, class 1 has two.
    Blobs2Class,
    /// A sinusoidal ramp; class 0 runs mostly horizontally, class 1 mostly
    /// vertically.
    GradientField,
    /// A checkerboard; class 0 has 4-pixel squares, class 1 has 2-pixel
    /// squares.
    Checker,
}

impl SignalKind {
    pub fn name(self) -> &'static str {
        match self {
            SignalKind::Blobs2Class => "blobs2class",
            SignalKind::GradientField => "gradient_field",
            SignalKind::Checker => "checker",
        }
    }
}

impl FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs2class" => Ok(SignalKind::Blobs2Class),
            "gradient_field" => Ok(SignalKind::GradientField),
            "checker" => Ok(SignalKind::Checker),
            other => Err(Error::Config(alloc::format!(
                "unknown signal kind {other:?} (expected blobs2class, gradient_field or checker)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalParams {
    /// Blob centres in `[-1, 1]²`.
    pub centers: Vec<(f64, f64)>,
    pub sigma: f64,
    /// Radians.
    pub orientation: f64,
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSample {
    /// `[h, w, 1]`, values in `[0, 1]`.
    pub image: Tensor,
    pub label: usize,
    pub params: SignalParams,
}

/// `count` samples of `size × size` pixels. Labels alternate `0, 1, 0, …`.
pub fn gen_signals(
    kind: SignalKind,
    count: usize,
    size: usize,
    rng: &mut impl Rng,
) -> Vec<SignalSample> {
    (0..count)
        .map(|i| gen_one(kind, i % 2, size, rng))
        .collect()
}

fn coord(size: usize, i: usize) -> f64 {
    if size == 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (size - 1) as f64
    }
}

fn gen_one(kind: SignalKind, label: usize, size: usize, rng: &mut impl Rng) -> SignalSample {
    let contrast = rng.random_range(0.7..1.0);
    let mut params = SignalParams {
        centers: Vec::new(),
        sigma: 0.0,
        orientation: 0.0,
        contrast,
    };
    let pixel: alloc::boxed::Box<dyn Fn(f64, f64) -> f64> = match kind {
        SignalKind::Blobs2Class => {
            params.sigma = rng.random_range(0.2..0.3);
            let first = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            params.centers.push(first);
            if label == 1 {
                loop {
                    let c = (rng.random_range(-0.55..0.55), rng.random_range(-0.55..0.55));
                    if libm::hypot(c.0 - first.0, c.1 - first.1) > 0.75 {
                        params.centers.push(c);
                        break;
                    }
                }
            }
            let centers = params.centers.clone();
            let s2 = 2.0 * params.sigma * params.sigma;
            alloc::boxed::Box::new(move |x, y| {
                centers
                    .iter()
                    .map(|&(cx, cy)| libm::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / s2))
                    .sum()
            })
        }
        SignalKind::GradientField => {
            let base = if label == 0 { 0.0 } else { PI / 2.0 };
            params.orientation = base + rng.random_range(-PI / 8.0..PI / 8.0);
            let (c, s) = (libm::cos(params.orientation), libm::sin(params.orientation));
            let phase = rng.random_range(0.0..2.0 * PI);
            alloc::boxed::Box::new(move |x, y| 0.5 + 0.5 * libm::sin(2.0 * (x * c + y * s) + phase))
        }
        SignalKind::Checker => {
            let period = if label == 0 { 4 } else { 2 };
            params.orientation = period as f64;
            let off = rng.random_range(0..period);
            let step = 2.0 / (size.max(2) - 1) as f64;
            alloc::boxed::Box::new(move |x, y| {
                let c = libm::round((x + 1.0) / step) as usize + off;
                let r = libm::round((y + 1.0) / step) as usize + off;
                ((c / period + r / period) % 2) as f64
            })
        }
    };
    let image = Tensor::from_fn([size, size, 1], |i| {
        let (r, c) = (i / size, i % size);
        (pixel(coord(size, c), coord(size, r)) * contrast).clamp(0.0, 1.0)
    });
    SignalSample {
        image,
        label,
        params,
    }
}
