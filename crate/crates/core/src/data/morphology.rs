//! 3×3 grayscale morphology and contrast stretching on `[h, w, ch]` images.

use core::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditTransform {
    Erode,
    Dilate,
    Gradient,
    Contrast,
}

impl EditTransform {
    pub fn name(self) -> &'static str {
        match self {
            EditTransform::Erode => "erode",
            EditTransform::Dilate => "dilate",
            EditTransform::Gradient => "gradient",
            EditTransform::Contrast => "contrast",
        }
    }

    pub fn apply(self, image: &Tensor) -> Result<Tensor> {
        match self {
            EditTransform::Erode => erode(image),
            EditTransform::Dilate => dilate(image),
            EditTransform::Gradient => morph_gradient(image),
            EditTransform::Contrast => Ok(contrast(image)),
        }
    }
}

impl FromStr for EditTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erode" => Ok(EditTransform::Erode),
            "dilate" => Ok(EditTransform::Dilate),
            "gradient" => Ok(EditTransform::Gradient),
            "contrast" => Ok(EditTransform::Contrast),
            other => Err(Error::Config(alloc::format!(
                "unsupported transform {other:?} (expected erode, dilate, gradient or contrast)"
            ))),
        }
    }
}

fn check(image: &Tensor) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [h, w, ch] => Ok((h, w, ch)),
        _ => Err(Error::InvalidShape {
            shape: image.shape().to_vec(),
            reason: "expected an [h, w, ch] image".into(),
        }),
    }
}

/// 3×3 window reduction with edge-replicate padding.
fn window(image: &Tensor, init: f64, pick: fn(f64, f64) -> f64) -> Result<Tensor> {
    let (h, w, ch) = check(image)?;
    let d = image.data();
    Ok(Tensor::from_fn([h, w, ch], |i| {
        let (r, rest) = (i / (w * ch), i % (w * ch));
        let (c, k) = (rest / ch, rest % ch);
        let mut acc = init;
        for dr in [-1isize, 0, 1] {
            for dc in [-1isize, 0, 1] {
                let rr = (r as isize + dr).clamp(0, h as isize - 1) as usize;
                let cc = (c as isize + dc).clamp(0, w as isize - 1) as usize;
                acc = pick(acc, d[(rr * w + cc) * ch + k]);
            }
        }
        acc
    }))
}

pub fn erode(image: &Tensor) -> Result<Tensor> {
    window(image, f64::INFINITY, f64::min)
}

pub fn dilate(image: &Tensor) -> Result<Tensor> {
    window(image, f64::NEG_INFINITY, f64::max)
}

/// `dilate − erode`.
pub fn morph_gradient(image: &Tensor) -> Result<Tensor> {
    dilate(image)?.sub(&erode(image)?)
}

/// `clip(1.5·(x − 0.5) + 0.5, 0, 1)`.
pub fn contrast(image: &Tensor) -> Tensor {
    image.map(|x| (1.5 * (x - 0.5) + 0.5).clamp(0.0, 1.0))
}
