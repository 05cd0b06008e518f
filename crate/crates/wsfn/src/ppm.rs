//! Portable pixmap dumps: `P5` for one channel, `P6` for three.

use std::path::Path;

use wsfn_core::Tensor;

use crate::error::{Error, Result};

/// Encodes an `[h, w, ch]` image with values in `[0, 1]` (clamped) as 8-bit
/// PGM or PPM.
pub fn encode(image: &Tensor) -> Result<Vec<u8>> {
    let &[h, w, ch] = image.shape() else {
        return Err(Error::Config(format!(
            "expected an [h, w, ch] image, got {:?}",
            image.shape()
        )));
    };
    let magic = match ch {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::Config(format!("cannot write {ch}-channel images"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(
        image
            .data()
            .iter()
            .map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn write(path: &Path, image: &Tensor) -> Result<()> {
    std::fs::write(path, encode(image)?).map_err(Error::io(path))
}
