//! Raw little-endian `f64` tensor blobs and SHA-256 helpers.

use sha2::{Digest, Sha256};
use wsfn_core::Tensor;

pub fn encode(t: &Tensor, out: &mut Vec<u8>) {
    out.reserve(8 * t.numel());
    for x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Decodes `bytes` as a tensor of the given shape. `None` if the byte count
/// does not match.
pub fn decode(shape: &[usize], bytes: &[u8]) -> Option<Tensor> {
    let n: usize = shape.iter().product();
    if bytes.len() != 8 * n {
        return None;
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
        .collect();
    Tensor::new(shape.to_vec(), data).ok()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let t = Tensor::new([2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 1.0 / 3.0]).unwrap();
        let mut bytes = Vec::new();
        encode(&t, &mut bytes);
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[..8], &1.0f64.to_le_bytes());
        let back = decode(&[2, 2], &bytes).unwrap();
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(decode(&[3], &bytes).is_none());
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
