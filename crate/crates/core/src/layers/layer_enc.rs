//! Learned per-layer position encodings.

use alloc::format;
use alloc::string::String;

use rand::Rng;

use super::feature::WsVar;
use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet};
use crate::rng;

/// Adds a learned vector `φ_i ∈ R^c` to every weight and bias entry of layer
/// `i`. Optionally adds learned per-neuron encodings to the input columns of
/// the first layer and the output rows of the last layer, which deliberately
/// breaks symmetry under input/output neuron permutations.
#[derive(Debug, Clone)]
pub struct LayerEnc {
    pub prefix: String,
    pub num_layers: usize,
    pub channels: usize,
    /// `(n_0, n_L)` when input/output encodings are enabled.
    pub io: Option<(usize, usize)>,
}

impl LayerEnc {
    pub fn new(prefix: impl Into<String>, num_layers: usize, channels: usize) -> Self {
        Self {
            prefix: prefix.into(),
            num_layers,
            channels,
            io: None,
        }
    }

    pub fn phi_name(&self, layer: usize) -> String {
        format!("{}.phi.{layer}", self.prefix)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        for i in 0..self.num_layers {
            params.insert(self.phi_name(i), rng::normal(&[self.channels], 1.0, rng));
        }
        if let Some((n_in, n_out)) = self.io {
            params.insert(
                format!("{}.io.in", self.prefix),
                rng::normal(&[n_in, self.channels], 1.0, rng),
            );
            params.insert(
                format!("{}.io.out", self.prefix),
                rng::normal(&[n_out, self.channels], 1.0, rng),
            );
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, u: &WsVar<'t>) -> Result<WsVar<'t>> {
        if u.num_layers() != self.num_layers {
            return Err(Error::SpecMismatch(format!(
                "layer encoding for {} layers applied to {}",
                self.num_layers,
                u.num_layers()
            )));
        }
        if u.channels() != self.channels {
            return Err(Error::ChannelMismatch {
                expected: self.channels,
                got: u.channels(),
            });
        }
        let mut out = u.clone();
        for i in 0..self.num_layers {
            let phi = p.get(&self.phi_name(i))?;
            out.weights[i] = out.weights[i].add(phi)?;
            out.biases[i] = out.biases[i].add(phi)?;
        }
        if self.io.is_some() {
            let last = self.num_layers - 1;
            let enc_in = p.get(&format!("{}.io.in", self.prefix))?;
            out.weights[0] = out.weights[0].add(enc_in)?;
            let enc_out = p.get(&format!("{}.io.out", self.prefix))?;
            let n_out = enc_out.shape()[0];
            out.weights[last] =
                out.weights[last].add(enc_out.reshape([n_out, 1, self.channels])?)?;
            out.biases[last] = out.biases[last].add(enc_out)?;
        }
        Ok(out)
    }
}
