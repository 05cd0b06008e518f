use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::weight_space::{WeightSpaceFeature, WeightSpaceSpec};

/// A weight-space feature whose tensors live on a tape.
///
/// `weights[i]` is `[n_{i+1}, n_i, c]` and `biases[i]` is `[n_{i+1}, c]`.
#[derive(Clone, Debug)]
pub struct WsVar<'t> {
    pub weights: Vec<Var<'t>>,
    pub biases: Vec<Var<'t>>,
}

impl<'t> WsVar<'t> {
    /// Places `u` on the tape as constants.
    pub fn constant(tape: &'t Tape, u: &WeightSpaceFeature) -> Self {
        Self {
            weights: u.weights.iter().map(|w| tape.constant(w.clone())).collect(),
            biases: u.biases.iter().map(|b| tape.constant(b.clone())).collect(),
        }
    }

    /// Places `u` on the tape as trainable leaves.
    pub fn param(tape: &'t Tape, u: &WeightSpaceFeature) -> Self {
        Self {
            weights: u.weights.iter().map(|w| tape.param(w.clone())).collect(),
            biases: u.biases.iter().map(|b| tape.param(b.clone())).collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn channels(&self) -> usize {
        *self.biases[0].shape().last().expect("bias rank 2")
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.weights.len() + 1);
        widths.push(self.weights[0].shape()[1]);
        widths.extend(self.weights.iter().map(|w| w.shape()[0]));
        widths
    }

    /// Reads the values back as a plain feature with `spec`.
    pub fn to_feature(&self, spec: &WeightSpaceSpec) -> Result<WeightSpaceFeature> {
        let weights: Vec<Tensor> = self.weights.iter().map(|w| (*w.value()).clone()).collect();
        let biases: Vec<Tensor> = self.biases.iter().map(|b| (*b.value()).clone()).collect();
        WeightSpaceFeature::new(spec.clone(), weights, biases)
    }

    /// Reads the values back, inferring a fully connected spec.
    pub fn value(&self) -> Result<WeightSpaceFeature> {
        let spec = WeightSpaceSpec::new(self.layer_widths(), self.channels())?;
        self.to_feature(&spec)
    }

    /// Applies the same channel-wise map to every weight and bias tensor.
    pub fn map(&self, mut f: impl FnMut(Var<'t>) -> Result<Var<'t>>) -> Result<Self> {
        Ok(Self {
            weights: self.weights.iter().map(|&w| f(w)).collect::<Result<_>>()?,
            biases: self.biases.iter().map(|&b| f(b)).collect::<Result<_>>()?,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.num_layers() != other.num_layers() {
            return Err(Error::SpecMismatch(
                "adding features with different layer counts".into(),
            ));
        }
        Ok(Self {
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(&a, &b)| a.add(b))
                .collect::<Result<_>>()?,
            biases: self
                .biases
                .iter()
                .zip(&other.biases)
                .map(|(&a, &b)| a.add(b))
                .collect::<Result<_>>()?,
        })
    }

    /// All entries stacked as tokens `[dim(U), c]`: layer-major, each
    /// layer's weights row-major followed by its biases.
    pub fn tokens(&self) -> Result<Var<'t>> {
        let c = self.channels();
        let mut parts = Vec::with_capacity(2 * self.num_layers());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let s = w.shape();
            if s[2] != c {
                return Err(Error::ChannelMismatch {
                    expected: c,
                    got: s[2],
                });
            }
            parts.push(w.reshape([s[0] * s[1], c])?);
            parts.push(*b);
        }
        Var::concat(&parts, 0)
    }

    /// Inverse of [`WsVar::tokens`] for a `[dim(U), c']` token matrix.
    pub fn from_tokens(&self, tokens: Var<'t>) -> Result<Self> {
        let c = *tokens.shape().last().expect("rank 2");
        let mut start = 0;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in &self.weights {
            let s = w.shape();
            let n = s[0] * s[1];
            weights.push(tokens.narrow(0, start, n)?.reshape([s[0], s[1], c])?);
            start += n;
            biases.push(tokens.narrow(0, start, s[0])?);
            start += s[0];
        }
        Ok(Self { weights, biases })
    }
}
