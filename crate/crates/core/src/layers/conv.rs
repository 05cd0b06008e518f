//! Adapters for convolutional weight spaces.
//!
//! A conv layer's weight `[n_out, n_in, k, c]` is folded to
//! `[n_out, n_in, k·c]`. Since `k` differs between layers, each layer gets
//! its own projection to a shared width `c̃` before self-attention and its
//! own projection back afterwards.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::feature::WsVar;
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet};
use crate::rng;
use crate::tensor::Tensor;
use crate::weight_space::{WeightSpaceFeature, WeightSpaceSpec};

/// Folds raw conv weights `[n_out, n_in, k_i, c]` and biases `[n_out, c]`
/// into a feature for `spec`.
pub fn conv_fold(
    weights: &[Tensor],
    biases: &[Tensor],
    spec: &WeightSpaceSpec,
) -> Result<WeightSpaceFeature> {
    let filters = spec
        .filter_widths
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("conv_fold needs filter widths".into()))?;
    if weights.len() != spec.num_layers() {
        return Err(Error::SpecMismatch(format!(
            "{} raw weight tensors for {} layers",
            weights.len(),
            spec.num_layers()
        )));
    }
    let mut folded = Vec::with_capacity(weights.len());
    for (i, w) in weights.iter().enumerate() {
        let [n_out, n_in, kc] = spec.weight_shape(i);
        let expect = [n_out, n_in, filters[i], spec.channels];
        if w.shape() != expect {
            return Err(Error::shape("conv_fold", w.shape(), &expect));
        }
        folded.push(w.reshape([n_out, n_in, kc])?);
    }
    WeightSpaceFeature::new(spec.clone(), folded, biases.to_vec())
}

#[derive(Debug, Clone)]
pub struct ConvAdapter {
    pub prefix: String,
    /// `k_i·c` for each layer.
    pub in_channels: Vec<usize>,
    pub bias_channels: usize,
    pub width: usize,
}

impl ConvAdapter {
    pub fn new(prefix: impl Into<String>, spec: &WeightSpaceSpec, width: usize) -> Self {
        Self {
            prefix: prefix.into(),
            in_channels: (0..spec.num_layers())
                .map(|i| spec.weight_shape(i)[2])
                .collect(),
            bias_channels: spec.channels,
            width,
        }
    }

    fn name(&self, what: &str, layer: usize) -> String {
        format!("{}.{what}.{layer}", self.prefix)
    }

    /// `Proj_i` gets orthonormal rows and `UnProj_i = Proj_iᵀ`, so
    /// unprojecting a projection is exact whenever `c̃ ≥ k_i·c`.
    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        for (i, &kc) in self.in_channels.iter().enumerate() {
            let proj = orthonormal_rows(kc, self.width, rng);
            params.insert(self.name("unproj", i), proj.transpose().expect("rank 2"));
            params.insert(self.name("proj", i), proj);
            let proj_b = orthonormal_rows(self.bias_channels, self.width, rng);
            params.insert(
                self.name("unproj_b", i),
                proj_b.transpose().expect("rank 2"),
            );
            params.insert(self.name("proj_b", i), proj_b);
        }
    }

    fn apply<'t>(
        &self,
        p: &Bound<'t>,
        u: &WsVar<'t>,
        w_name: &str,
        b_name: &str,
    ) -> Result<WsVar<'t>> {
        if u.num_layers() != self.in_channels.len() {
            return Err(Error::SpecMismatch(format!(
                "conv adapter for {} layers applied to {}",
                self.in_channels.len(),
                u.num_layers()
            )));
        }
        let mut weights = Vec::with_capacity(u.num_layers());
        let mut biases = Vec::with_capacity(u.num_layers());
        for i in 0..u.num_layers() {
            weights.push(channel_matmul(u.weights[i], p.get(&self.name(w_name, i))?)?);
            biases.push(channel_matmul(u.biases[i], p.get(&self.name(b_name, i))?)?);
        }
        Ok(WsVar { weights, biases })
    }

    /// `k_i·c` channels to `c̃` channels, layer by layer.
    pub fn project<'t>(&self, p: &Bound<'t>, u: &WsVar<'t>) -> Result<WsVar<'t>> {
        self.apply(p, u, "proj", "proj_b")
    }

    /// `c̃` channels back to `k_i·c` channels.
    pub fn unproject<'t>(&self, p: &Bound<'t>, u: &WsVar<'t>) -> Result<WsVar<'t>> {
        self.apply(p, u, "unproj", "unproj_b")
    }
}

/// `x[.., a] · m[a, b]` over the last axis.
fn channel_matmul<'t>(x: Var<'t>, m: Var<'t>) -> Result<Var<'t>> {
    let shape = x.shape();
    let (a, b) = (m.shape()[0], m.shape()[1]);
    let c = *shape.last().expect("rank >= 1");
    if c != a {
        return Err(Error::ChannelMismatch {
            expected: a,
            got: c,
        });
    }
    let rows = shape.iter().product::<usize>() / c;
    let mut out_shape = shape;
    *out_shape.last_mut().expect("rank >= 1") = b;
    x.reshape([rows, c])?.matmul(m)?.reshape(out_shape)
}

/// A random `[rows, cols]` matrix whose rows are orthonormal (as far as
/// `cols` allows; surplus rows stay unnormalized random directions).
fn orthonormal_rows(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let mut m = rng::normal(&[rows, cols], 1.0, rng);
    let d = m.data_mut();
    for r in 0..rows.min(cols) {
        for prev in 0..r {
            let dot: f64 = (0..cols)
                .map(|j| d[r * cols + j] * d[prev * cols + j])
                .sum();
            for j in 0..cols {
                d[r * cols + j] -= dot * d[prev * cols + j];
            }
        }
        let norm = libm::sqrt(
            (0..cols)
                .map(|j| d[r * cols + j] * d[r * cols + j])
                .sum::<f64>(),
        );
        for j in 0..cols {
            d[r * cols + j] /= norm;
        }
    }
    m
}
