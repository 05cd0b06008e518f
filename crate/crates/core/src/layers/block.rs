//! The residual NFT block.

use alloc::format;
use alloc::string::String;

use rand::Rng;

use super::attention::{maybe_dropout, Dropout};
use super::feature::WsVar;
use super::self_attention::SelfAttention;
use crate::autodiff::Var;
use crate::error::Result;
use crate::params::{Bound, ParamSet};
use crate::rng;
use crate::tensor::Tensor;

pub const LN_EPS: f64 = 1e-5;

/// Two-layer GELU MLP applied to the channel vector of every entry.
#[derive(Debug, Clone)]
pub struct PointwiseMlp {
    pub prefix: String,
    pub channels: usize,
    pub hidden: usize,
    pub out: usize,
}

impl PointwiseMlp {
    pub fn new(prefix: impl Into<String>, channels: usize, hidden: usize) -> Self {
        Self {
            prefix: prefix.into(),
            channels,
            hidden,
            out: channels,
        }
    }

    pub fn with_out(mut self, out: usize) -> Self {
        self.out = out;
        self
    }

    pub fn name(&self, which: &str) -> String {
        format!("{}.{which}", self.prefix)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        params.insert(
            self.name("w1"),
            rng::xavier(self.hidden, self.channels, rng),
        );
        params.insert(self.name("b1"), Tensor::zeros([self.hidden]));
        params.insert(self.name("w2"), rng::xavier(self.out, self.hidden, rng));
        params.insert(self.name("b2"), Tensor::zeros([self.out]));
    }

    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        x: Var<'t>,
        dropout: Option<&Dropout>,
    ) -> Result<Var<'t>> {
        let h = x
            .linear(p.get(&self.name("w1"))?, Some(p.get(&self.name("b1"))?))?
            .gelu();
        let h = maybe_dropout(h, dropout)?;
        h.linear(p.get(&self.name("w2"))?, Some(p.get(&self.name("b2"))?))
    }
}

/// `Z = U + SA(LN(U))`, `Block(U) = Z + MLP(LN(Z))`.
#[derive(Debug, Clone)]
pub struct Block {
    pub prefix: String,
    pub sa: SelfAttention,
    pub mlp: PointwiseMlp,
}

impl Block {
    pub fn new(
        prefix: impl Into<String>,
        channels: usize,
        heads: usize,
        mlp_hidden: usize,
    ) -> Self {
        let prefix = prefix.into();
        Self {
            sa: SelfAttention::new(format!("{prefix}.sa"), channels, heads),
            mlp: PointwiseMlp::new(format!("{prefix}.mlp"), channels, mlp_hidden),
            prefix,
        }
    }

    pub fn channels(&self) -> usize {
        self.sa.channels
    }

    fn ln_name(&self, which: usize, part: &str) -> String {
        format!("{}.ln{which}.{part}", self.prefix)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) {
        self.sa.init(params, rng);
        self.mlp.init(params, rng);
        for which in [1, 2] {
            params.insert(self.ln_name(which, "gain"), Tensor::ones([self.channels()]));
            params.insert(
                self.ln_name(which, "bias"),
                Tensor::zeros([self.channels()]),
            );
        }
    }

    fn layernorm<'t>(&self, p: &Bound<'t>, which: usize, u: &WsVar<'t>) -> Result<WsVar<'t>> {
        let gain = p.get(&self.ln_name(which, "gain"))?;
        let bias = p.get(&self.ln_name(which, "bias"))?;
        u.map(|x| x.layernorm(gain, bias, LN_EPS))
    }

    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        u: &WsVar<'t>,
        dropout: Option<&Dropout>,
    ) -> Result<WsVar<'t>> {
        let z = u.add(&self.sa.forward(p, &self.layernorm(p, 1, u)?, dropout)?)?;
        let normed = self.layernorm(p, 2, &z)?;
        let mlp = normed.map(|x| self.mlp.forward(p, x, dropout))?;
        z.add(&mlp)
    }
}
